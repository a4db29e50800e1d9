"""Command-line entry point: ``usvideo <command> [flags]``.

Configuration is resolved as defaults, then ``--preset``, then the
``--config`` file, then ``--set KEY=VALUE`` pairs, then the dedicated
flags. The resolved values go into ``run.json`` in the output directory,
and ``usvideo <command> --config <out>/run.json`` repeats the run.

Exit codes: 0 ok, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path

from usvideo.classifier import (
    ClassifierModel,
    ablate,
    build_clipset,
    cross_validate,
    evaluate,
    predict_proba,
    train_classifier,
)
from usvideo.data.containers import MANIFEST_NAME, load_dataset
from usvideo.data.folds import holdout_split
from usvideo.data.synthetic import generate_synthetic
from usvideo.errors import CheckpointError, ConfigurationError, DataError
from usvideo.harness import report
from usvideo.harness.checkpoint import load_checkpoint, save_checkpoint
from usvideo.harness.config import PRESETS, ExperimentConfig, apply_preset, load_config_file, update
from usvideo.harness.gradsuite import run_gradient_suite
from usvideo.harness.runs import directory_digest, run_lock, write_run_record
from usvideo.kernels import set_precision
from usvideo.localizer import (
    LocalizerModel,
    accuracy_curve,
    predict_all,
    train_localizer,
)
from usvideo.rng import stream
from usvideo.similarity import generate_score_labels, motion_index, write_sequence_csv

log = logging.getLogger("usvideo")

COMMANDS = (
    "gen-data", "gen-labels", "train-localizer", "eval-localizer", "train-classifier",
    "eval-classifier", "crossval", "ablate", "gradcheck", "report",
)
LOCALIZER_CKPT = "localizer.ckpt"
CLASSIFIER_CKPT = "classifier.ckpt"
KEYFRAMES_CSV = "predicted_keyframes.csv"
MAX_TOLERANCE = 32


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a previous run.json)")
    common.add_argument("--preset", choices=sorted(PRESETS), help="classifier geometry preset")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config field")
    common.add_argument("--seed", type=int)
    common.add_argument("--data-dir")
    common.add_argument("--out-dir")
    common.add_argument("--key-frame-source", choices=("gt", "predicted"))
    common.add_argument("--folds", type=int)
    common.add_argument("--precision", choices=("f64", "f32"))
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="usvideo", description="Key-frame guided ultrasound video classification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-data": "write a synthetic dataset to --data-dir",
        "gen-labels": "export score labels and motion indices as CSV",
        "train-localizer": "train the key-frame localizer on the training split",
        "eval-localizer": "accuracy@D (D = 0..32) on the held-out split",
        "train-classifier": "train one classifier on the training split",
        "eval-classifier": "evaluate the trained classifier on the held-out split",
        "crossval": "k-fold cross-validation of the classifier",
        "ablate": "cross-validate the 8-variant ablation grid",
        "gradcheck": "finite-difference suite over kernels and both models",
        "report": "merge run CSVs into a summary and an SVG plot",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name], description=helps[name])
        if name == "gradcheck":
            p.add_argument("--kernels-only", action="store_true", help="skip the two end-to-end model checks")
            p.add_argument("--max-coords", type=int, help="subsample coordinates in the model checks")
    return parser


def _parse_sets(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {pair!r}")
        out[key.strip().replace("-", "_")] = value
    return out


def resolve_config(args) -> ExperimentConfig:
    config = ExperimentConfig()
    if args.preset:
        config = apply_preset(config, args.preset)
    if args.config:
        config = update(config, load_config_file(args.config))
    config = update(config, _parse_sets(args.set))
    flags = {
        "seed": args.seed, "data_dir": args.data_dir, "out_dir": args.out_dir,
        "key_frame_source": args.key_frame_source, "folds": args.folds, "precision": args.precision,
    }
    config = update(config, {k: v for k, v in flags.items() if v is not None})
    return config.validate()


# data helpers

def _videos(config: ExperimentConfig):
    manifest = Path(config.data_dir) / MANIFEST_NAME
    if not manifest.is_file():
        raise DataError(f"no dataset at {manifest}; run gen-data first")
    return load_dataset(manifest)


def _split(config: ExperimentConfig, videos):
    seed = int(stream(config.seed, "split").integers(2**63))
    train, test = holdout_split([v.video_id for v in videos], config.test_fraction, seed)
    by_id = {v.video_id: v for v in videos}
    return [by_id[i] for i in train], [by_id[i] for i in test]


def _key_frames(config: ExperimentConfig, out: Path) -> dict | None:
    if config.key_frame_source == "gt":
        return None
    path = out / KEYFRAMES_CSV
    if not path.is_file():
        raise DataError(f"key_frame_source=predicted needs {path}; run eval-localizer first")
    _, rows = report.read_csv(path)
    return {r[0]: int(r[1]) for r in rows}


def _checkpoint(out: Path, name: str, kind: str):
    path = out / name
    if not path.is_file():
        raise DataError(f"missing {path}; run train-{kind} first")
    return load_checkpoint(path, kind)


# commands

def cmd_gen_data(config, out, args) -> dict:
    data_dir = Path(config.data_dir)
    if (data_dir / MANIFEST_NAME).exists():
        raise DataError(f"{data_dir} already holds a dataset; choose an empty --data-dir")
    generate_synthetic(config.synthetic(), config.seed, data_dir)
    return {"dataset_sha256": directory_digest(data_dir)}


def cmd_gen_labels(config, out, args) -> dict:
    videos = _videos(config)
    rows = []
    for v in videos:
        write_sequence_csv(out / "labels" / f"{v.video_id}.csv", generate_score_labels(v))
        write_sequence_csv(out / "motion" / f"{v.video_id}.csv", motion_index(v))
        rows.append([v.video_id, v.n_frames, v.key_frame_index, v.label])
    report.write_csv(out / "labels_index.csv", ["video_id", "n_frames", "key_frame_index", "label"], rows)
    return {"videos": len(videos)}


def cmd_train_localizer(config, out, args) -> dict:
    train, _ = _split(config, _videos(config))
    model = LocalizerModel(rng=stream(config.seed, "init", 0))
    res = train_localizer(model, train, config.localizer_training())
    save_checkpoint(model, res.optimizer, out / LOCALIZER_CKPT)
    report.write_csv(out / "localizer_loss.csv", ["epoch", "loss"], [[i + 1, l] for i, l in enumerate(res.loss_curve)])
    return {"train_videos": len(train)}


def cmd_eval_localizer(config, out, args) -> dict:
    videos = _videos(config)
    _, test = _split(config, videos)
    model, _ = _checkpoint(out, LOCALIZER_CKPT, "localizer")
    pred = predict_all(model, videos)
    report.write_csv(out / KEYFRAMES_CSV, ["video_id", "predicted"], [[v.video_id, pred[v.video_id]] for v in videos])
    rows = [[v.video_id, pred[v.video_id], v.key_frame_index, abs(pred[v.video_id] - v.key_frame_index)] for v in test]
    report.write_csv(out / "localizer_predictions.csv", ["video_id", "predicted", "label", "distance"], rows)
    curve = accuracy_curve([r[1] for r in rows], [r[2] for r in rows], MAX_TOLERANCE)
    report.write_accuracy_curve(out / report.ACCURACY_CSV, curve)
    return {"test_videos": len(test), "accuracy_at_5": curve[5][1], "accuracy_at_15": curve[15][1]}


def cmd_train_classifier(config, out, args) -> dict:
    train, _ = _split(config, _videos(config))
    arch = config.arch()
    data = build_clipset(train, arch, config.sampling, _key_frames(config, out))
    model = ClassifierModel(arch, stream(config.seed, "init", 0))
    res = train_classifier(model, data, config.classifier_training())
    save_checkpoint(model, res.optimizer, out / CLASSIFIER_CKPT)
    report.write_epoch_log(out / "classifier_epochs.csv", [((), e) for e in res.epochs], arch.attention)
    return {"train_videos": len(train)}


def cmd_eval_classifier(config, out, args) -> dict:
    _, test = _split(config, _videos(config))
    model, _ = _checkpoint(out, CLASSIFIER_CKPT, "classifier")
    data = build_clipset(test, model.arch, config.sampling, _key_frames(config, out))
    probs = predict_proba(model, data)
    metrics = evaluate(model, data)
    report.write_csv(out / "classifier_predictions.csv", ["video_id", "probability", "label"],
                     [[i, float(p), int(y)] for i, p, y in zip(data.video_ids, probs, data.labels)])
    report.write_csv(out / "classifier_metrics.csv", report.METRIC_HEADER, [report.metric_row(metrics)])
    return {"test_videos": len(test), "accuracy": metrics.accuracy}


def cmd_crossval(config, out, args) -> dict:
    arch = config.arch()
    data = build_clipset(_videos(config), arch, config.sampling, _key_frames(config, out))
    result = cross_validate(data, arch, config.classifier_training(), config.folds)
    report.write_fold_metrics(out / report.FOLD_CSV, [f.metrics for f in result.folds], result.mean)
    entries = [((f.fold,), e) for f in result.folds for e in f.epochs]
    report.write_epoch_log(out / "crossval_epochs.csv", entries, arch.attention, ("fold",))
    preds = [[f.fold, i, float(p)] for f in result.folds for i, p in zip(f.test_ids, f.probs)]
    report.write_csv(out / "crossval_predictions.csv", ["fold", "video_id", "probability"], preds)
    return {"mean_accuracy": result.mean["accuracy"]}


def cmd_ablate(config, out, args) -> dict:
    rows = ablate(_videos(config), config.arch(), config.classifier_training(), config.folds, _key_frames(config, out))
    report.write_ablation(out / report.ABLATION_CSV, rows)
    for r in rows:
        name = f"{r.sampling}_{'spp' if r.spp else 'flatten'}_{'att' if r.attention else 'noatt'}"
        entries = [((f.fold,), e) for f in r.result.folds for e in f.epochs]
        report.write_epoch_log(out / "ablation_epochs" / f"{name}.csv", entries, r.attention, ("fold",))
    full = next(r for r in rows if r.is_full).result.mean["accuracy"]
    base = next(r for r in rows if r.is_baseline).result.mean["accuracy"]
    return {"full_accuracy": full, "baseline_accuracy": base}


def cmd_gradcheck(config, out, args) -> dict:
    entries = run_gradient_suite(models=not args.kernels_only, max_coords=args.max_coords)
    rows = [[e.name, e.seed, e.report.max_rel_error, e.report.checked, e.passed] for e in entries]
    report.write_csv(out / "gradcheck.csv", ["check", "seed", "max_rel_error", "coordinates", "passed"], rows)
    failed = [f"{e.name}[seed {e.seed}]" for e in entries if not e.passed]
    for e in entries:
        log.info("%s seed %d: %.3g %s", e.name, e.seed, e.report.max_rel_error, e.note)
    worst = max(entries, key=lambda e: e.report.max_rel_error)
    print(f"gradcheck: {len(entries) - len(failed)}/{len(entries)} checks below {worst.report.tolerance:g}; "
          f"worst {worst.report.max_rel_error:.3g} ({worst.name}, seed {worst.seed})")
    if failed:
        raise FloatingPointError(f"gradient check failed: {', '.join(failed)}")
    return {"worst": worst.report.max_rel_error, "notes": {f"{e.name}[{e.seed}]": e.note for e in entries if e.note}}


def cmd_report(config, out, args) -> dict:
    paths = report.emit_report(out)
    return {k: str(v) for k, v in paths.items()}


HANDLERS = {
    "gen-data": cmd_gen_data, "gen-labels": cmd_gen_labels, "train-localizer": cmd_train_localizer,
    "eval-localizer": cmd_eval_localizer, "train-classifier": cmd_train_classifier,
    "eval-classifier": cmd_eval_classifier, "crossval": cmd_crossval, "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck, "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"usvideo: configuration error: {exc}", file=sys.stderr)
        return 1
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    set_precision(config.precision)
    out = Path(config.out_dir)
    try:
        with run_lock(out):
            start = time.perf_counter()
            try:
                extra = HANDLERS[args.command](config, out, args)
            except Exception as exc:
                write_run_record(out, args.command, config.to_dict(), argv, "failed", error=str(exc))
                raise
            write_run_record(out, args.command, config.to_dict(), argv, "ok",
                             seconds=round(time.perf_counter() - start, 3), result=extra)
    except ConfigurationError as exc:
        print(f"usvideo {args.command}: configuration error: {exc}", file=sys.stderr)
        return 1
    except (DataError, CheckpointError, OSError, FloatingPointError, csv.Error) as exc:
        print(f"usvideo {args.command}: {exc}", file=sys.stderr)
        return 2
    finally:
        set_precision("f64")
    return 0


if __name__ == "__main__":
    sys.exit(main())
