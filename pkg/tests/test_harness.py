import json
import struct
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from usvideo import CheckpointError, ConfigurationError, DataError
from usvideo.classifier import REDUCED, ClassificationMetrics, ClassifierModel, forward, loss_and_grads
from usvideo.harness import report
from usvideo.harness.checkpoint import (
    VERSION,
    CheckpointData,
    decode,
    encode,
    load_checkpoint,
    save_checkpoint,
)
from usvideo.harness.cli import main
from usvideo.harness.config import ExperimentConfig, apply_preset, load_config_file, update
from usvideo.harness.runs import directory_digest, run_lock
from usvideo.kernels import Adam
from usvideo.localizer import LocalizerDims, LocalizerModel

TINY = [
    "--preset", "reduced",
    "--set", "n_videos=12", "--set", "n_frames=40", "--set", "frame_size=64",
    "--set", "localizer_epochs=2", "--set", "localizer_batch_size=4",
    "--set", "epochs_high=1", "--set", "epochs_low=1", "--set", "batch_size=4",
    "--folds", "2", "--seed", "3",
]


def read_rows(path):
    return report.read_csv(path)


class TestCheckpointFormat:
    def test_two_tensor_toy_byte_count(self):
        data = CheckpointData("toy", {}, {"a": np.arange(2.0), "bb": np.ones((3, 2))})
        raw = encode(data)
        header = 4 + 2 + (2 + 3) + (4 + len(b"{}")) + 32 + 4 + 1
        rec_a = 2 + 1 + 1 + 4 * 1 + 8 * 2
        rec_b = 2 + 2 + 1 + 4 * 2 + 8 * 6
        assert len(raw) == header + rec_a + rec_b
        back = decode(raw)
        assert list(back.tensors) == ["a", "bb"]
        np.testing.assert_array_equal(back.tensors["bb"], np.ones((3, 2)))
        assert back.optimizer is None

    def test_values_are_little_endian_f64(self):
        raw = encode(CheckpointData("toy", {}, {"x": np.array([1.5])}))
        assert raw[-8:] == struct.pack("<d", 1.5)

    def test_version_mismatch(self):
        raw = bytearray(encode(CheckpointData("toy", {}, {})))
        raw[4:6] = struct.pack("<H", VERSION + 1)
        with pytest.raises(CheckpointError, match=f"version {VERSION + 1} found, expected {VERSION}"):
            decode(bytes(raw))

    @pytest.mark.parametrize("cut", [3, 10, 40, 70, 90])
    def test_truncation_names_offset(self, cut):
        raw = encode(CheckpointData("toy", {"k": 1}, {"a": np.arange(4.0)}))
        with pytest.raises(CheckpointError, match="truncated at offset"):
            decode(raw[:cut])

    def test_trailing_bytes(self):
        raw = encode(CheckpointData("toy", {}, {"a": np.zeros(1)}))
        with pytest.raises(CheckpointError, match="trailing"):
            decode(raw + b"\0")

    def test_bad_magic(self):
        with pytest.raises(CheckpointError, match="magic"):
            decode(b"NOPE" + bytes(40))

    def test_digest_mismatch(self):
        raw = bytearray(encode(CheckpointData("toy", {"k": 1}, {})))
        pos = raw.index(b'{"k":1}')
        raw[pos + 5] = ord("2")
        with pytest.raises(CheckpointError, match="digest"):
            decode(bytes(raw))


class TestCheckpointModels:
    def test_classifier_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        m = ClassifierModel(REDUCED, rng)
        opt = Adam(m.params, lr=1e-3, weight_decay=1e-8)
        x = rng.random((2, 1, 8, 28, 28))
        _, grads, _ = loss_and_grads(m, x, [0, 1], rng.random((2, 4)), rng=np.random.default_rng(1))
        opt.step(grads)
        save_checkpoint(m, opt, tmp_path / "c.ckpt")
        m2, opt2 = load_checkpoint(tmp_path / "c.ckpt", "classifier")
        assert m2.arch == REDUCED
        np.testing.assert_array_equal(forward(m, x).prob, forward(m2, x).prob)
        for k in m.params:
            np.testing.assert_array_equal(m.params[k], m2.params[k])
            np.testing.assert_array_equal(opt.state.first_moment[k], opt2.state.first_moment[k])
            np.testing.assert_array_equal(opt.state.second_moment[k], opt2.state.second_moment[k])
        assert opt2.state.step_count == 1 and opt2.state.weight_decay == 1e-8

    def test_localizer_round_trip(self, tmp_path):
        dims = LocalizerDims(feature_dim=6, embed_dim=4, hidden=5, head_hidden=3)
        m = LocalizerModel(dims, np.random.default_rng(2))
        save_checkpoint(m, None, tmp_path / "l.ckpt")
        m2, opt = load_checkpoint(tmp_path / "l.ckpt")
        assert opt is None and m2.dims == dims
        for k in m.params:
            np.testing.assert_array_equal(m.params[k], m2.params[k])

    def test_kind_mismatch(self, tmp_path):
        m = LocalizerModel(LocalizerDims(6, 4, 5, 3))
        save_checkpoint(m, None, tmp_path / "l.ckpt")
        with pytest.raises(CheckpointError, match="expected classifier"):
            load_checkpoint(tmp_path / "l.ckpt", "classifier")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "none.ckpt")


class TestConfig:
    def test_defaults_match_settings(self):
        c = ExperimentConfig()
        assert (c.localizer_lr, c.localizer_batch_size, c.localizer_epochs) == (0.01, 64, 20)
        assert (c.classifier_lr, c.classifier_lr_low, c.weight_decay) == (1e-3, 1e-4, 1e-8)
        assert (c.batch_size, c.epochs_high, c.epochs_low, c.folds, c.clip_length) == (16, 20, 20, 5, 32)
        assert c.key_frame_source == "gt"
        c.validate()

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown config keys: nope"):
            update(ExperimentConfig(), {"nope": 1})

    @pytest.mark.parametrize("key,value", [("clip_length", 31), ("batch_size", 0), ("folds", 1),
                                           ("precision", "f16"), ("key_frame_source", "oracle")])
    def test_invalid(self, key, value):
        with pytest.raises(ConfigurationError):
            update(ExperimentConfig(), {key: value}).validate()

    def test_string_coercion(self):
        c = update(ExperimentConfig(), {"seed": "4", "augment": "false", "widths": "[1, 2, 3, 4]"})
        assert c.seed == 4 and c.augment is False and c.widths == [1, 2, 3, 4]

    def test_preset(self):
        c = apply_preset(ExperimentConfig(), "reduced")
        assert c.arch(attention=True, spp=True) == REDUCED

    def test_run_json_config_section(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"command": "x", "config": {"seed": 9}}))
        assert load_config_file(path) == {"seed": 9}

    def test_digest_tracks_values(self):
        assert ExperimentConfig().digest() != update(ExperimentConfig(), {"seed": 1}).digest()


class TestRuns:
    def test_lock_is_exclusive(self, tmp_path):
        with run_lock(tmp_path):
            with pytest.raises(DataError, match="locked"):
                with run_lock(tmp_path):
                    pass
        assert not (tmp_path / ".lock").exists()

    def test_digest_sees_content_and_names(self, tmp_path):
        (tmp_path / "a").write_bytes(b"1")
        d1 = directory_digest(tmp_path)
        (tmp_path / "a").write_bytes(b"2")
        d2 = directory_digest(tmp_path)
        (tmp_path / "a").rename(tmp_path / "b")
        assert len({d1, d2, directory_digest(tmp_path)}) == 3


class TestReport:
    def test_empty_dir_lists_missing(self, tmp_path):
        with pytest.raises(DataError) as err:
            report.emit_report(tmp_path)
        for name in report.REPORT_INPUTS:
            assert name in str(err.value)

    def test_metric_order(self):
        assert report.METRIC_HEADER[:5] == ["accuracy", "sensitivity", "specificity", "precision", "f1"]

    def test_float_text_round_trips(self):
        x = 0.1 + 0.2
        assert float(report.fmt(x)) == x

    def test_svg_is_xml(self, tmp_path):
        curve = [(str(d), str(min(1.0, d / 10))) for d in range(33)]
        path = tmp_path / "p.svg"
        report.accuracy_svg(curve).write(path, encoding="utf-8", xml_declaration=True)
        root = ET.parse(path).getroot()
        assert root.tag.endswith("svg")
        assert len(root.find("{http://www.w3.org/2000/svg}polyline").get("points").split()) == 33


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    run = lambda *cmd: main([*cmd, "--data-dir", str(root / "data"), "--out-dir", str(root / "run"), *TINY])
    codes = {}
    for cmd in ("gen-data", "gen-labels", "train-localizer", "eval-localizer", "crossval", "ablate",
                "train-classifier", "eval-classifier", "report"):
        codes[cmd] = run(cmd)
    return root, codes


class TestCli:
    def test_all_commands_succeed(self, pipeline):
        _, codes = pipeline
        assert codes == {k: 0 for k in codes}

    def test_run_records(self, pipeline):
        root, codes = pipeline
        for cmd in codes:
            rec = json.loads((root / "run" / f"{cmd}.run.json").read_text())
            assert rec["status"] == "ok" and rec["seed"] == 3 and rec["config"]["n_videos"] == 12
        assert json.loads((root / "run" / "run.json").read_text())["command"] == "report"
        assert not (root / "run" / ".lock").exists()

    def test_eval_localizer_rows(self, pipeline):
        root, _ = pipeline
        header, rows = read_rows(root / "run" / "accuracy_at_d.csv")
        assert header == ["D", "accuracy"]
        assert [int(r[0]) for r in rows] == list(range(33))
        acc = [float(r[1]) for r in rows]
        assert all(a <= b for a, b in zip(acc, acc[1:]))
        header, rows = read_rows(root / "run" / "localizer_predictions.csv")
        assert header == ["video_id", "predicted", "label", "distance"]
        assert all(int(r[3]) == abs(int(r[1]) - int(r[2])) for r in rows)

    def test_ablation_csv(self, pipeline):
        root, _ = pipeline
        header, rows = read_rows(root / "run" / "ablation.csv")
        assert header == ["sampling", "pooling", "attention", "accuracy", "sensitivity", "specificity", "precision", "f1"]
        assert len(rows) == 8
        no_att = read_rows(root / "run" / "ablation_epochs" / "uniform_flatten_noatt.csv")[0]
        with_att = read_rows(root / "run" / "ablation_epochs" / "keyframe_spp_att.csv")[0]
        assert "l_motion" not in no_att and "l_motion" in with_att

    def test_report_copies_verbatim(self, pipeline):
        root, _ = pipeline
        _, folds = read_rows(root / "run" / "fold_metrics.csv")
        header, summary = read_rows(root / "run" / "summary.csv")
        assert header == ["section", "row", "accuracy", "sensitivity", "specificity", "precision", "f1"]
        cv = [r for r in summary if r[0] == "crossval"]
        assert [r[1:] for r in cv] == [f[:6] for f in folds]
        text = (root / "run" / "summary.txt").read_text()
        assert folds[-1][1] in text
        ET.parse(root / "run" / "accuracy_at_d.svg")

    def test_replay_is_bitwise(self, pipeline, tmp_path):
        root, _ = pipeline
        assert main(["crossval", "--config", str(root / "run" / "crossval.run.json"), "--out-dir", str(tmp_path)]) == 0
        for name in ("fold_metrics.csv", "crossval_epochs.csv", "crossval_predictions.csv"):
            assert (tmp_path / name).read_bytes() == (root / "run" / name).read_bytes()

    def test_gen_data_hash_stable(self, pipeline, tmp_path):
        root, _ = pipeline
        assert main(["gen-data", "--data-dir", str(tmp_path / "d"), "--out-dir", str(tmp_path / "r"), *TINY]) == 0
        assert directory_digest(tmp_path / "d") == directory_digest(root / "data")
        rec = json.loads((tmp_path / "r" / "run.json").read_text())
        assert rec["result"]["dataset_sha256"] == directory_digest(root / "data")

    def test_predicted_key_frames(self, pipeline, tmp_path):
        root, _ = pipeline
        (tmp_path / "predicted_keyframes.csv").write_bytes((root / "run" / "predicted_keyframes.csv").read_bytes())
        args = ["crossval", "--data-dir", str(root / "data"), "--out-dir", str(tmp_path), *TINY]
        assert main([*args, "--key-frame-source", "predicted"]) == 0
        assert json.loads((tmp_path / "run.json").read_text())["config"]["key_frame_source"] == "predicted"

    def test_predicted_without_localizer(self, pipeline, tmp_path):
        root, _ = pipeline
        args = ["crossval", "--data-dir", str(root / "data"), "--out-dir", str(tmp_path), *TINY]
        assert main([*args, "--key-frame-source", "predicted"]) == 2
        assert json.loads((tmp_path / "run.json").read_text())["status"] == "failed"

    def test_attention_off_log_has_no_motion_column(self, pipeline, tmp_path):
        root, _ = pipeline
        args = ["crossval", "--data-dir", str(root / "data"), "--out-dir", str(tmp_path), *TINY]
        assert main([*args, "--set", "attention=false"]) == 0
        header, _ = read_rows(tmp_path / "crossval_epochs.csv")
        assert header == ["fold", "epoch", "lr", "l_cls", "total"]

    def test_usage_errors(self, tmp_path, capsys):
        assert main(["bogus"]) == 1
        assert main(["crossval", "--nope"]) == 1
        assert main(["crossval", "--config", str(tmp_path / "missing.json")]) == 1
        assert main(["crossval", "--set", "clip_length=7"]) == 1
        assert main(["crossval", "--set", "no_such_key=1"]) == 1
        assert main(["crossval", "--precision", "f16"]) == 1
        assert "no_such_key" in capsys.readouterr().err

    def test_runtime_errors(self, tmp_path, capsys):
        assert main(["report", "--out-dir", str(tmp_path)]) == 2
        assert "fold_metrics.csv" in capsys.readouterr().err
        assert main(["eval-localizer", "--data-dir", str(tmp_path), "--out-dir", str(tmp_path)]) == 2

    def test_locked_run_dir(self, tmp_path):
        (tmp_path / ".lock").write_text("1")
        assert main(["report", "--out-dir", str(tmp_path)]) == 2

    def test_gen_data_refuses_existing(self, pipeline, tmp_path):
        root, _ = pipeline
        assert main(["gen-data", "--data-dir", str(root / "data"), "--out-dir", str(tmp_path), *TINY]) == 2

    def test_gradcheck_kernels(self, tmp_path):
        assert main(["gradcheck", "--kernels-only", "--out-dir", str(tmp_path)]) == 0
        header, rows = read_rows(tmp_path / "gradcheck.csv")
        assert header == ["check", "seed", "max_rel_error", "coordinates", "passed"]
        assert all(r[4] == "true" and float(r[2]) < 1e-4 for r in rows)

    def test_metric_csv_row(self, tmp_path):
        m = ClassificationMetrics.from_counts(3, 1, 4, 2)
        path = report.write_fold_metrics(tmp_path / "f.csv", [m], {k: getattr(m, k) for k in report.METRIC_HEADER[:5]})
        _, rows = read_rows(path)
        assert rows[0][:6] == ["0", "0.7", "0.6", "0.8", "0.75", repr(2 * 0.75 * 0.6 / 1.35)]
        assert rows[1][0] == "mean"
