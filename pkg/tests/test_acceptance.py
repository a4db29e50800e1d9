"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``criterion N ... PASS|FAIL`` line (collected again in
the terminal summary). The synthetic classifier gates run the desk-scale
geometry with a shortened schedule; see the README for why.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from oracles import direct_conv, pyramid, window_max
from usvideo.classifier import (
    CANONICAL,
    DESK,
    ClassificationMetrics,
    ClassifierModel,
    ClassifierTrainConfig,
    LossRecord,
    ablate,
    build_clipset,
    compute_losses,
    forward,
    loss_and_grads,
)
from usvideo.classifier.training import scaled_schedule
from usvideo.data.containers import Roi
from usvideo.data.folds import holdout_split
from usvideo.data.synthetic import SyntheticConfig, generate_samples
from usvideo.harness import report
from usvideo.harness.cli import main
from usvideo.harness.gradsuite import run_gradient_suite
from usvideo.harness.runs import directory_digest
from usvideo.kernels import Adam, ConvSpec, conv2d, conv3d, conv_forward, cosine_consistency_loss, maxpool3d, spp3d
from usvideo.localizer import LocalizerModel, LocalizerTrainConfig, accuracy_curve, predict_all, train_localizer
from usvideo.similarity import generate_score_labels, iou, ssim

RESULTS: list[str] = []
# accuracy@D curves from every evaluated run, checked for monotonicity in criterion 10
CURVES: dict[str, list[tuple[int, float]]] = {}

DESK_SCHEDULE = (6, 2)  # epochs at the high and low learning rate


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n:>2} {title}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print(line)


@pytest.fixture(scope="module")
def localizer_videos():
    cfg = SyntheticConfig(n_videos=300, n_frames=64, height=96, width=96)
    return generate_samples(cfg, 7)


@pytest.fixture(scope="module")
def classifier_videos():
    cfg = SyntheticConfig(n_videos=200, n_frames=64, height=96, width=96, clip_length=DESK.clip_length)
    return generate_samples(cfg, 7)


@pytest.fixture(scope="module")
def ablation_rows(classifier_videos):
    config = scaled_schedule(ClassifierTrainConfig(seed=7), *DESK_SCHEDULE)
    t = time.perf_counter()
    rows = ablate(classifier_videos, DESK, config, k=5)
    return rows, time.perf_counter() - t


def test_criterion_01_gradient_suite():
    t = time.perf_counter()
    entries = run_gradient_suite(seeds=range(5), h=1e-5, tolerance=1e-4)
    elapsed = time.perf_counter() - t
    names = {e.name for e in entries}
    worst = max(entries, key=lambda e: e.report.max_rel_error)
    failed = [f"{e.name}[{e.seed}]={e.report.max_rel_error:.2e}" for e in entries if not e.passed]
    ok = not failed and elapsed < 300 and {"localizer", "classifier"} <= names
    record(1, "gradient suite", ok, f"{len(entries)} checks, worst {worst.report.max_rel_error:.2e} "
           f"({worst.name}), {elapsed:.0f} s; failed: {failed or 'none'}")
    assert not failed
    assert elapsed < 300
    assert all(e.report.checked > 0 for e in entries)


def test_criterion_02_oracle_equivalence():
    rng = np.random.default_rng(2)
    t = time.perf_counter()
    worst, shapes = 0.0, []
    for trial in range(8):
        # the last trial is the largest shape, (3, 3, 6, 6, 6)
        n, c_in, c_out = (3, 3, 3) if trial == 7 else (int(v) for v in rng.integers(1, 4, 3))
        sp = (6, 6, 6) if trial == 7 else tuple(int(v) for v in rng.integers(2, 7, 3))
        stride = tuple(int(v) for v in rng.integers(1, 3, 3))
        pad = tuple(int(v) for v in rng.integers(0, 2, 3))
        x = rng.standard_normal((n, c_in, *sp))
        shapes.append(x.shape)
        b = rng.standard_normal(c_out)
        if min(sp) >= 3 or all(p == 1 for p in pad):
            spec = ConvSpec((3, 3, 3), stride, pad, c_in, c_out)
            w = rng.standard_normal(spec.weight_shape)
            out = conv3d(x, spec, w, b)[0]
            worst = max(worst, max(np.abs(out[i] - direct_conv(x[i], w, b, stride, pad)).max() for i in range(n)))
        spec2 = ConvSpec((3, 3), stride[1:], (1, 1), c_in, c_out)
        w2 = rng.standard_normal(spec2.weight_shape)
        x2 = x[:, :, 0]
        out = conv2d(x2, spec2, w2, b)[0]
        worst = max(worst, max(np.abs(out[i] - direct_conv(x2[i], w2, b, stride[1:], (1, 1))).max() for i in range(n)))
        pooled, spp = maxpool3d(x, 2)[0], spp3d(x)[0]
        for i in range(n):
            worst = max(worst, np.abs(pooled[i] - window_max(x[i], (2, 2, 2), (2, 2, 2))).max())
            worst = max(worst, np.abs(spp[i] - pyramid(x[i])).max())
    elapsed = time.perf_counter() - t
    ok = worst < 1e-12 and elapsed < 60
    record(2, "oracle equivalence", ok, f"{len(shapes)} random shapes up to {max(shapes, key=np.prod)}, "
           f"max abs diff {worst:.1e}, {elapsed:.1f} s")
    assert (3, 3, 6, 6, 6) in shapes
    assert worst < 1e-12
    assert elapsed < 60


def test_criterion_03_shape_trace():
    model = ClassifierModel(CANONICAL, np.random.default_rng(3))
    res = forward(model, np.random.default_rng(4).random((1, 1, 32, 112, 112)))
    expected = {
        "conv1": (16, 32, 112, 112), "conv2": (32, 32, 56, 56), "conv3": (64, 16, 28, 28),
        "pool1": (64, 8, 14, 14), "conv4": (64, 4, 7, 7), "pool2": (64, 2, 3, 3), "head": (1728,),
    }
    got = {k: res.shapes[k] for k in expected}
    f = res.cache[2]
    x = f.transpose(0, 2, 1, 3, 4).reshape(8, 64, 14, 14)
    sizes = [x.shape[2:]]
    for name, spec in zip(("att_a", "att_b", "att_c"), CANONICAL.attention_specs()):
        x, _ = conv_forward(x, model.params[f"{name}.weight"], model.params[f"{name}.bias"], spec)
        sizes.append(x.shape[2:])
    ok = got == expected and sizes == [(14, 14), (6, 6), (2, 2), (1, 1)] and res.shapes["v_temp"] == (1, 8, 1, 1)
    record(3, "shape trace", ok, f"head {got['head'][0]}, attention {' -> '.join(str(s[0]) for s in sizes)}, "
           f"v_temp {res.shapes['v_temp']}")
    assert got == expected
    assert sizes == [(14, 14), (6, 6), (2, 2), (1, 1)]
    assert res.shapes["v_temp"] == (1, 8, 1, 1)
    assert res.v_temp.shape == (1, 8)


def test_criterion_04_similarity(localizer_videos):
    rng = np.random.default_rng(5)
    frames = [v.pixels[i] for v in localizer_videos[:50] for i in (0, v.n_frames // 2)]
    problems = []
    for n in range(100):
        a = frames[n] if n < 50 else rng.random((32, 32))
        b = frames[(n + 1) % 100] if n < 50 else rng.random((32, 32))
        a, b = np.asarray(a, float) / (255.0 if n < 50 else 1.0), np.asarray(b, float) / (255.0 if n < 50 else 1.0)
        s_ab, s_ba = ssim(a, b), ssim(b, a)
        if ssim(a, a) != 1.0:
            problems.append(f"ssim(x,x)={ssim(a, a)}")
        if s_ab != s_ba or not 0.0 <= s_ab <= 1.0:
            problems.append(f"pair {n}: {s_ab} vs {s_ba}")
    cases = [
        (Roi(0, 0, 2, 2), Roi(0, 0, 2, 2), 1.0),
        (Roi(0, 0, 2, 2), Roi(2, 2, 4, 4), 0.0),
        (Roi(0, 0, 2, 2), Roi(1, 1, 3, 3), 1 / 7),
        (Roi(0, 0, 4, 4), Roi(0, 0, 2, 2), 0.25),
    ]
    for a, b, want in cases:
        if abs(iou(a, b) - want) > 1e-15 or iou(a, b) != iou(b, a):
            problems.append(f"iou{a, b}={iou(a, b)}")
    for v in localizer_videos:
        lab = generate_score_labels(v)
        if lab[v.key_frame_index] != 1.0 or lab.min() < 0.0 or lab.max() > 1.0:
            problems.append(f"labels of {v.video_id}")
    record(4, "similarity properties", not problems,
           f"100 ssim pairs, {len(cases)} iou cases, {len(localizer_videos)} label sequences; issues: {problems[:3] or 'none'}")
    assert not problems


def test_criterion_05_loss_identities():
    v = np.array([0.3, -1.2, 2.0, 0.7])
    orth = np.array([1.2, 0.3, 0.0, 0.0])
    values = (cosine_consistency_loss(2.5 * v, v), cosine_consistency_loss(v, orth), cosine_consistency_loss(-v, v))
    close = all(abs(a - b) < 1e-12 for a, b in zip(values, (0.0, 1.0, 2.0)))
    rng = np.random.default_rng(6)
    exact = True
    for _ in range(100):
        rec = compute_losses(rng.uniform(0.01, 0.99, 3), rng.integers(0, 2, 3).astype(float),
                             rng.uniform(0, 2, (3, 8)), rng.random((3, 8)))
        exact &= isinstance(rec, LossRecord) and rec.total == rec.l_cls + rec.l_motion
    record(5, "loss identities", close and exact, f"cosine losses {[round(x, 15) for x in values]}, total exact: {exact}")
    assert close and exact


def test_criterion_06_localizer_gate(localizer_videos):
    by_id = {v.video_id: v for v in localizer_videos}
    train, test = holdout_split(list(by_id), 0.2, 7)
    model = LocalizerModel(rng=np.random.default_rng(7))
    t = time.perf_counter()
    train_localizer(model, [by_id[i] for i in train], LocalizerTrainConfig(seed=7))
    pred = predict_all(model, [by_id[i] for i in test])
    curve = accuracy_curve([pred[i] for i in test], [by_id[i].key_frame_index for i in test], 32)
    CURVES["criterion 6"] = curve
    a5, a15 = curve[5][1], curve[15][1]
    ok = len(localizer_videos) >= 300 and a5 >= 0.70 and a15 >= 0.90
    record(6, "localizer gate", ok, f"{len(train)}/{len(test)} split, acc@5 {a5:.3f}, acc@15 {a15:.3f}, "
           f"{time.perf_counter() - t:.0f} s")
    assert a5 >= 0.70
    assert a15 >= 0.90


def test_criterion_07_classifier_gate(classifier_videos, ablation_rows):
    labels = [v.label for v in classifier_videos]
    rows, _ = ablation_rows
    full = next(r for r in rows if r.is_full)
    mean_acc = full.result.mean["accuracy"]

    data = build_clipset(classifier_videos[:16], DESK)
    model = ClassifierModel(DESK, np.random.default_rng(8))
    opt = Adam(model.params, lr=1e-3, weight_decay=1e-8)
    drop = np.random.default_rng(9)
    steps, l_cls = 0, np.inf
    while steps < 300:
        rec, grads, _ = loss_and_grads(model, data.clips, data.labels, data.v_motion, rng=drop)
        l_cls = rec.l_cls
        if l_cls < 0.05:
            break
        opt.step(grads)
        steps += 1
    balanced = labels.count(0) == labels.count(1)
    ok = len(labels) >= 200 and balanced and mean_acc >= 0.85 and l_cls < 0.05
    fold_acc = [round(f.metrics.accuracy, 3) for f in full.result.folds]
    record(7, "classifier gate", ok, f"5-fold mean accuracy {mean_acc:.3f} {fold_acc}, "
           f"single-batch l_cls {l_cls:.4f} after {steps} steps")
    assert len(labels) >= 200 and balanced
    assert mean_acc >= 0.85
    assert l_cls < 0.05


def test_criterion_08_ablation(ablation_rows, tmp_path):
    rows, elapsed = ablation_rows
    path = report.write_ablation(tmp_path / report.ABLATION_CSV, rows)
    header, body = report.read_csv(path)
    full = next(r for r in rows if r.is_full).result.mean["accuracy"]
    base = next(r for r in rows if r.is_baseline).result.mean["accuracy"]
    shape_ok = len(body) == 8 and header[3:] == list(report.METRIC_HEADER[:5])
    ok = shape_ok and full >= base
    table = ", ".join(f"{'/'.join(r[:3])}={float(r[3]):.3f}" for r in body)
    record(8, "ablation direction", ok, f"full {full:.3f} vs baseline {base:.3f}; {table}; {elapsed:.0f} s")
    assert shape_ok
    assert full >= base


def _csvs(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_criterion_09_determinism(tmp_path):
    tiny = [
        "--preset", "reduced", "--seed", "11", "--folds", "2",
        "--set", "n_videos=16", "--set", "n_frames=40", "--set", "frame_size=64",
        "--set", "localizer_epochs=3", "--set", "localizer_batch_size=4",
        "--set", "epochs_high=2", "--set", "epochs_low=1", "--set", "batch_size=4",
    ]
    first, second = tmp_path / "first", tmp_path / "second"
    commands = ["gen-labels", "train-localizer", "eval-localizer", "train-classifier", "eval-classifier",
                "crossval", "ablate", "report"]
    codes = [main(["gen-data", "--data-dir", str(tmp_path / "data"), "--out-dir", str(first), *tiny])]
    codes.append(main(["gen-data", "--data-dir", str(tmp_path / "data2"), "--out-dir", str(tmp_path / "g2"), *tiny]))
    for cmd in commands:
        codes.append(main([cmd, "--data-dir", str(tmp_path / "data"), "--out-dir", str(first), *tiny]))
    for cmd in commands:
        codes.append(main([cmd, "--config", str(first / f"{cmd}.run.json"), "--out-dir", str(second)]))
    a, b = _csvs(first), _csvs(second)
    same_csv = a == b and len(a) > 10
    same_data = directory_digest(tmp_path / "data") == directory_digest(tmp_path / "data2")
    for name in ("accuracy_at_d.csv",):
        _, rows = report.read_csv(first / name)
        CURVES["criterion 9 run"] = [(int(d), float(x)) for d, x in rows]
    ok = same_csv and same_data and set(codes) == {0}
    record(9, "determinism", ok, f"{len(a)} CSVs replayed from run.json bitwise equal: {same_csv}; "
           f"gen-data hash stable: {same_data}")
    assert set(codes) == {0}
    assert same_data
    assert a.keys() == b.keys() and len(a) > 10
    for k in a:
        assert a[k] == b[k], k


def test_criterion_10_metrics():
    m = ClassificationMetrics.from_counts(tp=3, fp=1, tn=4, fn=2)
    hand = m.precision == 0.75 and m.sensitivity == 0.6 and abs(m.f1 - 2 / 3) < 1e-15
    hand &= m.accuracy == 7 / 10 and m.specificity == 4 / 5
    perfect = ClassificationMetrics.from_predictions([0.9, 0.2, 0.6], [1, 0, 1])
    hand &= all(v == 1.0 for v in perfect.as_row().values())
    rng = np.random.default_rng(10)
    curves = dict(CURVES)
    curves["random"] = accuracy_curve(rng.integers(0, 96, 200), rng.integers(0, 96, 200), 96)
    monotone = {k: all(a <= b for (_, a), (_, b) in zip(c, c[1:])) for k, c in curves.items()}
    ok = hand and all(monotone.values())
    record(10, "metric correctness", ok, f"hand cases exact: {hand}; monotone accuracy@D over {sorted(monotone)}")
    assert hand
    assert all(monotone.values())
