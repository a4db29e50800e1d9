import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usvideo import ConfigurationError, DataError
from usvideo.classifier import (
    CANONICAL,
    DESK,
    REDUCED,
    ClassificationMetrics,
    ClassifierArch,
    ClassifierModel,
    ClassifierTrainConfig,
    ClipSet,
    ablation_grid,
    build_clipset,
    classifier_forward,
    compute_losses,
    cross_validate,
    forward,
    loss_and_grads,
    mean_metrics,
    train_classifier,
    variant,
)
from usvideo.classifier.gradcheck import classifier_grad_check
from usvideo.data.synthetic import SyntheticConfig, generate_samples
from usvideo.kernels import Adam


def conv_out(n, k=3, s=1, p=1):
    return (n + 2 * p - k) // s + 1


def reduced_model(seed=0, arch=REDUCED):
    return ClassifierModel(arch, np.random.default_rng(seed))


def random_clips(rng, arch, n):
    return rng.random((n, 1, arch.clip_length, arch.clip_size, arch.clip_size))


@pytest.fixture(scope="module")
def small_videos():
    cfg = SyntheticConfig(n_videos=12, n_frames=24, height=48, width=48, clip_length=8)
    return generate_samples(cfg, 5)


class TestArch:
    def test_canonical_trace(self):
        assert CANONICAL.trace() == {
            "input": (1, 32, 112, 112),
            "conv1": (16, 32, 112, 112),
            "conv2": (32, 32, 56, 56),
            "conv3": (64, 16, 28, 28),
            "pool1": (64, 8, 14, 14),
            "conv4": (64, 4, 7, 7),
            "pool2": (64, 2, 3, 3),
        }
        assert CANONICAL.head_length == 1728 == 27 * 64

    def test_canonical_trace_by_hand_arithmetic(self):
        t, s = 32, 112
        s = conv_out(s, s=2)
        t, s = conv_out(t, s=2), conv_out(s, s=2)
        t, s = t // 2, s // 2
        assert (t, s) == (8, 14)
        t, s = conv_out(t, s=2), conv_out(s, s=2)
        assert (t // 2, s // 2) == (2, 3)

    def test_attention_trace(self):
        assert CANONICAL.attention_trace() == [(14, 14), (6, 6), (2, 2), (1, 1)]
        assert CANONICAL.temporal_windows == 8
        assert CANONICAL.attention_specs()[2].kernel == (2, 2)

    def test_flatten_head_length(self):
        assert variant(CANONICAL, True, False).head_length == 64 * 2 * 3 * 3

    @pytest.mark.parametrize("arch", [REDUCED, DESK])
    def test_presets_valid(self, arch):
        arch.validate()
        assert min(arch.attention_trace()[-1]) == 1

    def test_reduced_matches_layer_pattern(self):
        assert REDUCED.clip_length == 8 and REDUCED.clip_size == 28
        model = reduced_model()
        convs = sorted(k for k in model.params if k.startswith("conv"))
        assert convs == [f"conv{i}.weight" for i in range(1, 5)]
        assert all(f"bn{i}.gamma" in model.params for i in range(1, 5))

    def test_dict_round_trip(self):
        assert ClassifierArch.from_dict(DESK.to_dict()) == DESK

    def test_odd_clip_length(self):
        with pytest.raises(ConfigurationError):
            ClassifierArch(clip_length=7).validate()

    def test_attention_off_has_no_branch_params(self):
        m = ClassifierModel(variant(REDUCED, False, True))
        assert not any(k.startswith("att_") for k in m.params)


class TestForward:
    def test_shapes_follow_trace(self):
        m = reduced_model()
        x = random_clips(np.random.default_rng(1), REDUCED, 3)
        res = forward(m, x)
        for k, v in REDUCED.trace().items():
            assert res.shapes[k] == v
        assert res.shapes["v_temp"] == (1, REDUCED.temporal_windows, 1, 1)
        assert res.shapes["head"] == (REDUCED.head_length,)
        assert res.prob.shape == (3,)
        assert np.all((res.prob > 0) & (res.prob < 1))
        assert np.all((res.v_temp > 0) & (res.v_temp < 2))

    def test_wrong_shape(self):
        m = reduced_model()
        with pytest.raises(ConfigurationError):
            forward(m, np.zeros((1, 1, 8, 27, 28)))

    def test_wrong_motion_length(self):
        m = reduced_model()
        clip = np.zeros((1, 8, 28, 28))
        with pytest.raises(ConfigurationError):
            classifier_forward(m, clip, v_motion=np.ones(REDUCED.temporal_windows + 1))

    def test_bypass_equals_no_attention_model(self):
        m = reduced_model(2)
        plain = ClassifierModel(variant(REDUCED, False, True))
        for k, v in plain.params.items():
            v[...] = m.params[k]
        x = random_clips(np.random.default_rng(3), REDUCED, 4)
        a = forward(m, x, v_temp_override=np.ones(REDUCED.temporal_windows)).prob
        b = forward(plain, x).prob
        np.testing.assert_array_equal(a, b)

    def test_attention_commutes_with_spatial_permutation(self):
        m = reduced_model(4)
        res = forward(m, random_clips(np.random.default_rng(5), REDUCED, 2))
        f, v = res.cache[2], res.v_temp
        n, c, t, h, w = f.shape
        perm = np.random.default_rng(6).permutation(h * w)
        permute = lambda a: a.reshape(n, c, t, h * w)[..., perm].reshape(n, c, t, h, w)
        weigh = lambda a: a * v[:, None, :, None, None]
        np.testing.assert_array_equal(permute(weigh(f)), weigh(permute(f)))

    def test_eval_is_deterministic(self):
        m = reduced_model(7)
        x = random_clips(np.random.default_rng(8), REDUCED, 2)
        a, b = forward(m, x), forward(m, x)
        np.testing.assert_array_equal(a.prob, b.prob)
        np.testing.assert_array_equal(a.v_temp, b.v_temp)

    def test_eval_leaves_running_stats(self):
        m = reduced_model(9)
        before = {k: v.copy() for k, v in m.buffers().items()}
        forward(m, random_clips(np.random.default_rng(10), REDUCED, 2))
        for k, v in m.buffers().items():
            np.testing.assert_array_equal(v, before[k])
        forward(m, random_clips(np.random.default_rng(10), REDUCED, 2), training=True, rng=np.random.default_rng(0))
        assert any(not np.array_equal(v, before[k]) for k, v in m.buffers().items())

    def test_single_clip_interface(self):
        m = reduced_model(11)
        clip = random_clips(np.random.default_rng(12), REDUCED, 1)[0]
        out = classifier_forward(m, clip)
        assert out.prob == forward(m, clip[None]).prob[0]
        assert out.v_temp.shape == (REDUCED.temporal_windows,)


class TestLosses:
    def test_total_is_exact_sum(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            prob = rng.uniform(0.01, 0.99, 4)
            rec = compute_losses(prob, rng.integers(0, 2, 4).astype(float), rng.uniform(0, 2, (4, 3)), rng.random((4, 3)))
            assert rec.total == rec.l_cls + rec.l_motion
            assert math.isfinite(rec.total)

    def test_consistent_attention_and_confident_prediction(self):
        vm = np.array([[0.2, 0.5, 0.9]])
        rec = compute_losses(np.array([1 - 1e-12]), np.array([1.0]), 1.7 * vm, vm)
        assert rec.total == pytest.approx(0.0, abs=1e-9)
        assert rec.l_motion == pytest.approx(0.0, abs=1e-12)

    def test_no_attention_has_zero_motion_term(self):
        rec = compute_losses(np.array([0.3]), np.array([0.0]))
        assert rec.l_motion == 0.0 and rec.total == rec.l_cls

    def test_loss_and_grads_cover_all_params(self):
        m = reduced_model(14)
        rng = np.random.default_rng(15)
        rec, grads, _ = loss_and_grads(m, random_clips(rng, REDUCED, 2), [0, 1], rng.random((2, 4)),
                                       rng=np.random.default_rng(0))
        assert set(grads) == set(m.params)
        assert all(g.shape == m.params[k].shape for k, g in grads.items())


class TestGradients:
    @pytest.mark.parametrize("seed", range(2))
    def test_subset(self, seed):
        res = classifier_grad_check(seed, max_coords=40)
        assert res.report.passed, res.report.per_param
        assert res.evaluations > 0


class TestMetrics:
    def test_hand_case(self):
        m = ClassificationMetrics.from_counts(tp=3, fp=1, tn=4, fn=2)
        assert m.precision == 0.75
        assert m.sensitivity == 0.6
        assert m.f1 == pytest.approx(2 / 3, abs=1e-15)
        assert m.specificity == 0.8
        assert m.accuracy == 0.7

    def test_perfect(self):
        m = ClassificationMetrics.from_predictions([0.9, 0.1, 0.7, 0.2], [1, 0, 1, 0])
        assert m.as_row() == {k: 1.0 for k in m.as_row()}

    def test_constant_positive(self):
        m = ClassificationMetrics.from_predictions([1.0] * 6, [1, 0] * 3)
        assert m.sensitivity == 1.0 and m.specificity == 0.0

    def test_threshold_inclusive(self):
        assert ClassificationMetrics.from_predictions([0.5], [1]).tp == 1

    def test_undefined_ratio_flagged(self):
        m = ClassificationMetrics.from_predictions([0.1, 0.2], [0, 0])
        assert m.sensitivity == 0.0 and m.precision == 0.0
        assert {"sensitivity", "precision", "f1"} <= set(m.undefined)

    def test_mean(self):
        a = ClassificationMetrics.from_counts(1, 0, 1, 0)
        b = ClassificationMetrics.from_counts(0, 1, 0, 1)
        assert mean_metrics([a, b])["accuracy"] == 0.5

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_accuracy_identity(self, tp, fp, tn, fn):
        m = ClassificationMetrics.from_counts(tp, fp, tn, fn)
        total = tp + fp + tn + fn
        if total:
            assert m.accuracy == (tp + tn) / total
        for k, v in m.as_row().items():
            assert 0.0 <= v <= 1.0


class TestClips:
    def test_clipset_shapes(self, small_videos):
        data = build_clipset(small_videos, REDUCED)
        assert data.clips.shape == (12, 1, 8, 28, 28)
        assert data.v_motion.shape == (12, REDUCED.temporal_windows)
        for v, src in zip(small_videos, data.sources):
            assert src[0] <= v.key_frame_index <= src[-1]

    def test_uniform_spans_video(self, small_videos):
        data = build_clipset(small_videos, REDUCED, "uniform")
        # bin centres of eight equal bins over 24 frames
        np.testing.assert_array_equal(data.sources, np.tile([1, 4, 7, 10, 13, 16, 19, 22], (12, 1)))

    def test_predicted_key_frames(self, small_videos):
        keys = {v.video_id: 0 for v in small_videos}
        data = build_clipset(small_videos, REDUCED, key_frames=keys)
        assert np.all(data.sources[:, 0] == 0)

    def test_unknown_sampling(self, small_videos):
        with pytest.raises(ConfigurationError):
            build_clipset(small_videos, REDUCED, "random")


class TestTraining:
    def test_schedule(self):
        cfg = ClassifierTrainConfig()
        assert cfg.epochs == 40 and cfg.batch_size == 16 and cfg.weight_decay == 1e-8
        assert cfg.lr_at(20) == 1e-3 and cfg.lr_at(21) == 1e-4

    def test_epoch_21_lr(self, small_videos):
        data = build_clipset(small_videos[:4], REDUCED)
        res = train_classifier(reduced_model(16), data, ClassifierTrainConfig(augment=False))
        assert [e.epoch for e in res.epochs] == list(range(1, 41))
        assert res.epochs[19].lr == 1e-3
        assert res.epochs[20].lr == 1e-4
        assert res.optimizer.lr == 1e-4

    def test_single_class_rejected(self, small_videos):
        data = build_clipset([v for v in small_videos if v.label == 1], REDUCED)
        with pytest.raises(DataError):
            train_classifier(reduced_model(), data, ClassifierTrainConfig(epochs_high=1, epochs_low=0))

    def test_single_class_fold_rejected(self, small_videos):
        data = build_clipset(small_videos, REDUCED)
        data.labels[:] = 1.0
        with pytest.raises(DataError):
            cross_validate(data, REDUCED, ClassifierTrainConfig(epochs_high=1, epochs_low=0), k=2)

    def test_attention_off_logs_no_motion(self, small_videos):
        data = build_clipset(small_videos[:4], REDUCED)
        cfg = ClassifierTrainConfig(epochs_high=2, epochs_low=0)
        res = train_classifier(ClassifierModel(variant(REDUCED, False, True)), data, cfg)
        assert all(e.l_motion is None and e.total == e.l_cls for e in res.epochs)
        res = train_classifier(reduced_model(), data, cfg)
        assert all(e.l_motion is not None for e in res.epochs)

    def test_seeded_run_is_bitwise_reproducible(self, small_videos):
        data = build_clipset(small_videos, REDUCED)
        cfg = ClassifierTrainConfig(epochs_high=2, epochs_low=1, batch_size=4, seed=3)
        a = train_classifier(reduced_model(17), data, cfg)
        b = train_classifier(reduced_model(17), data, cfg)
        assert a.epochs == b.epochs
        for k in a.model.params:
            np.testing.assert_array_equal(a.model.params[k], b.model.params[k])

    def test_single_batch_overfit(self, small_videos):
        data = build_clipset(small_videos[:8], REDUCED)
        model = reduced_model(18)
        opt = Adam(model.params, lr=1e-3, weight_decay=1e-8)
        drop = np.random.default_rng(0)
        history = []
        for _ in range(300):
            rec, grads, _ = loss_and_grads(model, data.clips, data.labels, data.v_motion, rng=drop)
            history.append(rec.l_cls)
            if rec.l_cls < 0.05:
                break
            opt.step(grads)
        assert min(history) < 0.05, history[-5:]

    def test_ablation_grid_order(self):
        grid = list(ablation_grid())
        assert len(grid) == 8 == len(set(grid))
        assert grid[0] == ("keyframe", True, True)
        assert grid[-1] == ("uniform", False, False)

    def test_empty_training_set(self):
        empty = ClipSet([], np.zeros((0, 1, 8, 28, 28)), np.zeros((0, 8), int), np.zeros(0), np.zeros((0, 4)))
        with pytest.raises(DataError):
            train_classifier(reduced_model(), empty)
