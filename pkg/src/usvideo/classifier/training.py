"""Losses, clip preparation, training schedule, evaluation and the ablation grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from usvideo.classifier.metrics import ClassificationMetrics, mean_metrics
from usvideo.classifier.model import ClassifierArch, ClassifierModel, ForwardResult, Gates, backward, forward, variant
from usvideo.data.clips import Clip, augment, clip_from_indices, keyframe_window, uniform_window
from usvideo.data.containers import VideoSample
from usvideo.data.folds import FoldSplit, kfold_split
from usvideo.errors import ConfigurationError, DataError
from usvideo.kernels import (
    Adam,
    bce_logit_grad,
    bce_loss,
    cosine_consistency_backward,
    cosine_consistency_loss,
    default_dtype,
)
from usvideo.rng import stream
from usvideo.similarity import motion_index, motion_vector

log = logging.getLogger(__name__)

MOTION_WEIGHT = 1.0
SAMPLINGS = ("keyframe", "uniform")


@dataclass(frozen=True)
class LossRecord:
    l_cls: float
    l_motion: float
    total: float


def compute_losses(prob, label, v_temp=None, v_motion=None) -> LossRecord:
    """BCE plus the cosine motion-consistency term; the latter is 0 without attention."""
    l_cls = bce_loss(prob, label)
    l_motion = 0.0 if v_temp is None else MOTION_WEIGHT * cosine_consistency_loss(v_temp, v_motion)
    return LossRecord(l_cls, l_motion, l_cls + l_motion)


def loss_and_grads(
    model: ClassifierModel,
    clips: np.ndarray,
    labels: np.ndarray,
    v_motion: np.ndarray,
    training: bool = True,
    rng: np.random.Generator | None = None,
    gates: Gates | None = None,
    update_stats: bool = True,
) -> tuple[LossRecord, dict[str, np.ndarray], ForwardResult]:
    res = forward(model, clips, training=training, rng=rng, gates=gates, update_stats=update_stats)
    labels = np.asarray(labels, dtype=res.prob.dtype)
    rec = compute_losses(res.prob, labels, res.v_temp, v_motion)
    d_v = None if res.v_temp is None else MOTION_WEIGHT * cosine_consistency_backward(res.v_temp, v_motion)
    grads = backward(model, bce_logit_grad(res.prob, labels), d_v, res.cache)
    return rec, grads, res


def batch_loss(model, clips, labels, v_motion, training=True, rng=None, gates=None) -> float:
    res = forward(model, clips, training=training, rng=rng, gates=gates, update_stats=False)
    return compute_losses(res.prob, np.asarray(labels, dtype=res.prob.dtype), res.v_temp, v_motion).total


@dataclass
class ClassifierOutput:
    prob: float
    v_temp: np.ndarray | None


def classifier_forward(model: ClassifierModel, clip, v_motion=None, mode: str = "eval", rng=None) -> ClassifierOutput:
    """Single-clip forward; ``mode`` is "eval" or "train" (batch statistics, dropout)."""
    if mode not in ("eval", "train"):
        raise ConfigurationError(f"mode must be 'eval' or 'train', got {mode!r}")
    voxels = clip.voxels if isinstance(clip, Clip) else np.asarray(clip)
    t_w = model.arch.temporal_windows
    if v_motion is not None and np.shape(v_motion) != (t_w,):
        raise ConfigurationError(f"v_motion must have length {t_w}, got shape {np.shape(v_motion)}")
    res = forward(model, voxels, training=mode == "train", rng=rng, update_stats=False)
    return ClassifierOutput(float(res.prob[0]), None if res.v_temp is None else res.v_temp[0])


@dataclass
class ClipSet:
    """Model-ready clips of a list of videos, with labels and windowed motion vectors."""

    video_ids: list[str]
    clips: np.ndarray  # (N, 1, T, S, S)
    sources: np.ndarray  # (N, T) frame indices
    labels: np.ndarray  # (N,)
    v_motion: np.ndarray  # (N, T_w)

    def subset(self, ids) -> "ClipSet":
        pos = {v: i for i, v in enumerate(self.video_ids)}
        idx = np.array([pos[v] for v in ids], dtype=int)
        return ClipSet(list(ids), self.clips[idx], self.sources[idx], self.labels[idx], self.v_motion[idx])

    def __len__(self) -> int:
        return len(self.video_ids)


def clip_indices(video: VideoSample, length: int, sampling: str, key: int) -> np.ndarray:
    if sampling == "keyframe":
        return keyframe_window(video.n_frames, key, length)
    if sampling == "uniform":
        return uniform_window(video.n_frames, length)
    raise ConfigurationError(f"unknown sampling {sampling!r}; expected one of {SAMPLINGS}")


def build_clipset(videos, arch: ClassifierArch, sampling: str = "keyframe", key_frames: dict | None = None) -> ClipSet:
    """Crop clips around the ground-truth (or ``key_frames``-supplied) key-frame.

    The motion index is computed on the full frames, gathered at the clip's
    source frames and averaged into ``arch.temporal_windows`` windows.
    """
    videos = list(videos)
    if not videos:
        raise DataError("no videos to build clips from")
    t, s, t_w = arch.clip_length, arch.clip_size, arch.temporal_windows
    dt = default_dtype()
    clips = np.empty((len(videos), 1, t, s, s), dt)
    sources = np.empty((len(videos), t), int)
    vm = np.empty((len(videos), t_w), dt)
    for n, v in enumerate(videos):
        key = v.key_frame_index if key_frames is None else int(key_frames[v.video_id])
        idx = clip_indices(v, t, sampling, key)
        clips[n] = clip_from_indices(v, idx, s, anchor=key).voxels
        sources[n] = idx
        vm[n] = motion_vector(motion_index(v)[idx], t_w)
    labels = np.array([v.label for v in videos], dtype=dt)
    return ClipSet([v.video_id for v in videos], clips, sources, labels, vm)


@dataclass(frozen=True)
class ClassifierTrainConfig:
    lr: float = 1e-3
    lr_low: float = 1e-4
    epochs_high: int = 20
    epochs_low: int = 20
    weight_decay: float = 1e-8
    batch_size: int = 16
    augment: bool = True
    seed: int = 0

    @property
    def epochs(self) -> int:
        return self.epochs_high + self.epochs_low

    def lr_at(self, epoch: int) -> float:
        """Learning rate of 1-based ``epoch``."""
        return self.lr if epoch <= self.epochs_high else self.lr_low

    def validate(self) -> None:
        if min(self.lr, self.lr_low, self.batch_size) <= 0 or self.weight_decay < 0:
            raise ConfigurationError("learning rates and batch size must be positive")
        if self.epochs_high < 0 or self.epochs_low < 0:
            raise ConfigurationError("epoch counts must be non-negative")


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    lr: float
    l_cls: float
    l_motion: float | None  # None when the model has no attention branch
    total: float


@dataclass
class ClassifierTrainResult:
    model: ClassifierModel
    optimizer: Adam
    epochs: list[EpochLog] = field(default_factory=list)


def _augmented(clips: np.ndarray, sources: np.ndarray, rng) -> np.ndarray:
    return np.stack([augment(Clip(c, s), rng).voxels for c, s in zip(clips, sources)])


def check_two_classes(labels, what: str) -> None:
    if len(np.unique(labels)) < 2:
        raise DataError(f"{what} contains a single class; metrics would be undefined")


def train_classifier(
    model: ClassifierModel,
    data: ClipSet,
    config: ClassifierTrainConfig = ClassifierTrainConfig(),
    optimizer: Adam | None = None,
    stream_id: int = 0,
) -> ClassifierTrainResult:
    """Adam with a step decay after ``epochs_high`` epochs; one log entry per epoch.

    Shuffling, augmentation and dropout draw from separate streams of
    ``config.seed`` (offset by ``stream_id``, e.g. the fold number).
    """
    config.validate()
    if len(data) == 0:
        raise DataError("cannot train the classifier on an empty dataset")
    check_two_classes(data.labels, "training set")
    optimizer = optimizer or Adam(model.params, lr=config.lr, weight_decay=config.weight_decay)
    shuffle = stream(config.seed, "shuffle", stream_id)
    aug = stream(config.seed, "augment", stream_id)
    drop = stream(config.seed, "dropout", stream_id)
    logs = []
    for epoch in range(1, config.epochs + 1):
        optimizer.lr = config.lr_at(epoch)
        order = shuffle.permutation(len(data))
        recs, sizes = [], []
        for start in range(0, len(order), config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            x = data.clips[idx]
            if config.augment:
                x = _augmented(x, data.sources[idx], aug)
            rec, grads, _ = loss_and_grads(model, x, data.labels[idx], data.v_motion[idx], rng=drop)
            optimizer.step(grads)
            recs.append(rec)
            sizes.append(len(idx))
        w = np.array(sizes) / sum(sizes)
        l_cls = float(np.dot(w, [r.l_cls for r in recs]))
        l_motion = float(np.dot(w, [r.l_motion for r in recs])) if model.arch.attention else None
        entry = EpochLog(epoch, optimizer.lr, l_cls, l_motion, l_cls + (l_motion or 0.0))
        logs.append(entry)
        log.info("classifier epoch %d lr %g loss %.6f", epoch, entry.lr, entry.total)
    return ClassifierTrainResult(model, optimizer, logs)


def predict_proba(model: ClassifierModel, data: ClipSet, chunk: int = 16) -> np.ndarray:
    out = [forward(model, data.clips[i : i + chunk]).prob for i in range(0, len(data), chunk)]
    return np.concatenate(out) if out else np.empty(0)


def evaluate(model: ClassifierModel, data: ClipSet) -> ClassificationMetrics:
    return ClassificationMetrics.from_predictions(predict_proba(model, data), data.labels)


@dataclass
class FoldOutcome:
    fold: int
    metrics: ClassificationMetrics
    epochs: list[EpochLog]
    test_ids: list[str]
    probs: np.ndarray
    model: ClassifierModel | None = None


@dataclass
class CrossValResult:
    arch: ClassifierArch
    folds: list[FoldOutcome]

    @property
    def mean(self) -> dict[str, float]:
        return mean_metrics([f.metrics for f in self.folds])


def make_folds(data: ClipSet, k: int, seed: int) -> FoldSplit:
    fold_seed = int(stream(seed, "folds").integers(2**63))
    return kfold_split(data.video_ids, k, seed=fold_seed, labels=data.labels.astype(int).tolist())


def cross_validate(
    data: ClipSet,
    arch: ClassifierArch,
    config: ClassifierTrainConfig = ClassifierTrainConfig(),
    k: int = 5,
    keep_models: bool = False,
) -> CrossValResult:
    """Stratified k-fold training and evaluation; the same seed gives the same folds for every arch."""
    split = make_folds(data, k, config.seed)
    outcomes = []
    for fold in range(k):
        test = data.subset(split.test_ids(fold))
        train = data.subset(split.train_ids(fold))
        check_two_classes(test.labels, f"fold {fold} test set")
        model = ClassifierModel(arch, stream(config.seed, "init", fold))
        res = train_classifier(model, train, config, stream_id=fold)
        probs = predict_proba(model, test)
        metrics = ClassificationMetrics.from_predictions(probs, test.labels)
        log.info("fold %d accuracy %.4f", fold, metrics.accuracy)
        outcomes.append(FoldOutcome(fold, metrics, res.epochs, test.video_ids, probs, model if keep_models else None))
    return CrossValResult(arch, outcomes)


@dataclass
class AblationRow:
    sampling: str
    spp: bool
    attention: bool
    result: CrossValResult

    @property
    def is_full(self) -> bool:
        return self.sampling == "keyframe" and self.spp and self.attention

    @property
    def is_baseline(self) -> bool:
        return self.sampling == "uniform" and not self.spp and not self.attention


def ablation_grid():
    for sampling in SAMPLINGS:
        for spp in (True, False):
            for attention in (True, False):
                yield sampling, spp, attention


def ablate(
    videos,
    arch: ClassifierArch,
    config: ClassifierTrainConfig = ClassifierTrainConfig(),
    k: int = 5,
    key_frames: dict | None = None,
) -> list[AblationRow]:
    """Cross-validate all eight {sampling} x {SPP} x {attention} variants on the same folds."""
    videos = list(videos)
    clipsets = {s: build_clipset(videos, arch, s, key_frames) for s in SAMPLINGS}
    rows = []
    for sampling, spp, attention in ablation_grid():
        log.info("ablation: sampling=%s spp=%s attention=%s", sampling, spp, attention)
        result = cross_validate(clipsets[sampling], variant(arch, attention, spp), config, k)
        rows.append(AblationRow(sampling, spp, attention, result))
    return rows


def scaled_schedule(config: ClassifierTrainConfig, epochs_high: int, epochs_low: int) -> ClassifierTrainConfig:
    return replace(config, epochs_high=epochs_high, epochs_low=epochs_low)
