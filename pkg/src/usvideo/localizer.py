"""LSTM key-frame localizer.

Each detected nodule becomes a 512-d descriptor: an embedded appearance
feature concatenated with an embedded (ROI box, frame time) vector. An LSTM
runs over the detected frames in temporal order and a two-layer head
emits a sigmoid score per frame, trained by MSE against the generated
score labels. The predicted key-frame is the arg-max score.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from usvideo.data.containers import FEATURE_DIM, VideoSample
from usvideo.errors import ConfigurationError, DataError
from usvideo.kernels import (
    Adam,
    LSTMParams,
    default_dtype,
    fully_connected,
    fully_connected_backward,
    glorot_uniform,
    lstm_batch,
    lstm_batch_backward,
    relu,
    relu_backward,
    sigmoid,
)
from usvideo.similarity import generate_score_labels

log = logging.getLogger(__name__)

SPATIOTEMPORAL_DIM = 5


@dataclass
class NoduleDescriptor:
    appearance: np.ndarray  # (feature_dim,)
    spatiotemporal: np.ndarray  # (x1/W, y1/H, x2/W, y2/H, i/(N-1))


def build_descriptor(video: VideoSample, frame_index: int) -> NoduleDescriptor:
    roi = video.rois[frame_index]
    feat = None if video.features is None else video.features[frame_index]
    if roi is None or feat is None:
        raise DataError(f"{video.video_id}: frame {frame_index} has no detection")
    t = 0.0 if video.n_frames == 1 else frame_index / (video.n_frames - 1)
    w, h = video.width, video.height
    st = np.array([roi.x1 / w, roi.y1 / h, roi.x2 / w, roi.y2 / h, t])
    return NoduleDescriptor(np.asarray(feat, dtype=float), st)


@dataclass(frozen=True)
class LocalizerDims:
    feature_dim: int = FEATURE_DIM
    embed_dim: int = 256
    hidden: int = 256
    head_hidden: int = 64


class LocalizerModel:
    """Parameter container; every array lives in ``self.params``."""

    kind = "localizer"

    def __init__(self, dims: LocalizerDims = LocalizerDims(), rng: np.random.Generator | None = None):
        self.dims = dims
        rng = rng or np.random.default_rng(0)
        e, hid, dt = dims.embed_dim, dims.hidden, default_dtype()
        self.params: dict[str, np.ndarray] = {
            "fc_appearance.weight": glorot_uniform(rng, (e, dims.feature_dim)),
            "fc_appearance.bias": np.zeros(e, dt),
            "fc_spatiotemporal.weight": glorot_uniform(rng, (e, SPATIOTEMPORAL_DIM)),
            "fc_spatiotemporal.bias": np.zeros(e, dt),
            "lstm.w_x": glorot_uniform(rng, (4 * hid, 2 * e)),
            "lstm.w_h": glorot_uniform(rng, (4 * hid, hid)),
            "lstm.b": np.zeros(4 * hid, dt),
            "head1.weight": glorot_uniform(rng, (dims.head_hidden, hid)),
            "head1.bias": np.zeros(dims.head_hidden, dt),
            "head2.weight": glorot_uniform(rng, (1, dims.head_hidden)),
            "head2.bias": np.zeros(1, dt),
        }

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        d = self.dims
        e, hid = d.embed_dim, d.hidden
        return {
            "fc_appearance.weight": (e, d.feature_dim), "fc_appearance.bias": (e,),
            "fc_spatiotemporal.weight": (e, SPATIOTEMPORAL_DIM), "fc_spatiotemporal.bias": (e,),
            "lstm.w_x": (4 * hid, 2 * e), "lstm.w_h": (4 * hid, hid), "lstm.b": (4 * hid,),
            "head1.weight": (d.head_hidden, hid), "head1.bias": (d.head_hidden,),
            "head2.weight": (1, d.head_hidden), "head2.bias": (1,),
        }

    def lstm(self) -> LSTMParams:
        p = self.params
        return LSTMParams(p["lstm.w_x"], p["lstm.w_h"], p["lstm.b"])


@dataclass
class PreparedVideo:
    """Descriptors of one video's detected frames, in temporal order."""

    video_id: str
    n_frames: int
    frames: np.ndarray  # detected frame indices
    appearance: np.ndarray  # (F, feature_dim)
    spatiotemporal: np.ndarray  # (F, 5)
    targets: np.ndarray | None = None  # score labels at the detected frames
    key_frame_index: int = -1


def prepare(video: VideoSample, with_labels: bool = True) -> PreparedVideo:
    frames = np.array(video.detected(), dtype=int)
    if frames.size == 0:
        raise DataError(f"{video.video_id}: no detections to localize")
    descs = [build_descriptor(video, i) for i in frames]
    targets = generate_score_labels(video)[frames] if with_labels else None
    return PreparedVideo(
        video.video_id,
        video.n_frames,
        frames,
        np.stack([d.appearance for d in descs]),
        np.stack([d.spatiotemporal for d in descs]),
        targets,
        video.key_frame_index,
    )


def _pack(batch: list[PreparedVideo]):
    steps = max(len(v.frames) for v in batch)
    dt = default_dtype()
    app = np.zeros((len(batch), steps, batch[0].appearance.shape[1]), dt)
    st = np.zeros((len(batch), steps, SPATIOTEMPORAL_DIM), dt)
    lengths = np.array([len(v.frames) for v in batch])
    for b, v in enumerate(batch):
        app[b, : lengths[b]] = v.appearance
        st[b, : lengths[b]] = v.spatiotemporal
    return app, st, lengths


def _forward(model: LocalizerModel, batch: list[PreparedVideo]):
    p = model.params
    app, st, lengths = _pack(batch)
    a, ca = fully_connected(app, p["fc_appearance.weight"], p["fc_appearance.bias"])
    a, ma = relu(a)
    s, cs = fully_connected(st, p["fc_spatiotemporal.weight"], p["fc_spatiotemporal.bias"])
    s, ms = relu(s)
    hidden, cl = lstm_batch(np.concatenate([a, s], axis=-1), model.lstm(), lengths)
    z1, c1 = fully_connected(hidden, p["head1.weight"], p["head1.bias"])
    z1, m1 = relu(z1)
    logits, c2 = fully_connected(z1, p["head2.weight"], p["head2.bias"])
    scores = sigmoid(logits[..., 0])
    return scores, lengths, (ca, ma, cs, ms, cl, c1, m1, c2)


def _backward(model: LocalizerModel, d_scores: np.ndarray, scores: np.ndarray, caches) -> dict[str, np.ndarray]:
    ca, ma, cs, ms, cl, c1, m1, c2 = caches
    e = model.dims.embed_dim
    d_logits = (d_scores * scores * (1.0 - scores))[..., None]
    g2 = fully_connected_backward(d_logits, c2)
    g1 = fully_connected_backward(relu_backward(g2.d_input, m1), c1)
    d_x, d_lstm, _, _ = lstm_batch_backward(g1.d_input, cl)
    gs = fully_connected_backward(relu_backward(d_x[..., e:], ms), cs)
    ga = fully_connected_backward(relu_backward(d_x[..., :e], ma), ca)
    grads = {}
    for prefix, g in (("fc_appearance", ga), ("fc_spatiotemporal", gs), ("head1", g1), ("head2", g2)):
        grads[f"{prefix}.weight"] = g.d_params["weight"]
        grads[f"{prefix}.bias"] = g.d_params["bias"]
    for k, v in d_lstm.items():
        grads[f"lstm.{k}"] = v
    return grads


def batch_loss_and_grads(model: LocalizerModel, batch: list[PreparedVideo]):
    """Mean over videos of each video's MSE; returns ``(loss, grads)``."""
    scores, lengths, caches = _forward(model, batch)
    d_scores = np.zeros_like(scores)
    total = 0.0
    for b, v in enumerate(batch):
        n = lengths[b]
        diff = scores[b, :n] - v.targets
        total += float(np.mean(diff**2))
        d_scores[b, :n] = 2.0 * diff / n / len(batch)
    return total / len(batch), _backward(model, d_scores, scores, caches)


def batch_loss(model: LocalizerModel, batch: list[PreparedVideo]) -> float:
    scores, lengths, _ = _forward(model, batch)
    return float(np.mean([np.mean((scores[b, : lengths[b]] - v.targets) ** 2) for b, v in enumerate(batch)]))


def score_prepared(model: LocalizerModel, video: PreparedVideo) -> np.ndarray:
    scores, _, _ = _forward(model, [video])
    out = np.zeros(video.n_frames)
    out[video.frames] = scores[0]
    return out


def localizer_forward(model: LocalizerModel, video: VideoSample) -> np.ndarray:
    """Score for every frame of ``video``; frames without a detection score 0."""
    return score_prepared(model, prepare(video, with_labels=False))


def argmax_frame(scores) -> int:
    # np.argmax returns the first maximal index
    return int(np.argmax(np.asarray(scores)))


def predict_keyframe(model: LocalizerModel, video: VideoSample) -> int:
    return argmax_frame(localizer_forward(model, video))


def accuracy_at_tolerance(predictions, labels, tolerance: int) -> float:
    """Fraction of videos whose predicted key-frame is within ``tolerance`` frames (inclusive)."""
    if tolerance < 0:
        raise ConfigurationError("tolerance must be non-negative")
    p, y = np.asarray(predictions), np.asarray(labels)
    if p.size == 0:
        return 0.0
    return float(np.mean(np.abs(p - y) <= tolerance))


def accuracy_curve(predictions, labels, max_tolerance: int = 32) -> list[tuple[int, float]]:
    return [(d, accuracy_at_tolerance(predictions, labels, d)) for d in range(max_tolerance + 1)]


@dataclass
class LocalizerTrainConfig:
    lr: float = 0.01
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0


@dataclass
class LocalizerTrainResult:
    model: LocalizerModel
    optimizer: Adam
    loss_curve: list[float] = field(default_factory=list)


def train_localizer(
    model: LocalizerModel,
    videos,
    config: LocalizerTrainConfig = LocalizerTrainConfig(),
    optimizer: Adam | None = None,
) -> LocalizerTrainResult:
    """Minimize per-video MSE against generated score labels with Adam.

    ``videos`` may be :class:`VideoSample` or already-prepared videos.
    The per-epoch curve records the mean batch loss seen during that epoch.
    """
    prepared = [v if isinstance(v, PreparedVideo) else prepare(v) for v in videos]
    if not prepared:
        raise DataError("cannot train the localizer on an empty dataset")
    optimizer = optimizer or Adam(model.params, lr=config.lr)
    rng = np.random.default_rng([config.seed, 0x10C])
    curve = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(prepared))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [prepared[i] for i in order[start : start + config.batch_size]]
            loss, grads = batch_loss_and_grads(model, batch)
            optimizer.step(grads)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
        log.info("localizer epoch %d loss %.6f", epoch + 1, curve[-1])
    return LocalizerTrainResult(model, optimizer, curve)


def predict_all(model: LocalizerModel, videos, chunk: int = 64) -> dict[str, int]:
    prepared = [v if isinstance(v, PreparedVideo) else prepare(v, with_labels=False) for v in videos]
    out = {}
    for start in range(0, len(prepared), chunk):
        batch = prepared[start : start + chunk]
        scores, lengths, _ = _forward(model, batch)
        for b, v in enumerate(batch):
            full = np.zeros(v.n_frames)
            full[v.frames] = scores[b, : lengths[b]]
            out[v.video_id] = argmax_frame(full)
    return out


GRADCHECK_DIMS = LocalizerDims(feature_dim=6, embed_dim=4, hidden=5, head_hidden=3)


def localizer_grad_check(seed: int, dims: LocalizerDims = GRADCHECK_DIMS, n_frames: int = 4, h: float = 1e-5,
                         tolerance: float = 1e-4, max_coords: int | None = None):
    """Finite-difference check of the per-video MSE through head, LSTM and embeddings on a toy video.

    Parameters start from the model's own initialization plus small jitter;
    large random weights saturate the LSTM gates and leave entries near
    1e-9 whose central differences are dominated by roundoff.
    """
    from usvideo.data.containers import Roi
    from usvideo.kernels import grad_check, precision

    with precision("f64"):
        rng = np.random.default_rng([seed, 0x10C])
        model = LocalizerModel(dims, rng)
        for p in model.params.values():
            p += rng.normal(0.0, 0.1, p.shape)
        rois = []
        for _ in range(n_frames):
            x1, y1 = (int(v) for v in rng.integers(0, 8, 2))
            rois.append(Roi(x1, y1, x1 + int(rng.integers(4, 12)), y1 + int(rng.integers(4, 12))))
        feats = [rng.normal(size=dims.feature_dim) for _ in range(n_frames)]
        video = VideoSample("gradcheck", np.zeros((n_frames, 20, 20), np.uint8), rois, 0, 0, feats)
        prepared = prepare(video)
        prepared.targets = rng.random(n_frames)
        _, grads = batch_loss_and_grads(model, [prepared])
        return grad_check(lambda: batch_loss(model, [prepared]), model.params, grads, h=h, tolerance=tolerance,
                          max_coords=max_coords, rng=np.random.default_rng(seed))
