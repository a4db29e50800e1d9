"""Similarity measures behind the key-frame score labels and the motion index.

Score labels average three per-frame similarities to the key-frame:
appearance (feature distance), temporal (index distance) and spatial
(ROI overlap). The motion index averages SSIM and histogram intersection
between a frame and its two neighbours on each side; a still probe gives
values near 1.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from usvideo.data.containers import Roi, VideoSample
from usvideo.errors import ConfigurationError, DataError

K1, K2 = 0.01, 0.03
HIST_BINS = 256
NEIGHBOR_OFFSETS = (-2, -1, 1, 2)


def iou(a: Roi, b: Roi) -> float:
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    iw = max(0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union if union > 0 else 0.0


def feature_similarity(features, key: int) -> np.ndarray:
    """``1 - d_i / max_j d_j`` for Euclidean distance to the key-frame feature.

    Frames without a feature score 0; if every distance is 0 all present
    frames score 1.
    """
    if features[key] is None:
        raise DataError(f"key-frame {key} has no feature vector")
    ref = np.asarray(features[key])
    present = np.array([f is not None for f in features])
    dist = np.zeros(len(features))
    for i, f in enumerate(features):
        if f is not None:
            dist[i] = np.linalg.norm(np.asarray(f) - ref)
    top = dist[present].max()
    sim = np.ones(len(features)) if top == 0 else 1.0 - dist / top
    return np.where(present, sim, 0.0)


def index_similarity(n_frames: int, key: int) -> np.ndarray:
    dist = np.abs(np.arange(n_frames) - key)
    return 1.0 - dist / max(1, dist.max())


def generate_score_labels(video: VideoSample) -> np.ndarray:
    """Per-frame key-frame likelihood targets in [0, 1]; exactly 1 at the key-frame."""
    k = video.key_frame_index
    key_roi = video.rois[k]
    if key_roi is None:
        raise DataError(f"{video.video_id}: key-frame {k} has no roi")
    if video.features is None or video.features[k] is None:
        raise DataError(f"{video.video_id}: key-frame {k} has no feature vector")
    feat = feature_similarity(video.features, k)
    idx = index_similarity(video.n_frames, k)
    overlap = np.array([0.0 if r is None else iou(r, key_roi) for r in video.rois])
    labels = (feat + idx + overlap) / 3.0
    labels[k] = 1.0
    return labels


def _ssim_from_stats(mu_a, mu_b, var_a, var_b, cov, data_range=1.0) -> float:
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    value = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return float(min(1.0, max(0.0, value)))


def ssim(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> float:
    """Single-window SSIM over the whole frame, clamped to [0, 1]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ConfigurationError(f"ssim: frame shapes {a.shape} and {b.shape} differ")
    mu_a, mu_b = a.mean(), b.mean()
    cov = np.mean((a - mu_a) * (b - mu_b))
    return _ssim_from_stats(mu_a, mu_b, a.var(), b.var(), cov, data_range)


def intensity_histogram(frame: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    idx = np.clip(np.rint(np.asarray(frame) * (bins - 1)), 0, bins - 1).astype(int)
    return np.bincount(idx.ravel(), minlength=bins) / idx.size


def hist_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection of the normalized 256-bin intensity histograms."""
    return float(np.minimum(intensity_histogram(a), intensity_histogram(b)).sum())


def motion_index(video) -> np.ndarray:
    """Per-frame motion index for a :class:`VideoSample` or an (N, H, W) array in [0, 1].

    Neighbours outside the video are dropped rather than padded.
    """
    frames = video.frames if isinstance(video, VideoSample) else np.asarray(video, dtype=float)
    n = frames.shape[0]
    if n < 2:
        raise ConfigurationError("motion index needs at least two frames")
    flat = frames.reshape(n, -1)
    mu = flat.mean(axis=1)
    centred = flat - mu[:, None]
    var = np.mean(centred**2, axis=1)
    hists = np.stack([intensity_histogram(f) for f in frames])
    pair = {}
    for i in range(n):
        for off in (1, 2):
            j = i + off
            if j < n:
                cov = float(np.mean(centred[i] * centred[j]))
                s = _ssim_from_stats(mu[i], mu[j], var[i], var[j], cov)
                h = float(np.minimum(hists[i], hists[j]).sum())
                pair[i, j] = pair[j, i] = (s + h) / 2.0
    out = np.empty(n)
    for i in range(n):
        vals = [pair[i, i + o] for o in NEIGHBOR_OFFSETS if 0 <= i + o < n]
        out[i] = np.mean(vals)
    return out


def window_bounds(length: int, n_windows: int) -> list[tuple[int, int]]:
    return [((w * length) // n_windows, ((w + 1) * length) // n_windows) for w in range(n_windows)]


def motion_vector(per_frame, n_windows: int) -> np.ndarray:
    """Average the per-frame motion index within ``n_windows`` contiguous windows."""
    m = np.asarray(per_frame, dtype=float)
    if m.ndim != 1 or m.size < n_windows or n_windows < 1:
        raise ConfigurationError(f"cannot split {m.size} frames into {n_windows} windows")
    return np.array([m[a:b].mean() for a, b in window_bounds(m.size, n_windows)])


def write_sequence_csv(path, values, header=("frame_index", "value")) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, v in enumerate(values):
            w.writerow([i, repr(float(v))])


def read_sequence_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([float(r[1]) for r in rows])
