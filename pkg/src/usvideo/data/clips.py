"""Nodule cropping, clip extraction and training-time augmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from usvideo.data.containers import Roi, VideoSample
from usvideo.errors import ConfigurationError, DataError

CLIP_SIZE = 112
CLIP_LENGTH = 32


@dataclass
class Clip:
    voxels: np.ndarray  # (1, T, S, S), values in [0, 1]
    source_indices: np.ndarray  # frame index used for each of the T slices

    @property
    def length(self) -> int:
        return self.voxels.shape[1]

    @property
    def source_range(self) -> tuple[int, int]:
        return int(self.source_indices.min()), int(self.source_indices.max()) + 1


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres, clamped at the edges
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int | None = None) -> np.ndarray:
    out_w = out_h if out_w is None else out_w
    y0, y1, wy = _axis_weights(image.shape[0], out_h)
    x0, x1, wx = _axis_weights(image.shape[1], out_w)
    rows = image[y0] * (1 - wy)[:, None] + image[y1] * wy[:, None]
    return rows[:, x0] * (1 - wx) + rows[:, x1] * wx


def crop_and_resize(frame: np.ndarray, roi: Roi, size: int = CLIP_SIZE) -> np.ndarray:
    """Bilinear resample of the ROI region to ``size`` x ``size``."""
    roi = Roi(*roi)
    if not roi.is_valid(frame.shape[1], frame.shape[0]):
        raise DataError(f"roi {tuple(roi)} invalid for a {frame.shape[1]}x{frame.shape[0]} frame")
    return resize_bilinear(frame[roi.y1 : roi.y2, roi.x1 : roi.x2], size)


def keyframe_window(n_frames: int, key: int, length: int = CLIP_LENGTH) -> np.ndarray:
    """Frame indices of a ``length``-frame window centred on ``key``.

    The window is shifted to stay inside the video; shorter videos are
    padded by repeating the edge frames.
    """
    if n_frames < 1 or length < 1:
        raise ConfigurationError("need at least one frame and a positive clip length")
    lo, hi = min(0, n_frames - length), max(0, n_frames - length)
    start = int(np.clip(key - length // 2, lo, hi))
    return np.clip(np.arange(start, start + length), 0, n_frames - 1)


def uniform_window(n_frames: int, length: int = CLIP_LENGTH) -> np.ndarray:
    """``length`` frame indices spread evenly over the whole video."""
    return np.floor((np.arange(length) + 0.5) * n_frames / length).astype(int)


def clip_from_indices(video: VideoSample, indices: np.ndarray, size: int = CLIP_SIZE, anchor: int | None = None) -> Clip:
    """Crop every listed frame at its own ROI, or at the anchor frame's ROI if it has none.

    ``anchor`` defaults to the labelled key-frame.
    """
    anchor = video.key_frame_index if anchor is None else anchor
    key_roi = video.rois[anchor]
    if key_roi is None:
        raise DataError(f"{video.video_id}: anchor frame {anchor} has no roi")
    voxels = np.empty((1, len(indices), size, size))
    for t, i in enumerate(indices):
        roi = video.rois[i] if video.rois[i] is not None else key_roi
        voxels[0, t] = crop_and_resize(video.frame(i), roi, size)
    return Clip(voxels, np.asarray(indices))


def extract_keyframe_window(video: VideoSample, length: int = CLIP_LENGTH, size: int = CLIP_SIZE) -> Clip:
    return clip_from_indices(video, keyframe_window(video.n_frames, video.key_frame_index, length), size)


def flip_horizontal(clip: Clip) -> Clip:
    return Clip(np.ascontiguousarray(clip.voxels[..., ::-1]), clip.source_indices)


def shift_intensity(clip: Clip, delta: float) -> Clip:
    return Clip(np.clip(clip.voxels + delta, 0.0, 1.0), clip.source_indices)


def augment(clip: Clip, rng) -> Clip:
    """Random horizontal flip (p = 0.5) then an intensity shift in U(-0.1, 0.1)."""
    if rng.random() < 0.5:
        clip = flip_horizontal(clip)
    delta = rng.uniform(-0.1, 0.1)
    return shift_intensity(clip, delta) if delta != 0.0 else clip
