"""Video samples and their on-disk containers.

A dataset directory holds ``manifest.json`` plus one frame container
(``.kfgv``) and optionally one feature container (``.kfgf``) per video.
Frame container: ``b"KFGV"``, version u16, width u16, height u16,
n_frames u32 (little-endian), then ``n_frames * H * W`` raw bytes.
Feature container: ``b"KFGF"``, version u16, count u32, then ``count``
records of (frame u32, 256 float32).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from usvideo.errors import DataError

FRAME_MAGIC = b"KFGV"
FEATURE_MAGIC = b"KFGF"
FORMAT_VERSION = 1
FEATURE_DIM = 256
MANIFEST_NAME = "manifest.json"

_FRAME_HEADER = struct.Struct("<4sHHHI")
_FEATURE_HEADER = struct.Struct("<4sHI")


class Roi(NamedTuple):
    """Pixel box, inclusive-exclusive: columns ``[x1, x2)``, rows ``[y1, y2)``."""

    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    def is_valid(self, width: int, height: int) -> bool:
        return 0 <= self.x1 < self.x2 <= width and 0 <= self.y1 < self.y2 <= height


@dataclass
class VideoSample:
    video_id: str
    pixels: np.ndarray  # (N, H, W) uint8
    rois: list[Roi | None]
    key_frame_index: int
    label: int
    features: list[np.ndarray | None] | None = None

    @property
    def n_frames(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def frames(self) -> np.ndarray:
        """All intensities scaled to [0, 1] (not cached; see :meth:`frame`)."""
        return self.pixels / 255.0

    def frame(self, i: int) -> np.ndarray:
        return self.pixels[i] / 255.0

    def detected(self) -> list[int]:
        return [i for i, r in enumerate(self.rois) if r is not None]

    def validate(self) -> None:
        vid = self.video_id
        if self.pixels.dtype != np.uint8 or self.pixels.ndim != 3:
            raise DataError(f"{vid}: frames must be an (N, H, W) uint8 array")
        n = self.n_frames
        if n < 1:
            raise DataError(f"{vid}: video has no frames")
        if len(self.rois) != n:
            raise DataError(f"{vid}: {len(self.rois)} roi slots for {n} frames")
        if not 0 <= self.key_frame_index < n:
            raise DataError(f"{vid}: key_frame_index {self.key_frame_index} outside [0, {n})")
        if self.label not in (0, 1):
            raise DataError(f"{vid}: label must be 0 or 1, got {self.label}")
        for i, roi in enumerate(self.rois):
            if roi is not None and not roi.is_valid(self.width, self.height):
                raise DataError(f"{vid}: frame {i}: roi {tuple(roi)} out of bounds for {self.width}x{self.height}")
        if self.rois[self.key_frame_index] is None:
            raise DataError(f"{vid}: key-frame {self.key_frame_index} has no roi")
        if self.features is not None:
            if len(self.features) != n:
                raise DataError(f"{vid}: {len(self.features)} feature slots for {n} frames")
            for i, (roi, feat) in enumerate(zip(self.rois, self.features)):
                if (roi is None) != (feat is None):
                    raise DataError(f"{vid}: frame {i}: roi and feature presence disagree")
                if feat is not None and feat.shape != (FEATURE_DIM,):
                    raise DataError(f"{vid}: frame {i}: feature has shape {feat.shape}")


def write_frames(path: Path, pixels: np.ndarray) -> None:
    n, h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, FORMAT_VERSION, w, h, n))
        fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())


def read_frames(path: Path, video_id: str = "?") -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"{video_id}: frame container {path} not found") from None
    if len(raw) < _FRAME_HEADER.size:
        raise DataError(f"{video_id}: frame container {path} shorter than its header")
    magic, version, w, h, n = _FRAME_HEADER.unpack_from(raw)
    if magic != FRAME_MAGIC:
        raise DataError(f"{video_id}: {path} has magic {magic!r}, expected {FRAME_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{video_id}: {path} has version {version}, expected {FORMAT_VERSION}")
    expected = _FRAME_HEADER.size + n * h * w
    if len(raw) != expected:
        raise DataError(f"{video_id}: {path} holds {len(raw)} bytes, header implies {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=_FRAME_HEADER.size).reshape(n, h, w).copy()


def write_features(path: Path, features: list[np.ndarray | None]) -> None:
    entries = [(i, f) for i, f in enumerate(features) if f is not None]
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, len(entries)))
        for i, f in entries:
            fh.write(struct.pack("<I", i))
            fh.write(np.asarray(f, dtype="<f4").tobytes())


def read_features(path: Path, n_frames: int, video_id: str = "?") -> list[np.ndarray | None]:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError(f"{video_id}: feature container {path} not found") from None
    if len(raw) < _FEATURE_HEADER.size:
        raise DataError(f"{video_id}: feature container {path} shorter than its header")
    magic, version, count = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC or version != FORMAT_VERSION:
        raise DataError(f"{video_id}: {path} has header ({magic!r}, v{version}), expected ({FEATURE_MAGIC!r}, v1)")
    record = 4 + 4 * FEATURE_DIM
    if len(raw) != _FEATURE_HEADER.size + count * record:
        raise DataError(f"{video_id}: {path} size does not match {count} feature records")
    out: list[np.ndarray | None] = [None] * n_frames
    offset = _FEATURE_HEADER.size
    for _ in range(count):
        (frame,) = struct.unpack_from("<I", raw, offset)
        if frame >= n_frames:
            raise DataError(f"{video_id}: frame {frame}: feature record beyond {n_frames} frames")
        out[frame] = np.frombuffer(raw, dtype="<f4", count=FEATURE_DIM, offset=offset + 4).astype(np.float64)
        offset += record
    return out


def _manifest_entry(sample: VideoSample, frames_file: str, features_file: str | None) -> dict:
    entry = {
        "id": sample.video_id,
        "frames_file": frames_file,
        "width": sample.width,
        "height": sample.height,
        "n_frames": sample.n_frames,
        "key_frame_index": sample.key_frame_index,
        "label": sample.label,
        "rois": [[i, *map(int, r)] for i, r in enumerate(sample.rois) if r is not None],
    }
    if features_file is not None:
        entry["features_file"] = features_file
    return entry


def write_dataset(samples, directory) -> Path:
    """Write ``samples`` under ``directory``; returns the manifest path."""
    directory = Path(directory)
    (directory / "videos").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in samples:
        s.validate()
        frames_file = f"videos/{s.video_id}.kfgv"
        write_frames(directory / frames_file, s.pixels)
        features_file = None
        if s.features is not None:
            features_file = f"videos/{s.video_id}.kfgf"
            write_features(directory / features_file, s.features)
        entries.append(_manifest_entry(s, frames_file, features_file))
    manifest = directory / MANIFEST_NAME
    manifest.write_text(json.dumps({"version": FORMAT_VERSION, "videos": entries}, indent=1) + "\n", encoding="utf-8")
    return manifest


def _entry_to_sample(entry: dict, root: Path) -> VideoSample:
    vid = str(entry.get("id", "?"))
    required = ("id", "frames_file", "width", "height", "n_frames", "key_frame_index", "label", "rois")
    missing = [k for k in required if k not in entry]
    if missing:
        raise DataError(f"{vid}: manifest entry lacks {missing}")
    n = int(entry["n_frames"])
    k = int(entry["key_frame_index"])
    if not 0 <= k < n:
        raise DataError(f"{vid}: key_frame_index {k} outside [0, {n})")
    pixels = read_frames(root / entry["frames_file"], vid)
    if pixels.shape != (n, entry["height"], entry["width"]):
        raise DataError(
            f"{vid}: container holds {pixels.shape}, manifest says {(n, entry['height'], entry['width'])}"
        )
    rois: list[Roi | None] = [None] * n
    for rec in entry["rois"]:
        frame, *box = rec
        if not 0 <= frame < n:
            raise DataError(f"{vid}: frame {frame}: roi for a frame outside the video")
        roi = Roi(*map(int, box))
        if not roi.is_valid(pixels.shape[2], pixels.shape[1]):
            raise DataError(f"{vid}: frame {frame}: roi {tuple(roi)} out of bounds")
        rois[frame] = roi
    features = None
    if entry.get("features_file"):
        features = read_features(root / entry["features_file"], n, vid)
    sample = VideoSample(vid, pixels, rois, k, int(entry["label"]), features)
    sample.validate()
    return sample


def load_dataset(manifest_path) -> list[VideoSample]:
    """Load and validate every video listed in a manifest (or a dataset directory)."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"manifest {path} not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path} is not valid JSON: {exc}") from None
    return [_entry_to_sample(e, path.parent) for e in doc.get("videos", [])]
