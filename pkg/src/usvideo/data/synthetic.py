"""Synthetic B-mode-like ultrasound sweeps with one nodule each.

The probe sweeps through a stack of independent speckle slices. Its
elevational speed drops to zero at the key-frame, so neighbouring frames
are most alike there. The nodule is largest, sharpest and highest in
contrast at the key-frame. Benign nodules have a smooth outline and a
low-frequency interior; malignant ones an irregular outline, fine speckle
and bright specks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import erf

from usvideo.data.clips import CLIP_LENGTH, resize_bilinear
from usvideo.data.containers import FEATURE_DIM, Roi, VideoSample, write_dataset
from usvideo.errors import ConfigurationError

_RAYLEIGH_MEAN = math.sqrt(math.pi / 2)


@dataclass(frozen=True)
class SyntheticConfig:
    n_videos: int = 100
    n_frames: int = 96
    height: int = 256
    width: int = 256
    benign_fraction: float = 0.5
    clip_length: int = CLIP_LENGTH
    # elevational sweep speed far from the key-frame, in slices per frame
    sweep_speed: tuple[float, float] = (0.35, 0.6)
    # frames over which the probe slows down around the key-frame
    slowdown_width: float = 3.0
    noise_std: float = 0.01
    feature_noise: float = 0.02
    drop_rate: float = 0.02

    def validate(self) -> None:
        if self.n_videos < 0:
            raise ConfigurationError("n_videos must be non-negative")
        if self.n_frames < self.clip_length:
            raise ConfigurationError(f"n_frames {self.n_frames} < clip length {self.clip_length}")
        if min(self.height, self.width) < 32:
            raise ConfigurationError("frames must be at least 32x32")
        if not 0.0 <= self.benign_fraction <= 1.0:
            raise ConfigurationError("benign_fraction must lie in [0, 1]")


def class_labels(config: SyntheticConfig, seed: int) -> np.ndarray:
    n_benign = int(round(config.n_videos * config.benign_fraction))
    labels = np.array([0] * n_benign + [1] * (config.n_videos - n_benign))
    return labels[np.random.default_rng([seed, 0xC1A55]).permutation(config.n_videos)]


def sweep_positions(n_frames: int, key: int, speed: float, width: float) -> np.ndarray:
    """Elevational probe position per frame; velocity ``speed * (1 - exp(-d^2 / 2w^2))``.

    Positions are an odd function of ``d = i - key`` (shifted to start at 0),
    so the key-frame is the unique stillest point.
    """
    d = np.arange(n_frames) - key
    u = np.abs(d) / width
    travelled = speed * width * (u - math.sqrt(math.pi / 2) * erf(u / math.sqrt(2)))
    z = np.sign(d) * travelled
    return z - z.min()


def _complex_stack(rng, count: int, shape, sigma: float) -> np.ndarray:
    re = rng.standard_normal((count, *shape))
    im = rng.standard_normal((count, *shape))
    out = np.empty((count, *shape), dtype=complex)
    for j in range(count):
        a = gaussian_filter(re[j], sigma, mode="wrap")
        b = gaussian_filter(im[j], sigma, mode="wrap")
        out[j] = (a + 1j * b) / math.sqrt(0.5 * (a.var() + b.var()))
    return out


def _slice_at(stack: np.ndarray, z: float) -> np.ndarray:
    # variance-preserving blend of the two bracketing slices
    j = int(math.floor(z))
    f = z - j
    return math.cos(math.pi * f / 2) * stack[j] + math.sin(math.pi * f / 2) * stack[j + 1]


def _outline(rng, malignant: bool):
    """Radial boundary modulation ``r(phi)`` as (harmonics, amplitudes, phases)."""
    if malignant:
        harmonics = rng.choice(np.arange(5, 12), size=3, replace=False)
        amps = rng.uniform(0.06, 0.1, 3)
    else:
        harmonics = np.array([2, 3])
        amps = rng.uniform(0.0, 0.03, 2)
    return harmonics, amps, rng.uniform(0, 2 * np.pi, len(harmonics))


def generate_video(config: SyntheticConfig, seed: int, index: int, label: int) -> VideoSample:
    rng = np.random.default_rng([seed, index])
    n, h, w = config.n_frames, config.height, config.width
    margin = max(1, n // 8)
    key = int(rng.integers(margin, n - margin))
    speed = rng.uniform(*config.sweep_speed)
    z = sweep_positions(n, key, speed, config.slowdown_width)
    n_slices = int(math.floor(z.max())) + 2

    tissue = _complex_stack(rng, n_slices, (h, w), sigma=1.2)
    malignant = label == 1
    interior = _complex_stack(rng, n_slices, (h, w), sigma=0.7 if malignant else 4.0)

    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    depth_gain = 0.85 + 0.3 * yy / h
    r_max = rng.uniform(0.12, 0.17) * min(h, w)
    aspect = rng.uniform(0.65, 1.0)
    theta = rng.uniform(0, np.pi)
    centre = np.array([w / 2, h / 2]) + rng.uniform(-0.1, 0.1, 2) * np.array([w, h])
    drift = rng.uniform(-1.5, 1.5, 2)
    harmonics, amps, phases = _outline(rng, malignant)
    spread = n / 8.0

    pixels = np.empty((n, h, w), dtype=np.uint8)
    rois: list[Roi | None] = []
    features: list[np.ndarray | None] = []
    for i in range(n):
        d = i - key
        closeness = math.exp(-(d**2) / (2 * spread**2))
        size = r_max * (0.45 + 0.55 * closeness)
        contrast = 0.65 + 0.35 * closeness
        edge = min(0.6 + 0.5 * abs(d), 0.25 * size)
        cx, cy = centre + drift * (z[i] - z[key])

        bg = 0.45 * depth_gain * np.abs(_slice_at(tissue, z[i])) / _RAYLEIGH_MEAN
        tex = _slice_at(interior, z[i])
        if malignant:
            nod = 0.22 + 0.1 * np.abs(tex) / _RAYLEIGH_MEAN + 0.45 * (np.abs(tex) > 2.2)
        else:
            nod = 0.2 + 0.05 * tex.real

        dx, dy = xx - cx, yy - cy
        c, s = math.cos(theta), math.sin(theta)
        u, v = c * dx + s * dy, (-s * dx + c * dy) / aspect
        rho = np.hypot(u, v) / size
        phi = np.arctan2(v, u)
        boundary = 1.0 + sum(a * np.cos(k * phi + p) for k, a, p in zip(harmonics, amps, phases))
        mask = 1.0 / (1.0 + np.exp(-np.clip((boundary - rho) * size / edge, -50, 50)))

        frame = bg + contrast * mask * (nod - bg) + rng.normal(0.0, config.noise_std, (h, w))
        pixels[i] = np.rint(np.clip(frame, 0.0, 1.0) * 255).astype(np.uint8)

        inside = np.argwhere(mask > 0.5)
        dropped = abs(d) > 8 and rng.random() < config.drop_rate
        if inside.size == 0 or dropped:
            rois.append(None)
            features.append(None)
            continue
        (y1, x1), (y2, x2) = inside.min(axis=0), inside.max(axis=0) + 1
        roi = Roi(int(x1), int(y1), int(x2), int(y2))
        rois.append(roi)
        patch = resize_bilinear(pixels[i, y1:y2, x1:x2] / 255.0, 16)
        feat = patch.ravel() + rng.normal(0.0, config.feature_noise, FEATURE_DIM)
        features.append(feat.astype(np.float32).astype(np.float64))
    return VideoSample(f"v{index:04d}", pixels, rois, key, int(label), features)


def generate_samples(config: SyntheticConfig, seed: int) -> list[VideoSample]:
    config.validate()
    labels = class_labels(config, seed)
    return [generate_video(config, seed, i, int(y)) for i, y in enumerate(labels)]


def generate_synthetic(config: SyntheticConfig, seed: int, directory) -> Path:
    """Generate a dataset and write it under ``directory``; returns the manifest path.

    Videos are written one at a time so memory stays bounded.
    """
    config.validate()
    directory = Path(directory)
    labels = class_labels(config, seed)
    samples = (generate_video(config, seed, i, int(y)) for i, y in enumerate(labels))
    return write_dataset(samples, directory)


def config_dict(config: SyntheticConfig) -> dict:
    return asdict(config)
