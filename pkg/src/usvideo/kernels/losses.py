"""Binary cross-entropy, mean squared error and the cosine consistency loss."""

from __future__ import annotations

import numpy as np

from usvideo.errors import ConfigurationError

BCE_CLAMP = 1e-12
_NORM_FLOOR = 1e-12


def bce_loss(z, y) -> float:
    """Batch-mean of ``-(y log z + (1 - y) log(1 - z))`` with ``z`` clamped away from 0 and 1."""
    z = np.clip(np.asarray(z, dtype=float), BCE_CLAMP, 1.0 - BCE_CLAMP)
    y = np.asarray(y, dtype=float)
    return float(np.mean(-(y * np.log(z) + (1.0 - y) * np.log(1.0 - z))))


def bce_logit_grad(z, y) -> np.ndarray:
    """Gradient of :func:`bce_loss` with respect to the logits feeding a sigmoid ``z``."""
    z = np.asarray(z)
    return (z - np.asarray(y, dtype=z.dtype)) / z.size


def mse_loss(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ConfigurationError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    return float(np.mean((pred - target) ** 2))


def mse_backward(pred, target) -> np.ndarray:
    pred, target = np.asarray(pred), np.asarray(target)
    return 2.0 * (pred - target) / pred.size


def _cosine(a: np.ndarray, b: np.ndarray):
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    ok = (na >= _NORM_FLOOR) & (nb >= _NORM_FLOOR)
    denom = np.where(ok, na * nb, 1.0)
    cos = np.where(ok, np.sum(a * b, axis=-1) / denom, 0.0)
    return cos, na, nb, ok


def cosine_consistency_loss(v_temp, v_motion) -> float:
    """``1 - cos(v_temp, v_motion)``, averaged over rows for 2-D input.

    A vector with norm below 1e-12 counts as cosine 0.
    """
    a, b = np.asarray(v_temp, dtype=float), np.asarray(v_motion, dtype=float)
    if a.shape != b.shape:
        raise ConfigurationError(f"cosine loss: lengths {a.shape} and {b.shape} differ")
    cos, *_ = _cosine(a, b)
    return float(np.mean(1.0 - cos))


def cosine_consistency_backward(v_temp, v_motion) -> np.ndarray:
    """Gradient with respect to ``v_temp`` only; ``v_motion`` is treated as data."""
    a, b = np.asarray(v_temp), np.asarray(v_motion, dtype=np.asarray(v_temp).dtype)
    if a.shape != b.shape:
        raise ConfigurationError(f"cosine loss: lengths {a.shape} and {b.shape} differ")
    cos, na, nb, ok = _cosine(a, b)
    rows = 1 if a.ndim == 1 else a.shape[0]
    safe_na = np.where(ok, na, 1.0)[..., None]
    safe_nb = np.where(ok, nb, 1.0)[..., None]
    dcos = b / (safe_na * safe_nb) - cos[..., None] * a / safe_na**2
    return -dcos * ok[..., None] / rows if a.ndim > 1 else -(dcos * ok)
