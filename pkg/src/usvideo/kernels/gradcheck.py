"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4
    checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def rel_error(a: np.ndarray, n: np.ndarray) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numerical_gradient(f: Callable[[], float], x: np.ndarray, h: float = 1e-5, coords=None) -> np.ndarray:
    """Central differences of ``f`` with respect to ``x``, perturbed in place.

    With ``coords`` (flat indices) only those entries are filled; the rest are NaN.
    """
    grad = np.full(x.shape, np.nan) if coords is not None else np.zeros(x.shape)
    flat = x.reshape(-1)
    if not np.shares_memory(flat, x):
        raise ValueError("numerical_gradient needs a contiguous array it can perturb in place")
    g = grad.reshape(-1)
    for idx in range(flat.size) if coords is None else coords:
        old = flat[idx]
        flat[idx] = old + h
        fp = f()
        flat[idx] = old - h
        fm = f()
        flat[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return grad


def grad_check(
    f: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare ``analytic`` gradients against central differences of ``f``.

    ``f`` must read the arrays in ``params`` (they are perturbed in place).
    ``max_coords`` limits the check to a random subset of entries per array.
    """
    per_param = {}
    checked = 0
    for name, x in params.items():
        coords = None
        if max_coords is not None and x.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(x.size, size=max_coords, replace=False)
        num = numerical_gradient(f, x, h, coords)
        a = np.asarray(analytic[name]).reshape(-1)
        n = num.reshape(-1)
        if coords is not None:
            a, n = a[coords], n[coords]
        checked += n.size
        per_param[name] = float(rel_error(a, n).max()) if n.size else 0.0
    worst = max(per_param.values(), default=0.0)
    return GradCheckReport(worst, per_param, tolerance, checked)
