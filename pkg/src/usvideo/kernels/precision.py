from contextlib import contextmanager

import numpy as np

_DTYPES = {"f64": np.float64, "f32": np.float32}
_current = "f64"


def set_precision(name: str) -> None:
    """Select ``"f64"`` (reference, required for gradient checks) or ``"f32"``."""
    global _current
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _current = name


def default_dtype():
    return _DTYPES[_current]


@contextmanager
def precision(name: str):
    global _current
    previous = _current
    set_precision(name)
    try:
        yield
    finally:
        _current = previous


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x
