"""Hot numeric kernels with a compiled fast path and a numpy fallback.

The per-step cost of the buffered server is dominated by the coordinate-wise
order statistics over the (B, d) candidate stack and by the running-mean
buffer update.  Both are implemented twice with identical arithmetic: a
Cython extension (built by setup.py) and a pure numpy reference.  The
backend is chosen at import time; set ``BUFSGD_PURE_PYTHON=1`` to force the
numpy implementation, e.g. for debugging or benchmarking.

Both backends perform the same floating-point operations in the same order,
so results are bitwise identical.
"""

import os

import numpy as np

from . import _numpy_backend

try:
    from . import _compiled
except ImportError:
    _compiled = None

if os.environ.get("BUFSGD_PURE_PYTHON", "0") not in ("", "0"):
    _impl = _numpy_backend
elif _compiled is not None:
    _impl = _compiled
else:
    _impl = _numpy_backend


def backend_name() -> str:
    """Name of the active backend: 'compiled' or 'numpy'."""
    return "compiled" if _impl is _compiled else "numpy"


def available_backends() -> tuple[str, ...]:
    return ("compiled", "numpy") if _compiled is not None else ("numpy",)


def set_backend(name: str) -> None:
    """Switch backend at runtime.  Intended for benchmarks and tests only;
    call before starting any simulation, not concurrently with one."""
    global _impl
    if name == "numpy":
        _impl = _numpy_backend
    elif name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        _impl = _compiled
    else:
        raise ValueError(f"unknown kernel backend: {name!r}")


def _stack2d(a) -> np.ndarray:
    s = np.ascontiguousarray(a, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError("candidate stack must be 2-dimensional (B, d)")
    return s


def mean_axis0(stack) -> np.ndarray:
    """Arithmetic mean of the rows. Non-finite entries propagate."""
    return _impl.mean_axis0(_stack2d(stack))


def median_axis0(stack) -> np.ndarray:
    """Per-column median of the rows; even row counts average the two
    middle order statistics.  NaN sorts as +inf so that non-finite rows
    land at the extremes."""
    return _impl.median_axis0(_stack2d(stack))


def trimmed_mean_axis0(stack, q: int) -> np.ndarray:
    """Per-column mean after discarding the q largest and q smallest
    entries.  NaN sorts as +inf, as for median_axis0."""
    s = _stack2d(stack)
    b = s.shape[0]
    if not 0 <= q < b / 2:
        raise ValueError(f"trim order q={q} must satisfy 0 <= q < B/2 (B={b})")
    return _impl.trimmed_mean_axis0(s, q)


def accumulate_mean(h: np.ndarray, g: np.ndarray, count: int) -> None:
    """In-place running-mean update: h <- ((count-1)*h + g)/count, where
    ``count`` is the number of terms including ``g``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    _impl.accumulate_mean(h, np.ascontiguousarray(g, dtype=np.float64), float(count))
