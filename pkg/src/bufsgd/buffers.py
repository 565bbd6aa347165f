"""Server-side buffer bank.

Worker s always feeds buffer s mod B.  Each buffer keeps the running mean
of the gradients routed to it since the last SGD step, via the incremental
recurrence h <- ((N-1)h + g)/N, which keeps intermediate values at gradient
magnitude instead of accumulating raw sums.  A step is allowed once every
buffer has received at least one gradient; afterwards all buffers are
zeroed at once.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import InvalidParameterError


class BufferSlot(NamedTuple):
    h: np.ndarray   # running mean since last zero-out
    n: int          # gradients accumulated since last zero-out


def assign_buffer(worker_id: int, b: int) -> int:
    """Buffer index for a worker: worker_id mod b. Total and stable."""
    if b < 1:
        raise InvalidParameterError(f"buffer count must be >= 1, got {b}")
    if worker_id < 0:
        raise InvalidParameterError(f"worker id must be >= 0, got {worker_id}")
    return worker_id % b


class BufferBank:
    """B running-mean accumulators over d-dimensional gradients.

    Owned by the server state machine; single writer, no locking.
    """

    def __init__(self, b: int, d: int):
        if b < 1:
            raise InvalidParameterError(f"buffer count must be >= 1, got {b}")
        if d < 1:
            raise InvalidParameterError(f"dimension must be >= 1, got {d}")
        self.b = b
        self.d = d
        self.h = np.zeros((b, d))
        self.counts = np.zeros(b, dtype=np.int64)

    def assign(self, worker_id: int) -> int:
        return assign_buffer(worker_id, self.b)

    def accumulate(self, idx: int, g: np.ndarray) -> None:
        if g.shape != (self.d,):
            raise InvalidParameterError(
                f"gradient shape {g.shape} does not match buffer dimension ({self.d},)"
            )
        self.counts[idx] += 1
        _kernels.accumulate_mean(self.h[idx], g, int(self.counts[idx]))

    def all_ready(self) -> bool:
        return bool((self.counts > 0).all())

    def zero_out(self) -> None:
        self.h[:] = 0.0
        self.counts[:] = 0

    def slot(self, idx: int) -> BufferSlot:
        return BufferSlot(self.h[idx].copy(), int(self.counts[idx]))

    def stack(self) -> np.ndarray:
        """The (B, d) candidate stack read by the aggregation rule."""
        return self.h
