"""Numpy reference implementation of the aggregation kernels.

Reductions run over axis 0 of C-contiguous input, which numpy evaluates
row-sequentially; the compiled backend accumulates in the same order, so the
two produce bitwise-identical output.
"""

import numpy as np


def _nan_as_inf(stack: np.ndarray) -> np.ndarray:
    mask = np.isnan(stack)
    if mask.any():
        return np.where(mask, np.inf, stack)
    return stack


def mean_axis0(stack: np.ndarray) -> np.ndarray:
    out = np.add.reduce(stack, axis=0)
    out /= stack.shape[0]
    return out


def median_axis0(stack: np.ndarray) -> np.ndarray:
    s = np.sort(_nan_as_inf(stack), axis=0)
    b = s.shape[0]
    mid = b // 2
    if b % 2:
        return s[mid].copy()
    return (s[mid - 1] + s[mid]) / 2.0


def trimmed_mean_axis0(stack: np.ndarray, q: int) -> np.ndarray:
    b = stack.shape[0]
    s = np.sort(_nan_as_inf(stack), axis=0)
    out = np.add.reduce(s[q:b - q], axis=0)
    out /= b - 2 * q
    return out


def accumulate_mean(h: np.ndarray, g: np.ndarray, count: float) -> None:
    h[:] = ((count - 1.0) * h + g) / count
