"""Candidate-gradient aggregation rules, the robustness checker, and the
theoretical constants behind the convergence bounds.

An aggregation rule maps B candidate gradients (one per server buffer) to a
single update direction.  The plain mean is cheap but a single corrupted
candidate can drag it arbitrarily far.  The coordinate-wise median and the
coordinate-wise q-trimmed-mean are insensitive to up to q outliers per
coordinate: both are shift-equivariant, and every output coordinate stays
between the (q+1)-th smallest and (q+1)-th largest candidate value.
``check_qbr`` verifies both properties on concrete inputs, the bracketing
one exhaustively over all candidate subsets of size B-q.

Per step, median costs O(d * B log B) with a sort per coordinate and the
trimmed mean the same plus an O(B - 2q) averaging pass; at small B both are
effectively linear in B*d.  The hot loops live in ``bufsgd._kernels``.

All functions here are pure and safe to call from multiple threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import InvalidCandidatesError, InvalidParameterError

Aggregator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CandidateSet:
    """A validated (B, d) stack of candidate gradients.

    Raises InvalidCandidatesError when empty, ragged, or non-finite.  The
    server deliberately bypasses this validation on its hot path so that
    Byzantine non-finite values reach the (tolerant) order statistics.
    """

    stack: np.ndarray

    def __post_init__(self):
        stack = np.ascontiguousarray(self.stack, dtype=np.float64)
        if stack.ndim == 1:
            stack = stack[:, None]
        if stack.ndim != 2 or stack.shape[0] < 1 or stack.shape[1] < 1:
            raise InvalidCandidatesError(
                f"candidate set must be a non-empty (B, d) stack, got shape {np.shape(self.stack)}"
            )
        if not np.isfinite(stack).all():
            raise InvalidCandidatesError("candidate set contains non-finite values")
        object.__setattr__(self, "stack", stack)

    @classmethod
    def from_vectors(cls, vectors: Sequence) -> "CandidateSet":
        if len(vectors) == 0:
            raise InvalidCandidatesError("candidate set is empty")
        lengths = {np.size(v) for v in vectors}
        if len(lengths) != 1:
            raise InvalidCandidatesError(f"candidates have mixed dimensions: {sorted(lengths)}")
        return cls(np.vstack([np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in vectors]))

    @property
    def count(self) -> int:
        return self.stack.shape[0]

    @property
    def dim(self) -> int:
        return self.stack.shape[1]


def _as_candidates(candidates) -> CandidateSet:
    if isinstance(candidates, CandidateSet):
        return candidates
    if isinstance(candidates, np.ndarray):
        return CandidateSet(candidates)
    return CandidateSet.from_vectors(candidates)


def mean_aggregate(candidates) -> np.ndarray:
    """Coordinate-wise arithmetic mean of the candidates.

    Not robust: one extreme candidate moves the mean outside the range of
    all the others, which is exactly the failure mode the robust rules
    below avoid.
    """
    return _kernels.mean_axis0(_as_candidates(candidates).stack)


def median_aggregate(candidates) -> np.ndarray:
    """Coordinate-wise median; for an even candidate count, the average of
    the two middle order statistics."""
    return _kernels.median_axis0(_as_candidates(candidates).stack)


def trimmed_mean_aggregate(candidates, q: int) -> np.ndarray:
    """Coordinate-wise q-trimmed-mean: drop the q largest and q smallest
    values per coordinate, then average the B-2q survivors.

    q=0 is accepted as a convenience and equals the plain mean; it carries
    no robustness.  Requires q < B/2.
    """
    cs = _as_candidates(candidates)
    if q < 0 or 2 * q >= cs.count:
        raise InvalidParameterError(
            f"trim order must satisfy 0 <= q < B/2, got q={q} with B={cs.count}"
        )
    return _kernels.trimmed_mean_axis0(cs.stack, q)


def aggregator_by_name(name: str, q: int = 0) -> Aggregator:
    """Resolve an aggregation rule to a raw (B, d) -> (d,) callable.

    The returned callable operates directly on float64 stacks without
    CandidateSet validation; it is what the server and the simulation
    engine use per step.
    """
    if name == "mean":
        return _kernels.mean_axis0
    if name == "median":
        return _kernels.median_axis0
    if name == "trmean":
        return lambda stack: _kernels.trimmed_mean_axis0(stack, q)
    raise InvalidParameterError(f"unknown aggregator {name!r} (expected mean|median|trmean)")


def robustness_order(name: str, b: int, q: int = 0) -> int:
    """The number of outliers per coordinate the rule provably tolerates:
    floor((B-1)/2) for median, q for trmean, 0 for mean."""
    if name == "median":
        return (b - 1) // 2
    if name == "trmean":
        return q
    return 0


# ---------------------------------------------------------------------------
# Robustness property checker
# ---------------------------------------------------------------------------

@dataclass
class QbrViolation:
    prop: str                 # "shift" or "bracket"
    coordinate: int | None = None
    subset: tuple[int, ...] | None = None
    magnitude: float = 0.0

    def __str__(self):
        if self.prop == "shift":
            return f"shift-equivariance residual {self.magnitude:.3e} exceeds tolerance"
        return (
            f"coordinate {self.coordinate}: aggregate outside [min, max] of candidate "
            f"subset {self.subset} by {self.magnitude:.3e}"
        )


@dataclass
class QbrReport:
    passed: bool
    b: int
    q: int
    violations: list[QbrViolation] = field(default_factory=list)

    def __bool__(self):
        return self.passed


def check_qbr(
    aggregator: Aggregator | str,
    candidates,
    q: int,
    *,
    n_shifts: int = 32,
    shift_scale: float = 10.0,
    tol: float = 1e-9,
    seed: int = 0,
    max_violations: int = 16,
) -> QbrReport:
    """Check the two q-Byzantine-robust properties of an aggregation rule on
    a concrete candidate set.

    (a) Shift equivariance, tested on ``n_shifts`` random shift vectors:
        Aggr([h_b + c]) must equal Aggr([h_b]) + c within ``tol`` in the
        max norm.  Sampling stands in for the universal quantifier; the
        rules checked here are coordinate-wise, so a sampled check plus
        their algebraic form is adequate evidence.
    (b) Bracketing: for every coordinate, the aggregate must lie within
        [min, max] of every subset of B-q candidates.  Checked exhaustively
        over all C(B, q) subsets, which for the desk-scale B used here is
        cheap and leaves no gaps.

    Returns a report listing the violated property, coordinate, and subset
    for every failure found (up to ``max_violations``).
    """
    cs = _as_candidates(candidates)
    b, d = cs.count, cs.dim
    if not 0 < q < b / 2:
        raise InvalidParameterError(f"robustness order must satisfy 0 < q < B/2, got q={q}, B={b}")
    if isinstance(aggregator, str):
        aggregator = aggregator_by_name(aggregator, q)

    stack = cs.stack
    base = np.asarray(aggregator(stack), dtype=np.float64)
    violations: list[QbrViolation] = []

    rng = np.random.default_rng(seed)
    for _ in range(n_shifts):
        shift = rng.uniform(-shift_scale, shift_scale, size=d)
        shifted = aggregator(stack + shift)
        residual = float(np.max(np.abs(shifted - (base + shift))))
        if residual > tol:
            violations.append(QbrViolation("shift", magnitude=residual))
            if len(violations) >= max_violations:
                return QbrReport(False, b, q, violations)

    subsets = _subset_indices(b, b - q)
    sub = stack[subsets]                      # (n_subsets, B-q, d)
    worst = np.maximum(sub.min(axis=1) - base, base - sub.max(axis=1))
    for si, j in np.argwhere(worst > tol):
        violations.append(QbrViolation(
            "bracket", coordinate=int(j), subset=tuple(int(i) for i in subsets[si]),
            magnitude=float(worst[si, j]),
        ))
        if len(violations) >= max_violations:
            break

    return QbrReport(not violations, b, q, violations)


@lru_cache(maxsize=None)
def _subset_indices(b: int, keep: int) -> np.ndarray:
    if math.comb(b, keep) > 200_000:
        raise InvalidParameterError(
            f"exhaustive subset check infeasible: C({b}, {keep}) subsets"
        )
    return np.array(list(itertools.combinations(range(b), keep)), dtype=np.intp)


# ---------------------------------------------------------------------------
# Constants and bounds
# ---------------------------------------------------------------------------

def _check_constant_args(m: int, k: int) -> None:
    if int(m) != m or int(k) != k:
        raise InvalidParameterError("m and k must be integers")
    if k <= 0 or 2 * k > m + 1:
        raise InvalidParameterError(
            f"require 0 < k and 2k <= m+1, got m={m}, k={k}"
        )


def second_moment_constant(m: int, k: int) -> float:
    """The combinatorial constant C(m, k) that scales the second-moment and
    bias bounds of a robust aggregate.

    C(m, 1) = m; for k > 1,
    C(m, k) = m! (k-1)^(k-1) (m-k)^(m-k) / [(k-1)! (m-k)! (m-1)^(m-1)].

    Evaluated in log space via lgamma so large m does not overflow; the
    exact rational path below serves as a cross-check oracle for small m.
    The admissible domain is widened to 2k <= m+1 so the constant exists at
    every (B, q, r) combination the bound functions are quantified over.
    """
    _check_constant_args(m, k)
    if k == 1:
        return float(m)
    log_c = (
        math.lgamma(m + 1)
        + (k - 1) * math.log(k - 1)
        + (m - k) * math.log(m - k)
        - math.lgamma(k)
        - math.lgamma(m - k + 1)
        - (m - 1) * math.log(m - 1)
    )
    return math.exp(log_c)


def second_moment_constant_exact(m: int, k: int) -> Fraction:
    """Exact rational evaluation of C(m, k) via integer factorials.

    Usable up to m of a few hundred in principle; retained primarily as the
    independent oracle for the log-space path.
    """
    _check_constant_args(m, k)
    if k == 1:
        return Fraction(m)
    num = math.factorial(m) * (k - 1) ** (k - 1) * (m - k) ** (m - k)
    den = math.factorial(k - 1) * math.factorial(m - k) * (m - 1) ** (m - 1)
    return Fraction(num, den)


@dataclass(frozen=True)
class RobustnessParams:
    """Trim order q paired with the assumed Byzantine count r, 0 <= r <= q."""

    q: int
    r: int

    def __post_init__(self):
        if int(self.q) != self.q or int(self.r) != self.r:
            raise InvalidParameterError("q and r must be integers")
        if not 0 <= self.r <= self.q:
            raise InvalidParameterError(f"require 0 <= r <= q, got q={self.q}, r={self.r}")

    def validate_for(self, b: int) -> "RobustnessParams":
        if int(b) != b or 2 * self.q >= b:
            raise InvalidParameterError(
                f"require 0 <= r <= q < B/2, got B={b}, q={self.q}, r={self.r}"
            )
        return self


def _check_bqr(b: int, q: int, r: int) -> None:
    RobustnessParams(q, r).validate_for(b)


def second_moment_constant_bound(b: int, q: int, r: int) -> float:
    """Closed-form upper bound on C(B-r, q-r+1).

    Equals B-q exactly when r = q; otherwise
    B * (e / 2pi) * sqrt(B-1) / sqrt((B-q-1)(q-r)).
    Monotone up in r and down in q, so tolerating more attackers costs more
    and a stronger trimming order buys the bound down.
    """
    _check_bqr(b, q, r)
    if r == q:
        return float(b - q)
    return b * (math.e / (2.0 * math.pi)) * math.sqrt(b - 1) / math.sqrt((b - q - 1) * (q - r))


@dataclass(frozen=True)
class BoundInputs:
    """Problem-level quantities entering the aggregate bounds.

    D: upper bound on the root second moment of a single honest stochastic
       gradient; L: smoothness constant of the full objective; tau_max:
       largest tolerated delay in server iterations; d: parameter dimension.
    """

    D: float
    L: float
    tau_max: int
    d: int

    def __post_init__(self):
        if not (math.isfinite(self.D) and self.D >= 0):
            raise InvalidParameterError(f"D must be finite and >= 0, got {self.D}")
        if not (math.isfinite(self.L) and self.L >= 0):
            raise InvalidParameterError(f"L must be finite and >= 0, got {self.L}")
        if self.tau_max < 0 or int(self.tau_max) != self.tau_max:
            raise InvalidParameterError(f"tau_max must be a nonnegative integer, got {self.tau_max}")
        if self.d < 1 or int(self.d) != self.d:
            raise InvalidParameterError(f"d must be a positive integer, got {self.d}")


def aggregate_second_moment_bound(bi: BoundInputs, b: int, q: int, r: int) -> float:
    """Bound on E[||G||^2] for a q-robust aggregate of B buffered candidates
    when at most r of them are Byzantine: C(B-r, q-r+1) * D^2 * d."""
    _check_bqr(b, q, r)
    return second_moment_constant(b - r, q - r + 1) * bi.D**2 * bi.d


def aggregate_bias_bound(bi: BoundInputs, b: int, q: int, r: int) -> float:
    """Bound on the norm of the conditional bias of the aggregate relative
    to the true gradient: C*D*d * (tau_max * L * sqrt(C*d) + 1) with
    C = C(B-r, q-r+1).  Implemented verbatim, including its unit mixing."""
    _check_bqr(b, q, r)
    c = second_moment_constant(b - r, q - r + 1)
    return c * bi.D * bi.d * (bi.tau_max * bi.L * math.sqrt(c * bi.d) + 1.0)
