"""Worker behavior models.

A worker is loyal by default: it samples an instance from its shard and
returns the honest stochastic gradient.  Byzantine behaviors transform that
honest gradient (or, for the stale model, its delivery) at send time:

  neggrad      send -k_atk * g
  randdisturb  send g + xi, xi ~ N(0, sigma^2 I) with sigma = scale*||g||
               recomputed per message (or a fixed sigma when configured)
  bitflip      independently per coordinate, with probability p, replace
               the value by its sign flip scaled by 2^e, e an integer
               drawn uniformly from [-8, 8]
  stale        send the honest gradient but delay its arrival

Behaviors can be intermittent: a schedule decides per send whether the
behavior is active, so a worker may act loyal at one iteration and
Byzantine at another.  A message counts as Byzantine at the server when its
payload was tampered with or when its delay exceeds tau_max; an honest but
overly stale gradient is Byzantine by that definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

BEHAVIOR_KINDS = ("loyal", "neggrad", "randdisturb", "bitflip", "stale")


@dataclass
class GradientMessage:
    """A gradient in flight, with the provenance the server needs.

    ``base_version`` is the parameter version the gradient was computed on;
    the server's iteration count at arrival minus base_version is the delay
    tau.  ``tampered`` records ground truth about the payload for Byzantine
    accounting; the server's aggregation rule never sees it.
    """

    sender: int
    g: np.ndarray
    base_version: int
    send_time: float = 0.0
    arrive_time: float = 0.0
    tampered: bool = False


@dataclass(frozen=True)
class Schedule:
    """Per-send activation predicate, deterministic given the worker rng.

    mode "always"/"never" are unconditional; "intervals" activates when the
    parameter version the gradient was computed on falls in any half-open
    [lo, hi) interval; "prob" draws one Bernoulli(p) per send.
    """

    mode: str = "always"
    prob: float = 0.0
    intervals: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.mode not in ("always", "never", "prob", "intervals"):
            raise InvalidParameterError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "prob" and not 0.0 <= self.prob <= 1.0:
            raise InvalidParameterError(f"schedule probability must be in [0, 1], got {self.prob}")

    def active(self, base_version: int, rng: np.random.Generator) -> bool:
        if self.mode == "always":
            return True
        if self.mode == "never":
            return False
        if self.mode == "prob":
            return bool(rng.random() < self.prob)
        return any(lo <= base_version < hi for lo, hi in self.intervals)


@dataclass(frozen=True)
class WorkerBehavior:
    kind: str = "loyal"
    k_atk: float = 10.0            # neggrad scaling
    scale: float = 0.2             # randdisturb: sigma = scale * ||g||
    fixed_sigma: float | None = None  # randdisturb: override per-message sigma
    flip_prob: float = 0.1         # bitflip per-coordinate probability
    extra_delay: float = 0.0       # stale: added delivery delay
    delay_jitter: str = "const"    # stale: "const" or "exp"
    schedule: Schedule = Schedule()

    def __post_init__(self):
        if self.kind not in BEHAVIOR_KINDS:
            raise InvalidParameterError(f"unknown behavior kind {self.kind!r}")
        for name in ("k_atk", "scale", "extra_delay"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {v}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise InvalidParameterError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if self.delay_jitter not in ("const", "exp"):
            raise InvalidParameterError(f"delay_jitter must be const or exp, got {self.delay_jitter!r}")


LOYAL = WorkerBehavior()


def compute_loyal_gradient(objective, shard: np.ndarray, w: np.ndarray,
                           rng: np.random.Generator, batch_size: int = 1) -> np.ndarray:
    """Honest stochastic gradient: mean of per-instance gradients at
    ``batch_size`` indices drawn uniformly (with replacement) from the
    worker's shard.  Unbiased for the shard-mean gradient."""
    if len(shard) == 0:
        raise InvalidParameterError("worker shard is empty")
    if batch_size == 1:
        i = int(shard[rng.integers(len(shard))])
        return objective.sample_gradient(w, i)
    idx = shard[rng.integers(len(shard), size=batch_size)]
    g = objective.sample_gradient(w, int(idx[0]))
    for i in idx[1:]:
        g = g + objective.sample_gradient(w, int(i))
    return g / batch_size


def apply_attack(behavior: WorkerBehavior, g: np.ndarray,
                 rng: np.random.Generator, active: bool = True) -> tuple[np.ndarray, bool]:
    """Transform an honest gradient according to the behavior.

    Returns (payload, tampered).  ``tampered`` is the ground-truth flag used
    for Byzantine accounting; the stale behavior leaves the payload honest
    (tampered=False) because its damage is delay, not content.
    """
    if not active or behavior.kind in ("loyal", "stale"):
        return g, False
    if behavior.kind == "neggrad":
        return -behavior.k_atk * g, True
    if behavior.kind == "randdisturb":
        sigma = behavior.fixed_sigma
        if sigma is None:
            sigma = behavior.scale * float(np.linalg.norm(g))
        return g + rng.normal(0.0, sigma, size=g.shape), True
    # bitflip: same number of rng draws regardless of which coordinates hit
    flips = rng.random(g.shape) < behavior.flip_prob
    exponents = rng.integers(-8, 9, size=g.shape)
    corrupted = np.where(flips, -g * np.exp2(exponents.astype(np.float64)), g)
    return corrupted, bool(flips.any())


def message_extra_delay(behavior: WorkerBehavior, rng: np.random.Generator,
                        active: bool = True) -> float:
    """Additional delivery delay contributed by the behavior (stale only)."""
    if not active or behavior.kind != "stale" or behavior.extra_delay == 0.0:
        return 0.0
    if behavior.delay_jitter == "exp":
        return float(rng.exponential(behavior.extra_delay))
    return behavior.extra_delay


def classify_message(tampered: bool, tau: int, tau_max: int) -> bool:
    """True when the message counts as Byzantine: tampered payload, or an
    honest gradient whose delay exceeds tau_max."""
    return tampered or tau > tau_max
