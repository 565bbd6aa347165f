"""The buffered-server state machine.

One gradient arrives at a time.  It is folded into the running mean of the
sender's buffer; once every buffer has received at least one gradient since
the last step, the server aggregates the B buffer means, takes one SGD step
w <- w - eta(t) * Aggr([h_1..h_B]), zeroes all buffers, and only then
replies.  Every receipt is answered with the current (w, t), so a worker
always resumes from the newest parameters the server has.

With B=1 every arrival triggers a step and the machine reduces to plain
asynchronous SGD; ``run_asgd_reference`` is that degenerate loop written
directly, used as an equivalence oracle.

The server is sequential by contract: calls are totally ordered by the
simulation engine, and determinism comes from that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .aggregation import Aggregator
from .buffers import BufferBank
from .errors import InvalidParameterError
from .workers import GradientMessage, classify_message

EtaSchedule = Callable[[int], float]


@dataclass
class Reply:
    w: np.ndarray        # shared reference; the server never mutates w in place
    version: int


@dataclass
class StepEvent:
    """Per-step record pushed to the metrics sink."""

    t: int                   # iteration count after the step
    time: float              # simulated time of the triggering arrival
    eta: float
    agg_norm_sq: float       # ||G||^2 of the aggregated update direction
    w: np.ndarray
    n_msgs: int
    byz_msgs: int
    byz_senders: int
    taus: list[int] = field(default_factory=list)


class Server:
    def __init__(self, w0: np.ndarray, bank: BufferBank, aggregator: Aggregator,
                 eta: EtaSchedule, tau_max: int = 0,
                 on_step: Callable[[StepEvent], None] | None = None):
        w0 = np.asarray(w0, dtype=np.float64)
        if w0.shape != (bank.d,):
            raise InvalidParameterError(
                f"initial parameters of shape {w0.shape} do not match bank dimension {bank.d}"
            )
        self.w = w0.copy()
        self.t = 0
        self.bank = bank
        self.aggregator = aggregator
        self.eta = eta
        self.tau_max = tau_max
        self.on_step = on_step
        self._pending: list[tuple[int, int, bool]] = []  # (sender, tau, byzantine)

    def on_gradient(self, msg: GradientMessage) -> Reply:
        """Fold one gradient in; step if that completed the bank.

        Non-finite payloads are accepted unmodified: Byzantine values are
        allowed to be arbitrary, and robustness is the aggregation rule's
        job (the order statistics sort non-finite values to the extremes).
        """
        g = np.asarray(msg.g, dtype=np.float64)
        tau = self.t - msg.base_version
        self._pending.append(
            (msg.sender, tau, classify_message(msg.tampered, tau, self.tau_max))
        )
        self.bank.accumulate(self.bank.assign(msg.sender), g)
        if self.bank.all_ready():
            self.sgd_step(at_time=msg.arrive_time)
        return Reply(self.w, self.t)

    def sgd_step(self, at_time: float = 0.0) -> None:
        """Aggregate, update, zero out.  Caller must have filled the bank."""
        if not self.bank.all_ready():
            raise RuntimeError("sgd_step called before every buffer was filled")
        g_agg = self.aggregator(self.bank.stack())
        eta_t = self.eta(self.t)
        self.w = self.w - eta_t * g_agg
        self.bank.zero_out()
        self.t += 1
        if self.on_step is not None:
            taus = [tau for _, tau, _ in self._pending]
            byz = [(s, b) for s, _, b in self._pending if b]
            self.on_step(StepEvent(
                t=self.t,
                time=at_time,
                eta=eta_t,
                agg_norm_sq=float(g_agg @ g_agg),
                w=self.w,
                n_msgs=len(self._pending),
                byz_msgs=len(byz),
                byz_senders=len({s for s, _ in byz}),
                taus=taus,
            ))
        self._pending.clear()


def constant_eta(value: float) -> EtaSchedule:
    return lambda t: value


def step_decay_eta(value: float, total_steps: int) -> EtaSchedule:
    """Multiply the rate by 0.1 at 50% and again at 75% of the budget."""
    first, second = total_steps // 2, (3 * total_steps) // 4

    def eta(t: int) -> float:
        if t >= second:
            return value * 0.01
        if t >= first:
            return value * 0.1
        return value

    return eta


def horizon_eta(smoothness: float, total_steps: int) -> EtaSchedule:
    """eta = 1 / (L * sqrt(T)), the horizon-scaled constant rate used by the
    convergence analysis when the smoothness constant is known."""
    if smoothness <= 0 or total_steps <= 0:
        raise InvalidParameterError("horizon schedule needs L > 0 and T > 0")
    value = 1.0 / (smoothness * float(total_steps) ** 0.5)
    return lambda t: value


def run_asgd_reference(w0: np.ndarray, eta: EtaSchedule,
                       msgs: list[GradientMessage], b: int = 1,
                       aggregator: str = "mean") -> np.ndarray:
    """Plain asynchronous SGD: one step per received gradient.

    Returns the (len(msgs)+1, d) trajectory including w0.  Defined only for
    the degenerate single-buffer mean configuration; anything else is the
    buffered machine's territory.
    """
    if b != 1:
        raise InvalidParameterError(f"reference loop is defined for B=1 only, got B={b}")
    if aggregator != "mean":
        raise InvalidParameterError(f"reference loop uses mean aggregation, got {aggregator!r}")
    w = np.asarray(w0, dtype=np.float64).copy()
    out = np.empty((len(msgs) + 1, w.shape[0]))
    out[0] = w
    for t, msg in enumerate(msgs):
        w = w - eta(t) * np.asarray(msg.g, dtype=np.float64)
        out[t + 1] = w
    return out
