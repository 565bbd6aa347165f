"""Deterministic discrete-event simulation of the asynchronous system.

Workers and the server interact only through timed events processed in
(time, seq) order, with seq assigned at scheduling time, so the whole run
is a pure function of (config, seed).  Each worker loops: receive the
latest parameters, compute a gradient for base_compute*(1 + k_del) simulated
seconds, send, and wait for the server's reply before computing again.
Per-worker slowdown factors k_del are drawn once per run from a half-normal
distribution; per-message network latency is optional.  Server handling is
instantaneous: only arrival order matters to the protocol, and delays alone
determine that order.

Simulated time is unitless.  The engine is single threaded; parallelism
belongs across runs, never inside one.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .aggregation import aggregator_by_name
from .buffers import BufferBank
from .config import RunConfig, parse_latency
from .errors import StarvationError
from .server import Server, StepEvent, constant_eta, horizon_eta, step_decay_eta
from .tasks import make_logistic, make_quadratic, partition_contiguous, partition_uniform
from .workers import (
    GradientMessage,
    apply_attack,
    compute_loyal_gradient,
    message_extra_delay,
)

_SEND, _DELIVER, _RECEIVE = 0, 1, 2


def sample_worker_delay(rng: np.random.Generator) -> float:
    """One per-worker slowdown factor: a standard normal draw, resampled
    until nonnegative (half-normal, mean sqrt(2/pi))."""
    while True:
        x = rng.standard_normal()
        if x >= 0.0:
            return float(x)


@dataclass
class DelayModel:
    base_compute: float
    k_del: np.ndarray                 # per-worker slowdown, fixed for the run
    latency_kind: str = "none"        # none | const | exp
    latency_value: float = 0.0

    @classmethod
    def build(cls, cfg: RunConfig, rng: np.random.Generator) -> "DelayModel":
        k_del = np.array([sample_worker_delay(rng) for _ in range(cfg.workers)])
        kind, value = parse_latency(cfg.net_latency)
        return cls(cfg.base_compute, cfg.delay_scale * k_del, kind, value)

    def compute_time(self, worker_id: int) -> float:
        return self.base_compute * (1.0 + self.k_del[worker_id])

    def latency(self, rng: np.random.Generator) -> float:
        if self.latency_kind == "const":
            return self.latency_value
        if self.latency_kind == "exp":
            return float(rng.exponential(self.latency_value))
        return 0.0


@dataclass
class StepRecord:
    """One metrics row per SGD step."""

    t: int
    time: float
    loss: float
    grad_norm_sq: float
    agg_norm_sq: float
    eta: float
    tau_min: int
    tau_mean: float
    tau_max: int
    n_msgs: int
    byz_msgs: int
    byz_senders: int

    FIELDS = ("t", "time", "loss", "grad_norm_sq", "agg_norm_sq", "eta",
              "tau_min", "tau_mean", "tau_max", "n_msgs", "byz_msgs", "byz_senders")


@dataclass
class TauHistogram:
    counts: dict[int, int]
    max_tau: int
    frac_exceeding: float


def tau_histogram(taus, tau_max: int) -> TauHistogram:
    """Counts of observed delays, the largest one, and the fraction beyond
    tau_max."""
    taus = list(taus)
    if not taus:
        return TauHistogram({}, 0, 0.0)
    counts = dict(sorted(Counter(taus).items()))
    exceeding = sum(1 for t in taus if t > tau_max)
    return TauHistogram(counts, max(taus), exceeding / len(taus))


@dataclass
class RunResult:
    records: list[StepRecord]
    final_w: np.ndarray
    steps: int
    sends: int
    deliveries: int
    taus: list[int]
    empirical_D: float
    starved: bool = False
    starvation_info: dict = field(default_factory=dict)
    trajectory: np.ndarray | None = None
    messages: list[GradientMessage] | None = None
    holdout_accuracy: float | None = None

    def final_loss(self) -> float:
        return self.records[-1].loss if self.records else float("nan")

    def final_grad_norm_sq(self) -> float:
        return self.records[-1].grad_norm_sq if self.records else float("nan")


class _WorkerState:
    __slots__ = ("wid", "shard", "behavior", "sample_rng", "attack_rng",
                 "params", "version", "awaiting_reply")

    def __init__(self, wid, shard, behavior, sample_rng, attack_rng):
        self.wid = wid
        self.shard = shard
        self.behavior = behavior
        self.sample_rng = sample_rng
        self.attack_rng = attack_rng
        self.params = None
        self.version = 0
        self.awaiting_reply = True


def build_objective(cfg: RunConfig):
    # salted so the data stream never collides with the run's spawned streams
    seed = int(np.random.SeedSequence([cfg.seed, 17]).generate_state(1)[0])
    if cfg.task == "quadratic":
        return make_quadratic(cfg.n, cfg.d, seed, heterogeneity=cfg.heterogeneity,
                              shards=cfg.workers)
    return make_logistic(cfg.n, cfg.d, seed, separation=cfg.separation, l2=cfg.l2,
                         heterogeneity=cfg.heterogeneity, shards=cfg.workers)


def run(cfg: RunConfig, objective=None, *, record_trajectory: bool = False,
        record_messages: bool = False) -> RunResult:
    """Execute one full simulation.

    Raises StarvationError when no step fires within the configured
    simulated-time window; the partial result rides in the exception's
    diagnostics so callers can persist what was collected.
    """
    cfg = cfg.validated()
    root = np.random.SeedSequence(cfg.seed)
    # child streams: partition, delays, network, then one (sample, attack)
    # pair per worker; the objective derives from its own spawn in
    # build_objective so data is independent of m
    children = root.spawn(3 + 2 * cfg.workers)
    if objective is None:
        objective = build_objective(cfg)
    if cfg.heterogeneity > 0.0:
        shards = partition_contiguous(objective.n, cfg.workers)
    else:
        shards = partition_uniform(objective.n, cfg.workers, children[0])
    delay_rng = np.random.default_rng(children[1])
    net_rng = np.random.default_rng(children[2])
    delays = DelayModel.build(cfg, delay_rng)

    workers = [
        _WorkerState(
            wid=k,
            shard=shards[k],
            behavior=cfg.behavior_for(k),
            sample_rng=np.random.default_rng(children[3 + 2 * k]),
            attack_rng=np.random.default_rng(children[4 + 2 * k]),
        )
        for k in range(cfg.workers)
    ]

    if cfg.eta_schedule == "decay":
        eta = step_decay_eta(cfg.eta, cfg.steps)
    elif cfg.eta_schedule == "horizon":
        eta = horizon_eta(objective.smoothness(), cfg.steps)
    else:
        eta = constant_eta(cfg.eta)

    records: list[StepRecord] = []
    trajectory: list[np.ndarray] = []
    messages: list[GradientMessage] = []
    state = {"stopped": False, "last_progress": 0.0}

    def on_step(ev: StepEvent) -> None:
        grad = objective.full_gradient(ev.w)
        records.append(StepRecord(
            t=ev.t,
            time=ev.time,
            loss=objective.full_loss(ev.w),
            grad_norm_sq=float(grad @ grad),
            agg_norm_sq=ev.agg_norm_sq,
            eta=ev.eta,
            tau_min=min(ev.taus),
            tau_mean=sum(ev.taus) / len(ev.taus),
            tau_max=max(ev.taus),
            n_msgs=ev.n_msgs,
            byz_msgs=ev.byz_msgs,
            byz_senders=ev.byz_senders,
        ))
        if record_trajectory:
            trajectory.append(ev.w.copy())
        state["last_progress"] = ev.time
        if cfg.steps is not None and ev.t >= cfg.steps:
            state["stopped"] = True

    w0 = np.full(cfg.d, cfg.w0)
    server = Server(
        w0,
        BufferBank(cfg.buffers, cfg.d),
        aggregator_by_name(cfg.aggregator, cfg.effective_q()),
        eta,
        tau_max=cfg.tau_max,
        on_step=on_step,
    )

    heap: list[tuple] = []
    seq = 0
    sends = deliveries = 0
    taus: list[int] = []
    empirical_d = 0.0
    window = cfg.starvation_limit()

    def schedule(time, kind, payload):
        nonlocal seq
        heapq.heappush(heap, (time, seq, kind, payload))
        seq += 1

    for ws in workers:
        schedule(0.0, _RECEIVE, (ws.wid, server.w, 0))

    while heap:
        now, _, kind, payload = heapq.heappop(heap)
        if not state["stopped"]:
            if cfg.time_budget is not None and now > cfg.time_budget:
                state["stopped"] = True
            elif now - state["last_progress"] > window:
                raise StarvationError(
                    f"no SGD step within {window} simulated seconds "
                    f"(last step at {state['last_progress']}, now {now})",
                    diagnostics={
                        "time": now,
                        "steps": server.t,
                        "buffer_counts": server.bank.counts.tolist(),
                        "partial": _result(records, server, sends, deliveries, taus,
                                           empirical_d, objective, trajectory, messages,
                                           record_trajectory, record_messages,
                                           starved=True),
                    },
                )

        if kind == _RECEIVE:
            wid, params, version = payload
            ws = workers[wid]
            if ws.awaiting_reply:
                ws.awaiting_reply = False
                ws.params = params
                ws.version = version
                if not state["stopped"]:
                    schedule(now + delays.compute_time(wid), _SEND, wid)
        elif kind == _SEND:
            if state["stopped"]:
                continue
            ws = workers[payload]
            g = compute_loyal_gradient(objective, ws.shard, ws.params,
                                       ws.sample_rng, cfg.batch_size)
            empirical_d = max(empirical_d, float(np.sqrt(g @ g)))
            active = ws.behavior.schedule.active(ws.version, ws.attack_rng)
            payload_g, tampered = apply_attack(ws.behavior, g, ws.attack_rng, active)
            extra = message_extra_delay(ws.behavior, ws.attack_rng, active)
            copies = cfg.flood if (active and ws.behavior.kind != "loyal") else 1
            for _ in range(copies):
                arrive = now + delays.latency(net_rng) + extra
                msg = GradientMessage(ws.wid, payload_g, ws.version,
                                      send_time=now, arrive_time=arrive,
                                      tampered=tampered)
                sends += 1
                schedule(arrive, _DELIVER, msg)
            ws.awaiting_reply = True
        else:  # _DELIVER
            deliveries += 1
            if state["stopped"]:
                continue
            msg = payload
            taus.append(server.t - msg.base_version)
            if record_messages:
                messages.append(msg)
            reply = server.on_gradient(msg)
            schedule(now + delays.latency(net_rng), _RECEIVE,
                     (msg.sender, reply.w, reply.version))

    if sends != deliveries:
        raise RuntimeError(f"conservation violated: {sends} sends, {deliveries} deliveries")

    return _result(records, server, sends, deliveries, taus, empirical_d,
                   objective, trajectory, messages, record_trajectory,
                   record_messages, starved=False)


def _result(records, server, sends, deliveries, taus, empirical_d, objective,
            trajectory, messages, record_trajectory, record_messages, starved):
    accuracy = None
    if hasattr(objective, "holdout_accuracy"):
        accuracy = objective.holdout_accuracy(server.w)
    return RunResult(
        records=records,
        final_w=server.w.copy(),
        steps=server.t,
        sends=sends,
        deliveries=deliveries,
        taus=taus,
        empirical_D=empirical_d,
        starved=starved,
        trajectory=np.array(trajectory) if record_trajectory else None,
        messages=messages if record_messages else None,
        holdout_accuracy=accuracy,
    )
