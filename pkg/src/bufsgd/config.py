"""Run configuration: a flat key-value file format and its validation.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored.  Unknown keys and violated constraints are all reported
together in a single ConfigError.  Example::

    task = logistic
    n = 3000
    d = 20
    workers = 15
    buffers = 10
    aggregator = trmean
    q = 3
    r = 3
    attack = neggrad
    attack_k = 10
    eta = 0.05
    steps = 2000
    seed = 7

Lists are comma-separated (``attack_workers = 0,1,2``); attack schedules
are ``always``, ``never``, ``prob:0.25`` or ``intervals:100-200,500-600``
(half-open iteration ranges); network latency is ``none``, ``const:0.5`` or
``exp:0.5``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .workers import Schedule, WorkerBehavior

AGGREGATORS = ("mean", "median", "trmean")
ATTACKS = ("none", "neggrad", "randdisturb", "bitflip", "stale")
ETA_SCHEDULES = ("constant", "decay", "horizon")


@dataclass(frozen=True)
class RunConfig:
    task: str = "quadratic"
    n: int = 1000
    d: int = 20
    separation: float = 2.0
    l2: float = 1e-3
    heterogeneity: float = 0.0
    workers: int = 4
    buffers: int = 1
    aggregator: str = "mean"
    q: int | None = None
    r: int = 0
    tau_max: int = 1000
    eta: float = 0.1
    eta_schedule: str = "constant"
    steps: int | None = None
    time_budget: float | None = None
    seed: int = 0
    attack: str = "none"
    attack_k: float = 10.0
    attack_scale: float = 0.2
    attack_prob: float = 0.1
    attack_delay: float = 0.0
    attack_delay_jitter: str = "const"
    rd_fixed_sigma: float | None = None
    attack_workers: tuple[int, ...] | None = None
    schedule: str = "always"
    flood: int = 1
    batch_size: int = 1
    base_compute: float = 1.0
    delay_scale: float = 1.0
    net_latency: str = "none"
    starvation_window: float | None = None
    w0: float = 0.0
    name: str = ""
    role: str = "variant"
    accept_loss_ratio: float | None = None

    # -- derived views -------------------------------------------------

    def effective_q(self) -> int:
        """Robustness order of the configured rule."""
        if self.aggregator == "median":
            return (self.buffers - 1) // 2
        if self.aggregator == "trmean":
            return self.q or 0
        return 0

    def byzantine_ids(self) -> tuple[int, ...]:
        if self.attack == "none":
            return ()
        if self.attack_workers is not None:
            return self.attack_workers
        return tuple(range(self.r))

    def declared_r(self) -> int:
        ids = self.byzantine_ids()
        return len(ids) if ids else self.r

    def behavior_for(self, worker_id: int) -> WorkerBehavior:
        if worker_id not in self.byzantine_ids():
            return WorkerBehavior()
        return WorkerBehavior(
            kind=self.attack,
            k_atk=self.attack_k,
            scale=self.attack_scale,
            fixed_sigma=self.rd_fixed_sigma,
            flip_prob=self.attack_prob,
            extra_delay=self.attack_delay,
            delay_jitter=self.attack_delay_jitter,
            schedule=_parse_schedule(self.schedule),
        )

    def starvation_limit(self) -> float:
        if self.starvation_window is not None:
            return self.starvation_window
        return 1e4 * self.base_compute

    def pairing_key(self) -> tuple:
        """Everything that must match for two configs to be comparable in a
        suite; the declared dimensions (attack, aggregator, buffers, q, r)
        are free."""
        return (self.task, self.n, self.d, self.separation, self.l2,
                self.heterogeneity, self.workers, self.eta, self.eta_schedule,
                self.steps, self.time_budget, self.seed, self.batch_size,
                self.base_compute, self.delay_scale, self.net_latency)

    # -- validation ------------------------------------------------------

    def validate(self) -> list[str]:
        v: list[str] = []
        if self.task not in ("quadratic", "logistic"):
            v.append(f"unknown task {self.task!r}")
        if self.n < 1:
            v.append(f"instance count must be >= 1, got n={self.n}")
        if self.d < 1:
            v.append(f"dimension must be >= 1, got d={self.d}")
        if self.workers < 1:
            v.append(f"worker count must be >= 1, got {self.workers}")
        elif self.n < self.workers:
            v.append(f"instance count must be at least worker count, got n={self.n} < m={self.workers}")
        if not 0 < self.buffers <= max(self.workers, 1):
            v.append(f"buffer count must satisfy 0 < B <= m, got B={self.buffers}, m={self.workers}")
        if self.aggregator not in AGGREGATORS:
            v.append(f"unknown aggregator {self.aggregator!r}")
        if self.aggregator == "trmean":
            if self.q is None:
                v.append("trmean requires q")
            elif not 0 <= self.q or not 2 * self.q < self.buffers:
                v.append(f"q < B/2 required, got q={self.q}, B={self.buffers}")
        if self.r < 0:
            v.append(f"declared Byzantine count must be >= 0, got r={self.r}")
        if self.aggregator in ("median", "trmean") and self.r > 0:
            q_eff = self.effective_q()
            if self.r > q_eff:
                v.append(
                    f"robustness check requires r <= q < B/2, got r={self.r}, q={q_eff}, B={self.buffers}"
                )
        if self.tau_max < 0:
            v.append(f"tau_max must be >= 0, got {self.tau_max}")
        if self.eta <= 0:
            v.append(f"learning rate must be > 0, got {self.eta}")
        if self.eta_schedule not in ETA_SCHEDULES:
            v.append(f"unknown eta_schedule {self.eta_schedule!r}")
        if (self.steps is None) == (self.time_budget is None):
            v.append("exactly one of steps or time_budget must be set")
        if self.steps is not None and self.steps < 1:
            v.append(f"steps must be >= 1, got {self.steps}")
        if self.time_budget is not None and self.time_budget <= 0:
            v.append(f"time_budget must be > 0, got {self.time_budget}")
        if self.eta_schedule in ("decay", "horizon") and self.steps is None:
            v.append(f"eta_schedule {self.eta_schedule!r} requires a steps budget")
        if self.attack not in ATTACKS:
            v.append(f"unknown attack {self.attack!r}")
        if self.attack != "none":
            ids = self.byzantine_ids()
            if not ids:
                v.append("attack requires r > 0 or an explicit attack_workers list")
            elif self.attack_workers is not None and self.r and len(ids) != self.r:
                v.append(f"attack_workers has {len(ids)} ids but r={self.r}")
            if any(i < 0 or i >= self.workers for i in ids):
                v.append(f"attack_workers ids must be in [0, m), got {ids}")
        try:
            _parse_schedule(self.schedule)
        except ValueError as exc:
            v.append(str(exc))
        if self.flood < 1:
            v.append(f"flood factor must be >= 1, got {self.flood}")
        if self.batch_size < 1:
            v.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_compute <= 0:
            v.append(f"base_compute must be > 0, got {self.base_compute}")
        if self.delay_scale < 0:
            v.append(f"delay_scale must be >= 0, got {self.delay_scale}")
        try:
            parse_latency(self.net_latency)
        except ValueError as exc:
            v.append(str(exc))
        if self.starvation_window is not None and self.starvation_window <= 0:
            v.append(f"starvation_window must be > 0, got {self.starvation_window}")
        if self.heterogeneity < 0:
            v.append(f"heterogeneity must be >= 0, got {self.heterogeneity}")
        if self.role not in ("baseline", "variant"):
            v.append(f"role must be baseline or variant, got {self.role!r}")
        if self.accept_loss_ratio is not None and self.accept_loss_ratio <= 0:
            v.append(f"accept_loss_ratio must be > 0, got {self.accept_loss_ratio}")
        return v

    def validated(self) -> "RunConfig":
        violations = self.validate()
        if violations:
            raise ConfigError(violations)
        return self


def _parse_schedule(text: str) -> Schedule:
    if text == "always":
        return Schedule("always")
    if text == "never":
        return Schedule("never")
    if text.startswith("prob:"):
        return Schedule("prob", prob=float(text[5:]))
    if text.startswith("intervals:"):
        spans = []
        for part in text[len("intervals:"):].split(","):
            lo, hi = part.split("-")
            spans.append((int(lo), int(hi)))
        return Schedule("intervals", intervals=tuple(spans))
    raise ValueError(f"bad schedule {text!r} (always|never|prob:<p>|intervals:<a-b,...>)")


def parse_latency(text: str) -> tuple[str, float]:
    if text in ("none", "0", "0.0"):
        return ("none", 0.0)
    for prefix in ("const", "exp"):
        if text.startswith(prefix + ":"):
            value = float(text[len(prefix) + 1:])
            if value < 0:
                raise ValueError(f"latency must be >= 0, got {value}")
            return (prefix, value)
    raise ValueError(f"bad net_latency {text!r} (none|const:<x>|exp:<mean>)")


_FIELD_ALIASES = {"workers": "workers", "buffers": "buffers", "m": "workers", "B": "buffers"}

_INT_FIELDS = {"n", "d", "workers", "buffers", "q", "r", "tau_max", "steps",
               "seed", "flood", "batch_size"}
_FLOAT_FIELDS = {"separation", "l2", "heterogeneity", "eta", "time_budget",
                 "attack_k", "attack_scale", "attack_prob", "attack_delay",
                 "rd_fixed_sigma", "base_compute", "delay_scale",
                 "starvation_window", "w0", "accept_loss_ratio"}
_STR_FIELDS = {"task", "aggregator", "eta_schedule", "attack",
               "attack_delay_jitter", "schedule", "net_latency", "name", "role"}


def parse_config(text: str, name: str = "") -> RunConfig:
    """Parse and validate config text; raises ConfigError listing every
    unknown key, malformed value, and violated constraint."""
    values: dict = {"name": name} if name else {}
    violations: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            violations.append(f"line {lineno}: expected key = value, got {raw.strip()!r}")
            continue
        key, _, value = line.partition("=")
        key = _FIELD_ALIASES.get(key.strip(), key.strip())
        value = value.strip()
        try:
            if key in _INT_FIELDS:
                values[key] = int(value)
            elif key in _FLOAT_FIELDS:
                values[key] = float(value)
            elif key in _STR_FIELDS:
                values[key] = value
            elif key == "attack_workers":
                values[key] = tuple(int(p) for p in value.split(",") if p.strip() != "")
            else:
                violations.append(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            violations.append(f"line {lineno}: bad value for {key}: {value!r}")
    if violations:
        raise ConfigError(violations)
    cfg = RunConfig(**values)
    return cfg.validated()


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(), name=path.stem)


def with_overrides(cfg: RunConfig, **kwargs) -> RunConfig:
    return dataclasses.replace(cfg, **kwargs).validated()
