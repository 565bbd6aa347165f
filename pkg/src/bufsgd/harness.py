"""Experiment runner: single runs to metrics files, and comparison suites.

A run writes ``metrics.csv`` (one row per SGD step, fixed column order) and
``summary.json`` (schema-versioned aggregates).  Both are deterministic for
a given config and seed: floats are serialized with shortest round-trip
repr and no wall-clock values are recorded, so re-running a config yields
byte-identical files.

A suite is a directory of config files sharing everything except the
declared dimensions (attack, aggregator, buffer count, q, r).  Exactly one
config takes ``role = baseline``; every other config is paired against it
and may declare ``accept_loss_ratio`` as its tolerance: the variant passes
when final_loss <= ratio * baseline final_loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .aggregation import BoundInputs, aggregate_second_moment_bound
from .config import RunConfig, load_config, with_overrides
from .engine import RunResult, StepRecord, run, tau_histogram
from .errors import PairingError, StarvationError

SUMMARY_SCHEMA = 1

CSV_COLUMNS = StepRecord.FIELDS


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(records, path: Path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(_fmt(getattr(rec, name)) for name in CSV_COLUMNS))
    path.write_text("\n".join(lines) + "\n")


def buffer_coverage_warnings(cfg: RunConfig) -> list[str]:
    """Flag buffers whose entire worker set is configured Byzantine; a
    robust rule cannot save a coordinate when whole buffers go bad beyond
    its trim order, so this is worth a loud note up front."""
    byz = set(cfg.byzantine_ids())
    warnings = []
    for b in range(cfg.buffers):
        served_by = {w for w in range(cfg.workers) if w % cfg.buffers == b}
        if served_by and served_by <= byz:
            warnings.append(
                f"buffer {b} is served exclusively by Byzantine workers {sorted(served_by)}"
            )
    return warnings


def summarize(cfg: RunConfig, result: RunResult) -> dict:
    hist = tau_histogram(result.taus, cfg.tau_max)
    final_loss = result.final_loss()
    initial_loss = result.records[0].loss if result.records else float("nan")
    diverged = bool(
        not (final_loss == final_loss)  # NaN
        or final_loss in (float("inf"), float("-inf"))
        or (initial_loss == initial_loss and final_loss > 1e3 * max(initial_loss, 1e-30))
    )
    summary = {
        "schema": SUMMARY_SCHEMA,
        "name": cfg.name,
        "task": cfg.task,
        "aggregator": cfg.aggregator,
        "buffers": cfg.buffers,
        "q": cfg.effective_q(),
        "r": cfg.declared_r(),
        "attack": cfg.attack,
        "seed": cfg.seed,
        "steps": result.steps,
        "sends": result.sends,
        "deliveries": result.deliveries,
        "final_loss": final_loss,
        "final_grad_norm_sq": result.final_grad_norm_sq(),
        "mean_tau": (sum(result.taus) / len(result.taus)) if result.taus else 0.0,
        "max_tau": hist.max_tau,
        "frac_tau_exceeding": hist.frac_exceeding,
        "empirical_D": result.empirical_D,
        "holdout_accuracy": result.holdout_accuracy,
        "diverged": diverged,
        "starved": result.starved,
        "completed": not result.starved,
        "warnings": buffer_coverage_warnings(cfg),
    }
    if cfg.aggregator in ("median", "trmean"):
        bi = BoundInputs(D=result.empirical_D, L=0.0, tau_max=cfg.tau_max, d=cfg.d)
        summary["second_moment_bound_empirical"] = aggregate_second_moment_bound(
            bi, cfg.buffers, cfg.effective_q(), min(cfg.declared_r(), cfg.effective_q())
        )
    else:
        summary["second_moment_bound_empirical"] = None
    return summary


def run_experiment(cfg: RunConfig, out_dir: str | Path, seed: int | None = None) -> dict:
    """Run one config and persist metrics.csv + summary.json in out_dir.

    On starvation the partial metrics are still written and the summary
    carries ``starved: true``; the caller decides the exit code.
    """
    if seed is not None:
        cfg = with_overrides(cfg, seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run(cfg)
    except StarvationError as exc:
        result = exc.diagnostics.get("partial")
        if result is None:
            raise
    summary = summarize(cfg, result)
    write_metrics_csv(result.records, out / "metrics.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# ---------------------------------------------------------------------------
# Comparison suites
# ---------------------------------------------------------------------------

@dataclass
class PairRow:
    name: str
    attack: str
    aggregator: str
    buffers: int
    final_loss: float
    baseline_loss: float
    delta: float
    ratio: float
    tolerance: float | None
    passed: bool


def compare_suite(configs: list[RunConfig], out_dir: str | Path | None = None) -> dict:
    """Run every config, pair each variant against the baseline, and apply
    each variant's declared tolerance.  Returns the report dict; also
    writes report.csv / report.json plus per-run outputs under out_dir
    when given."""
    if len(configs) < 2:
        raise PairingError("a suite needs at least two configs")
    keys = {c.pairing_key() for c in configs}
    if len(keys) != 1:
        raise PairingError(
            "suite configs must differ only in attack/aggregator/buffer dimensions; "
            f"found {len(keys)} distinct base settings"
        )
    baselines = [c for c in configs if c.role == "baseline"]
    if len(baselines) != 1:
        raise PairingError(f"exactly one config must declare role = baseline, found {len(baselines)}")
    baseline = baselines[0]
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise PairingError(f"suite config names must be unique, got {names}")

    out = Path(out_dir) if out_dir is not None else None
    summaries = {}
    for cfg in configs:
        if out is not None:
            summaries[cfg.name] = run_experiment(cfg, out / (cfg.name or f"run{id(cfg)}"))
        else:
            summaries[cfg.name] = summarize(cfg, run(cfg))

    base_loss = summaries[baseline.name]["final_loss"]
    rows = []
    for cfg in configs:
        if cfg is baseline:
            continue
        s = summaries[cfg.name]
        loss = s["final_loss"]
        finite = loss == loss and abs(loss) != float("inf")
        ratio = (loss / base_loss) if finite and base_loss > 0 else float("inf")
        tol = cfg.accept_loss_ratio
        passed = True if tol is None else (finite and ratio <= tol)
        rows.append(PairRow(
            name=cfg.name, attack=cfg.attack, aggregator=cfg.aggregator,
            buffers=cfg.buffers, final_loss=loss, baseline_loss=base_loss,
            delta=loss - base_loss if finite else float("inf"),
            ratio=ratio, tolerance=tol, passed=passed,
        ))

    report = {
        "schema": SUMMARY_SCHEMA,
        "baseline": baseline.name,
        "baseline_final_loss": base_loss,
        "rows": [vars(r) for r in rows],
        "all_passed": all(r.passed for r in rows),
    }
    if out is not None:
        header = "name,attack,aggregator,buffers,final_loss,baseline_loss,delta,ratio,tolerance,passed"
        lines = [header] + [
            ",".join(_fmt(getattr(r, col)) for col in header.split(","))
            for r in rows
        ]
        (out / "report.csv").write_text("\n".join(lines) + "\n")
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def load_suite(directory: str | Path) -> list[RunConfig]:
    paths = sorted(Path(directory).glob("*.cfg"))
    if not paths:
        raise PairingError(f"no .cfg files found in {directory}")
    return [load_config(p) for p in paths]
