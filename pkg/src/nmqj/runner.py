"""Run orchestration behind the CLI subcommands.

Every ``run_*`` function takes a :class:`RunConfig`, computes in memory and,
when ``cfg.out_dir`` is set, writes its files there. Outputs depend only on
the config and seed; wall-clock figures go to ``timing.json`` so the other
files stay byte-identical between repeated runs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .config import RunConfig
from .oracle import OracleSolution, compare_to_oracle, integrate_master_equation
from .output import (
    TimeSeriesRecord,
    records_from_run,
    write_events,
    write_json,
    write_timeseries,
    write_trajectory,
)
from .simulate import NAIVE_MAX_MEMBERS, EnsembleRun, TrajectoryRun, simulate_ensemble, simulate_naive, simulate_trajectory

log = logging.getLogger(__name__)

TIMESERIES = "timeseries.csv"
EVENTS = "events.jsonl"
SUMMARY = "summary.json"
TIMING = "timing.json"
TRAJECTORY = "trajectory.csv"
TRAJECTORY_EVENTS = "trajectory_events.jsonl"
ORACLE = "oracle.csv"
COMPARE = "compare.json"
BENCH = "bench.json"


def _out(cfg: RunConfig) -> Path | None:
    if cfg.out_dir is None:
        return None
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _summary(cfg: RunConfig, run: EnsembleRun) -> dict:
    doc = run.summary()
    doc.update(
        {
            "seed": cfg.seed,
            "dt": cfg.step.dt,
            "integrator": cfg.step.integrator_order,
            "adaptive_dt": cfg.adaptive,
            "strict": cfg.strict,
            "observables": list(cfg.observables),
            "final": {name: float(v[-1]) for name, v in run.values.items()},
        }
    )
    return doc


def _write_ensemble(out: Path, cfg: RunConfig, run: EnsembleRun, extra_timing: dict | None = None) -> None:
    write_timeseries(out / TIMESERIES, records_from_run(run))
    write_events(out / EVENTS, run.events)
    write_json(out / SUMMARY, _summary(cfg, run))
    timing = {"wall_clock_s": run.wall_clock, "kernels": kernels.BACKEND}
    if extra_timing:
        timing.update(extra_timing)
    write_json(out / TIMING, timing)


def _simulate(cfg: RunConfig, **kw) -> EnsembleRun:
    return simulate_ensemble(
        cfg.model,
        cfg.n_members,
        cfg.step,
        cfg.output_grid,
        cfg.seed,
        cfg.observables,
        strict=cfg.strict,
        adaptive=cfg.adaptive,
        record_counts=cfg.record_counts,
        **kw,
    )


def run_ensemble(cfg: RunConfig) -> tuple[list[TimeSeriesRecord], list, dict]:
    """Compressed ensemble run; returns (records, events, summary)."""
    run = _simulate(cfg)
    out = _out(cfg)
    if out is not None:
        _write_ensemble(out, cfg, run)
    summary = _summary(cfg, run)
    summary["wall_clock_s"] = run.wall_clock
    return records_from_run(run), run.events, summary


@dataclass
class TrajectoryResult:
    times: np.ndarray
    populations: np.ndarray
    states: np.ndarray
    events: list
    ensemble: EnsembleRun


def run_trajectory(cfg: RunConfig) -> TrajectoryResult:
    """Follow one tagged member inside the configured ensemble of size N.

    The tagged member's history is the single reported trajectory; the rest
    of the ensemble supplies the occupations that reverse jumps need.
    """
    tr: TrajectoryRun = simulate_trajectory(
        cfg.model,
        cfg.n_members,
        cfg.step,
        cfg.output_grid,
        cfg.seed,
        cfg.observables,
        strict=cfg.strict,
        adaptive=cfg.adaptive,
        record_counts=cfg.record_counts,
    )
    out = _out(cfg)
    if out is not None:
        labels = ["P_g", "P_e"] if cfg.model.dim == 2 else None
        write_trajectory(out / TRAJECTORY, tr.times, tr.states, labels)
        write_events(out / TRAJECTORY_EVENTS, tr.events)
        _write_ensemble(out, cfg, tr.ensemble)
    return TrajectoryResult(tr.times, tr.populations, tr.states, tr.events, tr.ensemble)


def oracle_records(sol: OracleSolution, observables) -> list[TimeSeriesRecord]:
    vals = {name: sol.expectation(o).real for name, o in observables.items()}
    return [TimeSeriesRecord(float(t), {n: float(v[k]) for n, v in vals.items()}) for k, t in enumerate(sol.grid)]


def run_oracle(cfg: RunConfig) -> OracleSolution:
    sol = integrate_master_equation(cfg.model, cfg.output_grid)
    out = _out(cfg)
    if out is not None:
        write_timeseries(out / ORACLE, oracle_records(sol, cfg.observables))
    return sol


def run_compare(cfg: RunConfig, n_sigma: float = 5.0) -> dict:
    """Ensemble run and oracle on the same grid, compared per observable."""
    run = _simulate(cfg)
    sol = integrate_master_equation(cfg.model, cfg.output_grid)
    reports = {}
    for name, op in cfg.observables.items():
        rep = compare_to_oracle(
            run.times,
            run.values[name],
            sol,
            op,
            variances=run.variances[name],
            n_members=cfg.n_members,
            n_sigma=n_sigma,
        )
        reports[name] = rep.to_dict()
    doc = {
        "n_members": cfg.n_members,
        "n_sigma": n_sigma,
        "seed": cfg.seed,
        "ok": all(r["ok"] for r in reports.values()),
        "observables": reports,
    }
    out = _out(cfg)
    if out is not None:
        _write_ensemble(out, cfg, run)
        write_timeseries(out / ORACLE, oracle_records(sol, cfg.observables))
        write_json(out / COMPARE, doc)
    return doc


def bench_grid(cfg: RunConfig) -> np.ndarray:
    t_end = cfg.bench_t_max if cfg.bench_t_max is not None else cfg.t_max
    g = cfg.output_grid[cfg.output_grid < t_end]
    return np.append(g, t_end)


def run_bench(cfgs: list[RunConfig], *, naive: bool = True) -> list[dict]:
    """Compressed vs naive per-member wall-clock for each config and size."""
    rows = []
    for cfg in cfgs:
        grid = bench_grid(cfg)
        for n in cfg.bench_sizes:
            comp = simulate_ensemble(
                cfg.model, n, cfg.step, grid, cfg.seed, cfg.observables, strict=cfg.strict, adaptive=cfg.adaptive
            )
            row = {
                "config": str(cfg.source) if cfg.source else None,
                "n_members": n,
                "t_max": float(grid[-1]),
                "steps": comp.steps,
                "peak_n_eff": comp.peak_n_eff,
                "compressed_s": comp.wall_clock,
                "kernels": kernels.BACKEND,
            }
            if naive and n > NAIVE_MAX_MEMBERS:
                row["naive_s"] = None  # naive mode refuses this size
            elif naive:
                nv = simulate_naive(cfg.model, n, cfg.step, grid, cfg.seed, cfg.observables, strict=cfg.strict)
                row["naive_s"] = nv.wall_clock
                row["naive_peak_n_eff"] = nv.peak_n_eff
                row["ratio"] = nv.wall_clock / comp.wall_clock
            log.info("bench N=%d: %s", n, row)
            rows.append(row)
        out = _out(cfg)
        if out is not None:
            write_json(out / BENCH, [r for r in rows if r["config"] == (str(cfg.source) if cfg.source else None)])
    return rows
