"""Run loops: compressed ensemble, tracked trajectory and naive per-member mode."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .ensemble import Ensemble, assemble_density, expectation_value, member_variance, n_eff
from .jumps import (
    FIRE_TOL,
    NEGATIVE,
    POSITIVE,
    JumpEvent,
    RandomStreams,
    StepOutcome,
    TrackedMember,
    UnravelingBreakdown,
    classify_channels,
    step_ensemble,
)
from .linalg import check_density
from .model import ModelSpec
from .propagator import StepControl, propagate_batch, step_maps, substeps

NAIVE_MAX_MEMBERS = 10**6


class InvariantError(AssertionError):
    """Count conservation or density-matrix validity failed during a run."""


ConservationError = InvariantError


@dataclass
class EnsembleRun:
    times: np.ndarray
    values: dict[str, np.ndarray]
    variances: dict[str, np.ndarray]
    n_eff: np.ndarray
    events: list[JumpEvent]
    n_members: int
    peak_n_eff: int
    wall_clock: float
    counts: list[list[tuple[int, int]]] | None = None
    steps: int = 0
    max_prob_seen: float = 0.0
    orphaned_steps: int = 0

    def jumps_by_sign(self) -> dict[str, int]:
        out = {POSITIVE: 0, NEGATIVE: 0}
        for ev in self.events:
            out[ev.sign] += ev.members_moved
        return out

    def summary(self) -> dict:
        """Deterministic run summary (wall-clock time is reported separately)."""
        by_sign = self.jumps_by_sign()
        return {
            "n_members": self.n_members,
            "grid_points": int(self.times.size),
            "t_max": float(self.times[-1]),
            "steps": self.steps,
            "events": len(self.events),
            "jumps_positive": by_sign[POSITIVE],
            "jumps_negative": by_sign[NEGATIVE],
            "peak_n_eff": self.peak_n_eff,
            "max_jump_prob_seen": float(self.max_prob_seen),
            "orphaned_steps": self.orphaned_steps,
        }


@dataclass
class TrajectoryRun:
    times: np.ndarray
    states: np.ndarray  # tracked member's vector per grid point
    populations: np.ndarray  # |amplitude|^2 per basis state
    events: list[JumpEvent]  # tracked member's own jumps
    ensemble: EnsembleRun


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
        raise ValueError("output grid must be a non-empty 1-d array starting at t=0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("output grid must be strictly ascending")
    return grid


def _hermitian(obs: np.ndarray) -> bool:
    return bool(np.allclose(obs, obs.conj().T, atol=1e-12, rtol=0))


def simulate_ensemble(
    model: ModelSpec,
    n_members: int,
    ctrl: StepControl,
    grid,
    seed: int,
    observables: Mapping[str, np.ndarray],
    *,
    strict: bool = True,
    adaptive: bool = True,
    record_counts: bool = False,
    tracker: TrackedMember | None = None,
    on_grid=None,
) -> EnsembleRun:
    """Run the compressed ensemble over ``grid`` and record observables.

    Count conservation is checked after every step and the assembled density
    matrix at every grid point; a violation raises :class:`InvariantError`.
    ``on_grid(k, ensemble)`` is called at each grid point, after recording.
    """
    grid = _check_grid(grid)
    model.check(t_max=float(grid[-1]))
    start = time.perf_counter()
    ens = Ensemble.pure(model.initial_state, n_members)
    streams = RandomStreams(seed)
    obs = {name: np.asarray(o, dtype=np.complex128) for name, o in observables.items()}
    real = {name: _hermitian(o) for name, o in obs.items()}
    values = {name: np.empty(grid.size, dtype=float if real[name] else complex) for name in obs}
    variances = {name: np.zeros(grid.size) for name in obs}
    neff = np.empty(grid.size, dtype=np.int64)
    counts = [] if record_counts else None
    events: list[JumpEvent] = []
    total = StepOutcome()
    peak = 1
    steps = 0
    orphaned_steps = 0

    def record(k):
        for name, o in obs.items():
            v = expectation_value(ens, o)
            values[name][k] = v.real if real[name] else v
            if real[name]:
                variances[name][k] = member_variance(ens, o)
        neff[k] = n_eff(ens)
        problems = check_density(assemble_density(ens))
        if problems:
            raise InvariantError(f"invalid density matrix at t={grid[k]}: {'; '.join(problems)}")
        if counts is not None:
            counts.append([(s.id, s.count) for s in ens if s.count > 0])
        if on_grid is not None:
            on_grid(k, ens)

    record(0)
    for k in range(grid.size - 1):
        n, h = substeps(grid[k], grid[k + 1], ctrl.dt)
        step_ctrl = ctrl.with_dt(h)
        for i in range(n):
            ens.time = grid[k] + i * h
            _, out = step_ensemble(ens, model, step_ctrl, streams, strict=strict, adaptive=adaptive, tracker=tracker)
            steps += out.substeps
            if out.orphaned:
                orphaned_steps += 1
            events.extend(out.events)
            total.max_prob_seen = max(total.max_prob_seen, out.max_prob_seen)
            if ens.count_sum() != ens.total:
                raise InvariantError(f"count sum {ens.count_sum()} != N={ens.total} at t={ens.time}")
            peak = max(peak, n_eff(ens))
        ens.time = float(grid[k + 1])
        record(k + 1)

    return EnsembleRun(
        times=grid,
        values=values,
        variances=variances,
        n_eff=neff,
        events=events,
        n_members=n_members,
        peak_n_eff=peak,
        wall_clock=time.perf_counter() - start,
        counts=counts,
        steps=steps,
        max_prob_seen=total.max_prob_seen,
        orphaned_steps=orphaned_steps,
    )


def simulate_trajectory(
    model: ModelSpec,
    n_members: int,
    ctrl: StepControl,
    grid,
    seed: int,
    observables: Mapping[str, np.ndarray],
    **kwargs,
) -> TrajectoryRun:
    """Ensemble run that additionally follows one tagged member.

    Reverse-jump probabilities depend on the ensemble occupations, so the
    tracked member always lives inside a full ensemble of ``n_members``.
    """
    grid = _check_grid(grid)
    tracker = TrackedMember(state_id=0)
    states = np.empty((grid.size, model.dim), dtype=np.complex128)

    def grab(k, ens):
        states[k] = ens.vector(tracker.state_id)

    run = simulate_ensemble(model, n_members, ctrl, grid, seed, observables, tracker=tracker, on_grid=grab, **kwargs)
    pops = states.real**2 + states.imag**2
    return TrajectoryRun(grid, states, pops, list(tracker.events), run)


# --------------------------------------------------------------------------
# naive per-member mode (benchmark baseline)


def simulate_naive(
    model: ModelSpec,
    n_members: int,
    ctrl: StepControl,
    grid,
    seed: int,
    observables: Mapping[str, np.ndarray],
    *,
    strict: bool = True,
    merge_tol: float = 1e-10,
) -> EnsembleRun:
    """Same unraveling with every member stored and propagated on its own.

    Each step propagates all ``N`` vectors and draws one uniform per member.
    Reverse-jump probabilities still need the occupation of each distinct
    state, so members carry a label naming the state they are a copy of.
    Fixed step size only (no adaptive halving).
    """
    if n_members > NAIVE_MAX_MEMBERS:
        raise ValueError(f"naive mode refuses N > {NAIVE_MAX_MEMBERS}")
    grid = _check_grid(grid)
    model.check(t_max=float(grid[-1]))
    start = time.perf_counter()
    d = model.dim
    psi = np.tile(np.asarray(model.initial_state, dtype=np.complex128), (n_members, 1))
    labels = np.zeros(n_members, dtype=np.int64)
    reps = [np.array(model.initial_state, dtype=np.complex128)]  # label -> vector at step start
    key = int(seed) & 0xFFFFFFFFFFFFFFFF
    obs = {name: np.asarray(o, dtype=np.complex128) for name, o in observables.items()}
    real = {name: _hermitian(o) for name, o in obs.items()}
    values = {name: np.empty(grid.size, dtype=float if real[name] else complex) for name in obs}
    variances = {name: np.zeros(grid.size) for name in obs}
    neff = np.empty(grid.size, dtype=np.int64)
    events: list[JumpEvent] = []
    peak = 1
    step_index = 0
    max_prob = 0.0
    thresh = 1.0 - merge_tol

    def record(k):
        for name, o in obs.items():
            vals = kernels.expect_batch(psi, o)
            if real[name]:
                r = vals.real
                values[name][k] = r.mean()
                variances[name][k] = r.var()
            else:
                values[name][k] = vals.mean()
        neff[k] = int(np.count_nonzero(np.bincount(labels)))

    def label_of(v):
        for lab, r in enumerate(reps):
            if abs(np.vdot(r, v)) ** 2 > thresh:
                return lab
        reps.append(v.copy())
        return len(reps) - 1

    record(0)
    for k in range(grid.size - 1):
        n_sub, h = substeps(grid[k], grid[k + 1], ctrl.dt)
        for i in range(n_sub):
            t = grid[k] + i * h
            counts = np.bincount(labels, minlength=len(reps))
            live = np.flatnonzero(counts)
            # representative vector per live label, taken from its first member
            first = np.full(len(reps), -1, dtype=np.int64)
            first[labels[::-1]] = np.arange(n_members - 1, -1, -1)
            for lab in live:
                reps[lab] = psi[first[lab]].copy()
            pos, neg, _ = classify_channels(model, t)
            rates = model.rates(t)
            cdc = model.cdc[pos] if pos else np.zeros((0, d, d), dtype=np.complex128)
            pos_scale = np.array([rates[j] * h for j in pos], dtype=float)
            # reverse pairs per source label
            pairs: dict[int, list[tuple[int, int, float]]] = {}
            for j in neg:
                c = model.channels[j].operator
                for tgt in live:
                    v = c @ reps[tgt]
                    ns = float(np.vdot(v, v).real)
                    if ns <= FIRE_TOL**2:
                        continue
                    landing = v / np.sqrt(ns)
                    src = next((lab for lab in live if abs(np.vdot(reps[lab], landing)) ** 2 > thresh), None)
                    if src is None:
                        if strict:
                            raise UnravelingBreakdown(f"unraveling breakdown at t={t:.6g} (naive mode)")
                        continue
                    if src == tgt:
                        continue
                    p = counts[tgt] / counts[src] * abs(rates[j]) * h * ns
                    pairs.setdefault(int(src), []).append((j, int(tgt), p))
            width = max((len(v) for v in pairs.values()), default=0)
            rev_p = np.zeros((len(reps), width))
            for src, plist in pairs.items():
                plist.sort(key=lambda x: (x[0], x[1]))
                rev_p[src, : len(plist)] = [p for _, _, p in plist]
                max_prob = max(max_prob, sum(p for _, _, p in plist))

            u = kernels.counter_uniforms(key, step_index, n_members)
            branch = kernels.member_branches(psi, labels, cdc, pos_scale, rev_p, u)
            jumped = np.flatnonzero(branch >= 0)
            if jumped.size:
                moves: dict[tuple, int] = {}
                new_psi = psi[jumped]
                new_lab = labels[jumped].copy()
                for idx, (m, b) in enumerate(zip(jumped, branch[jumped])):
                    src = int(labels[m])
                    if b < len(pos):
                        j = pos[b]
                        v = model.channels[j].operator @ psi[m]
                        v = v / np.sqrt(np.vdot(v, v).real)
                        new_psi[idx] = v
                        tgt = label_of(v)
                        sign = POSITIVE
                    else:
                        j, tgt, _ = pairs[src][b - len(pos)]
                        new_psi[idx] = reps[tgt]
                        sign = NEGATIVE
                    new_lab[idx] = tgt
                    moves[(j, sign, src, tgt)] = moves.get((j, sign, src, tgt), 0) + 1
                psi[jumped] = new_psi
                labels[jumped] = new_lab
                for (j, sign, src, tgt), cnt in sorted(moves.items()):
                    events.append(JumpEvent(t, model.channels[j].label, sign, src, tgt, cnt))

            psi = propagate_batch(psi, step_maps(model, t, h, ctrl.integrator_order), h)
            kernels.normalize_batch(psi)
            step_index += 1
            peak = max(peak, int(np.count_nonzero(np.bincount(labels))))
        record(k + 1)

    return EnsembleRun(
        times=grid,
        values=values,
        variances=variances,
        n_eff=neff,
        events=events,
        n_members=n_members,
        peak_n_eff=peak,
        wall_clock=time.perf_counter() - start,
        steps=step_index,
        max_prob_seen=max_prob,
    )
