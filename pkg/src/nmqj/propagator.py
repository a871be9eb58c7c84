"""Deterministic no-jump evolution under the non-Hermitian Hamiltonian."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .model import ModelSpec, effective_hamiltonian

ANNIHILATION_TOL = 1e-30


class StateAnnihilatedError(ArithmeticError):
    pass


@dataclass(frozen=True)
class StepControl:
    """Time step and jump-probability budget.

    ``integrator_order`` is ``"first"`` (the literal ``(1 - iH dt)`` map) or
    ``"fourth"`` (classical RK4 with rates sampled at the stage times).
    """

    dt: float
    max_jump_prob: float = 0.1
    integrator_order: str = "fourth"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt!r}")
        if not 0 < self.max_jump_prob <= 0.5:
            raise ValueError(f"max_jump_prob must lie in (0, 0.5], got {self.max_jump_prob!r}")
        if self.integrator_order not in ("first", "fourth"):
            raise ValueError(f"integrator_order must be 'first' or 'fourth', got {self.integrator_order!r}")

    def with_dt(self, dt: float) -> "StepControl":
        return StepControl(dt, self.max_jump_prob, self.integrator_order)


@dataclass(frozen=True, eq=False)
class UnnormalizedState:
    amps: np.ndarray
    norm_sq: float

    @classmethod
    def from_amps(cls, amps: np.ndarray) -> "UnnormalizedState":
        a = np.asarray(amps, dtype=np.complex128)
        return cls(a, float(kernels.norm_sq_batch(a.reshape(1, -1))[0]))

    @property
    def dim(self) -> int:
        return self.amps.shape[0]


def step_maps(model: ModelSpec, t: float, dt: float, order: str = "fourth"):
    """Matrices consumed by the batch kernels for one step from ``t``.

    First order returns ``(I - i H(t) dt,)``. Fourth order returns the
    generators ``-i H`` at ``t``, ``t + dt/2`` and ``t + dt``.
    """
    if order == "first":
        h = effective_hamiltonian(model, t)
        return (np.eye(model.dim, dtype=np.complex128) - 1j * dt * h,)
    a0 = -1j * effective_hamiltonian(model, t)
    am = -1j * effective_hamiltonian(model, t + 0.5 * dt)
    a1 = -1j * effective_hamiltonian(model, t + dt)
    return a0, am, a1


def propagate_batch(psi: np.ndarray, maps, dt: float) -> np.ndarray:
    """Advance every row of ``psi`` one step; rows are not renormalized."""
    if len(maps) == 1:
        return kernels.matvec_batch(maps[0], psi)
    return kernels.rk4_batch(psi, maps[0], maps[1], maps[2], dt)


def deterministic_step(state: np.ndarray, model: ModelSpec, t: float, ctrl: StepControl) -> UnnormalizedState:
    """Integrate ``d phi/dt = -i H(t) phi`` over ``[t, t + dt]``."""
    psi = np.ascontiguousarray(state, dtype=np.complex128).reshape(1, -1)
    maps = step_maps(model, t, ctrl.dt, ctrl.integrator_order)
    out = propagate_batch(psi, maps, ctrl.dt)
    return UnnormalizedState.from_amps(out[0])


def renormalize(phi: UnnormalizedState) -> np.ndarray:
    if not phi.norm_sq > ANNIHILATION_TOL:
        raise StateAnnihilatedError("state annihilated")
    return phi.amps / np.sqrt(phi.norm_sq)


def substeps(t0: float, t1: float, dt: float) -> tuple[int, float]:
    """Number of equal steps of size at most ``dt`` covering ``[t0, t1]``."""
    span = t1 - t0
    n = max(1, int(np.ceil(span / dt - 1e-9)))
    return n, span / n


def no_jump_trajectory(model: ModelSpec, grid: Sequence[float], ctrl: StepControl | None = None) -> np.ndarray:
    """Renormalized deterministic evolution of the initial state on ``grid``.

    Between grid points the step is the largest size ``<= ctrl.dt`` that
    divides the interval evenly. Returns an array of shape ``(len(grid), d)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
        raise ValueError("grid must be a non-empty 1-d array starting at t=0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    if ctrl is None:
        ctrl = StepControl(dt=1e-3)
    psi = np.array(model.initial_state, dtype=np.complex128).reshape(1, -1)
    out = np.empty((grid.size, model.dim), dtype=np.complex128)
    out[0] = psi[0]
    for k in range(grid.size - 1):
        n, h = substeps(grid[k], grid[k + 1], ctrl.dt)
        for i in range(n):
            t = grid[k] + i * h
            psi = propagate_batch(psi, step_maps(model, t, h, ctrl.integrator_order), h)
            ns = kernels.normalize_batch(psi)
            if not ns[0] > ANNIHILATION_TOL:
                raise StateAnnihilatedError("state annihilated")
        out[k + 1] = psi[0]
    return out
