"""Reference solutions of the master equation.

``integrate_master_equation`` integrates the density matrix directly and does
not share code with the jump engine or the state-vector kernels: the
right-hand side is written out from the Lindblad form. ``analytic_two_level``
gives the closed-form two-level solution in terms of the running integrals of
the decay rate and Lamb shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import ModelSpec, RateFunction

TOL = 1e-8


@dataclass(frozen=True, eq=False)
class OracleSolution:
    grid: np.ndarray
    densities: np.ndarray  # (len(grid), d, d)

    def expectation(self, obs: np.ndarray) -> np.ndarray:
        """``tr(rho(t) obs)`` on the grid (complex)."""
        return np.einsum("tij,ji->t", self.densities, np.asarray(obs, dtype=np.complex128))


def lindblad_rhs(model: ModelSpec, t: float, rho: np.ndarray) -> np.ndarray:
    """``d rho / dt`` of the time-local master equation at time ``t``."""
    return _rhs(model, t, t, rho)


def _rhs(model, t, t_rate, rho):
    # t_rate: where rates are sampled (nudged inside a smooth segment)
    t = t_rate
    h = model.hamiltonian
    if model.lamb_shift is not None:
        h = h + (0.5 * model.lamb_shift(t)) * model.lamb_shift_operator
    out = -1j * (h @ rho - rho @ h)
    for ch in model.channels:
        rate = ch.rate(t)
        if rate == 0.0:
            continue
        c = ch.operator
        cd = c.conj().T
        cdc = cd @ c
        out = out + rate * (c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc))
    return out


def _inside(t, lo, hi):
    """``t`` moved one ulp into ``(lo, hi)`` when it sits on a segment end.

    Rates are only smooth between breakpoints; a stage on a breakpoint must
    see the limit from inside the segment being integrated.
    """
    if t <= lo:
        return math.nextafter(lo, hi)
    if t >= hi:
        return math.nextafter(hi, lo)
    return t


def _rk4(model, rho, t, h, lo, hi):
    tm = t + 0.5 * h
    k1 = _rhs(model, t, _inside(t, lo, hi), rho)
    k2 = _rhs(model, tm, _inside(tm, lo, hi), rho + (0.5 * h) * k1)
    k3 = _rhs(model, tm, _inside(tm, lo, hi), rho + (0.5 * h) * k2)
    k4 = _rhs(model, t + h, _inside(t + h, lo, hi), rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _segments(a: float, b: float, kinks: np.ndarray) -> list[float]:
    inner = kinks[(kinks > a) & (kinks < b)]
    return [a, *inner.tolist(), b]


def _integrate(model, rho0, grid, h_max, kinks):
    out = np.empty((grid.size, model.dim, model.dim), dtype=np.complex128)
    rho = rho0.copy()
    out[0] = rho
    for k in range(grid.size - 1):
        nodes = _segments(grid[k], grid[k + 1], kinks)
        for a, b in zip(nodes, nodes[1:]):
            n = max(1, math.ceil((b - a) / h_max - 1e-9))
            h = (b - a) / n
            for i in range(n):
                rho = _rk4(model, rho, a + i * h, h, a, b)
        rho = 0.5 * (rho + rho.conj().T)
        out[k + 1] = rho
    return out


def integrate_master_equation(
    model: ModelSpec,
    grid: Sequence[float],
    *,
    tol: float = TOL,
    h_max: float = 0.02,
    max_refinements: int = 8,
) -> OracleSolution:
    """RK4 integration of the master equation from ``rho0 = |psi0><psi0|``.

    The substep is halved until every matrix entry on the grid changes by
    less than ``tol``; rate breakpoints are always substep boundaries.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or grid[0] != 0.0:
        raise ValueError("grid must be a non-empty 1-d array starting at t=0")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    model.check(t_max=float(grid[-1]))
    psi0 = model.initial_state
    rho0 = np.outer(psi0, psi0.conj())
    kinks = np.asarray(model.breakpoints(), dtype=float)

    prev = _integrate(model, rho0, grid, h_max, kinks)
    h = h_max
    for _ in range(max_refinements):
        h /= 2
        cur = _integrate(model, rho0, grid, h, kinks)
        if np.max(np.abs(cur - prev)) < tol:
            return OracleSolution(grid, cur)
        prev = cur
    raise ArithmeticError(f"oracle integration did not converge to {tol} (last substep {h})")


# --------------------------------------------------------------------------
# closed-form two-level solution


def _simpson(f, a: float, b: float, n: int) -> float:
    if n % 2:
        n += 1
    h = (b - a) / n
    # end values as limits from inside [a, b]
    s = f(math.nextafter(a, b)) + f(math.nextafter(b, a))
    s += 4.0 * sum(f(a + i * h) for i in range(1, n, 2))
    s += 2.0 * sum(f(a + i * h) for i in range(2, n, 2))
    return s * h / 3.0


def rate_integral(rate: RateFunction | None, a: float, b: float, tol: float = 1e-10) -> float:
    """``int_a^b rate(s) ds`` by composite Simpson, refined until stable to ``tol``.

    Breakpoints of the rate are integration boundaries, so piecewise constant
    and piecewise linear rates are integrated exactly.
    """
    if rate is None or b == a:
        return 0.0
    if b < a:
        raise ValueError("rate_integral needs a <= b")
    nodes = [a, *(x for x in rate.breakpoints() if a < x < b), b]
    total = 0.0
    for lo, hi in zip(nodes, nodes[1:]):
        n = 4
        prev = _simpson(rate, lo, hi, n)
        for _ in range(24):
            n *= 2
            cur = _simpson(rate, lo, hi, n)
            if abs(cur - prev) < tol:
                break
            prev = cur
        else:
            raise ArithmeticError("Simpson quadrature did not converge")
        total += cur
    return total


def running_integral(rate: RateFunction | None, t: float, tol: float = 1e-10) -> float:
    return rate_integral(rate, 0.0, t, tol)


def analytic_two_level(
    delta: RateFunction, lamb: RateFunction | None, rho0: np.ndarray, t: float
) -> np.ndarray:
    """Two-level density matrix at ``t`` (basis order ``|g>, |e>``).

    ``rho_ee(t) = rho_ee(0) exp(-G)`` and
    ``rho_eg(t) = rho_eg(0) exp(-G/2) exp(-i Phi/2)`` with ``G = int Delta``
    and ``Phi = int S``; the phase sign follows from the Lamb-shift term
    ``-(i/2) S [sigma_+ sigma_-, rho]``.
    """
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.shape != (2, 2):
        raise ValueError("analytic_two_level needs a 2x2 density matrix")
    gamma = running_integral(delta, t)
    phi = running_integral(lamb, t)
    return _two_level_from_integrals(rho0, gamma, phi)


def _two_level_from_integrals(rho0, gamma, phi):
    ee = rho0[1, 1] * math.exp(-gamma)
    eg = rho0[1, 0] * math.exp(-0.5 * gamma) * complex(math.cos(0.5 * phi), -math.sin(0.5 * phi))
    rho = np.empty((2, 2), dtype=np.complex128)
    rho[1, 1] = ee
    rho[0, 0] = 1.0 - ee.real
    rho[1, 0] = eg
    rho[0, 1] = np.conj(eg)
    return rho


def analytic_two_level_series(delta, lamb, rho0, grid) -> OracleSolution:
    grid = np.asarray(grid, dtype=float)
    dens = np.empty((grid.size, 2, 2), dtype=np.complex128)
    gamma = phi = 0.0
    prev = 0.0
    for i, t in enumerate(grid):
        # accumulate interval by interval so each quadrature stays short
        gamma += rate_integral(delta, prev, t, 1e-12)
        phi += rate_integral(lamb, prev, t, 1e-12)
        dens[i] = _two_level_from_integrals(np.asarray(rho0, dtype=np.complex128), gamma, phi)
        prev = t
    return OracleSolution(grid, dens)


# --------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ErrorReport:
    times: np.ndarray
    abs_error: np.ndarray
    bound: np.ndarray
    max_error: float
    exceeded: np.ndarray  # bool per time

    @property
    def ok(self) -> bool:
        return not bool(self.exceeded.any())

    def to_dict(self) -> dict:
        return {
            "max_error": self.max_error,
            "n_points": int(self.times.size),
            "n_exceeded": int(self.exceeded.sum()),
            "ok": self.ok,
            "points": [
                {"t": float(t), "abs_error": float(e), "bound": float(b), "exceeded": bool(x)}
                for t, e, b, x in zip(self.times, self.abs_error, self.bound, self.exceeded)
            ],
        }


def compare_to_oracle(
    times: Sequence[float],
    mc_values: Sequence[float],
    oracle: OracleSolution,
    obs: np.ndarray,
    *,
    variances: Sequence[float] | None = None,
    n_members: int | None = None,
    n_sigma: float = 5.0,
    grid_tol: float = 1e-9,
) -> ErrorReport:
    """Per-time error of a Monte Carlo series against the oracle.

    The bound at each time is ``n_sigma * sqrt(v(t) / N)`` with ``v(t)`` the
    per-member variance of the observable; without variances the bound is 0.
    """
    times = np.asarray(times, dtype=float)
    mc = np.asarray(mc_values)
    if times.shape != oracle.grid.shape or np.max(np.abs(times - oracle.grid), initial=0.0) > grid_tol:
        raise ValueError("Monte Carlo and oracle grids differ")
    exact = oracle.expectation(obs)
    if not np.iscomplexobj(mc):
        exact = exact.real
    err = np.abs(mc - exact)
    if variances is not None:
        if n_members is None:
            raise ValueError("n_members is required with variances")
        bound = n_sigma * np.sqrt(np.asarray(variances, dtype=float) / n_members)
    else:
        bound = np.zeros_like(err)
    # equality passes: an exact match against a zero bound is not an exceedance
    exceeded = err > bound
    return ErrorReport(times, err, bound, float(err.max(initial=0.0)), exceeded)
