"""Time-local master equation models with signed, time-dependent rates.

A model is the system Hamiltonian, an optional Lamb-shift term
``(S(t)/2) * L`` and a list of decay channels ``(C_j, Delta_j(t))``. Rates may
be negative on finite intervals. Units: hbar = 1, times in units of the
chosen rate scale.
"""
from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import (
    EXCITED,
    GROUND,
    SIGMA_MINUS,
    SIGMA_PLUS,
    DimensionError,
    is_hermitian,
)


class RateDomainError(ValueError):
    """A tabulated rate was evaluated outside its table."""


class ModelError(ValueError):
    def __init__(self, diagnostics: Sequence[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


# --------------------------------------------------------------------------
# rate functions


class RateFunction:
    """Real-valued rate ``Delta(t)``; may change sign."""

    def __call__(self, t: float) -> float:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        """Times where the rate or its derivative is discontinuous."""
        return ()

    def domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class Constant(RateFunction):
    value: float

    def __call__(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class PiecewiseConstant(RateFunction):
    """``values[i]`` holds on ``[breakpoints[i-1], breakpoints[i])``.

    ``len(values) == len(breakpoints) + 1``; the first value extends to
    minus infinity and the last to plus infinity.
    """

    edges: tuple[float, ...]
    values: tuple[float, ...]

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float]):
        bp = tuple(float(b) for b in breakpoints)
        vals = tuple(float(v) for v in values)
        if len(vals) != len(bp) + 1:
            raise ValueError("piecewise constant rate needs len(values) == len(breakpoints) + 1")
        if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError("piecewise constant breakpoints must be strictly ascending")
        object.__setattr__(self, "edges", bp)
        object.__setattr__(self, "values", vals)

    def __call__(self, t: float) -> float:
        return self.values[bisect_right(self.edges, t)]

    def breakpoints(self) -> tuple[float, ...]:
        return self.edges


@dataclass(frozen=True)
class DampedOscillation(RateFunction):
    """``amplitude * exp(-decay * t) * sin(frequency * t + phase)``."""

    amplitude: float
    decay: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        if self.decay < 0:
            raise ValueError("damped oscillation decay must be >= 0")

    def __call__(self, t: float) -> float:
        return self.amplitude * math.exp(-self.decay * t) * math.sin(self.frequency * t + self.phase)


@dataclass(frozen=True)
class Tabulated(RateFunction):
    """Linear interpolation in a table; no extrapolation."""

    times: tuple[float, ...]
    values: tuple[float, ...]
    source: str | None = field(default=None, compare=False)

    def __init__(self, times: Sequence[float], values: Sequence[float], source: str | None = None):
        ts = tuple(float(x) for x in times)
        vs = tuple(float(x) for x in values)
        if len(ts) != len(vs):
            raise ValueError("tabulated rate: times and values differ in length")
        if len(ts) < 2:
            raise ValueError("tabulated rate needs at least two points")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("tabulated rate times must be strictly ascending")
        if not all(math.isfinite(x) for x in ts + vs):
            raise ValueError("tabulated rate contains non-finite entries")
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "values", vs)
        object.__setattr__(self, "source", source)

    def __call__(self, t: float) -> float:
        ts = self.times
        if t < ts[0] or t > ts[-1]:
            raise RateDomainError(f"t={t!r} outside tabulated rate domain [{ts[0]}, {ts[-1]}]")
        i = bisect_right(ts, t) - 1
        if ts[i] == t:
            return self.values[i]
        t0, t1 = ts[i], ts[i + 1]
        v0, v1 = self.values[i], self.values[i + 1]
        return v0 + (v1 - v0) * ((t - t0) / (t1 - t0))

    def breakpoints(self) -> tuple[float, ...]:
        return self.times

    def domain(self) -> tuple[float, float]:
        return (self.times[0], self.times[-1])


def load_rate_table(path: str | Path) -> Tabulated:
    """Read a two-column ``time,rate`` CSV; a non-numeric first row is a header."""
    path = Path(path)
    times, values = [], []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                t, v = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: expected two numeric columns") from None
            times.append(t)
            values.append(v)
    for i in range(1, len(times)):
        if times[i] <= times[i - 1]:
            raise ValueError(f"{path}: times not strictly ascending at row {i + 1}")
    return Tabulated(times, values, source=str(path))


def write_rate_table(path: str | Path, rate: Tabulated) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "rate"])
        for t, v in zip(rate.times, rate.values):
            w.writerow([repr(t), repr(v)])


# --------------------------------------------------------------------------
# channels and models


@dataclass(frozen=True, eq=False)
class DecayChannel:
    operator: np.ndarray
    rate: RateFunction
    label: str = "C"

    def __post_init__(self):
        op = np.array(self.operator, dtype=np.complex128)
        op.setflags(write=False)
        object.__setattr__(self, "operator", op)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Hamiltonian, optional Lamb shift, decay channels and initial state.

    Construction only coerces array types; :func:`validate` reports invariant
    violations and :meth:`check` raises on them.
    """

    dim: int
    hamiltonian: np.ndarray
    channels: tuple[DecayChannel, ...]
    initial_state: np.ndarray
    lamb_shift: RateFunction | None = None
    lamb_shift_operator: np.ndarray | None = None

    def __post_init__(self):
        h = np.array(self.hamiltonian, dtype=np.complex128)
        psi0 = np.array(self.initial_state, dtype=np.complex128).reshape(-1)
        object.__setattr__(self, "channels", tuple(self.channels))
        lop = self.lamb_shift_operator
        if lop is None and self.lamb_shift is not None and self.dim == 2:
            lop = SIGMA_PLUS @ SIGMA_MINUS
        if lop is not None:
            lop = np.array(lop, dtype=np.complex128)
            lop.setflags(write=False)
        for a in (h, psi0):
            a.setflags(write=False)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "initial_state", psi0)
        object.__setattr__(self, "lamb_shift_operator", lop)
        shapes_ok = h.shape == (self.dim, self.dim) and all(
            ch.operator.shape == (self.dim, self.dim) for ch in self.channels
        )
        if shapes_ok:
            cdc = np.array([ch.operator.conj().T @ ch.operator for ch in self.channels], dtype=np.complex128)
            if cdc.size == 0:
                cdc = np.zeros((0, self.dim, self.dim), dtype=np.complex128)
        else:
            cdc = None
        object.__setattr__(self, "_cdc", cdc)

    @property
    def cdc(self) -> np.ndarray:
        """Stack of ``C_j^dagger C_j``, shape ``(n_channels, d, d)``."""
        if self._cdc is None:
            raise ModelError(validate(self))
        return self._cdc

    def rates(self, t: float) -> list[float]:
        return [ch.rate(t) for ch in self.channels]

    def check(self, t_max: float | None = None) -> "ModelSpec":
        problems = validate(self, t_max=t_max)
        if problems:
            raise ModelError(problems)
        return self

    def breakpoints(self) -> tuple[float, ...]:
        pts = set()
        for ch in self.channels:
            pts.update(ch.rate.breakpoints())
        if self.lamb_shift is not None:
            pts.update(self.lamb_shift.breakpoints())
        return tuple(sorted(pts))


def evaluate_rate(channel: DecayChannel, t: float) -> float:
    return channel.rate(t)


def effective_hamiltonian(model: ModelSpec, t: float) -> np.ndarray:
    """Non-Hermitian Monte Carlo Hamiltonian at time ``t``.

    ``H_s + (S(t)/2) L - (i/2) sum_j Delta_j(t) C_j^dagger C_j``.
    """
    h = model.hamiltonian.copy()
    if model.lamb_shift is not None:
        h += (0.5 * model.lamb_shift(t)) * model.lamb_shift_operator
    cdc = model.cdc
    for j, ch in enumerate(model.channels):
        rate = ch.rate(t)
        if rate != 0.0:
            h -= (0.5j * rate) * cdc[j]
    return h


def build_two_level_model(
    delta: RateFunction,
    lamb: RateFunction | None,
    initial,
    label: str = "sigma_minus",
) -> ModelSpec:
    """Two-level atom with one decay channel ``sigma_- = |g><e|``.

    ``lamb`` is the Lamb shift ``S(t)``, entering as ``(S/2) sigma_+ sigma_-``.
    """
    psi0 = np.array(initial, dtype=np.complex128).reshape(-1)
    if psi0.shape != (2,):
        raise DimensionError(f"two-level model needs a 2-dimensional initial state, got {psi0.shape}")
    return ModelSpec(
        dim=2,
        hamiltonian=np.zeros((2, 2), dtype=np.complex128),
        channels=(DecayChannel(SIGMA_MINUS, delta, label),),
        initial_state=psi0,
        lamb_shift=lamb,
        lamb_shift_operator=SIGMA_PLUS @ SIGMA_MINUS,
    )


def excited_state() -> np.ndarray:
    return EXCITED.copy()


def ground_state() -> np.ndarray:
    return GROUND.copy()


def superposition_state() -> np.ndarray:
    return (GROUND + EXCITED) / math.sqrt(2.0)


def validate(model: ModelSpec, t_max: float | None = None) -> list[str]:
    """List every violated model invariant; empty when the model is valid."""
    out: list[str] = []
    d = model.dim
    if not isinstance(d, (int, np.integer)) or d < 1:
        return [f"dimension must be a positive integer, got {d!r}"]
    h = model.hamiltonian
    if h.shape != (d, d):
        out.append(f"hamiltonian has shape {h.shape}, expected ({d}, {d})")
    elif not np.all(np.isfinite(h)):
        out.append("hamiltonian has non-finite entries")
    elif not is_hermitian(h, 1e-12):
        out.append("hamiltonian not Hermitian")
    if not model.channels:
        out.append("model needs at least one decay channel")
    labels = [ch.label for ch in model.channels]
    if len(set(labels)) != len(labels):
        out.append("channel labels are not unique")
    for ch in model.channels:
        if ch.operator.shape != (d, d):
            out.append(f"channel {ch.label!r} operator has shape {ch.operator.shape}, expected ({d}, {d})")
        elif not np.all(np.isfinite(ch.operator)):
            out.append(f"channel {ch.label!r} operator has non-finite entries")
        if not isinstance(ch.rate, RateFunction):
            out.append(f"channel {ch.label!r} rate is not a RateFunction")
    psi0 = model.initial_state
    if psi0.shape != (d,):
        out.append(f"initial state has shape {psi0.shape}, expected ({d},)")
    else:
        nrm = float(np.sqrt(np.vdot(psi0, psi0).real))
        if abs(nrm - 1.0) > 1e-12:
            out.append(f"initial state not unit-norm (norm={nrm!r})")
    if model.lamb_shift is not None:
        lop = model.lamb_shift_operator
        if lop is None:
            out.append("lamb shift given without lamb_shift_operator")
        elif lop.shape != (d, d):
            out.append(f"lamb shift operator has shape {lop.shape}, expected ({d}, {d})")
        elif not is_hermitian(lop, 1e-12):
            out.append("lamb shift operator not Hermitian")
    if t_max is not None:
        rates = [(ch.label, ch.rate) for ch in model.channels]
        if model.lamb_shift is not None:
            rates.append(("lamb_shift", model.lamb_shift))
        for name, rate in rates:
            lo, hi = rate.domain()
            if lo > 0.0 or hi < t_max:
                out.append(f"rate {name!r} domain [{lo}, {hi}] does not cover simulation window [0, {t_max}]")
    return out
