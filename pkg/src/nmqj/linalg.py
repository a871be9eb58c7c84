"""Dense complex linear algebra for small Hilbert spaces.

State vectors are 1-d ``complex128`` arrays of length ``d``, operators and
density matrices are ``(d, d)`` ``complex128`` arrays. Basis index 0 is the
ground state ``|g>`` and index 1 the excited state ``|e>`` for two-level
systems.
"""
from __future__ import annotations

import numpy as np

NORM_TOL = 1e-12

GROUND = np.array([1.0, 0.0], dtype=np.complex128)
EXCITED = np.array([0.0, 1.0], dtype=np.complex128)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128)  # |g><e|
SIGMA_PLUS = SIGMA_MINUS.conj().T.copy()


class DimensionError(ValueError):
    pass


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


for _a in (GROUND, EXCITED, SIGMA_MINUS, SIGMA_PLUS):
    _freeze(_a)


def as_state(v, *, normalize: bool = False, tol: float = NORM_TOL) -> np.ndarray:
    """Coerce ``v`` to a unit-norm state vector.

    Raises ``ValueError`` when the norm is off by more than ``tol`` and
    ``normalize`` is false.
    """
    arr = np.array(v, dtype=np.complex128).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError("state has non-finite amplitudes")
    nrm = np.sqrt(np.vdot(arr, arr).real)
    if normalize:
        if nrm < 1e-15:
            raise ValueError("cannot normalize a zero vector")
        arr = arr / nrm
    elif abs(nrm - 1.0) > tol:
        raise ValueError(f"state is not unit-norm (norm={nrm!r})")
    return arr


def as_operator(m, dim: int | None = None) -> np.ndarray:
    arr = np.array(m, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"operator must be square, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"operator has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("operator has non-finite entries")
    return arr


def _check(op: np.ndarray, v: np.ndarray) -> None:
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionError(f"operator must be square, got shape {op.shape}")
    if v.ndim != 1 or v.shape[0] != op.shape[1]:
        raise DimensionError(f"dimension mismatch: operator {op.shape}, vector {v.shape}")


def apply(op: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``op @ v`` (result is not renormalized)."""
    op = np.asarray(op)
    v = np.asarray(v)
    _check(op, v)
    return op @ v


def adjoint(op: np.ndarray) -> np.ndarray:
    return np.asarray(op).conj().T.copy()


def expectation(v: np.ndarray, op: np.ndarray) -> complex:
    """``<v|op|v>``."""
    op = np.asarray(op)
    v = np.asarray(v)
    _check(op, v)
    return complex(np.vdot(v, op @ v))


def overlap_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """``|<u|v>|^2``, clipped to [0, 1] against round-off."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionError(f"dimension mismatch: {u.shape} vs {v.shape}")
    f = abs(np.vdot(u, v)) ** 2
    return float(min(max(f, 0.0), 1.0))


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) <= tol)


def projector(v: np.ndarray) -> np.ndarray:
    return np.outer(v, np.conj(v))


def check_density(rho: np.ndarray, *, herm_tol=1e-12, trace_tol=1e-10, psd_tol=1e-10) -> list[str]:
    """Return the violated density-matrix invariants (empty when valid)."""
    problems = []
    if not is_hermitian(rho, herm_tol):
        problems.append("density matrix not Hermitian")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        problems.append(f"trace {tr.real:.3g} != 1")
    herm = 0.5 * (rho + rho.conj().T)
    if np.linalg.eigvalsh(herm).min() < -psd_tol:
        problems.append("density matrix not positive semidefinite")
    return problems
