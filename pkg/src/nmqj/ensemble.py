"""Count-compressed ensemble: distinct state vectors with integer occupations.

An ensemble of ``N`` members is stored as ``N_eff`` distinct unit vectors,
each with the number of members currently in that state. The density matrix
is ``sum_a (N_a / N) |psi_a><psi_a|``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import kernels
from .linalg import DimensionError, NORM_TOL

MERGE_TOL = 1e-10


@dataclass
class DistinctState:
    id: int
    vector: np.ndarray
    count: int


class Ensemble:
    """Distinct states keyed by stable integer ids, in insertion order.

    Entries whose count drops to zero stay visible until :meth:`purge`, which
    the jump engine calls at step boundaries.
    """

    def __init__(self, total: int, dim: int, time: float = 0.0, merge_tol: float = MERGE_TOL):
        if total < 1:
            raise ValueError("ensemble size N must be >= 1")
        self.total = int(total)
        self.dim = int(dim)
        self.time = float(time)
        self.merge_tol = merge_tol
        self._states: dict[int, DistinctState] = {}
        self._next_id = 0

    @classmethod
    def pure(cls, vector, total: int, time: float = 0.0, merge_tol: float = MERGE_TOL) -> "Ensemble":
        v = np.asarray(vector, dtype=np.complex128).reshape(-1)
        ens = cls(total, v.shape[0], time, merge_tol)
        sid = ens.insert(v)
        ens._states[sid].count = ens.total
        return ens

    @classmethod
    def from_counts(cls, pairs, time: float = 0.0, merge_tol: float = MERGE_TOL) -> "Ensemble":
        """Build from ``(vector, count)`` pairs; ``N`` is the sum of counts."""
        pairs = [(np.asarray(v, dtype=np.complex128).reshape(-1), int(c)) for v, c in pairs]
        total = sum(c for _, c in pairs)
        ens = cls(total, pairs[0][0].shape[0], time, merge_tol)
        for v, c in pairs:
            if c < 0:
                raise ValueError("counts must be non-negative")
            sid = ens.find_or_insert(v)
            ens._states[sid].count += c
        ens.purge()
        return ens

    # -- access ---------------------------------------------------------
    def __iter__(self) -> Iterator[DistinctState]:
        return iter(self._states.values())

    def __len__(self) -> int:
        return len(self._states)

    def __getitem__(self, sid: int) -> DistinctState:
        return self._states[sid]

    def __contains__(self, sid: int) -> bool:
        return sid in self._states

    def ids(self) -> list[int]:
        return list(self._states)

    def count(self, sid: int) -> int:
        return self._states[sid].count

    def vector(self, sid: int) -> np.ndarray:
        return self._states[sid].vector

    def populated(self) -> list[DistinctState]:
        return [s for s in self._states.values() if s.count > 0]

    def count_sum(self) -> int:
        return sum(s.count for s in self._states.values())

    # -- mutation -------------------------------------------------------
    def insert(self, vector: np.ndarray) -> int:
        v = np.array(vector, dtype=np.complex128).reshape(-1)
        if v.shape != (self.dim,):
            raise DimensionError(f"state has shape {v.shape}, ensemble dimension is {self.dim}")
        nrm = float(np.sqrt(np.vdot(v, v).real))
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"ensemble states must be unit-norm (norm={nrm!r})")
        sid = self._next_id
        self._next_id += 1
        self._states[sid] = DistinctState(sid, v, 0)
        return sid

    def match(self, vector: np.ndarray) -> int | None:
        """Id of an entry equal to ``vector`` up to global phase, if any."""
        thresh = 1.0 - self.merge_tol
        for s in self._states.values():
            if abs(np.vdot(s.vector, vector)) ** 2 > thresh:
                return s.id
        return None

    def find_or_insert(self, vector: np.ndarray) -> int:
        sid = self.match(vector)
        if sid is None:
            sid = self.insert(vector)
        return sid

    def transfer_count(self, src: int, dst: int, k: int) -> None:
        if k < 1:
            raise ValueError(f"transfer needs k >= 1, got {k}")
        s = self._states[src]
        if k > s.count:
            raise ValueError(f"cannot move {k} members out of state {src} holding {s.count}")
        s.count -= k
        self._states[dst].count += k

    def purge(self) -> int:
        """Drop entries with count zero; returns how many were removed."""
        dead = [sid for sid, s in self._states.items() if s.count == 0]
        for sid in dead:
            del self._states[sid]
        return len(dead)

    def set_vectors(self, ids, vectors: np.ndarray) -> None:
        for sid, v in zip(ids, vectors):
            self._states[sid].vector = v

    def copy(self) -> "Ensemble":
        new = Ensemble(self.total, self.dim, self.time, self.merge_tol)
        new._next_id = self._next_id
        for sid, s in self._states.items():
            new._states[sid] = DistinctState(sid, s.vector.copy(), s.count)
        return new

    # -- observables ----------------------------------------------------
    def matrix(self) -> tuple[list[int], np.ndarray, np.ndarray]:
        """Populated ids, their vectors as an ``(n, d)`` batch, and weights."""
        pop = self.populated()
        ids = [s.id for s in pop]
        psi = np.array([s.vector for s in pop], dtype=np.complex128).reshape(len(pop), self.dim)
        w = np.array([s.count for s in pop], dtype=float) / self.total
        return ids, psi, w

    def snapshot(self) -> list[dict]:
        """Per-entry records ``{id, count, amplitudes}`` for export."""
        return [
            {
                "id": s.id,
                "count": s.count,
                "amplitudes": [[float(a.real), float(a.imag)] for a in s.vector],
            }
            for s in self._states.values()
        ]


def n_eff(e: Ensemble) -> int:
    return sum(1 for s in e if s.count > 0)


def assemble_density(e: Ensemble) -> np.ndarray:
    rho = np.zeros((e.dim, e.dim), dtype=np.complex128)
    for s in e:
        if s.count:
            rho += (s.count / e.total) * np.outer(s.vector, s.vector.conj())
    return rho


def expectation_value(e: Ensemble, obs: np.ndarray) -> complex:
    """Ensemble average ``sum_a (N_a/N) <psi_a|obs|psi_a>``."""
    obs = np.asarray(obs, dtype=np.complex128)
    if obs.shape != (e.dim, e.dim):
        raise DimensionError(f"observable has shape {obs.shape}, ensemble dimension is {e.dim}")
    _, psi, w = e.matrix()
    vals = kernels.expect_batch(psi, obs)
    return complex(np.dot(w, vals))


def member_variance(e: Ensemble, obs: np.ndarray) -> float:
    """Variance over members of the real per-member value ``<psi|obs|psi>``."""
    _, psi, w = e.matrix()
    vals = kernels.expect_batch(psi, np.asarray(obs, dtype=np.complex128)).real
    mean = float(np.dot(w, vals))
    return max(float(np.dot(w, vals * vals)) - mean * mean, 0.0)


def transfer_count(e: Ensemble, src: int, dst: int, k: int) -> Ensemble:
    e.transfer_count(src, dst, k)
    return e


def find_or_insert(e: Ensemble, v: np.ndarray) -> int:
    return e.find_or_insert(v)
