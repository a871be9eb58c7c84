"""Pure numpy implementations of the hot numerical kernels.

Every routine here has a compiled twin in ``_ckernels.pyx``. Both perform the
same floating point operations in the same order, so the two backends agree
bit-for-bit on finite inputs. numpy's complex multiply may be fused (FMA) on
SIMD builds, so complex products are written out on real and imaginary parts,
and sums over the Hilbert-space index are accumulated left to right.
Batches are ``(n, d)`` complex128 arrays, one state per row.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _split(psi):
    return np.ascontiguousarray(psi.real), np.ascontiguousarray(psi.imag)


def _join(re, im):
    out = np.empty(re.shape, dtype=np.complex128)
    out.real = re
    out.imag = im
    return out


def _matvec(m, pr, pi):
    d = m.shape[0]
    outr = np.empty_like(pr)
    outi = np.empty_like(pi)
    for i in range(d):
        mr = float(m[i, 0].real)
        mi = float(m[i, 0].imag)
        ar = mr * pr[:, 0] - mi * pi[:, 0]
        ai = mr * pi[:, 0] + mi * pr[:, 0]
        for k in range(1, d):
            mr = float(m[i, k].real)
            mi = float(m[i, k].imag)
            ar = ar + (mr * pr[:, k] - mi * pi[:, k])
            ai = ai + (mr * pi[:, k] + mi * pr[:, k])
        outr[:, i] = ar
        outi[:, i] = ai
    return outr, outi


def matvec_batch(m: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Row-wise ``m @ psi[n]``."""
    return _join(*_matvec(m, *_split(psi)))


def rk4_batch(psi, a0, am, a1, dt):
    """One classical RK4 step of ``dpsi/dt = A(t) psi`` for every row.

    ``a0``, ``am`` and ``a1`` are the generator evaluated at ``t``,
    ``t + dt/2`` and ``t + dt``. The result is not renormalized.
    """
    h2 = 0.5 * dt
    c6 = dt / 6.0
    pr, pi = _split(psi)
    k1r, k1i = _matvec(a0, pr, pi)
    k2r, k2i = _matvec(am, pr + h2 * k1r, pi + h2 * k1i)
    k3r, k3i = _matvec(am, pr + h2 * k2r, pi + h2 * k2i)
    k4r, k4i = _matvec(a1, pr + dt * k3r, pi + dt * k3i)
    sr = k1r + 2.0 * k2r
    si = k1i + 2.0 * k2i
    sr = sr + 2.0 * k3r
    si = si + 2.0 * k3i
    sr = sr + k4r
    si = si + k4i
    return _join(pr + c6 * sr, pi + c6 * si)


def norm_sq_batch(psi: np.ndarray) -> np.ndarray:
    re = psi.real
    im = psi.imag
    acc = re[:, 0] * re[:, 0] + im[:, 0] * im[:, 0]
    for k in range(1, psi.shape[1]):
        acc = acc + (re[:, k] * re[:, k] + im[:, k] * im[:, k])
    return acc


def normalize_batch(psi: np.ndarray) -> np.ndarray:
    """Divide each row by its 2-norm in place; returns the squared norms."""
    ns = norm_sq_batch(psi)
    nrm = np.sqrt(ns)
    flat = psi.view(np.float64)
    flat /= nrm[:, None]
    return ns


def _expect_parts(psi, a):
    pr, pi = _split(psi)
    qr, qi = _matvec(a, pr, pi)
    cr = pr[:, 0]
    ci = -pi[:, 0]
    accr = cr * qr[:, 0] - ci * qi[:, 0]
    acci = cr * qi[:, 0] + ci * qr[:, 0]
    for k in range(1, psi.shape[1]):
        cr = pr[:, k]
        ci = -pi[:, k]
        accr = accr + (cr * qr[:, k] - ci * qi[:, k])
        acci = acci + (cr * qi[:, k] + ci * qr[:, k])
    return accr, acci


def expect_batch(psi: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``<psi[n]|a|psi[n]>`` for every row."""
    return _join(*_expect_parts(psi, a))


def _splitmix(x):
    x = x + _GOLDEN
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def counter_uniforms(key: int, step: int, n: int) -> np.ndarray:
    """Uniform draws in [0, 1) for members ``0..n-1`` of one step.

    Counter based: member ``i`` at step ``s`` always receives the same value
    for a given key, independent of batch size or evaluation order.
    """
    with np.errstate(over="ignore"):
        base = _splitmix(np.array(int(key) & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64))
        base = _splitmix(base ^ np.uint64(int(step) & 0xFFFFFFFFFFFFFFFF))
        x = _splitmix(base ^ np.arange(n, dtype=np.uint64))
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def member_branches(psi, labels, cdc, pos_scale, rev_p, u):
    """Pick one branch per member from cumulative jump probabilities.

    Branch ``j < J`` is a positive jump on channel ``j`` with probability
    ``pos_scale[j] * <psi|cdc[j]|psi>`` evaluated on the member's own vector;
    branch ``J + r`` is the r-th reverse pair of the member's label with
    probability ``rev_p[label, r]``. Returns -1 for no jump.
    """
    n = psi.shape[0]
    cols = []
    for j in range(cdc.shape[0]):
        cols.append(float(pos_scale[j]) * _expect_parts(psi, cdc[j])[0])
    for r in range(rev_p.shape[1]):
        cols.append(rev_p[labels, r])
    if not cols:
        return np.full(n, -1, dtype=np.int64)
    cum = np.empty((n, len(cols)))
    acc = np.zeros(n)
    for b, col in enumerate(cols):
        acc = acc + col
        cum[:, b] = acc
    hit = u[:, None] < cum
    branch = np.argmax(hit, axis=1).astype(np.int64)
    branch[~hit.any(axis=1)] = -1
    return branch
