# cython: language_level=3
"""Compiled hot kernels, mirroring ``_pykernels`` operation for operation.

Complex arithmetic is spelled out on real and imaginary parts so the
evaluation order matches numpy's elementwise loops exactly.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdint cimport uint64_t

cnp.import_array()

ctypedef double complex cplx


cdef inline uint64_t _splitmix(uint64_t x) noexcept nogil:
    x = x + <uint64_t>0x9E3779B97F4A7C15ULL
    x = (x ^ (x >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    x = (x ^ (x >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return x ^ (x >> 31)


cdef inline void _matvec(const double* mre, const double* mim, const double* pr, const double* pi,
                         double* outr, double* outi, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, k, row
    cdef double ar, ai, mr, mi
    for i in range(d):
        row = i * d
        mr = mre[row]
        mi = mim[row]
        ar = mr * pr[0] - mi * pi[0]
        ai = mr * pi[0] + mi * pr[0]
        for k in range(1, d):
            mr = mre[row + k]
            mi = mim[row + k]
            ar = ar + (mr * pr[k] - mi * pi[k])
            ai = ai + (mr * pi[k] + mi * pr[k])
        outr[i] = ar
        outi[i] = ai


cdef class _Mat:
    """Real/imaginary split copy of a small complex matrix."""
    cdef double[::1] re
    cdef double[::1] im

    def __cinit__(self, m):
        a = np.asarray(m, dtype=np.complex128)
        self.re = np.ascontiguousarray(a.real).ravel()
        self.im = np.ascontiguousarray(a.imag).ravel()


def matvec_batch(m, const cplx[:, ::1] psi):
    cdef Py_ssize_t n = psi.shape[0], d = psi.shape[1], r, k
    cdef _Mat mm = _Mat(m)
    out = np.empty((n, d), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    cdef double pr[64]
    cdef double pi[64]
    cdef double qr[64]
    cdef double qi[64]
    if d > 64:
        raise ValueError("dimension above 64 is not supported by the compiled kernel")
    with nogil:
        for r in range(n):
            for k in range(d):
                pr[k] = psi[r, k].real
                pi[k] = psi[r, k].imag
            _matvec(&mm.re[0], &mm.im[0], pr, pi, qr, qi, d)
            for k in range(d):
                o[r, k].real = qr[k]
                o[r, k].imag = qi[k]
    return out


def rk4_batch(const cplx[:, ::1] psi, a0, am, a1, double dt):
    cdef Py_ssize_t n = psi.shape[0], d = psi.shape[1], r, k
    cdef _Mat m0 = _Mat(a0), mm = _Mat(am), m1 = _Mat(a1)
    cdef const double* m0r = &m0.re[0]
    cdef const double* m0i = &m0.im[0]
    cdef const double* mmr = &mm.re[0]
    cdef const double* mmi = &mm.im[0]
    cdef const double* m1r = &m1.re[0]
    cdef const double* m1i = &m1.im[0]
    cdef double h2 = 0.5 * dt
    cdef double c6 = dt / 6.0
    cdef double pr[64]
    cdef double pi[64]
    cdef double yr[64]
    cdef double yi[64]
    cdef double k1r[64]
    cdef double k1i[64]
    cdef double k2r[64]
    cdef double k2i[64]
    cdef double k3r[64]
    cdef double k3i[64]
    cdef double k4r[64]
    cdef double k4i[64]
    cdef double sr, si
    if d > 64:
        raise ValueError("dimension above 64 is not supported by the compiled kernel")
    out = np.empty((n, d), dtype=np.complex128)
    cdef cplx[:, ::1] o = out
    with nogil:
        for r in range(n):
            for k in range(d):
                pr[k] = psi[r, k].real
                pi[k] = psi[r, k].imag
            _matvec(m0r, m0i, pr, pi, k1r, k1i, d)
            for k in range(d):
                yr[k] = pr[k] + h2 * k1r[k]
                yi[k] = pi[k] + h2 * k1i[k]
            _matvec(mmr, mmi, yr, yi, k2r, k2i, d)
            for k in range(d):
                yr[k] = pr[k] + h2 * k2r[k]
                yi[k] = pi[k] + h2 * k2i[k]
            _matvec(mmr, mmi, yr, yi, k3r, k3i, d)
            for k in range(d):
                yr[k] = pr[k] + dt * k3r[k]
                yi[k] = pi[k] + dt * k3i[k]
            _matvec(m1r, m1i, yr, yi, k4r, k4i, d)
            for k in range(d):
                sr = k1r[k] + 2.0 * k2r[k]
                si = k1i[k] + 2.0 * k2i[k]
                sr = sr + 2.0 * k3r[k]
                si = si + 2.0 * k3i[k]
                sr = sr + k4r[k]
                si = si + k4i[k]
                o[r, k].real = pr[k] + c6 * sr
                o[r, k].imag = pi[k] + c6 * si
    return out


cdef inline double _norm_sq_row(const cplx[:, ::1] psi, Py_ssize_t r, Py_ssize_t d) noexcept nogil:
    cdef double re = psi[r, 0].real, im = psi[r, 0].imag
    cdef double acc = re * re + im * im
    cdef Py_ssize_t k
    for k in range(1, d):
        re = psi[r, k].real
        im = psi[r, k].imag
        acc = acc + (re * re + im * im)
    return acc


def norm_sq_batch(const cplx[:, ::1] psi):
    cdef Py_ssize_t n = psi.shape[0], d = psi.shape[1], r
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            o[r] = _norm_sq_row(psi, r, d)
    return out


def normalize_batch(cplx[:, ::1] psi):
    cdef Py_ssize_t n = psi.shape[0], d = psi.shape[1], r, k
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double ns, nrm
    with nogil:
        for r in range(n):
            ns = _norm_sq_row(psi, r, d)
            o[r] = ns
            nrm = sqrt(ns)
            for k in range(d):
                psi[r, k].real = psi[r, k].real / nrm
                psi[r, k].imag = psi[r, k].imag / nrm
    return out


cdef inline double _expect_re_row(const double* are, const double* aim, const cplx[:, ::1] psi, Py_ssize_t r,
                                  Py_ssize_t d, double* pr, double* pi, double* qr, double* qi,
                                  double* im_out) noexcept nogil:
    cdef Py_ssize_t k
    cdef double accr, acci, cr, ci
    for k in range(d):
        pr[k] = psi[r, k].real
        pi[k] = psi[r, k].imag
    _matvec(are, aim, pr, pi, qr, qi, d)
    cr = pr[0]
    ci = -pi[0]
    accr = cr * qr[0] - ci * qi[0]
    acci = cr * qi[0] + ci * qr[0]
    for k in range(1, d):
        cr = pr[k]
        ci = -pi[k]
        accr = accr + (cr * qr[k] - ci * qi[k])
        acci = acci + (cr * qi[k] + ci * qr[k])
    im_out[0] = acci
    return accr


def expect_batch(const cplx[:, ::1] psi, a):
    cdef Py_ssize_t n = psi.shape[0], d = psi.shape[1], r
    cdef _Mat ma = _Mat(a)
    cdef double pr[64]
    cdef double pi[64]
    cdef double qr[64]
    cdef double qi[64]
    cdef double im
    if d > 64:
        raise ValueError("dimension above 64 is not supported by the compiled kernel")
    out = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] o = out
    with nogil:
        for r in range(n):
            o[r].real = _expect_re_row(&ma.re[0], &ma.im[0], psi, r, d, pr, pi, qr, qi, &im)
            o[r].imag = im
    return out


def counter_uniforms(key, step, Py_ssize_t n):
    cdef uint64_t k = <uint64_t>(int(key) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t s = <uint64_t>(int(step) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t base = _splitmix(_splitmix(k) ^ s)
    cdef Py_ssize_t i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = <double>(_splitmix(base ^ <uint64_t>i) >> 11) * (1.0 / 9007199254740992.0)
    return out


def member_branches(const cplx[:, ::1] psi, const long long[::1] labels,
                    cdc, const double[::1] pos_scale,
                    const double[:, ::1] rev_p, const double[::1] u):
    cdef Py_ssize_t n = psi.shape[0], d = psi.shape[1]
    cdef _Mat mc = _Mat(cdc)
    cdef Py_ssize_t n_pos = len(cdc), n_rev = rev_p.shape[1]
    cdef const double* cre = &mc.re[0] if n_pos > 0 else NULL
    cdef const double* cim = &mc.im[0] if n_pos > 0 else NULL
    cdef Py_ssize_t r, j, b
    cdef double pr[64]
    cdef double pi[64]
    cdef double qr[64]
    cdef double qi[64]
    cdef double im, cum, p
    cdef long long lab
    if d > 64:
        raise ValueError("dimension above 64 is not supported by the compiled kernel")
    out = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] o = out
    if n_pos + n_rev == 0:
        return out
    with nogil:
        for r in range(n):
            cum = 0.0
            b = -1
            for j in range(n_pos):
                p = pos_scale[j] * _expect_re_row(cre + j * d * d, cim + j * d * d, psi, r, d, pr, pi, qr, qi, &im)
                cum = cum + p
                if u[r] < cum:
                    b = j
                    break
            if b < 0:
                lab = labels[r]
                for j in range(n_rev):
                    cum = cum + rev_p[lab, j]
                    if u[r] < cum:
                        b = n_pos + j
                        break
            o[r] = b
    return out
