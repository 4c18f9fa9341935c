# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled upwind convection kernel (same arithmetic as ``_kernels_py``)."""
import numpy as np

from libc.math cimport fabs


cdef inline double _minmod3(double a, double b, double c) noexcept nogil:
    cdef double m
    if a > 0 and b > 0 and c > 0:
        m = a
        if b < m:
            m = b
        if c < m:
            m = c
        return m
    if a < 0 and b < 0 and c < 0:
        m = a
        if b > m:
            m = b
        if c > m:
            m = c
        return m
    return 0.0


cdef inline double _nb(const double[:, :, ::1] r, const unsigned char[:, :, ::1] m,
                       Py_ssize_t i, Py_ssize_t j, Py_ssize_t k, Py_ssize_t n,
                       double own) noexcept nogil:
    if i < 0 or j < 0 or k < 0 or i >= n or j >= n or k >= n:
        return own
    if m[i, j, k]:
        return r[i, j, k]
    return own


cdef inline double _slope(const double[:, :, ::1] r, const unsigned char[:, :, ::1] m,
                          Py_ssize_t i, Py_ssize_t j, Py_ssize_t k,
                          Py_ssize_t di, Py_ssize_t dj, Py_ssize_t dk,
                          Py_ssize_t n, double h) noexcept nogil:
    cdef double own = r[i, j, k]
    cdef double up = _nb(r, m, i + di, j + dj, k + dk, n, own)
    cdef double dn = _nb(r, m, i - di, j - dj, k - dk, n, own)
    return _minmod3(2.0 * (up - own) / h, (up - dn) / (2.0 * h), 2.0 * (own - dn) / h)


def convection(rho, c, mplus, nplus, double h, double chi):
    """Return (g, max|grad c| per axis over faces of M+ cells)."""
    cdef const double[:, :, ::1] r = np.ascontiguousarray(rho, dtype=np.float64)
    cdef const double[:, :, ::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef const unsigned char[:, :, ::1] mp = np.ascontiguousarray(mplus, dtype=np.uint8)
    cdef const unsigned char[:, :, ::1] npl = np.ascontiguousarray(nplus, dtype=np.uint8)
    cdef Py_ssize_t n = r.shape[0]
    out = np.zeros((n, n, n))
    gmax_arr = np.zeros(3)
    cdef double[:, :, ::1] g = out
    cdef double[::1] gmax = gmax_arr
    cdef Py_ssize_t i, j, k, a, di, dj, dk
    cdef double acc, s0, sp, sm, ge, gw, re, rw, term
    with nogil:
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if not mp[i, j, k]:
                        continue
                    acc = 0.0
                    for a in range(3):
                        di = 1 if a == 0 else 0
                        dj = 1 if a == 1 else 0
                        dk = 1 if a == 2 else 0
                        s0 = _slope(r, npl, i, j, k, di, dj, dk, n, h)
                        sp = _slope(r, npl, i + di, j + dj, k + dk, di, dj, dk, n, h)
                        sm = _slope(r, npl, i - di, j - dj, k - dk, di, dj, dk, n, h)
                        ge = (cc[i + di, j + dj, k + dk] - cc[i, j, k]) / h
                        gw = (cc[i, j, k] - cc[i - di, j - dj, k - dk]) / h
                        if ge > 0:
                            re = r[i, j, k] + 0.5 * h * s0
                        else:
                            re = r[i + di, j + dj, k + dk] - 0.5 * h * sp
                        if gw > 0:
                            rw = r[i - di, j - dj, k - dk] + 0.5 * h * sm
                        else:
                            rw = r[i, j, k] - 0.5 * h * s0
                        term = re * ge - rw * gw
                        acc = acc + term
                        if fabs(ge) > gmax[a]:
                            gmax[a] = fabs(ge)
                        if fabs(gw) > gmax[a]:
                            gmax[a] = fabs(gw)
                    g[i, j, k] = chi * acc / h
    return out, gmax_arr
