# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled field-evaluation kernels (hot path of the optimization inner loop).

Mirrors the API of ``mmctune._kernels_py``.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, fabs, sin

cnp.import_array()

cdef double _F_FLOOR = 1e-12


cdef inline double _ipow(double base, int p) nogil:
    # Exponentiation by squaring; p is a small positive even integer.
    cdef double result = 1.0
    cdef double b = base
    cdef int e = p
    while e > 0:
        if e & 1:
            result *= b
        b *= b
        e >>= 1
    return result


cdef inline double _phi_point(double x, double y,
                              double x0, double y0, double L,
                              double t1, double t2, double t3,
                              double ct, double st, int p) nogil:
    cdef double dx = x - x0
    cdef double dy = y - y0
    cdef double xl = ct * dx + st * dy
    cdef double yl = -st * dx + ct * dy
    cdef double f = t2 + (t3 - t1) / (2.0 * L) * xl \
        + (t1 + t3 - 2.0 * t2) / (2.0 * L * L) * xl * xl
    if fabs(f) < _F_FLOOR:
        f = _F_FLOOR
    return 1.0 - _ipow(xl / L, p) - _ipow(yl / f, p)


def phi_one(prm, xs, ys, p):
    """Field of a single component at the given points."""
    cdef double[::1] c = np.ascontiguousarray(prm, dtype=np.float64).ravel()
    cdef double[::1] x = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef double[::1] y = np.ascontiguousarray(ys, dtype=np.float64).ravel()
    cdef Py_ssize_t m = x.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef int pp = p
    cdef double ct = cos(c[6])
    cdef double st = sin(c[6])
    cdef Py_ssize_t j
    with nogil:
        for j in range(m):
            o[j] = _phi_point(x[j], y[j], c[0], c[1], c[2], c[3], c[4], c[5], ct, st, pp)
    return out


def phi_max(params, xs, ys, p):
    """Structure field and arg-max component index at the given points."""
    cdef double[:, ::1] prm = np.ascontiguousarray(params, dtype=np.float64).reshape(-1, 7)
    cdef double[::1] x = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef double[::1] y = np.ascontiguousarray(ys, dtype=np.float64).ravel()
    cdef Py_ssize_t n = prm.shape[0]
    cdef Py_ssize_t m = x.shape[0]
    phi = np.empty(m, dtype=np.float64)
    amax = np.empty(m, dtype=np.int64)
    cdef double[::1] ph = phi
    cdef cnp.int64_t[::1] am = amax
    cdef int pp = p
    trig = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] tg = trig
    cdef Py_ssize_t i, j
    cdef double best, val
    cdef Py_ssize_t ibest
    for i in range(n):
        tg[i, 0] = cos(prm[i, 6])
        tg[i, 1] = sin(prm[i, 6])
    with nogil:
        for j in range(m):
            best = _phi_point(x[j], y[j], prm[0, 0], prm[0, 1], prm[0, 2],
                              prm[0, 3], prm[0, 4], prm[0, 5], tg[0, 0], tg[0, 1], pp)
            ibest = 0
            for i in range(1, n):
                val = _phi_point(x[j], y[j], prm[i, 0], prm[i, 1], prm[i, 2],
                                 prm[i, 3], prm[i, 4], prm[i, 5], tg[i, 0], tg[i, 1], pp)
                if val > best:
                    best = val
                    ibest = i
            ph[j] = best
            am[j] = ibest
    return phi, amax


def component_fd_grad(params, xs, ys, comp_idx, p, step):
    """Central finite differences of the owning component's field (n_points, 7)."""
    cdef double[:, ::1] prm = np.ascontiguousarray(params, dtype=np.float64).reshape(-1, 7)
    cdef double[::1] x = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef double[::1] y = np.ascontiguousarray(ys, dtype=np.float64).ravel()
    cdef cnp.int64_t[::1] ci = np.ascontiguousarray(comp_idx, dtype=np.int64).ravel()
    cdef Py_ssize_t m = x.shape[0]
    out = np.zeros((m, 7), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef int pp = p
    cdef double h = step
    cdef double inv2h = 1.0 / (2.0 * h)
    cdef double loc[7]
    cdef double ct, st, fp, fm
    cdef Py_ssize_t j, k, i
    with nogil:
        for j in range(m):
            i = ci[j]
            for k in range(7):
                loc[k] = prm[i, k]
            for k in range(7):
                loc[k] = prm[i, k] + h
                ct = cos(loc[6])
                st = sin(loc[6])
                fp = _phi_point(x[j], y[j], loc[0], loc[1], loc[2], loc[3], loc[4], loc[5], ct, st, pp)
                loc[k] = prm[i, k] - h
                ct = cos(loc[6])
                st = sin(loc[6])
                fm = _phi_point(x[j], y[j], loc[0], loc[1], loc[2], loc[3], loc[4], loc[5], ct, st, pp)
                loc[k] = prm[i, k]
                o[j, k] = (fp - fm) * inv2h
    return out
