# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Hermite-ladder kernels.

Same contracts as ``numpy_ops``; see that module for the reference
semantics.  The fused transport kernel is the hot path of the kinetic
stepper: it avoids the six temporary arrays the numpy route allocates.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"

ctypedef cnp.float64_t f64


cdef void _sqrt_table(double* w, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t m
    for m in range(n):
        w[m] = (<double> (m + 1)) ** 0.5


def lower(cnp.ndarray[f64, ndim=4] c, int axis, cnp.ndarray[f64, ndim=4] out=None):
    if out is None:
        out = np.zeros_like(c)
    cdef f64[:, :, :, ::1] cv = c
    cdef f64[:, :, :, ::1] ov = out
    cdef Py_ssize_t X = cv.shape[0], n1 = cv.shape[1], n2 = cv.shape[2], n3 = cv.shape[3]
    cdef Py_ssize_t x, a, b, m
    cdef double w[64]
    _sqrt_table(w, 63)
    with nogil:
        if axis == 1:
            for x in range(X):
                for m in range(n1 - 1):
                    for a in range(n2):
                        for b in range(n3):
                            ov[x, m, a, b] = w[m] * cv[x, m + 1, a, b]
                for a in range(n2):
                    for b in range(n3):
                        ov[x, n1 - 1, a, b] = 0.0
        elif axis == 2:
            for x in range(X):
                for a in range(n1):
                    for m in range(n2 - 1):
                        for b in range(n3):
                            ov[x, a, m, b] = w[m] * cv[x, a, m + 1, b]
                    for b in range(n3):
                        ov[x, a, n2 - 1, b] = 0.0
        else:
            for x in range(X):
                for a in range(n1):
                    for b in range(n2):
                        for m in range(n3 - 1):
                            ov[x, a, b, m] = w[m] * cv[x, a, b, m + 1]
                        ov[x, a, b, n3 - 1] = 0.0
    return out


def raise_(cnp.ndarray[f64, ndim=4] c, int axis, cnp.ndarray[f64, ndim=4] out=None):
    if out is None:
        out = np.zeros_like(c)
    cdef f64[:, :, :, ::1] cv = c
    cdef f64[:, :, :, ::1] ov = out
    cdef Py_ssize_t X = cv.shape[0], n1 = cv.shape[1], n2 = cv.shape[2], n3 = cv.shape[3]
    cdef Py_ssize_t x, a, b, m
    cdef double w[64]
    _sqrt_table(w, 63)
    with nogil:
        if axis == 1:
            for x in range(X):
                for a in range(n2):
                    for b in range(n3):
                        ov[x, 0, a, b] = 0.0
                for m in range(1, n1):
                    for a in range(n2):
                        for b in range(n3):
                            ov[x, m, a, b] = w[m - 1] * cv[x, m - 1, a, b]
        elif axis == 2:
            for x in range(X):
                for a in range(n1):
                    for b in range(n3):
                        ov[x, a, 0, b] = 0.0
                    for m in range(1, n2):
                        for b in range(n3):
                            ov[x, a, m, b] = w[m - 1] * cv[x, a, m - 1, b]
        else:
            for x in range(X):
                for a in range(n1):
                    for b in range(n2):
                        ov[x, a, b, 0] = 0.0
                        for m in range(1, n3):
                            ov[x, a, b, m] = w[m - 1] * cv[x, a, b, m - 1]
    return out


def vmul(cnp.ndarray[f64, ndim=4] c, int axis, cnp.ndarray[f64, ndim=4] out=None):
    if out is None:
        out = np.zeros_like(c)
    cdef f64[:, :, :, ::1] cv = c
    cdef f64[:, :, :, ::1] ov = out
    cdef Py_ssize_t X = cv.shape[0], n1 = cv.shape[1], n2 = cv.shape[2], n3 = cv.shape[3]
    cdef Py_ssize_t x, a, b, m
    cdef double w[64]
    cdef double acc
    _sqrt_table(w, 63)
    with nogil:
        if axis == 1:
            for x in range(X):
                for m in range(n1):
                    for a in range(n2):
                        for b in range(n3):
                            acc = 0.0
                            if m + 1 < n1:
                                acc = w[m] * cv[x, m + 1, a, b]
                            if m > 0:
                                acc += w[m - 1] * cv[x, m - 1, a, b]
                            ov[x, m, a, b] = acc
        elif axis == 2:
            for x in range(X):
                for a in range(n1):
                    for m in range(n2):
                        for b in range(n3):
                            acc = 0.0
                            if m + 1 < n2:
                                acc = w[m] * cv[x, a, m + 1, b]
                            if m > 0:
                                acc += w[m - 1] * cv[x, a, m - 1, b]
                            ov[x, a, m, b] = acc
        else:
            for x in range(X):
                for a in range(n1):
                    for b in range(n2):
                        for m in range(n3):
                            acc = 0.0
                            if m + 1 < n3:
                                acc = w[m] * cv[x, a, b, m + 1]
                            if m > 0:
                                acc += w[m - 1] * cv[x, a, b, m - 1]
                            ov[x, a, b, m] = acc
    return out


def transport_apply(cnp.ndarray[f64, ndim=4] g,
                    cnp.ndarray[f64, ndim=4] dx1,
                    cnp.ndarray[f64, ndim=4] dx2,
                    cnp.ndarray[f64, ndim=4] dx3,
                    f1, f2, f3,
                    double scale,
                    cnp.ndarray[f64, ndim=4] out=None):
    """Fused transport generator on the half-weighted unknown; see the
    numpy reference for the formula.  Single pass over x."""
    if out is None:
        out = np.empty_like(g)
    cdef f64[:, :, :, ::1] hv = g
    cdef f64[:, :, :, ::1] d1 = dx1
    cdef f64[:, :, :, ::1] d2 = dx2
    cdef f64[:, :, :, ::1] d3 = dx3
    cdef f64[:, :, :, ::1] ov = out
    cdef bint has1 = f1 is not None, has2 = f2 is not None, has3 = f3 is not None
    cdef f64[::1] g1, g2, g3
    cdef double c1, c2, c3
    if has1:
        g1 = f1
    if has2:
        g2 = f2
    if has3:
        g3 = f3
    cdef Py_ssize_t X = hv.shape[0], n1 = hv.shape[1], n2 = hv.shape[2], n3 = hv.shape[3]
    cdef Py_ssize_t x, m1, m2, m3
    cdef double w[64]
    cdef double acc
    _sqrt_table(w, 63)
    with nogil:
        for x in range(X):
            c1 = 0.5 * g1[x] if has1 else 0.0
            c2 = 0.5 * g2[x] if has2 else 0.0
            c3 = 0.5 * g3[x] if has3 else 0.0
            for m1 in range(n1):
                for m2 in range(n2):
                    for m3 in range(n3):
                        acc = 0.0
                        # v_i * dx_i g  (raise + lower on the derivative field)
                        if m1 + 1 < n1:
                            acc += w[m1] * d1[x, m1 + 1, m2, m3]
                        if m1 > 0:
                            acc += w[m1 - 1] * d1[x, m1 - 1, m2, m3]
                        if m2 + 1 < n2:
                            acc += w[m2] * d2[x, m1, m2 + 1, m3]
                        if m2 > 0:
                            acc += w[m2 - 1] * d2[x, m1, m2 - 1, m3]
                        if m3 + 1 < n3:
                            acc += w[m3] * d3[x, m1, m2, m3 + 1]
                        if m3 > 0:
                            acc += w[m3 - 1] * d3[x, m1, m2, m3 - 1]
                        # (f_i / 2) (raise_i - lower_i) g
                        if has1:
                            if m1 > 0:
                                acc += c1 * w[m1 - 1] * hv[x, m1 - 1, m2, m3]
                            if m1 + 1 < n1:
                                acc -= c1 * w[m1] * hv[x, m1 + 1, m2, m3]
                        if has2:
                            if m2 > 0:
                                acc += c2 * w[m2 - 1] * hv[x, m1, m2 - 1, m3]
                            if m2 + 1 < n2:
                                acc -= c2 * w[m2] * hv[x, m1, m2 + 1, m3]
                        if has3:
                            if m3 > 0:
                                acc += c3 * w[m3 - 1] * hv[x, m1, m2, m3 - 1]
                            if m3 + 1 < n3:
                                acc -= c3 * w[m3] * hv[x, m1, m2, m3 + 1]
                        ov[x, m1, m2, m3] = scale * acc
    return out


def scale_by_mode(cnp.ndarray[f64, ndim=4] c, cnp.ndarray[f64, ndim=3] factors,
                  cnp.ndarray[f64, ndim=4] out=None):
    if out is None:
        out = np.empty_like(c)
    cdef f64[:, :, :, ::1] cv = c
    cdef f64[:, :, ::1] fv = factors
    cdef f64[:, :, :, ::1] ov = out
    cdef Py_ssize_t X = cv.shape[0], n1 = cv.shape[1], n2 = cv.shape[2], n3 = cv.shape[3]
    cdef Py_ssize_t x, a, b, m
    with nogil:
        for x in range(X):
            for a in range(n1):
                for b in range(n2):
                    for m in range(n3):
                        ov[x, a, b, m] = cv[x, a, b, m] * fv[a, b, m]
    return out


def shell_rotate(cnp.ndarray[f64, ndim=4] c, plan, cnp.ndarray[f64, ndim=4] out=None):
    """Apply dense per-shell rotation blocks mixing (m1, m2)."""
    if out is None:
        out = c.copy()
    else:
        out[...] = c
    cdef f64[:, :, :, ::1] cv = c
    cdef f64[:, :, :, ::1] ov = out
    cdef Py_ssize_t X = cv.shape[0], n3 = cv.shape[3]
    cdef Py_ssize_t x, a, b, k, L
    cdef cnp.ndarray[cnp.int64_t, ndim=1] i1, i2
    cdef cnp.ndarray[f64, ndim=2] R
    cdef cnp.int64_t[::1] i1v, i2v
    cdef f64[:, ::1] Rv
    cdef double acc
    for i1, i2, R in plan:
        L = i1.shape[0]
        if L == 1:
            continue
        i1v = i1
        i2v = i2
        Rv = R
        with nogil:
            for x in range(X):
                for k in range(n3):
                    for a in range(L):
                        acc = 0.0
                        for b in range(L):
                            acc += Rv[a, b] * cv[x, i1v[b], i2v[b], k]
                        ov[x, i1v[a], i2v[a], k] = acc
    return out
