# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the per-token hot path.

Mirror of ``degf._kernels_py``: same evaluation order, same Kahan
compensation, so both backends are bit-identical on one platform (the
extension is built with -ffp-contract=off to keep it that way).
"""

from libc.math cimport exp, log2

cdef double NEG_INF = float("-inf")

BACKEND_NAME = "compiled"


def softmax(const double[::1] values, const unsigned char[::1] masked,
            double temperature, double[::1] out):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t i
    cdef double m = NEG_INF
    cdef double s = 0.0, c = 0.0, e, y, t
    for i in range(n):
        if not masked[i] and values[i] > m:
            m = values[i]
    for i in range(n):
        if masked[i]:
            out[i] = 0.0
        else:
            e = exp((values[i] - m) / temperature)
            out[i] = e
            y = e - c
            t = s + y
            c = (t - s) - y
            s = t
    for i in range(n):
        if not masked[i]:
            out[i] = out[i] / s


def kl_div(const double[::1] p, const double[::1] q):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0, c = 0.0, term, y, t, pi
    for i in range(n):
        pi = p[i]
        if pi > 0.0:
            if q[i] == 0.0:
                return float("inf")
            term = pi * log2(pi / q[i])
            y = term - c
            t = s + y
            c = (t - s) - y
            s = t
    return s


def js_div(const double[::1] p, const double[::1] q):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    cdef double sp = 0.0, cp = 0.0, sq = 0.0, cq = 0.0
    cdef double m, term, y, t, pi, qi, d
    for i in range(n):
        pi = p[i]
        qi = q[i]
        m = 0.5 * (pi + qi)
        if pi > 0.0:
            term = pi * log2(pi / m)
            y = term - cp
            t = sp + y
            cp = (t - sp) - y
            sp = t
        if qi > 0.0:
            term = qi * log2(qi / m)
            y = term - cq
            t = sq + y
            cq = (t - sq) - y
            sq = t
    d = 0.5 * sp + 0.5 * sq
    if d < 0.0:
        return 0.0
    if d > 1.0:
        return 1.0
    return d
