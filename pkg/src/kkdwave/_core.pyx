# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Signatures and results match :mod:`kkdwave._pure`."""
import numpy as np

from libc.math cimport fabs, NAN


def lms_calibrate(const double[::1] d, const double[:, ::1] x, double[::1] w,
                  double step, Py_ssize_t block, double threshold, Py_ssize_t budget):
    cdef Py_ssize_t n = d.shape[0]
    cdef Py_ssize_t taps = x.shape[1]
    cdef Py_ssize_t it = 0, k = 0, j, b
    cdef double y, e, plus, g, cross, power
    cdef double gamma = NAN
    while it < budget:
        cross = 0.0
        power = 0.0
        for b in range(block):
            if it >= budget:
                break
            y = 0.0
            for j in range(taps):
                y += w[j] * x[k, j]
            e = d[k] + y
            plus = d[k] - y
            cross += e * plus
            power += plus * plus
            g = step * e
            for j in range(taps):
                w[j] -= g * x[k, j]
            it += 1
            k += 1
            if k == n:
                k = 0
        if power > 0.0:
            gamma = cross / power
            if fabs(gamma) < threshold:
                return it, gamma, True
    return it, gamma, False


def whitened_energy(const double[:, ::1] x, double k11, double k21, double k22):
    cdef Py_ssize_t i
    cdef double y1, y2, acc = 0.0
    for i in range(x.shape[0]):
        y1 = x[i, 0] / k11
        y2 = (x[i, 1] - k21 * y1) / k22
        acc += y1 * y1 + y2 * y2
    return acc


def batch_llr(const double[:, :, ::1] x, const double[::1] m0, const double[::1] m1):
    cdef Py_ssize_t t, i
    cdef Py_ssize_t trials = x.shape[0], m = x.shape[1]
    cdef double a1, a2, b1, b2, e0, e1
    out = np.empty(trials, dtype=np.float64)
    cdef double[::1] o = out
    cdef double offset = -0.5 * m * (m0[3] - m1[3])
    for t in range(trials):
        e0 = 0.0
        e1 = 0.0
        for i in range(m):
            a1 = x[t, i, 0] / m0[0]
            a2 = (x[t, i, 1] - m0[1] * a1) / m0[2]
            b1 = x[t, i, 0] / m1[0]
            b2 = (x[t, i, 1] - m1[1] * b1) / m1[2]
            e0 += a1 * a1 + a2 * a2
            e1 += b1 * b1 + b2 * b2
        o[t] = offset - 0.5 * (e0 - e1)
    return out
