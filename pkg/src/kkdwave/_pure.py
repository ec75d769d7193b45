"""Reference numpy implementations of the compiled kernels in ``_core.pyx``.

``m0``/``m1`` model vectors are ``(k11, k21, k22, log_det)`` of a 2x2
lower-triangular Cholesky factor.
"""
import math

import numpy as np


def lms_calibrate(d, x, w, step, block, threshold, budget):
    """LMS driving ``d + x @ w`` to zero; updates ``w`` in place.

    After every ``block`` samples the apparent reflection coefficient
    ``sum(e * plus) / sum(plus**2)`` of that block is compared against
    ``threshold``.  Returns ``(iterations, gamma, converged)``.
    """
    n, taps = x.shape
    it = 0
    k = 0
    gamma = math.nan
    wl = [float(v) for v in w]
    rows = x.tolist()
    dl = d.tolist()
    while it < budget:
        cross = 0.0
        power = 0.0
        for _ in range(block):
            if it >= budget:
                break
            xk = rows[k]
            y = 0.0
            for j in range(taps):
                y += wl[j] * xk[j]
            e = dl[k] + y
            plus = dl[k] - y
            cross += e * plus
            power += plus * plus
            g = step * e
            for j in range(taps):
                wl[j] -= g * xk[j]
            it += 1
            k += 1
            if k == n:
                k = 0
        if power > 0.0:
            gamma = cross / power
            if abs(gamma) < threshold:
                w[:] = wl
                return it, gamma, True
    w[:] = wl
    return it, gamma, False


def whitened_energy(x, k11, k21, k22):
    y1 = x[:, 0] / k11
    y2 = (x[:, 1] - k21 * y1) / k22
    return float(np.sum(y1 * y1 + y2 * y2))


def batch_llr(x, m0, m1):
    def energy(m):
        y1 = x[..., 0] / m[0]
        y2 = (x[..., 1] - m[1] * y1) / m[2]
        return np.sum(y1 * y1 + y2 * y2, axis=1)

    offset = -0.5 * x.shape[1] * (m0[3] - m1[3])
    return offset - 0.5 * (energy(m0) - energy(m1))
