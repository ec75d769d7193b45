"""Hot-loop dispatch: compiled Cython kernels when built, numpy/Python otherwise.

Set ``KKDWAVE_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

import numpy as np

from . import _pure

try:
    if os.environ.get("KKDWAVE_PURE_PYTHON"):
        raise ImportError("pure-Python kernels requested")
    from . import _core as compiled
except ImportError:
    compiled = None

_impl = compiled if compiled is not None else _pure
BACKEND = "cython" if compiled is not None else "python"


def lms_calibrate(d, x, w, mu, block, threshold, budget):
    """Power-normalised LMS: the step is ``mu`` divided by the mean regressor power.

    Normalising by the average rather than the instantaneous power keeps the
    fixed point at the least-squares solution.
    """
    d = np.ascontiguousarray(d, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    power = float(np.mean(np.einsum("ij,ij->i", x, x))) if x.size else 0.0
    step = mu / power if power > 0 else 0.0
    it, gamma, converged = _impl.lms_calibrate(
        d, x, w, step, int(block), float(threshold), int(budget)
    )
    return int(it), float(gamma), bool(converged)


def whitened_energy(x, k11, k21, k22):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return float(_impl.whitened_energy(x, float(k11), float(k21), float(k22)))


def batch_llr(x, m0, m1):
    x = np.ascontiguousarray(x, dtype=np.float64)
    m0 = np.ascontiguousarray(m0, dtype=np.float64)
    m1 = np.ascontiguousarray(m1, dtype=np.float64)
    return np.asarray(_impl.batch_llr(x, m0, m1))
