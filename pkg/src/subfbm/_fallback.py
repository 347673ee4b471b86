"""Pure numpy implementation of the compiled inner loops."""

import numpy as np


def weighted_power_sum(lo, hi, w, c, p):
    """Sum of ``w[k] * integral_{lo[k]}^{hi[k]} (c - s)**p ds``.

    Requires ``lo[k] <= hi[k] <= c``; callers validate that.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    w = np.asarray(w, dtype=float)
    q = p + 1.0
    base = c - hi
    width = hi - lo
    pos = base > 0
    bsafe = np.where(pos, base, 1.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = width / bsafe
        wide = x > 1.0  # no cancellation there, and x may overflow
        if q == 0.0:
            val = np.where(wide, np.log(c - lo) - np.log(bsafe), np.log1p(x))
        else:
            near = np.power(bsafe, q) * np.expm1(q * np.log1p(x)) / q
            far = (np.power(c - lo, q) - np.power(bsafe, q)) / q
            val = np.where(wide, far, near)
            val = np.where(pos, val, np.power(c - lo, q) / q)
    val = np.where((width == 0.0) | (w == 0.0), 0.0, val)
    return float(np.dot(w, val))
