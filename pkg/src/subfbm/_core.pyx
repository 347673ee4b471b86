# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loop for segment-wise power integrals.

Segments are visited from right to left.  For a thin segment (width much
smaller than its distance to ``c``) the factor ``(1 + x)**q - 1`` is taken
from its binomial series, and when segments are contiguous the power at the
next breakpoint is carried over instead of recomputed.  A fresh ``pow`` is
taken every ``REFRESH`` steps so rounding cannot drift.
"""

from libc.math cimport pow, expm1, log, log1p

cdef enum:
    NSERIES = 7
    REFRESH = 256

cdef double THIN = 1e-3


def weighted_power_sum(const double[::1] lo, const double[::1] hi,
                       const double[::1] w, double c, double p):
    """Sum of ``w[k] * integral_{lo[k]}^{hi[k]} (c - s)**p ds``.

    Requires ``lo[k] <= hi[k] <= c``; callers validate that.
    """
    cdef Py_ssize_t k, j, m = lo.shape[0]
    cdef double q = p + 1.0
    cdef double total = 0.0, base, width, x, s, xp, val
    cdef double pb = 0.0          # (c - hi[k])**q when have_pb
    cdef bint have_pb = False
    cdef int since = 0
    cdef double coef[NSERIES]
    # binomial coefficients binom(q, j), j = 1..NSERIES
    coef[0] = q
    for j in range(1, NSERIES):
        coef[j] = coef[j - 1] * (q - j) / (j + 1)
    for k in range(m - 1, -1, -1):
        width = hi[k] - lo[k]
        base = c - hi[k]
        if width == 0.0:
            have_pb = False
            continue
        if base <= 0.0:
            val = pow(c - lo[k], q) / q
            have_pb = False
        else:
            x = width / base
            if x > 1.0:
                # wide segment: no cancellation, and width / base may overflow
                if q == 0.0:
                    val = log(c - lo[k]) - log(base)
                    have_pb = False
                else:
                    pb = pow(c - lo[k], q)
                    val = (pb - pow(base, q)) / q
                    since = 0
                    have_pb = k > 0 and hi[k - 1] == lo[k]
                total += w[k] * val
                continue
            if not have_pb or since >= REFRESH:
                pb = pow(base, q)
                since = 0
            if x < THIN and q != 0.0:
                # (1 + x)**q - 1 by Horner on the binomial series
                s = coef[NSERIES - 1]
                for j in range(NSERIES - 2, -1, -1):
                    s = coef[j] + x * s
                s = s * x
            elif q == 0.0:
                s = log1p(x)
            else:
                s = expm1(q * log1p(x))
            if q == 0.0:
                val = s
                have_pb = False
            else:
                val = pb * s / q
                # (c - lo[k])**q, the base power of the segment to the left
                pb = pb + pb * s
                since += 1
                have_pb = k > 0 and hi[k - 1] == lo[k]
        total += w[k] * val
    return total
