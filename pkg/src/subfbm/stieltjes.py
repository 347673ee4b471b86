"""Riemann-Stieltjes integrals of power kernels against piecewise-linear paths.

Against a piecewise-linear integrator ``dZ = slope ds`` on every segment, so
each integral reduces to exact power antiderivatives.  The time-inverted
tail term is handled the same way after substituting ``s = 1/v``.
"""

from __future__ import annotations

import math
import weakref

import numpy as np
from scipy import integrate, special

from . import _backend
from .errors import DomainError, ParameterError, SingularityError
from .kernels import KernelSpec, PowerKernel, as_kernel, check_hurst, power_primitive
from .paths import PiecewisePath, evaluate

#: Sign applied to the reduced tail term.  ``-1`` reproduces the exact
#: tail of the Wiener integral; ``+1`` is the literal sign printed in some
#: of the approximant formulas and exists for comparison runs only.
TAIL_SIGN = -1.0

#: Paths with at least this many pieces are summed with block expansions.
EXPANSION_MIN_SEGMENTS = 8192
EXPANSION_ORDER = 18
#: Blocks whose center is closer than ``EXPANSION_SEPARATION`` block widths
#: to a kernel singularity are integrated exactly.
EXPANSION_SEPARATION = 4.0


def _check_range(kernel: PowerKernel, u: float, v: float, path: PiecewisePath) -> None:
    if u > v:
        raise ParameterError(f"integration range [{u}, {v}] is reversed")
    if u < path.lo or v > path.hi:
        raise DomainError(f"[{u}, {v}] is not inside the path domain {path.domain}")
    if u < kernel.lo or v > kernel.hi:
        raise DomainError(f"[{u}, {v}] is outside the kernel domain [{kernel.lo}, {kernel.hi}]")
    for _, c, p in kernel.terms:
        if c < v:
            raise DomainError(f"term (c - s)**{p} has a negative base on [{u}, {v}] (c = {c})")
        if c == v and p <= -1.0:
            raise SingularityError(f"kernel exponent {p} is not integrable at s = {v}")


def _segment_sum(kernel: PowerKernel, lo, hi, weights) -> float:
    total = 0.0
    for coef, c, p in kernel.terms:
        total += coef * _backend.weighted_power_sum(lo, hi, weights, c, p)
    return total


def _exact_sum(coef: float, c: float, p: float, u: float, v: float, path: PiecewisePath) -> float:
    if v <= u:
        return 0.0
    s, z = path.pieces(u, v)
    return coef * _backend.weighted_power_sum(s[:-1], s[1:], np.diff(z) / np.diff(s), c, p)


class BlockMoments:
    """Moments ``integral_block (s - m)**k dZ(s)`` on equal-width blocks of a path.

    Far from its singularity a power kernel is replaced on each block by its
    Taylor polynomial around the block center ``m``; the block ratio is at
    most ``1 / (2 * EXPANSION_SEPARATION)``, so the truncation error is
    below ``8**-(EXPANSION_ORDER + 1)`` relative to the block contribution.
    """

    def __init__(self, path: PiecewisePath, n_blocks: int, order: int = EXPANSION_ORDER):
        self.lo, self.hi = path.lo, path.hi
        self.edges = np.linspace(self.lo, self.hi, n_blocks + 1)
        self.edges[-1] = self.hi
        self.width = (self.hi - self.lo) / n_blocks
        self.mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.order = order
        b = np.union1d(path.breakpoints, self.edges)
        z = np.interp(b, path.breakpoints, path.values)
        slope = np.diff(z) / np.diff(b)
        blk = np.minimum(np.searchsorted(self.edges, b[:-1], side="right") - 1, n_blocks - 1)
        x0 = b[:-1] - self.mid[blk]
        x1 = b[1:] - self.mid[blk]
        p0, p1 = x0.copy(), x1.copy()
        self.moments = np.empty((n_blocks, order + 1))
        for k in range(order + 1):
            self.moments[:, k] = np.bincount(blk, weights=slope * (p1 - p0), minlength=n_blocks) / (k + 1)
            p0 *= x0
            p1 *= x1
        self._k = np.arange(order + 1)

    def far_sum(self, c: float, p: float, j0: int, j1: int) -> float:
        """Expanded ``sum_{j0 <= j < j1} integral_block_j (c - s)**p dZ``."""
        d = c - self.mid[j0:j1]
        k = self._k
        coef = special.binom(p, k) * (-1.0) ** k
        terms = coef * d[:, None] ** (p - k) * self.moments[j0:j1]
        return float(terms.sum())

    def block_range(self, u: float, v: float, c: float) -> tuple[int, int]:
        """Blocks inside ``[u, v]`` that are far enough from ``c`` to expand."""
        j0 = int(np.searchsorted(self.edges, u, side="left"))
        j_in = int(np.searchsorted(self.edges, v, side="right")) - 1
        j_far = int(np.searchsorted(self.mid, c - EXPANSION_SEPARATION * self.width, side="right"))
        return j0, max(j0, min(j_in, j_far))


_MOMENTS: "weakref.WeakKeyDictionary[PiecewisePath, BlockMoments]" = weakref.WeakKeyDictionary()


def block_moments(path: PiecewisePath) -> BlockMoments | None:
    """Cached :class:`BlockMoments` for long paths, ``None`` for short ones."""
    if path.n_segments < EXPANSION_MIN_SEGMENTS:
        return None
    bm = _MOMENTS.get(path)
    if bm is None:
        bm = BlockMoments(path, min(4096, path.n_segments // 512))
        _MOMENTS[path] = bm
    return bm


def integrate_dZ(spec: KernelSpec | PowerKernel, interval, path: PiecewisePath,
                 method: str = "auto") -> float:
    """``integral_u^v kernel(s) dZ(s)``.

    Every piece is integrated in closed form (``method='exact'``).  With
    ``'auto'``, long paths use :class:`BlockMoments` away from the kernel
    singularities and closed forms near them.
    """
    kernel = as_kernel(spec)
    u, v = float(interval[0]), float(interval[1])
    if u == v:
        return 0.0
    _check_range(kernel, u, v, path)
    if method not in ("auto", "exact"):
        raise ParameterError(f"unknown method {method!r}")
    bm = block_moments(path) if method == "auto" else None
    if bm is None:
        s, z = path.pieces(u, v)
        slopes = np.diff(z) / np.diff(s)
        return _segment_sum(kernel, s[:-1], s[1:], slopes)
    total = 0.0
    for coef, c, p in kernel.terms:
        j0, j1 = bm.block_range(u, v, c)
        if j1 > j0:
            x0, x1 = float(bm.edges[j0]), float(bm.edges[j1])
            total += coef * bm.far_sum(c, p, j0, j1)
            total += _exact_sum(coef, c, p, u, x0, path) + _exact_sum(coef, c, p, x1, v, path)
        else:
            total += _exact_sum(coef, c, p, u, v, path)
    return total


def integrate_by_parts(spec: KernelSpec | PowerKernel, interval, path: PiecewisePath) -> float:
    """Same integral as :func:`integrate_dZ`, via ``[kZ] - integral k'(s) Z(s) ds``.

    The derivative term is exact per segment: ``Z`` is linear there, so
    ``(c-s)**p Z(s)`` splits into two power integrals.
    """
    kernel = as_kernel(spec)
    u, v = float(interval[0]), float(interval[1])
    if u == v:
        return 0.0
    _check_range(kernel, u, v, path)
    dk = kernel.derivative()
    if v == kernel.hi and any(p <= -1.0 for _, c, p in dk.terms if c == v):
        raise SingularityError("kernel derivative is not integrable at the right endpoint")
    s, z = path.pieces(u, v)
    lo, hi = s[:-1], s[1:]
    m = np.diff(z) / np.diff(s)
    boundary = kernel._raw(np.float64(v)) * z[-1] - kernel._raw(np.float64(u)) * z[0]
    inner = 0.0
    for coef, c, p in dk.terms:
        # Z(s) = z0 + m (c - s0) - m (c - s) on the segment starting at s0
        w0 = z[:-1] + m * (c - lo)
        inner += coef * (
            _backend.weighted_power_sum(lo, hi, w0, c, p)
            - _backend.weighted_power_sum(lo, hi, m, c, p + 1.0)
        )
    return float(boundary - inner)


def tail_kernel(kind: str, t: float, H: float) -> PowerKernel:
    if kind not in ("f", "F"):
        raise ParameterError(f"tail kernel kind must be 'f' or 'F', got {kind!r}")
    return KernelSpec(kind, t, H).compile()


def tail_integrand(kind: str, t: float, H: float):
    """``v -> d_s K_t(1/v) / v**3`` on ``v < 0``."""
    dk = tail_kernel(kind, t, H).derivative()

    def h(v):
        v = np.asarray(v, dtype=float)
        return dk._raw(1.0 / v) / v**3

    return h


def z3_tail_term(
    kind: str,
    t: float,
    H: float,
    a: float,
    cutoff: float,
    Z3: PiecewisePath,
    tol: float = 1e-9,
    method: str = "exact",
    sign: float = TAIL_SIGN,
) -> float:
    """Fubini-reduced tail ``sign * integral_{1/a}^{cutoff} d_sK_t(1/v) v**-3 Z3(v) dv``.

    ``method='exact'`` substitutes ``s = 1/v`` on every linear piece of ``Z3``
    and integrates by parts, giving closed-form power integrals.
    ``method='quad'`` runs adaptive quadrature on each piece instead.
    """
    check_hurst(H)
    if not a < 0 or t < 0 or not -t - a > 0:
        raise ParameterError(f"need t >= 0 and a < -t (t={t}, a={a})")
    lo = 1.0 / a
    if not math.isclose(Z3.lo, lo, rel_tol=1e-14) or Z3.hi != 0.0:
        raise DomainError(f"Z3 must live on [1/a, 0], got {Z3.domain}")
    if not lo <= cutoff <= 0.0:
        raise DomainError(f"cutoff {cutoff} outside [1/a, 0] = [{lo}, 0]")
    lo = Z3.lo
    if cutoff <= lo or t == 0.0:
        return 0.0
    if method == "quad":
        return sign * _tail_quad(kind, t, H, Z3, lo, cutoff, tol)
    if method != "exact":
        raise ParameterError(f"unknown method {method!r}")
    K = tail_kernel(kind, t, H)
    v, z = Z3.pieces(lo, cutoff)
    m = np.diff(z) / np.diff(v)
    intercept = z[:-1] - m * v[:-1]
    s_hi = 1.0 / v[:-1]
    s_hi[0] = a
    if cutoff == 0.0:
        # last piece runs into v = 0 where Z3 vanishes, so its intercept is 0
        intercept, s_hi = intercept[:-1], s_hi[:-1]
        s_lo = 1.0 / v[1:-1]
        end = 0.0
    else:
        s_lo = 1.0 / v[1:]
        end = float(K._raw(np.float64(1.0 / cutoff))) * z[-1] / cutoff
    start = float(K._raw(np.float64(a))) * a * z[0]
    ratio = max(abs(c) for _, c, _ in K.terms) / -a
    if intercept.size >= EXPANSION_MIN_SEGMENTS and ratio <= 0.75:
        body = _tail_body_expanded(K, a, cutoff, Z3, s_lo, s_hi, intercept, ratio)
    else:
        body = _segment_sum(K, s_lo, s_hi, intercept) if intercept.size else 0.0
    return sign * (start - end - body)


_TAIL_MOMENTS: "weakref.WeakKeyDictionary[PiecewisePath, dict]" = weakref.WeakKeyDictionary()


def _tail_body_expanded(K: PowerKernel, a, cutoff, Z3, s_lo, s_hi, intercept, ratio) -> float:
    """Tail body with ``(c - s)**p = (-s)**p sum_j binom(p, j) (c / -s)**j``.

    On the tail every ``s <= a`` and ``|c| <= t < -a``, so the series
    converges geometrically with ratio ``|c| / |a|``.  Its moments do not
    depend on ``t`` and are cached per path.
    """
    J = min(400, int(math.ceil(math.log(1e-18) / math.log(max(ratio, 1e-3)))) + 1)
    cache = _TAIL_MOMENTS.setdefault(Z3, {})
    total = 0.0
    for coef, c, p in K.terms:
        key = (float(a), float(cutoff), float(p))
        M = cache.get(key)
        if M is None or M.size < J + 1:
            x0, x1 = s_lo / -a, s_hi / -a
            scale = (-a) ** (p + 1.0)
            M = np.array([scale * np.dot(intercept, power_primitive(0.0, p - j, x0, x1))
                          for j in range(J + 1)])
            cache[key] = M
        if c == 0.0:
            total += coef * M[0]
        else:
            j = np.arange(J + 1)
            total += coef * float(np.dot(special.binom(p, j) * (c / -a) ** j, M[: J + 1]))
    return total


def _tail_quad(kind, t, H, Z3, lo, cutoff, tol) -> float:
    h = tail_integrand(kind, t, H)
    v, z = Z3.pieces(lo, cutoff)
    total = 0.0
    for k in range(v.size - 1):
        v0, v1, z0, z1 = v[k], v[k + 1], z[k], z[k + 1]
        m = (z1 - z0) / (v1 - v0)

        def f(x, v0=v0, z0=z0, m=m):
            return float(h(x)) * (z0 + m * (x - v0))

        val, _ = integrate.quad(f, v0, v1, epsabs=tol / max(1, v.size), epsrel=1e-12, limit=200)
        total += val
    return total
