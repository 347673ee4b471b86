"""Closed-form power-law kernels, truncation schedules and their checks.

Every kernel used by the approximants is a short signed sum of terms
``coef * (c - s) ** p``.  Keeping that representation explicit gives exact
antiderivatives and derivatives for free, and lets differences of nearly
equal powers be evaluated without cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParameterError, SingularityError

KINDS = ("g", "f", "F", "power", "shifted_power", "F_diff", "dF", "df")


def check_hurst(H: float) -> None:
    if not 0.0 < H < 1.0:
        raise ParameterError(f"H must lie in (0, 1), got {H}")
    if H == 0.5:
        raise ParameterError("H = 1/2 is excluded")


def check_beta(H: float, beta: float) -> None:
    check_hurst(H)
    if not abs(H - 0.5) < beta < 0.5:
        raise ParameterError(
            f"beta must satisfy |H-1/2| < beta < 1/2 (H={H}, beta={beta})"
        )


def schedules(H: float, beta: float, n: int) -> tuple[float, float]:
    """Return ``(eps_n, alpha_n)`` for level ``n``.

    ``eps_n = -n**(-beta/|H-1/2|)`` and
    ``alpha_n = n**(-(1/2-beta)) * log(n)**2.5`` (natural log).
    """
    check_beta(H, beta)
    if int(n) != n or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n}")
    eps = -float(n) ** (-beta / abs(H - 0.5))
    alpha = float(n) ** (-(0.5 - beta)) * math.log(n) ** 2.5
    return eps, alpha


@dataclass(frozen=True)
class ModelParams:
    """Hurst exponent, truncation exponent, window and level of an approximant.

    ``a`` defaults to ``-4 * max(T, 1)``.  ``C`` defaults to the calibrated
    constant for ``H`` (see :func:`subfbm.oracles.calibrate_C`).
    """

    H: float
    beta: float
    T: float = 1.0
    a: float | None = None
    n: int = 100
    C: float | None = None
    eps_n: float = field(init=False)
    alpha_n: float = field(init=False)

    def __post_init__(self) -> None:
        check_beta(self.H, self.beta)
        if not self.T > 0:
            raise ParameterError(f"T must be positive, got {self.T}")
        if self.a is None:
            object.__setattr__(self, "a", -4.0 * max(self.T, 1.0))
        if not self.a < -self.T:
            raise ParameterError(f"anchor a must satisfy a < -T (a={self.a}, T={self.T})")
        eps, alpha = schedules(self.H, self.beta, self.n)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "eps_n", eps)
        object.__setattr__(self, "alpha_n", alpha)
        if self.C is None:
            from .oracles import calibrated_constant

            object.__setattr__(self, "C", calibrated_constant(self.H))
        elif not self.C > 0:
            raise ParameterError(f"C must be positive, got {self.C}")

    @property
    def hurst_gap(self) -> float:
        """``H - 1/2``, the kernel exponent."""
        return self.H - 0.5

    @property
    def regime(self) -> str:
        return "H_gt_half" if self.H > 0.5 else "H_lt_half"

    def replace(self, **changes) -> "ModelParams":
        data = {k: getattr(self, k) for k in ("H", "beta", "T", "a", "n", "C")}
        if "H" in changes and "C" not in changes:
            data["C"] = None
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict:
        return {
            "H": self.H,
            "beta": self.beta,
            "T": self.T,
            "a": self.a,
            "n": self.n,
            "C": self.C,
            "eps_n": self.eps_n,
            "alpha_n": self.alpha_n,
        }


# --------------------------------------------------------------------------
# power sums


def powdiff(x1, x2, p):
    """``x1**p - x2**p`` for positive bases, without cancellation."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        safe = (x1 > 0) & (x2 > 0)
        ratio = np.where(safe, (x1 - x2) / np.where(safe, x2, 1.0), 0.0)
        stable = np.power(np.where(safe, x2, 1.0), p) * np.expm1(p * np.log1p(ratio))
        direct = np.power(x1, p) - np.power(x2, p)
    out = np.where(safe, stable, direct)
    return out[()] if out.ndim == 0 else out


def power_primitive(c, p: float, s0, s1):
    """Exact ``integral_{s0}^{s1} (c - s)**p ds``.

    Works elementwise on arrays.  The integrand must be finite on the open
    interval; an endpoint touching ``c`` is allowed for ``p > -1``.
    """
    c = np.asarray(c, dtype=float)
    s0 = np.asarray(s0, dtype=float)
    s1 = np.asarray(s1, dtype=float)
    lo = np.minimum(s0, s1)
    hi = np.maximum(s0, s1)
    sign = np.where(s1 >= s0, 1.0, -1.0)
    empty = lo == hi
    if np.any((c < hi) & ~empty):
        raise SingularityError("power base c - s must stay non-negative on the interval")
    if p <= -1 and np.any((c == hi) & ~empty):
        raise SingularityError(f"exponent {p} is not integrable at s = c")
    u = c - lo  # larger base
    w = c - hi  # smaller base, >= 0
    q = p + 1.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        wpos = w > 0
        wsafe = np.where(wpos, w, 1.0)
        rel = (hi - lo) / wsafe
        if q == 0.0:
            val = np.log1p(rel)
        else:
            val = np.power(wsafe, q) * np.expm1(q * np.log1p(rel)) / q
            val = np.where(wpos, val, np.power(u, q) / q)
    out = np.where(empty, 0.0, sign * val)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class PowerKernel:
    """``sum coef * (c - s)**p`` on ``lo <= s <= hi`` (``hi`` open if singular)."""

    terms: tuple[tuple[float, float, float], ...]
    lo: float = -math.inf
    hi: float = math.inf
    hi_closed: bool = True

    def __post_init__(self) -> None:
        # merge repeated (c, p) pairs so that cancelling terms vanish exactly
        merged: dict[tuple[float, float], float] = {}
        for k, c, p in self.terms:
            key = (float(c) + 0.0, float(p))
            merged[key] = merged.get(key, 0.0) + float(k)
        terms = tuple((k, c, p) for (c, p), k in merged.items() if k != 0.0)
        object.__setattr__(self, "terms", terms)

    def check(self, s) -> None:
        s = np.asarray(s, dtype=float)
        bad = (s < self.lo) | (s > self.hi)
        if not self.hi_closed:
            bad |= s == self.hi
        if np.any(bad):
            raise DomainError(
                f"kernel evaluated outside its domain [{self.lo}, {self.hi}"
                f"{']' if self.hi_closed else ')'}"
            )

    def __call__(self, s):
        self.check(s)
        return self._raw(np.asarray(s, dtype=float))

    def _raw(self, s):
        terms = self.terms
        if not terms:
            return np.zeros_like(s)[()] if np.ndim(s) == 0 else np.zeros_like(s)
        if (
            len(terms) == 2
            and terms[0][2] == terms[1][2]
            and terms[0][0] == -terms[1][0]
        ):
            (k, c1, p), (_, c2, _) = terms
            return k * powdiff(c1 - s, c2 - s, p)
        total = 0.0
        for k, c, p in terms:
            total = total + k * np.power(c - s, p)
        return total

    def derivative(self) -> "PowerKernel":
        terms = tuple((-k * p, c, p - 1.0) for k, c, p in self.terms if p != 0.0)
        closed = self.hi_closed and all(p > 0 for _, _, p in terms)
        return PowerKernel(terms, self.lo, self.hi, closed)

    def integral(self, s0, s1):
        """Exact ``integral_{s0}^{s1}`` of the kernel."""
        total = 0.0
        for k, c, p in self.terms:
            total = total + k * power_primitive(c, p, s0, s1)
        return total

    def scaled(self, factor: float) -> "PowerKernel":
        return PowerKernel(
            tuple((factor * k, c, p) for k, c, p in self.terms),
            self.lo,
            self.hi,
            self.hi_closed,
        )


@dataclass(frozen=True)
class KernelSpec:
    """Named kernel family member.

    ``kind`` is one of ``g, f, F, power, shifted_power, F_diff, dF, df``;
    ``shift`` is the (non-positive) truncation ``eps`` used by ``g`` (as
    ``g_t(eps + s)``), ``shifted_power`` and ``F_diff``.
    """

    kind: str
    t: float
    H: float
    shift: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError(f"unknown kernel kind {self.kind!r}")
        check_hurst(self.H)
        if self.t < 0:
            raise ParameterError(f"kernel time t must be >= 0, got {self.t}")
        if self.shift > 0:
            raise ParameterError(f"shift must be <= 0, got {self.shift}")

    def compile(self) -> PowerKernel:
        t, eps, al = self.t, self.shift, self.H - 0.5
        closed = al > 0
        kind = self.kind
        if kind == "g":
            return PowerKernel(((1.0, t - eps, al),), 0.0, t - eps, closed)
        if kind in ("f", "df"):
            k = PowerKernel(((1.0, t, al), (-1.0, 0.0, al)), -math.inf, 0.0, closed)
            return k.derivative() if kind == "df" else k
        if kind in ("F", "dF"):
            k = PowerKernel(((1.0, -t, al), (-1.0, 0.0, al)), -math.inf, -t, closed)
            return k.derivative() if kind == "dF" else k
        if kind == "power":
            return PowerKernel(((1.0, 0.0, al),), -math.inf, 0.0, closed)
        if kind == "shifted_power":
            return PowerKernel(((1.0, -eps, al),), -math.inf, -eps, closed)
        # F_t - F_{t+eps}
        return PowerKernel(
            ((1.0, -t, al), (-1.0, -t - eps, al)), -math.inf, -t, closed
        )


def as_kernel(spec: KernelSpec | PowerKernel) -> PowerKernel:
    return spec.compile() if isinstance(spec, KernelSpec) else spec


def eval_kernel(spec: KernelSpec, s):
    """Value of the kernel (or its ``s``-derivative for ``dF``/``df``) at ``s``."""
    return as_kernel(spec)(s)


# --------------------------------------------------------------------------
# bound checks


@dataclass
class BoundCheck:
    """Outcome of checking ``lhs <= rhs`` over many randomized trials."""

    name: str
    trials: int = 0
    max_ratio: float = 0.0
    violations: list = field(default_factory=list)

    def record(self, lhs: float, rhs: float, slack: float, **where) -> None:
        self.trials += 1
        lhs = abs(float(lhs))
        rhs = float(rhs)
        if rhs > 0 and math.isfinite(rhs):
            self.max_ratio = max(self.max_ratio, lhs / rhs)
        elif lhs > 0 and rhs == 0:
            self.max_ratio = math.inf
        if lhs > rhs * (1.0 + slack) + (0.0 if rhs > 0 else slack):
            self.violations.append({"lhs": lhs, "rhs": rhs, **where})

    def extend(self, lhs: Sequence[float], rhs: Sequence[float], slack: float,
               where: Iterable[dict] | None = None) -> None:
        where = list(where) if where is not None else [{}] * len(lhs)
        for l, r, w in zip(lhs, rhs, where):
            self.record(l, r, slack, **w)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "trials": self.trials,
            "max_ratio": self.max_ratio,
            "violations": self.violations,
        }


def validate_kernel_bounds(
    H: float,
    T: float,
    a: float,
    trials: int,
    seed: int = 0,
    slack: float = 1e-12,
) -> dict:
    """Randomized check of the derivative bound on ``F_t`` and its tail integrability.

    Pointwise: ``|dF_t(s)| <= |H-1/2| t (3/2-H) (-t-s)**(H-5/2)`` for
    ``0 < t <= T``, ``s < -t``.  Tail: for a random admissible ``gamma`` the
    weighted integrand ``|dF_t(s)| (-s)**(1/2+gamma)`` on ``s <= a`` is
    dominated by ``K (-s)**(H+gamma-2)`` whose exponent is below -1.
    """
    check_hurst(H)
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    if not (T > 0 and a < -T):
        raise ParameterError("need T > 0 and a < -T")
    rng = np.random.default_rng(seed)
    al = H - 0.5
    t = T * (1.0 - rng.random(trials))  # (0, T]
    x = 10.0 ** rng.uniform(-6.0, 4.0, trials)  # -t - s
    s = -t - x
    lhs = np.abs(powdiff(-s, x, al - 1.0) * al)
    rhs = abs(al) * t * (1.5 - H) * x ** (H - 2.5)
    pointwise = BoundCheck("derivative_bound")
    pointwise.extend(lhs, rhs, slack, ({"t": float(ti), "s": float(si)} for ti, si in zip(t, s)))

    gmax = min(1.0 - H, 0.5)
    gamma = gmax * (0.05 + 0.9 * rng.random(trials))
    tail = BoundCheck("tail_domination")
    # points s <= a, spread over many decades
    st = a * 10.0 ** rng.uniform(0.0, 6.0, trials)
    dF = np.abs(al * powdiff(-st, -t - st, al - 1.0))
    weighted = dF * (-st) ** (0.5 + gamma)
    K = abs(al) * t * (1.5 - H) * ((-a) / (-t - a)) ** (2.5 - H)
    dom = K * (-st) ** (H + gamma - 2.0)
    tail.extend(weighted, dom, slack, ({"t": float(ti), "s": float(si), "gamma": float(g)}
                                       for ti, si, g in zip(t, st, gamma)))
    exponents = H + gamma - 2.0
    integrable = bool(np.all(exponents < -1.0))
    return {
        "H": H,
        "T": T,
        "a": a,
        "trials": trials,
        "checks": [pointwise.to_dict(), tail.to_dict()],
        "tail_exponent_max": float(exponents.max()),
        "tail_integrable": integrable,
        "passed": pointwise.passed and tail.passed and integrable,
    }
