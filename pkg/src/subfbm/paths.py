"""Piecewise-linear driver paths: transport processes and grid Brownian motions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParameterError

MODES = ("transport", "grid_bm")


def make_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for the stream addressed by ``(master_seed, *keys)``.

    Any stream can be rebuilt in isolation from its address, which is what
    makes replica results independent of scheduling.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return make_rng(0 if seed is None else seed)


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PiecewisePath:
    """Continuous piecewise-linear function through ``(breakpoints, values)``.

    ``anchor`` is a breakpoint where the value is exactly zero.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    anchor: float

    def __post_init__(self) -> None:
        b = _frozen(self.breakpoints)
        v = _frozen(self.values)
        if b.ndim != 1 or b.shape != v.shape or b.size < 2:
            raise ParameterError("breakpoints and values must be 1-d arrays of equal length >= 2")
        if not np.all(np.diff(b) > 0):
            raise ParameterError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ParameterError("path values must be finite")
        idx = np.searchsorted(b, self.anchor)
        if idx >= b.size or b[idx] != self.anchor:
            raise ParameterError(f"anchor {self.anchor} is not a breakpoint")
        if v[idx] != 0.0:
            raise ParameterError(f"path value at anchor {self.anchor} is {v[idx]}, not 0")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def lo(self) -> float:
        return float(self.breakpoints[0])

    @property
    def hi(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def domain(self) -> tuple[float, float]:
        return self.lo, self.hi

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    @property
    def n_segments(self) -> int:
        return self.breakpoints.size - 1

    def __call__(self, t):
        return evaluate(self, t)

    def pieces(self, u: float, v: float) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoints of the path restricted to ``[u, v]`` with end values."""
        if u < self.lo or v > self.hi or u > v:
            raise DomainError(f"[{u}, {v}] is not inside the path domain {self.domain}")
        b = self.breakpoints
        i0 = np.searchsorted(b, u, side="right")
        i1 = np.searchsorted(b, v, side="left")
        s = np.concatenate(([u], b[i0:i1], [v]))
        z = np.concatenate(([self._local(u, i0)], self.values[i0:i1], [self._local(v, i1)]))
        return s, z

    def _local(self, x: float, i: int) -> float:
        """Value at ``x`` given ``breakpoints[i-1] <= x <= breakpoints[i]``."""
        b, z = self.breakpoints, self.values
        if i < b.size and b[i] == x:
            return float(z[i])
        if i == 0:
            return float(z[0])
        i = min(i, b.size - 1)
        w = (x - b[i - 1]) / (b[i] - b[i - 1])
        return float(z[i - 1] + w * (z[i] - z[i - 1]))

    def scaled(self, factor: float) -> "PiecewisePath":
        return PiecewisePath(self.breakpoints, factor * self.values, self.anchor)

    def combine(self, other: "PiecewisePath", alpha: float = 1.0, beta: float = 1.0) -> "PiecewisePath":
        """``alpha*self + beta*other`` on the union of both breakpoint sets."""
        if self.domain != other.domain:
            raise DomainError("paths must share a domain")
        b = np.union1d(self.breakpoints, other.breakpoints)
        v = alpha * evaluate(self, b) + beta * evaluate(other, b)
        return PiecewisePath(b, v, self.anchor)

    def to_csv(self, path: str | Path) -> None:
        write_csv(path, self.breakpoints, self.values)


def write_csv(path: str | Path, t, values) -> None:
    lines = ["t,value"]
    lines += [f"{ti:.17g},{vi:.17g}" for ti, vi in zip(np.asarray(t, float), np.asarray(values, float))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path: str | Path, anchor: float | None = None) -> PiecewisePath:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t, v = data[:, 0], data[:, 1]
    if anchor is None:
        anchor = float(t[np.flatnonzero(v == 0.0)[0]])
    return PiecewisePath(t, v, anchor)


def evaluate(path: PiecewisePath, t):
    """Exact linear interpolation of ``path`` at ``t``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < path.lo) or np.any(t_arr > path.hi):
        raise DomainError(f"t outside path domain {path.domain}")
    out = np.interp(t_arr, path.breakpoints, path.values)
    return float(out) if out.ndim == 0 else out


def sup_distance(P: PiecewisePath, Q: PiecewisePath, probe_grid=None) -> float:
    """``max |P - Q|`` over both breakpoint sets and ``probe_grid``.

    The difference of two piecewise-linear paths is linear between the merged
    breakpoints, so the result is the exact sup norm.
    """
    if P.domain != Q.domain:
        raise DomainError(f"paths have different domains {P.domain} and {Q.domain}")
    pts = np.union1d(P.breakpoints, Q.breakpoints)
    if probe_grid is not None:
        probe = np.asarray(probe_grid, dtype=float)
        probe = probe[(probe >= P.lo) & (probe <= P.hi)]
        pts = np.union1d(pts, probe)
    return float(np.max(np.abs(evaluate(P, pts) - evaluate(Q, pts))))


def zero_path(lo: float, hi: float, anchor: float) -> PiecewisePath:
    b = [lo, hi] if anchor in (lo, hi) else [lo, anchor, hi]
    return PiecewisePath(b, np.zeros(len(b)), anchor)


# --------------------------------------------------------------------------
# transport processes


def transport_switch_times(n: int, length: float, rng: np.random.Generator) -> np.ndarray:
    """Switch times in ``(0, length)`` of a rate-``n**2`` exponential clock."""
    rate = float(n) ** 2
    mean = rate * length
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    times = np.cumsum(rng.standard_exponential(chunk)) / rate
    while times[-1] < length:
        more = np.cumsum(rng.standard_exponential(chunk)) / rate + times[-1]
        times = np.concatenate((times, more))
    return times[: np.searchsorted(times, length, side="left")]


def generate_transport(
    n: int,
    interval: tuple[float, float],
    anchor_end: str = "left",
    seed=None,
) -> PiecewisePath:
    """Uniform transport process with speed ``n`` and switching rate ``n**2``.

    The particle starts from 0 at the anchor end with velocity ``+n`` or
    ``-n`` (probability 1/2 each) and runs across the whole interval.  With
    ``anchor_end='right'`` the path is built forward on ``[0, hi-lo]`` and its
    time axis reflected, so it runs backwards from the right endpoint.
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ParameterError(f"empty interval [{lo}, {hi}]")
    if anchor_end not in ("left", "right"):
        raise ParameterError("anchor_end must be 'left' or 'right'")
    rng = _as_rng(seed)
    length = hi - lo
    sign = 1.0 if rng.random() < 0.5 else -1.0
    tau = transport_switch_times(n, length, rng)
    u = np.concatenate(([0.0], tau, [length]))
    vel = sign * float(n) * np.where(np.arange(u.size - 1) % 2 == 0, 1.0, -1.0)
    x = np.concatenate(([0.0], np.cumsum(vel * np.diff(u))))
    if anchor_end == "left":
        b = lo + u
        b[0], b[-1] = lo, hi
        b, x = _strictly_increasing(b, x, True)
        return PiecewisePath(b, x, lo)
    b = hi - u[::-1]
    b[0], b[-1] = lo, hi
    b, x = _strictly_increasing(b, x[::-1].copy(), False)
    return PiecewisePath(b, x, hi)


def _strictly_increasing(b: np.ndarray, x: np.ndarray, keep_first: bool):
    # switch times closer than one ulp of the shifted axis collapse onto one
    # breakpoint; keep the copy on the anchor side so the anchor value stays 0
    d = np.diff(b) > 0
    if d.all():
        return b, x
    keep = np.concatenate(([True], d)) if keep_first else np.concatenate((d, [True]))
    return b[keep], x[keep]


# --------------------------------------------------------------------------
# grid Brownian drivers


def _uniform_grid(lo: float, hi: float, step: float) -> np.ndarray:
    m = max(1, int(math.ceil((hi - lo) / step - 1e-9)))
    g = lo + (hi - lo) * np.arange(m + 1) / m
    g[0], g[-1] = lo, hi
    return g


def sample_grid_bm(step: float, T: float, a: float, seed=None):
    """Grid two-sided Brownian motion and its three derived drivers.

    Returns ``(B1, B2, B3)``: ``B`` on ``[0, T]``, ``B`` on ``[a, 0]`` and the
    time inversion ``s * B(1/s)`` on ``[1/a, 0]``.  The tail of ``B`` below
    ``a`` is sampled at the images ``1/s`` of a uniform grid in ``s``.
    """
    if not step > 0:
        raise ParameterError("step must be positive")
    if not a < -T or not T > 0:
        raise ParameterError(f"need T > 0 and a < -T (T={T}, a={a})")
    if step > T or step > -a:
        raise ParameterError(f"grid step {step} exceeds T or |a|")
    rng = _as_rng(seed)

    g1 = _uniform_grid(0.0, T, step)
    b1 = np.concatenate(([0.0], np.cumsum(rng.standard_normal(g1.size - 1) * np.sqrt(np.diff(g1)))))
    B1 = PiecewisePath(g1, b1, 0.0)

    g2 = _uniform_grid(a, 0.0, step)
    back = np.cumsum(rng.standard_normal(g2.size - 1) * np.sqrt(np.diff(g2))[::-1])
    b2 = np.concatenate((back[::-1], [0.0]))
    B2 = PiecewisePath(g2, b2, 0.0)

    g3 = _uniform_grid(1.0 / a, 0.0, step)
    s_int = g3[1:-1]
    u = np.concatenate(([a], 1.0 / s_int))  # a > u_1 > u_2 > ...
    gaps = -np.diff(u)
    tail = b2[0] + np.concatenate(([0.0], np.cumsum(rng.standard_normal(gaps.size) * np.sqrt(gaps))))
    b3 = np.concatenate(([b2[0] / a], s_int * tail[1:], [0.0]))
    B3 = PiecewisePath(g3, b3, 0.0)
    return B1, B2, B3


@dataclass(frozen=True, eq=False)
class DriverSet:
    """Driver triple on ``[0, T]``, ``[a, 0]`` and ``[1/a, 0]``, all anchored at 0."""

    Z1: PiecewisePath
    Z2: PiecewisePath
    Z3: PiecewisePath
    mode: str = "transport"
    seed: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ParameterError(f"unknown driver mode {self.mode!r}")
        if self.Z1.lo != 0.0 or self.Z1.anchor != 0.0:
            raise ParameterError("Z1 must live on [0, T] anchored at 0")
        if self.Z2.hi != 0.0 or self.Z2.anchor != 0.0:
            raise ParameterError("Z2 must live on [a, 0] anchored at 0")
        if self.Z3.hi != 0.0 or self.Z3.anchor != 0.0:
            raise ParameterError("Z3 must live on [1/a, 0] anchored at 0")
        if not math.isclose(self.Z3.lo, 1.0 / self.Z2.lo, rel_tol=1e-14):
            raise ParameterError("Z3 domain must be [1/a, 0]")

    @property
    def T(self) -> float:
        return self.Z1.hi

    @property
    def a(self) -> float:
        return self.Z2.lo

    def check_window(self, T: float, a: float) -> None:
        if self.T != T or self.a != a:
            raise ParameterError(f"driver window (T={self.T}, a={self.a}) does not match (T={T}, a={a})")

    def scaled(self, factor: float) -> "DriverSet":
        return DriverSet(self.Z1.scaled(factor), self.Z2.scaled(factor), self.Z3.scaled(factor),
                         self.mode, self.seed)


def make_drivers(
    n: int,
    T: float,
    a: float,
    mode: str = "transport",
    master_seed: int = 0,
    replica: int = 0,
    step: float | None = None,
) -> DriverSet:
    """Driver set for one replica, reproducible from ``(master_seed, replica)``.

    Transport drivers use independent streams 1, 2, 3; the grid Brownian
    drivers share stream 0 since they come from one Brownian path.
    """
    record = {"master_seed": int(master_seed), "replica": int(replica)}
    if mode == "transport":
        Z1 = generate_transport(n, (0.0, T), "left", make_rng(master_seed, replica, 1))
        Z2 = generate_transport(n, (a, 0.0), "right", make_rng(master_seed, replica, 2))
        Z3 = generate_transport(n, (1.0 / a, 0.0), "right", make_rng(master_seed, replica, 3))
        return DriverSet(Z1, Z2, Z3, mode, {**record, "streams": [1, 2, 3]})
    if mode == "grid_bm":
        step = T / 2048 if step is None else step
        B1, B2, B3 = sample_grid_bm(step, T, a, make_rng(master_seed, replica, 0))
        return DriverSet(B1, B2, B3, mode, {**record, "streams": [0], "step": step})
    raise ParameterError(f"unknown driver mode {mode!r}")
