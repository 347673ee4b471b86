"""Replica engine: empirical covariances of the approximants and their scoring.

Replicas are split into contiguous blocks.  Each block owns a mergeable
mean/covariance accumulator; blocks are merged in index order, so results do
not depend on how blocks were scheduled.  Standard errors come from a
leave-one-block-out jackknife.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .approximants import ApproximantEvaluator, exact_covariance
from .errors import DomainError, ParameterError, SingularityError, VerificationError
from .kernels import ModelParams
from .paths import make_drivers
from .stieltjes import TAIL_SIGN

MAX_ABORT_FRACTION = 1e-3
MAX_BLOCKS = 100


class Moments:
    """Count, mean and centered cross-product sum of vectors (pairwise mergeable)."""

    __slots__ = ("count", "mean", "m2")

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros((dim, dim))

    @classmethod
    def from_rows(cls, rows: np.ndarray) -> "Moments":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        m = cls(rows.shape[1])
        if rows.shape[0]:
            m.count = rows.shape[0]
            m.mean = rows.mean(axis=0)
            d = rows - m.mean
            m.m2 = d.T @ d
        return m

    def merge(self, other: "Moments") -> "Moments":
        out = Moments(self.mean.size)
        n = self.count + other.count
        if n == 0:
            return out
        delta = other.mean - self.mean
        out.count = n
        out.mean = self.mean + delta * (other.count / n)
        out.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.count * other.count / n)
        return out

    def cov(self) -> np.ndarray:
        if self.count < 2:
            raise ParameterError("need at least two samples for a covariance")
        c = self.m2 / (self.count - 1)
        return 0.5 * (c + c.T)


def merge_all(parts) -> Moments:
    parts = list(parts)
    out = Moments(parts[0].mean.size)
    for p in parts:
        out = out.merge(p)
    return out


def block_jackknife(blocks: list[Moments]) -> tuple[np.ndarray, np.ndarray]:
    """Leave-one-block-out standard errors of the mean vector and covariance matrix.

    NaN when some leave-one-out sample has fewer than two members.
    """
    G = len(blocks)
    dim = blocks[0].mean.size
    if G < 2 or sum(b.count for b in blocks) - max(b.count for b in blocks) < 2:
        return np.full(dim, np.nan), np.full((dim, dim), np.nan)
    means, covs = [], []
    for g in range(G):
        rest = merge_all(b for i, b in enumerate(blocks) if i != g)
        means.append(rest.mean)
        covs.append(rest.cov())
    means, covs = np.array(means), np.array(covs)
    f = (G - 1) / G
    se_mean = np.sqrt(f * ((means - means.mean(axis=0)) ** 2).sum(axis=0))
    se_cov = np.sqrt(f * ((covs - covs.mean(axis=0)) ** 2).sum(axis=0))
    return se_mean, se_cov


# --------------------------------------------------------------------------


@dataclass
class CovarianceReport:
    params: dict
    mode: str
    which: str
    tail_sign: float
    grid: list
    M: int
    master_seed: int
    n_aborted: int
    mean: np.ndarray
    cov: np.ndarray
    se_mean: np.ndarray
    se_cov: np.ndarray
    runtime_s: float
    extra: dict = field(default_factory=dict)

    def discrepancy(self, model: str | None = None) -> dict:
        return covariance_discrepancy(self, model)

    def to_dict(self, model: str | None = None) -> dict:
        d = self.discrepancy(model)
        return {
            "params": self.params,
            "mode": self.mode,
            "which": self.which,
            "tail_sign": self.tail_sign,
            "grid": list(self.grid),
            "M": self.M,
            "master_seed": self.master_seed,
            "n_aborted": self.n_aborted,
            "mean": self.mean.tolist(),
            "cov": self.cov.tolist(),
            "se_mean": self.se_mean.tolist(),
            "se_cov": self.se_cov.tolist(),
            "max_z": d["max_z"],
            "max_rel": d["max_rel"],
            "runtime_s": self.runtime_s,
        }

    def to_json(self, model: str | None = None, include_runtime: bool = True) -> str:
        d = self.to_dict(model)
        if not include_runtime:
            d.pop("runtime_s")
        return json.dumps(d, indent=2, sort_keys=True)

    def to_csv(self, model: str | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "t", "emp", "exact", "se", "z"])
        for row in self.discrepancy(model)["table"]:
            w.writerow([f"{row[k]:.17g}" for k in ("s", "t", "emp", "exact", "se", "z")])
        return buf.getvalue()


def target_covariance(which: str, H: float, s, t, model: str | None = None):
    """Exact covariance the empirical ``which`` covariance should approach.

    With the calibrated constant, ``S`` is standard sub-fractional BM and each
    of ``W``, ``Y`` is fBm scaled by ``1/sqrt 2``.
    """
    if model is None:
        model = "sfbm" if which == "S" else "fbm"
    scale = 0.5 if (model == "fbm" and which in ("W", "Y")) else 1.0
    return scale * exact_covariance(model, s, t, H)


def covariance_discrepancy(report: CovarianceReport, model: str | None = None) -> dict:
    """Per-entry z-scores and relative errors of the upper triangle.

    Entries with zero (or undefined) standard error cannot be scored; they are
    left out of ``max_z`` and listed under ``excluded``.
    """
    g = np.asarray(report.grid, dtype=float)
    exact = target_covariance(report.which, report.params["H"], g[:, None], g[None, :], model)
    table, excluded = [], []
    max_z = max_rel = 0.0
    for i in range(g.size):
        for j in range(i, g.size):
            emp, ex, se = float(report.cov[i, j]), float(exact[i, j]), float(report.se_cov[i, j])
            z = (emp - ex) / se if se > 0 else math.nan
            rel = abs(emp - ex) / abs(ex) if ex != 0 else (0.0 if emp == 0 else math.inf)
            if se > 0:
                max_z = max(max_z, abs(z))
            else:
                excluded.append({"s": g[i], "t": g[j], "emp": emp, "exact": ex, "exact_match": emp == ex})
            if ex != 0 or emp != 0:
                max_rel = max(max_rel, rel)
            table.append({"s": g[i], "t": g[j], "emp": emp, "exact": ex, "se": se, "z": z, "rel": rel})
    return {"max_z": max_z, "max_rel": max_rel, "table": table, "excluded": excluded}


# --------------------------------------------------------------------------


def _check_grid(grid, T: float) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise ParameterError("grid must be a non-empty 1-d sequence")
    if np.any(g < 0) or np.any(g > T):
        raise DomainError(f"grid must lie inside [0, T={T}]")
    return g


def _block_ranges(M: int) -> list[tuple[int, int]]:
    G = min(M, MAX_BLOCKS)
    edges = [(M * k) // G for k in range(G + 1)]
    return list(zip(edges[:-1], edges[1:]))


def simulate_parts(params: ModelParams, grid, replicas, master_seed: int, mode: str,
                   step: float | None = None) -> np.ndarray:
    """Array ``(len(replicas), 4, len(grid))`` of ``W``/``W``-tail/``Y``/``Y``-tail.

    Tails use the default sign.  Rows of replicas whose evaluation failed are NaN.
    """
    out = np.full((len(replicas), 4, len(grid)), np.nan)
    for r, rep in enumerate(replicas):
        try:
            drivers = make_drivers(params.n, params.T, params.a, mode, master_seed, rep, step)
            ev = ApproximantEvaluator(params, drivers)
            for k, t in enumerate(grid):
                out[r, :, k] = ev.eval_parts(t)
        except (DomainError, SingularityError, ArithmeticError):
            # configuration errors (ParameterError) propagate; these abort one replica
            out[r] = np.nan
    return out


def assemble(parts: np.ndarray, which: str, tail_sign: float = TAIL_SIGN) -> np.ndarray:
    """Combine :func:`simulate_parts` output into ``W``, ``Y`` or ``S`` under a tail sign."""
    flip = tail_sign / TAIL_SIGN
    W = parts[:, 0] + flip * parts[:, 1]
    Y = parts[:, 2] + flip * parts[:, 3]
    if which == "W":
        return W
    if which == "Y":
        return Y
    if which == "S":
        return W + Y
    raise ParameterError(f"which must be W, Y or S, got {which!r}")


def _block_task(args):
    params, grid, lo, hi, seed, mode, step = args
    return simulate_parts(params, grid, range(lo, hi), seed, mode, step)


def run_replica_set(
    params: ModelParams,
    grid,
    M: int,
    master_seed: int = 0,
    targets=(("S", TAIL_SIGN),),
    mode: str = "grid_bm",
    step: float | None = None,
    workers: int = 1,
) -> list[CovarianceReport]:
    """One batch of replicas scored for several ``(which, tail_sign)`` targets.

    All targets share the same drivers.  Raises :class:`VerificationError`
    when more than 0.1% of the replicas abort.
    """
    if M < 2:
        raise ParameterError("M must be at least 2")
    g = _check_grid(grid, params.T)
    for which, _ in targets:
        if which not in ("W", "Y", "S"):
            raise ParameterError(f"which must be W, Y or S, got {which!r}")
    t0 = time.perf_counter()
    tasks = [(params, g, lo, hi, master_seed, mode, step) for lo, hi in _block_ranges(M)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_block_task, tasks))
    else:
        chunks = [_block_task(t) for t in tasks]
    n_aborted = int(sum(np.isnan(c).any(axis=(1, 2)).sum() for c in chunks))
    if n_aborted > MAX_ABORT_FRACTION * M:
        raise VerificationError(f"{n_aborted} of {M} replicas aborted (limit {MAX_ABORT_FRACTION:.1%})")
    runtime = time.perf_counter() - t0
    reports = []
    for which, sign in targets:
        blocks = []
        for c in chunks:
            ok = ~np.isnan(c).any(axis=(1, 2))
            blocks.append(Moments.from_rows(assemble(c[ok], which, sign)))
        total = merge_all(blocks)
        se_mean, se_cov = block_jackknife(blocks)
        reports.append(
            CovarianceReport(
                params=params.to_dict(),
                mode=mode,
                which=which,
                tail_sign=float(sign),
                grid=g.tolist(),
                M=M,
                master_seed=int(master_seed),
                n_aborted=n_aborted,
                mean=total.mean,
                cov=total.cov(),
                se_mean=se_mean,
                se_cov=se_cov,
                runtime_s=runtime,
            )
        )
    return reports


def run_replicas(params: ModelParams, grid, M: int, master_seed: int = 0, which: str = "S",
                 mode: str = "grid_bm", tail_sign: float = TAIL_SIGN, step: float | None = None,
                 workers: int = 1) -> CovarianceReport:
    """Empirical covariance of ``which`` on ``grid`` from ``M`` independent replicas."""
    return run_replica_set(params, grid, M, master_seed, ((which, tail_sign),), mode, step, workers)[0]


def sign_convention_study(params: ModelParams, grid, M: int, master_seed: int = 0,
                          mode: str = "grid_bm", step: float | None = None, workers: int = 1) -> dict:
    """Scores ``S`` under the default and the flipped tail sign on shared drivers."""
    default, flipped = run_replica_set(
        params, grid, M, master_seed, (("S", TAIL_SIGN), ("S", -TAIL_SIGN)), mode, step, workers
    )
    return {
        "default": default,
        "flipped": flipped,
        "default_max_z": default.discrepancy()["max_z"],
        "flipped_max_z": flipped.discrepancy()["max_z"],
    }


def tail_sensitivity_study(base: ModelParams, a_list, grid, M: int, seed: int = 0,
                           mode: str = "transport", step: float | None = None) -> dict:
    """Covariance discrepancy of ``S`` as the tail anchor ``a`` moves away from the window."""
    a_list = [float(a) for a in a_list]
    for a in a_list:
        if not a < -base.T:
            raise ParameterError(f"every anchor must satisfy a < -T, got {a}")
    rows = []
    for a in a_list:
        rep = run_replicas(base.replace(a=a), grid, M, seed, "S", mode, step=step)
        d = rep.discrepancy()
        rows.append({"a": a, "max_z": d["max_z"], "max_rel": d["max_rel"],
                     "cov": rep.cov.tolist(), "se_cov": rep.se_cov.tolist(), "runtime_s": rep.runtime_s})
    rho = math.nan
    if len(rows) >= 2:
        rho = float(stats.spearmanr([-r["a"] for r in rows], [r["max_rel"] for r in rows])[0])
    rel = [r["max_rel"] for r in sorted(rows, key=lambda r: -r["a"])]
    return {
        "mode": mode,
        "M": M,
        "rows": rows,
        "spearman_rho": rho,
        "non_increasing": all(x >= y for x, y in zip(rel[:-1], rel[1:])),
    }


def rate_study(base: ModelParams, n_list, grid, M: int, seed: int = 0,
               mode: str = "grid_bm", step: float | None = None) -> dict:
    """Covariance discrepancy per level ``n`` and the gap to the next level.

    In ``grid_bm`` mode the drivers do not depend on ``n``, so consecutive
    levels are compared path by path: the gap is the replica average of
    ``max_t |S^(n_k)(t) - S^(n_{k+1})(t)|`` over ``grid``.  Slopes are
    least-squares fits in log-log scale and purely descriptive.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 2 or any(b < a for a, b in zip(n_list[:-1], n_list[1:])):
        raise ParameterError("n_list must be non-decreasing with at least two entries")
    g = _check_grid(grid, base.T)
    rows, paths = [], []
    for n in n_list:
        p = base.replace(n=n)
        parts = simulate_parts(p, g, range(M), seed, mode, step)
        S = assemble(parts, "S")
        paths.append(S)
        blocks = [Moments.from_rows(S[lo:hi]) for lo, hi in _block_ranges(M)]
        se_mean, se_cov = block_jackknife(blocks)
        total = merge_all(blocks)
        rep = CovarianceReport(p.to_dict(), mode, "S", TAIL_SIGN, g.tolist(), M, seed, 0,
                               total.mean, total.cov(), se_mean, se_cov, 0.0)
        d = rep.discrepancy()
        rows.append({"n": n, "eps_n": p.eps_n, "alpha_n": p.alpha_n,
                     "max_z": d["max_z"], "max_rel": d["max_rel"], "gap_to_next": math.nan})
    if mode == "grid_bm":
        for k in range(len(n_list) - 1):
            rows[k]["gap_to_next"] = float(np.nanmean(np.max(np.abs(paths[k] - paths[k + 1]), axis=1)))

    def slope(key):
        pts = [(r["n"], r[key]) for r in rows if r[key] > 0 and math.isfinite(r[key])]
        if len(pts) < 2 or len({n for n, _ in pts}) < 2:
            return math.nan
        x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
        return float(np.polyfit(x, y, 1)[0])

    return {"mode": mode, "M": M, "rows": rows,
            "slope_max_rel": slope("max_rel"), "slope_gap": slope("gap_to_next")}


def expected_segments(params: ModelParams, mode: str, step: float | None = None) -> float:
    """Mean number of linear pieces across the three drivers of one replica."""
    length = params.T - params.a - 1.0 / params.a
    if mode == "transport":
        return params.n**2 * length
    if mode == "grid_bm":
        return length / (params.T / 2048 if step is None else step)
    raise ParameterError(f"unknown driver mode {mode!r}")


def project_runtime(params: ModelParams, grid, M: int, mode: str = "transport",
                    pilot_params: ModelParams | None = None, pilot_replicas: int = 1,
                    seed: int = 0, step: float | None = None) -> dict:
    """Wall-clock forecast for ``M`` replicas from a timed pilot.

    Cost is linear in the number of path pieces, so a pilot on a smaller
    window (``pilot_params``) is scaled by the ratio of expected pieces.
    """
    pilot = params if pilot_params is None else pilot_params
    g = _check_grid(grid, params.T)
    t0 = time.perf_counter()
    simulate_parts(pilot, g, range(pilot_replicas), seed, mode, step)
    per = (time.perf_counter() - t0) / pilot_replicas
    ratio = expected_segments(params, mode, step) / expected_segments(pilot, mode, step)
    return {
        "pilot_seconds_per_replica": per,
        "pilot_segments": expected_segments(pilot, mode, step),
        "target_segments": expected_segments(params, mode, step),
        "projected_seconds_per_replica": per * ratio,
        "projected_total_seconds": per * ratio * M,
    }
