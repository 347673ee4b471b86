"""Transport-driven approximants of the fBm part W, the remainder Y and S = W + Y."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError
from .kernels import KernelSpec, ModelParams
from .paths import DriverSet
from .stieltjes import TAIL_SIGN, integrate_dZ, z3_tail_term


def exact_covariance(model: str, s, t, H: float):
    """Closed-form covariance of standard fBm (``'fbm'``) or sub-fractional BM (``'sfbm'``)."""
    if not 0.0 < H < 1.0:
        raise ParameterError(f"H must lie in (0, 1), got {H}")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise DomainError("covariance times must be non-negative")
    h2 = 2.0 * H
    if model == "fbm":
        out = 0.5 * (s**h2 + t**h2 - np.abs(s - t) ** h2)
    elif model == "sfbm":
        out = s**h2 + t**h2 - 0.5 * ((s + t) ** h2 + np.abs(s - t) ** h2)
    else:
        raise ParameterError(f"unknown model {model!r}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ApproximantEvaluator:
    """Evaluates ``W^(n)``, ``Y^(n)`` and ``S^(n)`` for fixed parameters and drivers.

    ``tail_sign`` multiplies the reduced ``dZ3`` tail terms; keep the default
    except for convention-comparison runs.
    """

    params: ModelParams
    drivers: DriverSet
    tail_sign: float = TAIL_SIGN

    def __post_init__(self) -> None:
        self.drivers.check_window(self.params.T, self.params.a)

    @property
    def regime(self) -> str:
        return self.params.regime

    def _check_t(self, t: float) -> float:
        t = float(t)
        if not 0.0 <= t <= self.params.T:
            raise DomainError(f"t={t} outside [0, T={self.params.T}]")
        return t

    def _tail(self, kind: str, t: float, cutoff: float) -> float:
        p = self.params
        return z3_tail_term(kind, t, p.H, p.a, cutoff, self.drivers.Z3, sign=self.tail_sign)

    def w_terms(self, t: float) -> dict[str, float]:
        """Unscaled summands of ``W^(n)(t)`` (multiply by ``C`` to assemble)."""
        t = self._check_t(t)
        p = self.params
        H, a, eps = p.H, p.a, p.eps_n
        Z1, Z2 = self.drivers.Z1, self.drivers.Z2
        z2a = Z2.values[0]
        f = KernelSpec("f", t, H).compile()
        out = {"f_at_a": float(f._raw(np.float64(a))) * z2a}
        if H > 0.5:
            out["g_dZ1"] = integrate_dZ(KernelSpec("g", t, H), (0.0, t), Z1)
            out["f_dZ2"] = integrate_dZ(f, (a, 0.0), Z2)
            out["tail"] = self._tail("f", t, max(eps, 1.0 / a))
        else:
            b = max(t + eps, 0.0)
            out["g_dZ1"] = integrate_dZ(KernelSpec("g", t, H), (0.0, b), Z1)
            out["g_shift_dZ1"] = integrate_dZ(KernelSpec("g", t, H, eps), (b, t), Z1)
            out["f_dZ2"] = integrate_dZ(f, (a, eps), Z2)
            out["tail"] = self._tail("f", t, 0.0)
        return out

    def y_terms(self, t: float) -> dict[str, float]:
        """Unscaled summands of ``Y^(n)(t)``."""
        t = self._check_t(t)
        p = self.params
        H, a, eps = p.H, p.a, p.eps_n
        Z2 = self.drivers.Z2
        F = KernelSpec("F", t, H).compile()
        out = {"F_at_a": float(F._raw(np.float64(a))) * Z2.values[0]}
        if H > 0.5:
            out["power_dZ2"] = -integrate_dZ(KernelSpec("power", t, H), (-t, 0.0), Z2)
            out["F_dZ2"] = integrate_dZ(F, (a, -t), Z2)
            out["tail"] = self._tail("F", t, max(eps, 1.0 / a))
        else:
            m = max(eps, -t)
            b = max(a, -t + eps)
            out["power_dZ2"] = -integrate_dZ(KernelSpec("power", t, H), (-t, m), Z2)
            out["shifted_power_dZ2"] = -integrate_dZ(
                KernelSpec("shifted_power", t, H, eps), (m, 0.0), Z2
            )
            out["tail"] = self._tail("F", t, 0.0)
            out["F_dZ2"] = integrate_dZ(F, (a, b), Z2)
            if -eps <= t:
                out["F_shift_dZ2"] = integrate_dZ(KernelSpec("F", t + eps, H), (b, -t), Z2)
            else:
                out["F_shift_dZ2"] = 0.0
        return out

    def eval_W(self, t: float) -> float:
        return float(self.params.C * sum(self.w_terms(t).values()))

    def eval_Y(self, t: float) -> float:
        return float(self.params.C * sum(self.y_terms(t).values()))

    def eval_WY(self, t: float) -> tuple[float, float]:
        return self.eval_W(t), self.eval_Y(t)

    def eval_S(self, t: float) -> float:
        w, y = self.eval_WY(t)
        return w + y

    def eval_parts(self, t: float) -> tuple[float, float, float, float]:
        """``(W without tail, W tail, Y without tail, Y tail)``, all scaled by ``C``.

        Lets one set of drivers serve both tail conventions: flipping the
        sign only negates the two tail entries.
        """
        C = self.params.C
        w = self.w_terms(t)
        y = self.y_terms(t)
        wt, yt = w.pop("tail"), y.pop("tail")
        return C * sum(w.values()), C * wt, C * sum(y.values()), C * yt

    def eval_grid(self, times, which: str = "S") -> np.ndarray:
        """Vector of ``which`` in ``{'W', 'Y', 'S'}`` at each time in ``times``."""
        if which not in ("W", "Y", "S"):
            raise ParameterError(f"which must be W, Y or S, got {which!r}")
        out = np.empty(len(times))
        for i, t in enumerate(times):
            if which == "W":
                out[i] = self.eval_W(t)
            elif which == "Y":
                out[i] = self.eval_Y(t)
            else:
                out[i] = self.eval_S(t)
        return out

    def eval_grid_WY(self, times) -> tuple[np.ndarray, np.ndarray]:
        wy = np.array([self.eval_WY(t) for t in times]).reshape(-1, 2)
        return wy[:, 0], wy[:, 1]
