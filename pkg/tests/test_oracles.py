import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import gamma

from subfbm.errors import ParameterError
from subfbm.kernels import KernelSpec
from subfbm.oracles import (
    calibrate_C,
    calibration_report,
    cholesky_sample,
    covariance_matrix,
    lemma_bound_suite,
    telegraph_variance_oracle,
    telegraph_variance_quadrature,
)
from subfbm.paths import zero_path
from subfbm.stieltjes import integrate_dZ, z3_tail_term


def _mvn_integral(H):
    # Gamma(H+1/2)^2 / (Gamma(2H+1) sin(pi H)), the Mandelbrot-van Ness normalization
    return gamma(H + 0.5) ** 2 / (gamma(2 * H + 1) * math.sin(math.pi * H))


@pytest.mark.parametrize("H", [0.1, 0.3, 0.45, 0.55, 0.7, 0.9])
def test_calibration_matches_gamma_form(H):
    rep = calibration_report(H)
    assert rep.fbm_integral == pytest.approx(_mvn_integral(H), rel=1e-8)
    assert rep.C == pytest.approx((2 * _mvn_integral(H)) ** -0.5, rel=1e-8)
    assert rep.fbm_constant == pytest.approx(math.sqrt(2) * rep.C, rel=1e-14)


def test_calibration_values():
    assert calibrate_C(0.3) == pytest.approx(0.5163880148740987, rel=1e-9)
    assert calibrate_C(0.7) == pytest.approx(0.7720256402125567, rel=1e-9)


def test_fbm_integral_against_brute_force_riemann():
    H = 0.7
    al = H - 0.5
    f1sq = lambda s: ((1 - s) ** al - (-s) ** al) ** 2  # noqa: E731
    N = 4 * 10**6
    # [-1, 0] directly
    x = (np.arange(N) + 0.5) / N - 1.0
    near = np.sum(f1sq(x)) / N
    # [-R, -1] in the variable y = log(-s)
    R = 1e8
    y = (np.arange(N) + 0.5) * math.log(R) / N
    s = -np.exp(y)
    far = np.sum(f1sq(s) * np.exp(y)) * math.log(R) / N
    # beyond R: f1(s)^2 ~ al^2 (-s)^(2al-2)
    tail = al**2 * R ** (2 * al - 1) / (1 - 2 * al)
    u = (np.arange(2 * 10**6) + 0.5) / (2 * 10**6)
    pos = np.sum((1 - u) ** (2 * H - 1)) / (2 * 10**6)
    assert near + far + tail + pos == pytest.approx(calibration_report(H).fbm_integral, abs=1e-6)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_calibration_tol_halving(H):
    for tol in (1e-6, 1e-8, 1e-10):
        assert abs(calibrate_C(H, tol) - calibrate_C(H, tol / 2)) < tol


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_variance_cross_check(H):
    rep = calibration_report(H)
    assert rep.var_S1_target == pytest.approx(2 - 2 ** (2 * H - 1), rel=1e-15)
    assert abs(rep.discrepancy) <= 1e-3
    assert abs(rep.var_S1 - rep.var_S1_target) <= 10 * rep.tol


@pytest.mark.parametrize("H", [0.5 - 1e-3, 0.5 + 1e-3])
def test_near_half_limits(H):
    rep = calibration_report(H)
    # fBm normalization tends to 1, sub-fractional one to 1/sqrt(2)
    assert abs(rep.fbm_constant - 1.0) < 1e-2
    assert abs(rep.C - 2**-0.5) < 1e-2


def test_calibration_errors():
    with pytest.raises(ParameterError):
        calibrate_C(0.5)
    with pytest.raises(ParameterError):
        calibrate_C(0.7, tol=0.0)


# ------------------------------------------------------------- sampler


def test_cholesky_variance():
    x = cholesky_sample("sfbm", 0.7, [1.0], seed=1, size=10**5)[:, 0]
    v = x.var(ddof=1)
    se = v * math.sqrt(2 / (x.size - 1))
    assert abs(v - 0.680492) < 3 * se


def test_cholesky_zero_and_shapes():
    z = cholesky_sample("sfbm", 0.3, [0.0], seed=3, size=50)
    assert z.shape == (50, 1) and np.all(z == 0.0)
    one = cholesky_sample("fbm", 0.3, [0.0, 0.5, 1.0], seed=3)
    assert one.shape == (3,) and one[0] == 0.0
    assert np.array_equal(one, cholesky_sample("fbm", 0.3, [0.0, 0.5, 1.0], seed=3))


def test_cholesky_grid_errors():
    with pytest.raises(ParameterError):
        cholesky_sample("fbm", 0.3, [0.5, 0.5])
    with pytest.raises(ParameterError):
        cholesky_sample("fbm", 0.3, [-0.5, 0.5])


def test_non_positive_definite_reported(monkeypatch):
    # valid covariances are always rescued by the jitter; inject an indefinite one
    import subfbm.oracles as oracles

    monkeypatch.setattr(oracles, "covariance_matrix", lambda model, H, g: np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ParameterError, match=r"smallest eigenvalue -1\.000e\+00"):
        oracles.cholesky_sample("fbm", 0.3, [0.5, 1.0])


def test_jitter_rescues_near_singular_gram():
    grid = 1.0 + np.arange(40) * 1e-9
    x = cholesky_sample("fbm", 0.95, grid, seed=1)
    assert np.all(np.isfinite(x))


@pytest.mark.parametrize("H", [0.5 - 1e-6, 0.5 + 1e-6])
def test_brownian_limit(H):
    g = np.array([0.25, 0.5, 1.0])
    cov = covariance_matrix("fbm", H, g)
    assert np.allclose(cov, np.minimum.outer(g, g), atol=1e-5)


def test_sampler_se_scales_with_sqrt_m():
    g = [0.5, 1.0]
    def se(M, seed):
        x = cholesky_sample("sfbm", 0.3, g, seed=seed, size=M)
        prod = x[:, :, None] * x[:, None, :]
        return np.linalg.norm(prod.std(axis=0, ddof=1) / math.sqrt(M))
    ratio = se(20000, 1) / se(40000, 2)
    assert abs(ratio - math.sqrt(2)) < 0.2 * math.sqrt(2)


# ------------------------------------------------------------- telegraph


def test_telegraph_value():
    assert telegraph_variance_oracle(1, 1.0) == pytest.approx(0.567668, abs=5e-7)
    assert telegraph_variance_quadrature(1, 1.0) == pytest.approx(telegraph_variance_oracle(1, 1.0), abs=1e-10)
    assert telegraph_variance_quadrature(3, 0.4) == pytest.approx(telegraph_variance_oracle(3, 0.4), abs=1e-10)
    assert telegraph_variance_oracle(50, 0.0) == 0.0


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_telegraph_large_n(n):
    t = 1.0
    v = telegraph_variance_oracle(n, t)
    assert abs(v - t) <= (1 / (2 * n**2) + math.exp(-2 * n**2 * t)) * (1 + 1e-12)
    assert abs(v - t) > 0.99 / (2 * n**2)


@given(st.integers(1, 10**4), st.floats(1e-6, 100.0))
def test_telegraph_below_t(n, t):
    assert 0 < telegraph_variance_oracle(n, t) < t


def test_telegraph_small_t():
    assert telegraph_variance_oracle(5, 1e-9) < 1e-15


# --------------------------------------------------------------- bounds


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_lemma_suite_passes(H):
    rep = lemma_bound_suite(H, 0.3, trials=300, seed=2)
    assert rep["passed"]
    names = {c["name"] for c in rep["checks"]}
    if H < 0.5:
        assert {"A1<=2x", "A2<=x", "A3<=x"} <= names
    assert len(names) == (7 if H < 0.5 else 4)
    for c in rep["checks"]:
        assert c["violations"] == [] and c["trials"] > 0


def test_equal_paths_give_zero_left_sides():
    a, t, eps = -4.0, 0.5, -0.01
    Z = zero_path(a, 0.0, 0.0)
    for spec, iv in (
        (KernelSpec("power", t, 0.7), (-t, 0.0)),
        (KernelSpec("F", t, 0.7), (a, -t)),
        (KernelSpec("shifted_power", t, 0.3, eps), (eps, 0.0)),
        (KernelSpec("F", t, 0.3), (a, -t + eps)),
    ):
        assert integrate_dZ(spec, iv, Z) == 0.0
    assert z3_tail_term("F", t, 0.7, a, eps, zero_path(1 / a, 0.0, 0.0)) == 0.0


def test_lemma_suite_errors():
    with pytest.raises(ParameterError):
        lemma_bound_suite(0.7, 0.1)
    with pytest.raises(ParameterError):
        lemma_bound_suite(0.7, 0.3, trials=0)
    with pytest.raises(ParameterError):
        lemma_bound_suite(0.7, 0.3, T=1.0, a=-0.5)
