import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from subfbm.errors import DomainError, ParameterError, SingularityError
from subfbm.kernels import (
    KernelSpec,
    ModelParams,
    PowerKernel,
    eval_kernel,
    power_primitive,
    powdiff,
    schedules,
    validate_kernel_bounds,
)

hursts = st.sampled_from([0.05, 0.2, 0.3, 0.45, 0.55, 0.7, 0.8, 0.95])


def test_F_value():
    assert eval_kernel(KernelSpec("F", 1.0, 0.7), -2.0) == pytest.approx(1 - 2**0.2, abs=1e-15)
    assert eval_kernel(KernelSpec("F", 1.0, 0.7), -2.0) == pytest.approx(-0.148698, abs=5e-7)


def test_dF_value_and_finite_difference():
    spec = KernelSpec("dF", 1.0, 0.7)
    assert eval_kernel(spec, -2.0) == pytest.approx(-0.085130, abs=5e-7)
    assert eval_kernel(spec, -2.0) == pytest.approx(0.2 * (2**-0.8 - 1), rel=1e-14)
    h = 1e-5
    F = KernelSpec("F", 1.0, 0.7)
    fd = (eval_kernel(F, -2.0 + h) - eval_kernel(F, -2.0 - h)) / (2 * h)
    assert abs(fd - eval_kernel(spec, -2.0)) < 1e-6


@given(hursts, st.floats(0.01, 3.0), st.floats(0.01, 10.0))
def test_derivatives_match_finite_differences(H, t, d):
    for kind, s in (("F", -t - d), ("f", -d), ("g", t - d if d < t else t / 2)):
        k = KernelSpec(kind, t, H).compile()
        h = 1e-6 * min(d, 1.0)
        fd = (k(s + h) - k(s - h)) / (2 * h)
        exact = k.derivative()(s)
        assert abs(fd - exact) <= 1e-5 * max(1.0, abs(exact))


def test_zero_time_kernels_vanish():
    for H in (0.3, 0.7):
        for kind in ("f", "F"):
            k = KernelSpec(kind, 0.0, H).compile()
            assert k.terms == ()
            assert k(-1.0) == 0.0


@given(hursts, st.floats(0.0, 5.0), st.floats(1e-6, 5.0))
def test_g_positive(H, t, u):
    k = KernelSpec("g", t, H).compile()
    s = t - u
    if s >= 0:
        assert k(s) > 0


@pytest.mark.parametrize("kind, s", [("F", -1.0), ("F", -0.5), ("f", 0.1), ("g", 1.5), ("power", 0.2)])
def test_domain_errors(kind, s):
    with pytest.raises(DomainError):
        eval_kernel(KernelSpec(kind, 1.0, 0.3), s)


def test_F_at_singular_endpoint_is_domain_error_only_below_half():
    assert eval_kernel(KernelSpec("F", 1.0, 0.7), -1.0) == pytest.approx(-1.0)
    with pytest.raises(DomainError):
        eval_kernel(KernelSpec("F", 1.0, 0.3), -1.0)


def test_half_rejected():
    with pytest.raises(ParameterError):
        KernelSpec("f", 1.0, 0.5)
    with pytest.raises(ParameterError):
        ModelParams(H=0.5, beta=0.3)


def test_schedules_examples():
    eps, _ = schedules(0.7, 0.3, 100)
    assert eps == pytest.approx(-0.001, rel=1e-13)
    eps3, _ = schedules(0.3, 0.3, 100)
    assert eps3 == pytest.approx(-0.001, rel=1e-13)
    _, alpha = schedules(0.7, 0.3, 10)
    assert alpha == pytest.approx(10**-0.2 * math.log(10) ** 2.5, rel=1e-14)
    assert alpha == pytest.approx(5.0763, abs=2e-4)


@given(hursts, st.floats(0.0, 0.5, exclude_min=True, exclude_max=True), st.integers(2, 10**6))
def test_schedule_identity(H, beta, n):
    if not abs(H - 0.5) < beta:
        return
    eps, alpha = schedules(H, beta, n)
    assert -1 < eps < 0 and alpha > 0
    assert (-eps) ** abs(H - 0.5) * n**beta == pytest.approx(1.0, rel=1e-12)


def test_schedule_monotonicity():
    ns = np.arange(3, 2000)
    vals = np.array([schedules(0.7, 0.3, int(n)) for n in ns])
    assert np.all(np.diff(vals[:, 0]) > 0)
    # alpha_n peaks at log n = 2.5 / (1/2 - beta) and decays beyond
    big = [schedules(0.7, 0.3, 10**k)[1] for k in (6, 8, 10, 12)]
    assert np.all(np.diff(big) < 0)


@pytest.mark.parametrize("H, beta", [(0.7, 0.6), (0.7, 0.15), (0.3, 0.1), (0.3, 0.5)])
def test_beta_constraint_message(H, beta):
    with pytest.raises(ParameterError, match=r"beta must satisfy \|H-1/2\| < beta < 1/2"):
        schedules(H, beta, 10)


def test_model_params_defaults_and_checks():
    p = ModelParams(H=0.7, beta=0.3, T=2.0)
    assert p.a == -8.0
    assert p.regime == "H_gt_half"
    assert ModelParams(H=0.3, beta=0.3).regime == "H_lt_half"
    with pytest.raises(ParameterError):
        ModelParams(H=0.7, beta=0.3, T=1.0, a=-1.0)
    with pytest.raises(ParameterError):
        ModelParams(H=0.7, beta=0.3, T=-1.0)
    q = p.replace(n=500)
    assert q.n == 500 and q.C == p.C and q.eps_n > p.eps_n


def test_power_primitive_examples():
    assert power_primitive(1.0, 0.25, 0.0, 0.5) == pytest.approx((1 - 0.5**1.25) / 1.25, rel=1e-15)
    assert power_primitive(1.0, 0.25, 0.0, 0.5) == pytest.approx(0.463641, abs=5e-7)
    assert power_primitive(0.0, 1.0, -2.0, -1.0) == pytest.approx(1.5, rel=1e-15)
    assert power_primitive(3.0, -0.7, 0.4, 0.4) == 0.0


def test_power_primitive_singular():
    with pytest.raises(SingularityError):
        power_primitive(0.0, -1.0, -1.0, 0.0)
    with pytest.raises(SingularityError):
        power_primitive(0.0, 0.3, -1.0, 0.5)
    assert power_primitive(0.0, -0.5, -1.0, 0.0) == pytest.approx(2.0)


@given(
    st.floats(-5, 5),
    st.floats(-0.95, 2.0),
    st.floats(1e-9, 4.0),
    st.floats(0.0, 4.0),
)
def test_power_primitive_matches_quadrature(c, p, gap, width):
    s1 = c - gap
    s0 = s1 - width
    exact = power_primitive(c, p, s0, s1)
    ref, _ = integrate.quad(lambda s: (c - s) ** p, s0, s1, epsabs=0, epsrel=1e-13, limit=200)
    assert exact == pytest.approx(ref, rel=1e-10, abs=1e-300)
    assert power_primitive(c, p, s1, s0) == -exact


@given(st.floats(1e-3, 1e3), st.floats(1e-12, 1.0), st.floats(-2.0, 2.0))
def test_powdiff_stable(x2, rel, p):
    x1 = x2 * (1 + rel)
    ref = float((np.longdouble(x1) ** np.longdouble(p)) - (np.longdouble(x2) ** np.longdouble(p)))
    out = powdiff(x1, x2, p)
    assert out == pytest.approx(ref, rel=1e-6, abs=1e-14 * abs(x2**p))


def test_power_kernel_merges_terms():
    k = PowerKernel(((1.0, 0.0, 0.3), (-1.0, -0.0, 0.3), (2.0, 1.0, 0.5)))
    assert k.terms == ((2.0, 1.0, 0.5),)


def test_validate_kernel_bounds_example_point():
    H, t, s = 0.7, 1.0, -2.0
    lhs = abs(eval_kernel(KernelSpec("dF", t, H), s))
    rhs = (H - 0.5) * t * (1.5 - H) * (-t - s) ** (H - 2.5)
    assert lhs == pytest.approx(0.085130, abs=5e-7)
    assert rhs == pytest.approx(0.16)
    assert lhs <= rhs


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_validate_kernel_bounds_suite(H):
    rep = validate_kernel_bounds(H, 1.0, -4.0, trials=2000, seed=3)
    assert rep["passed"]
    for c in rep["checks"]:
        assert c["violations"] == []
        assert c["max_ratio"] <= 1.0 + 1e-12
