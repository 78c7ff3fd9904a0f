import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from photon_bec.core import ModelParams, ValidationError
from photon_bec.meanfield import steady_state
from photon_bec.moments import (
    CLOSURE_MIN_N,
    MomentState,
    central_jacobian,
    central_rhs,
    closure_third_moments,
    g2_zero,
    moment_rhs,
    moment_steady_state,
)
from photon_bec.oracle import build_generator

# steady states of the closed equations solved in 50-digit arithmetic
# (mpmath.findroot on the raw-moment form); target n -> (<n>, g2 normal)
HIGH_PRECISION = {
    4620.0: (4619.9958001189812645, 1.9999327571275232966),
    17100.0: (17099.982742994351775, 1.2998618676377633821),
}


def _exact_moment_derivatives(params, p):
    # d<f>/dt = sum_s f(s) (Q p)(s) on a lattice large enough to be exact
    n_max = p.shape[0] - 1
    gen = build_generator(params, n_max)
    dp = (gen.Q @ p.ravel()).reshape(p.shape)
    n = np.arange(n_max + 1, dtype=float)[:, None]
    m = np.arange(gen.M + 1, dtype=float)[None, :]
    fs = [n + 0 * m, m + 0 * n, n * n + 0 * m, n * m, m * m + 0 * n]
    return np.array([np.sum(f * dp) for f in fs])


def _state_from(p):
    n = np.arange(p.shape[0], dtype=float)[:, None]
    m = np.arange(p.shape[1], dtype=float)[None, :]
    e = lambda f: float(np.sum(f * p))  # noqa: E731
    state = MomentState(e(n + 0 * m), e(m + 0 * n), e(n * n + 0 * m), e(n * m), e(m * m + 0 * n))
    return state, (e(n * n * m), e(n * m * m))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_moment_equations_exact_with_true_third_moments(seed):
    # arbitrary distribution supported away from the photon cutoff, so every
    # transition out of the support stays on the lattice
    rng = np.random.default_rng(seed)
    params = ModelParams(M=12, kappa=0.7, gamma_up=0.4, gamma_down=0.15, B_em=0.09, B_abs=0.03)
    p = np.zeros((16, 13))
    p[:14] = rng.random((14, 13))
    p /= p.sum()
    state, third = _state_from(p)
    expected = _exact_moment_derivatives(params, p)
    got = moment_rhs(state, params, third_moments=third)
    assert np.allclose(got, expected, rtol=1e-11, atol=1e-11)


@pytest.mark.parametrize("target", sorted(HIGH_PRECISION))
def test_g2_zero_matches_high_precision(dye, target):
    from conftest import at_target

    p = at_target(dye, target)
    s = moment_steady_state(p)
    n, g2 = HIGH_PRECISION[target]
    assert s.n == pytest.approx(n, rel=1e-12)
    assert g2_zero(s, "normal") == pytest.approx(g2, rel=1e-10)


def test_g2_values_quoted_for_experiment(dye_4620, dye_17100):
    assert g2_zero(moment_steady_state(dye_4620)) == pytest.approx(2.0, abs=0.1)
    assert g2_zero(moment_steady_state(dye_17100)) == pytest.approx(1.3, abs=0.1)


def test_direct_minus_normal_is_inverse_n(dye_17100):
    s = moment_steady_state(dye_17100)
    assert g2_zero(s, "direct") - g2_zero(s, "normal") == pytest.approx(1 / s.n, rel=1e-9)


def test_residual_small(dye_17100):
    s = moment_steady_state(dye_17100)
    assert s.residual < 1e-8
    assert not s.closure_unreliable


def test_central_rhs_consistent_with_raw(small, small_moments):
    s = small_moments
    x = np.array([s.n * 1.01, s.m_up * 0.99, s.var_n * 1.1, s.cov * 0.9, s.var_m * 1.05])
    raw = MomentState.from_central(*x)
    d = moment_rhs(raw, small)
    # chain rule from raw to central variables
    n, m = x[0], x[1]
    expected = np.array([d[0], d[1], d[2] - 2 * n * d[0], d[3] - n * d[1] - m * d[0],
                         d[4] - 2 * m * d[1]])
    assert np.allclose(central_rhs(x, small), expected, rtol=1e-10, atol=1e-10)


def test_central_jacobian_finite_differences(small, small_moments):
    s = small_moments
    x = np.array([s.n, s.m_up, s.var_n, s.cov, s.var_m])
    J = central_jacobian(x, small)
    for j in range(5):
        h = 1e-5 * max(abs(x[j]), 1.0)
        e = np.zeros(5)
        e[j] = h
        col = (central_rhs(x + e, small) - central_rhs(x - e, small)) / (2 * h)
        assert np.allclose(col, J[:, j], rtol=1e-6, atol=1e-7)


def test_steady_state_zeroes_closed_equations(small, small_moments):
    d = moment_rhs(small_moments, small)
    assert np.max(np.abs(d)) < 1e-9 * small.M


def test_closure_third_moments_vanishing_cumulant():
    # for a product of independent Gaussians the third cumulant is zero
    s = MomentState.from_central(10.0, 20.0, 3.0, 0.0, 5.0)
    nnm, nmm = closure_third_moments(s)
    assert nnm == pytest.approx((10 ** 2 + 3) * 20)
    assert nmm == pytest.approx(10 * (20 ** 2 + 5))


def test_factorized_first_moments_hold_mean_field(dye_4620):
    s = moment_steady_state(dye_4620, factorize_first=True)
    mf = steady_state(dye_4620)
    assert s.n == pytest.approx(mf.n, rel=1e-12)
    assert s.m_up == pytest.approx(mf.m_up, rel=1e-12)
    assert s.var_n > 0


def test_below_threshold_flagged():
    p = ModelParams(M=100, kappa=1.0, gamma_up=0.005, B_em=0.05, B_abs=0.0025)
    with pytest.warns(UserWarning, match="closure unreliable"):
        s = moment_steady_state(p)
    assert s.closure_unreliable and s.n < CLOSURE_MIN_N


def test_no_pump_returns_zero_state():
    p = ModelParams(M=100, kappa=1.0, gamma_up=0.0, B_em=0.05)
    with pytest.warns(UserWarning):
        s = moment_steady_state(p)
    assert s.n == 0 and s.closure_unreliable


def test_no_drive_no_loss_rejected():
    with pytest.raises(ValidationError):
        moment_steady_state(ModelParams(M=100, gamma_down=1.0, B_em=0.05))


def test_json_round_trip_is_lossless(dye_17100):
    s = moment_steady_state(dye_17100)
    d = json.loads(s.to_json())
    assert set(d) == {"n", "m_up", "n2", "nm", "m2", "residual", "closure_unreliable"}
    assert d["n"] == s.n and d["m2"] == s.m2


def test_central_storage_keeps_variance_at_large_m(dye_4620):
    # <m^2> ~ 8e15 while var(m) ~ 4e8: the raw difference loses digits
    s = moment_steady_state(dye_4620)
    assert s.var_m == pytest.approx(444397395.6, rel=1e-8)
    assert s.var_m > 0 and s.var_n > 0


@given(target=st.floats(50.0, 5e4))
def test_moment_invariants(target):
    from conftest import at_target

    p = at_target(ModelParams(M=1e6, kappa=1.0, B_em=1e-3, B_abs=2e-5), target)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        s = moment_steady_state(p)
    assert s.var_n >= 0 and s.var_m >= 0
    assert s.cov ** 2 <= s.var_n * s.var_m * (1 + 1e-9)
    assert g2_zero(s, "direct") - g2_zero(s, "normal") == pytest.approx(1 / s.n, rel=1e-8)
    assert 0 <= s.m_up <= p.M
