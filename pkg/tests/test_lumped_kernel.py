import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cwscaler.exceptions import DomainError
from cwscaler.lumped_kernel import (
    build_kernel,
    generator_apply,
    local_moments,
    moment_profile,
    phi,
    proposal_prob,
)
from cwscaler.model_core import ModelParams, exact_distribution, solve_cw_roots
from cwscaler.diagnostics import ou_params

from oracles import brute_force_mh_matrix


def test_phi_values(sub_params, m0_ref):
    p = sub_params.with_n(16)
    assert phi(0.0, p, m0_ref) == 0.0
    # linear term vanishes when h = -m0
    q = ModelParams(1.5, -0.3, 16)
    assert phi(1.7, q, 0.3) == pytest.approx(-0.5 * 1.7**2, abs=1e-15)


def test_phi_difference_is_gibbs_log_ratio(sub_params, m0_ref):
    n, k, beta, h = 16, 10, 1.5, 0.2
    p = sub_params.with_n(n)
    m, mp = (2 * k - n) / n, (2 * (k + 1) - n) / n
    eta = math.sqrt(n) * (m - m0_ref)
    lhs = beta * (phi(eta, p, m0_ref) - phi(eta + 2 / math.sqrt(n), p, m0_ref))
    rhs = n * beta * (0.5 * mp**2 + h * mp - 0.5 * m**2 - h * m)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_proposal_probs():
    p = ModelParams(1.0, 0.0, 10)
    assert proposal_prob(0, 1, p) == 1.0
    assert proposal_prob(10, 1, p) == 0.0
    assert proposal_prob(7, 1, p) == pytest.approx(0.3)
    assert proposal_prob(7, -1, p) == pytest.approx(0.7)
    with pytest.raises(DomainError):
        proposal_prob(11, 1, p)
    with pytest.raises(DomainError):
        proposal_prob(3, 0, p)


def test_infinite_temperature_kernel():
    # beta -> 0: every proposal accepted
    n = 12
    ker = build_kernel(ModelParams(1e-300, 0.3, n), 0.0)
    k = np.arange(n + 1)
    np.testing.assert_allclose(ker.p_up, (n - k) / n, rtol=1e-15)
    np.testing.assert_allclose(ker.p_down, k / n, rtol=1e-15)


def test_two_spin_kernel_matches_lumped_brute_force():
    params = ModelParams(1.0, 0.0, 2)
    ker = build_kernel(params, 0.0)
    assert ker.p_up[0] == pytest.approx(math.exp(-1), rel=1e-14)
    _assert_lumps_to_kernel(params, ker)


@pytest.mark.parametrize("n, beta, h", [(2, 1.0, 0.0), (4, 1.5, 0.2), (5, 3.0, -0.4), (6, 0.4, 1.0)])
def test_kernel_is_exact_lumping_of_spin_chain(n, beta, h):
    params = ModelParams(beta, h, n)
    _assert_lumps_to_kernel(params, build_kernel(params, 0.0))


def _assert_lumps_to_kernel(params, ker):
    states, _, P = brute_force_mh_matrix(params.n, params.beta, params.h)
    level = (states == 1).sum(axis=1)
    for i, x in enumerate(states):
        k = level[i]
        up = P[i, level == k + 1].sum()
        down = P[i, level == k - 1].sum()
        assert up == pytest.approx(ker.p_up[k], abs=1e-13)
        assert down == pytest.approx(ker.p_down[k], abs=1e-13)


@pytest.mark.parametrize("n", [4, 64, 1024, 10**5])
@pytest.mark.parametrize("beta, h", [(1.5, 0.2), (0.5, -0.3), (3.0, 1.0)])
def test_detailed_balance(n, beta, h):
    params = ModelParams(beta, h, n)
    ker = build_kernel(params, solve_cw_roots(params).m0)
    pi = exact_distribution(params).probs
    lhs = pi[:-1] * ker.p_up[:-1]
    rhs = pi[1:] * ker.p_down[1:]
    live = np.maximum(lhs, rhs) > 1e-300
    np.testing.assert_allclose(lhs[live], rhs[live], rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 400), beta=st.floats(0.05, 5.0), h=st.floats(-1.0, 1.0))
def test_kernel_invariants(n, beta, h):
    params = ModelParams(beta, h, n)
    ker = build_kernel(params, solve_cw_roots(params).m0)
    k = np.arange(n + 1)
    assert ker.p_up[n] == 0 and ker.p_down[0] == 0
    assert np.all(ker.p_up >= 0) and np.all(ker.p_up <= (n - k) / n)
    assert np.all(ker.p_down >= 0) and np.all(ker.p_down <= k / n)
    np.testing.assert_allclose(ker.p_up + ker.p_down + ker.p_stay, 1.0, atol=1e-15)
    assert np.all(np.diff(ker.eta) == pytest.approx(2 / math.sqrt(n), rel=1e-9))
    # energy-lowering flips are always accepted
    m = (2 * k - n) / n
    downhill = 2 * beta * (m + h) + 2 * beta / n >= 0
    np.testing.assert_array_equal(ker.p_up[downhill], ((n - k) / n)[downhill])


def test_stationary_vector_of_transition_matrix():
    params = ModelParams(2.0, 0.1, 30)
    ker = build_kernel(params, solve_cw_roots(params).m0)
    pi = exact_distribution(params).probs
    np.testing.assert_allclose(ker.transition_matrix().T @ pi, pi, atol=1e-15)


def test_local_moments_symmetric_walk():
    n = 100
    ker = build_kernel(ModelParams(1e-300, 0.0, n), 0.0)
    lm = local_moments(ker, n // 2)
    assert lm.drift == 0.0
    assert lm.second_moment == 4.0
    with pytest.raises(DomainError):
        local_moments(ker, n + 1)


def test_third_moment_identity():
    params = ModelParams(1.5, 0.2, 100)
    ker = build_kernel(params, solve_cw_roots(params).m0)
    for k in range(101):
        lm = local_moments(ker, k)
        assert lm.p_moment(3) == pytest.approx(lm.second_moment * 2 / math.sqrt(100), rel=1e-14, abs=1e-300)
        assert 0 <= lm.second_moment <= 4


def test_local_moments_near_center(sub_params, m0_ref):
    n = 10**4
    ker = build_kernel(sub_params.with_n(n), m0_ref)
    k = int(np.argmin(np.abs(ker.eta)))
    lm = local_moments(ker, k)
    assert abs(lm.drift) <= 5 / math.sqrt(n)
    assert lm.second_moment == pytest.approx(4 * (1 - m0_ref), rel=0.02)
    assert 4 * (1 - m0_ref) == pytest.approx(0.256, abs=1e-3)


def test_moment_profile_matches_pointwise(sub_params, m0_ref):
    ker = build_kernel(sub_params.with_n(50), m0_ref)
    prof = moment_profile(ker)
    for k in (0, 7, 49, 50):
        lm = local_moments(ker, k)
        assert prof.drift[k] == lm.drift and prof.second_moment[k] == lm.second_moment


def test_generator_on_simple_functions(sub_params, m0_ref):
    n = 10**4
    ker = build_kernel(sub_params.with_n(n), m0_ref)
    assert np.all(generator_apply(ker, lambda x: np.full_like(x, 3.0)) == 0.0)
    prof = moment_profile(ker)
    np.testing.assert_allclose(generator_apply(ker, lambda x: x), prof.drift, rtol=1e-9, atol=1e-9)
    k = int(np.argmin(np.abs(ker.eta - 0.5)))
    eta = ker.eta[k]
    lm = local_moments(ker, k)
    assert generator_apply(ker, lambda x: x**2, k) == pytest.approx(2 * eta * lm.drift + lm.second_moment, abs=1e-10)


def test_drift_limit_pointwise_bound(sub_params, m0_ref):
    """At n = 1e5 every grid point with |eta| <= n^0.3 has |drift + 2 ell eta| <= 0.05 (1 + |eta|)."""
    ou = ou_params(sub_params)
    n = 10**5
    prof = moment_profile(build_kernel(sub_params.with_n(n), m0_ref))
    sel = np.abs(prof.eta) <= n**0.3
    err = np.abs(prof.drift + 2 * ou.ell * prof.eta)[sel]
    assert np.all(err <= 0.05 * (1 + np.abs(prof.eta[sel])))


def test_drift_converges_on_fixed_window(sub_params, m0_ref):
    ou = ou_params(sub_params)
    sups = []
    for n in (10**2, 10**3, 10**4, 10**5):
        prof = moment_profile(build_kernel(sub_params.with_n(n), m0_ref))
        sel = np.abs(prof.eta) <= 2.0
        sups.append(np.max(np.abs(prof.drift + 2 * ou.ell * prof.eta)[sel]))
    assert all(b < a for a, b in zip(sups, sups[1:]))
    slope = np.polyfit(np.log([1e2, 1e3, 1e4, 1e5]), np.log(sups), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_kernel_csv(tmp_path, sub_params, m0_ref):
    ker = build_kernel(sub_params.with_n(8), m0_ref)
    ker.to_csv(tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "k,eta,pUp,pDown,pStay,drift,secondMoment"
    assert len(lines) == 10
