import json
import random
from fractions import Fraction as Fr

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

import oracles
from inls_lab.exponent_core import INF, HypothesisError, Pair, PairClass, ParamSet, Q, classify_pair
from inls_lab.lemma_catalog import (
    LEMMA_NAMES,
    LemmaId,
    LemmaReport,
    _coefficients,
    contraction_time,
    global_deriv_system,
    global_pairs,
    lemma_by_name,
    local_hs_system,
    local_l2_system,
    theta_constraints,
    theta_window,
    verify_lemma,
)
from inls_lab.sampling import sample_params

ALL_LEMMAS = list(LemmaId)


# --- local L2 --------------------------------------------------------------


def test_local_l2_reference_point():
    N, b, alpha = 2, Fr(1, 2), Fr(1)
    report = local_l2_system(ParamSet(N, alpha, b))
    q, r = oracles.local_l2_pair(N, b)
    assert (q, r) == (Fr(7, 2), Fr(14, 3))
    assert report.pair("(q,r)") == Pair(q, r)
    assert report.theta_exponents[1] == oracles.local_l2_time_exponent(N, b, alpha) == Fr(1, 7)
    assert report.passed


def test_local_l2_at_mass_critical_power_fails():
    params = ParamSet(3, Fr(2, 3), 1)
    with pytest.raises(HypothesisError, match=r"alpha < \(4-2b\)/N"):
        local_l2_system(params)
    report = local_l2_system(params, strict=False)
    assert report.theta_exponents[1] == 0
    assert not report.passed
    assert any("theta2" in f for f in report.failures())


def test_local_l2_second_reference_point():
    report = local_l2_system(ParamSet(3, Fr(1, 3), 1))
    assert report.theta_exponents[1] == oracles.local_l2_time_exponent(3, Fr(1), Fr(1, 3)) == Fr(1, 8)
    assert report.passed


def test_local_l2_exterior_exponent_is_marked_as_a_choice():
    report = local_l2_system(ParamSet(2, 1, Fr(1, 2)))
    exterior = report.system("exterior")
    assert exterior.implementation_chosen
    assert report.theta_exponents[0] == 1 - Fr(2, 4)


# --- local H^s -------------------------------------------------------------


def test_local_hs_high_dimension_reference_point():
    N, s, b, alpha = 3, Fr(1), Fr(1, 2), Fr(1)
    report = local_hs_system(ParamSet(N, alpha, b, s))
    assert report.lemma is LemmaId.LOCAL_HS_HIGHDIM
    assert report.theta_exponents[1] == oracles.highdim_time_exponent(N, s, b, alpha) == Fr(2, 5)
    assert report.passed


def test_local_hs_half_dimension_reference_point():
    N, s, b, alpha = 2, Fr(1), Fr(1, 3), Fr(4)
    report = local_hs_system(ParamSet(N, alpha, b, s))
    assert report.lemma is LemmaId.LOCAL_HS_HALFDIM
    q, r = oracles.halfdim_pair(N, b, alpha)
    assert (q, r) == (Fr(18, 7), Fr(9))
    assert report.pair("(q,r)") == Pair(q, r)
    assert report.passed


def test_local_hs_low_dimension_time_exponent():
    N, s, b, alpha = 2, Fr(1, 2), Fr(1, 4), Fr(1)
    report = local_hs_system(ParamSet(N, alpha, b, s))
    assert report.lemma is LemmaId.LOCAL_HS_LOWDIM
    assert 1 / report.system("ball").values["q1"] == oracles.lowdim_time_exponent(N, s, b, alpha)
    assert report.theta_exponents[1] == oracles.lowdim_time_exponent(N, s, b, alpha)
    assert report.passed


def test_local_hs_at_the_power_bound_is_rejected():
    with pytest.raises(HypothesisError, match="alpha_upper"):
        local_hs_system(ParamSet(3, 3, Fr(1, 2), 1))


def test_wrong_dimension_branch():
    with pytest.raises(HypothesisError, match="wrong dimension branch"):
        verify_lemma(LemmaId.LOCAL_HS_HIGHDIM, ParamSet(2, 1, Fr(1, 4), Fr(1, 2)))


# --- global pairs ----------------------------------------------------------


def test_global_pairs_reference_point():
    N, alpha, b, theta = 3, Fr(5, 2), Fr(1, 2), Fr(1, 100)
    report = global_pairs(ParamSet(N, alpha, b, 1, theta=theta))
    assert report.passed
    ref = oracles.base_pairs(N, alpha, b, theta)
    assert report.pair("(q_hat,r_hat)") == Pair(ref["q_hat"], ref["r_hat"])
    assert report.pair("(a_hat,r_hat)") == Pair(ref["a_hat"], ref["r_hat"])
    assert report.pair("(a_tilde,r_hat)") == Pair(ref["a_tilde"], ref["r_hat"])
    assert 1 / ref["a_hat"] + 1 / ref["a_tilde"] == 2 / ref["q_hat"]


def test_global_pairs_at_zero_theta():
    N, alpha, b = 3, Fr(5, 2), Fr(1, 2)
    report = global_pairs(ParamSet(N, alpha, b, 1, theta=0), strict=False)
    q_hat = 4 * alpha * (alpha + 2) / (alpha * (N * alpha + 2 * b))
    r_hat = N * (alpha + 2) / (N - b)
    assert report.pair("(q_hat,r_hat)") == Pair(q_hat, r_hat)
    edp = [i for i in report.identities if i.name.startswith("1/a_hat + 1/a_tilde")]
    assert edp and all(i.passed for i in edp)
    assert not report.passed
    with pytest.raises(HypothesisError, match="theta outside window"):
        global_pairs(ParamSet(N, alpha, b, 1, theta=0))


def test_global_pairs_zero_denominator_theta_is_rejected():
    N, alpha, b = 3, Fr(5, 2), Fr(1, 2)
    theta = alpha * (N * alpha + 2 * b) / (N * alpha - 4 + 2 * b)
    with pytest.raises(HypothesisError, match="theta outside window"):
        global_pairs(ParamSet(N, alpha, b, 1, theta=theta))


def test_theta_window_brackets():
    params = ParamSet(3, Fr(5, 2), Fr(1, 2), 1)
    star = theta_window(params)
    assert 0 < star <= params.alpha
    assert global_pairs(params.with_(theta=star / 2)).passed
    with pytest.raises(HypothesisError, match="theta outside window"):
        global_pairs(params.with_(theta=2 * star))


@pytest.mark.parametrize("N, alpha, s", [(3, Fr(5, 2), Fr(1)), (2, Fr(3), Fr(1, 2)), (5, Fr(1), Fr(1))])
def test_theta_window_grows_as_b_shrinks(N, alpha, s):
    # scan of the shared pair family on a rational grid of b
    from inls_lab.exponent_core import b_upper

    bs = [b_upper(N) * Fr(k, 41) for k in range(1, 41)]
    stars = []
    for b in bs:
        p = ParamSet(N, alpha, b, s)
        if not (0 < p.s_c < s) or alpha >= (4 - 2 * b) / (N - 2 * s):
            continue
        stars.append(theta_window(p))
    assert len(stars) >= 3
    assert all(x > y for x, y in zip(stars, stars[1:]))


@settings(max_examples=60, suppress_health_check=[HealthCheck.too_slow], deadline=None)
@given(st.sampled_from([l for l in LemmaId if l.is_global and l is not LemmaId.GLOBAL_DERIV_3D]),
       st.integers(0, 10**9), st.fractions(min_value=-3, max_value=5, max_denominator=17))
def test_theta_constraints_are_exact_low_degree_polynomials(lemma, seed, theta):
    # the root finder reads each constraint from samples at 0, 1 (and 2); any other point must agree
    params = sample_params(lemma, random.Random(seed))
    for name, g, _strict, degree in theta_constraints(params, lemma, params.eps):
        a2, a1, c = _coefficients(g, degree)
        assert g(Q(theta)) == a2 * theta**2 + a1 * theta + c, name


# --- derivative estimates --------------------------------------------------


def test_three_dimensional_reference_point():
    alpha, b, mu, eps = Fr(2), Fr(1, 2), Fr(3, 4), Fr(1, 8)
    F, theta = oracles.three_d_theta(alpha, b, mu, eps)
    assert (F, theta) == (Fr(13, 24), Fr(13, 12))
    report = verify_lemma(LemmaId.GLOBAL_DERIV_3D, ParamSet(3, alpha, b, 1, mu=mu, epsilon=eps))
    assert report.params.theta == theta
    assert report.passed
    names = {i.name for i in report.identities}
    assert "1/2' = (alpha-theta)/k + 1/l" in names
    assert "1/2' = theta/a* + (alpha-theta+mu)/m" in names
    assert any("(s - s_c)(alpha - theta)" in s.expr for s in report.signs)


def test_three_dimensional_mu_guard():
    with pytest.raises(HypothesisError, match=r"mu outside \(b,1\)"):
        global_deriv_system(ParamSet(3, 2, Fr(1, 2), 1, mu=Fr(1, 2)))


def test_half_dimension_reference_point():
    params = ParamSet(1, 4, Fr(1, 4), Fr(1, 2), theta=Fr(1, 100))
    assert params.s_c == Fr(1, 16)
    report = verify_lemma(LemmaId.GLOBAL_DERIV_HALFDIM, params)
    assert report.passed
    assert any(i.name == "a_bar = (alpha-theta) q_bar'" and i.passed for i in report.identities)


def test_deriv_reports_name_the_active_terms():
    for lemma in (LemmaId.GLOBAL_DERIV_3D, LemmaId.GLOBAL_DERIV_HALFDIM):
        params = sample_params(lemma, random.Random(3))
        assert verify_lemma(lemma, params).active_terms


# --- every report ----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL_LEMMAS), st.integers(0, 10**9))
def test_interior_samples_pass(lemma, seed):
    report = verify_lemma(lemma, sample_params(lemma, random.Random(seed)))
    assert report.passed, report.failures()


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(ALL_LEMMAS), st.integers(0, 10**9))
def test_pairs_reclassify_through_the_public_classifier(lemma, seed):
    report = verify_lemma(lemma, sample_params(lemma, random.Random(seed)))
    N, eps = report.params.N, report.params.eps
    for record in report.pairs:
        s = 0 if record.claimed == PairClass.l2() else record.claimed.s
        assert classify_pair(record.pair, N, s, eps) == record.claimed, record.name


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(ALL_LEMMAS), st.integers(0, 10**9))
def test_report_json_round_trip(lemma, seed):
    report = verify_lemma(lemma, sample_params(lemma, random.Random(seed)))
    text = report.to_json()
    again = LemmaReport.from_json(text)
    assert again.to_json() == text


def test_tampered_report_is_rejected():
    data = json.loads(local_l2_system(ParamSet(2, 1, Fr(1, 2))).to_json())
    data["identities"][0]["rhs"] = "12345"
    with pytest.raises(ValueError, match="does not re-validate"):
        LemmaReport.from_dict(data)


def test_lemma_names_dispatch():
    assert lemma_by_name("local-hs", ParamSet(3, 1, Fr(1, 2), 1)) is LemmaId.LOCAL_HS_HIGHDIM
    assert lemma_by_name("local-hs", ParamSet(2, 1, Fr(1, 4), 1)) is LemmaId.LOCAL_HS_HALFDIM
    assert lemma_by_name("global-deriv", ParamSet(3, 2, Fr(1, 2), 1)) is LemmaId.GLOBAL_DERIV_3D
    assert lemma_by_name("global-deriv", ParamSet(1, 4, Fr(1, 4), Fr(1, 4))) is LemmaId.GLOBAL_DERIV_1D
    assert set(l.cli_name for l in LemmaId) <= set(LEMMA_NAMES)


# --- contraction time ------------------------------------------------------


@given(st.floats(0.05, 20), st.floats(0.01, 5), st.sampled_from([Fr(1, 3), Fr(1, 2), Fr(3, 4)]),
       st.sampled_from([Fr(1), Fr(2), Fr(7, 3)]))
def test_equal_exponents_match_closed_form(a, c, theta, alpha):
    bound = contraction_time(a, theta, theta, c, alpha)
    expect = oracles.equal_theta_time(a, c, float(alpha), float(theta))
    # the 1e-12 safety margin on 1/4 moves T by at most 1e-12/theta relative
    assert bound.T == pytest.approx(expect, rel=1e-12 / float(theta) + 1e-13)
    assert bound.T <= expect
    assert bound.lhs(float(alpha), float(theta), float(theta)) <= 0.25
    assert bound.d_exponent == alpha / theta


def test_doubling_the_radius():
    theta, alpha = Fr(1, 2), Fr(2)
    t1 = contraction_time(1.0, theta, theta, 1.0, alpha).T
    t2 = contraction_time(2.0, theta, theta, 1.0, alpha).T
    assert t2 / t1 == pytest.approx(2 ** (-float(alpha / theta)), rel=1e-11)


def test_time_grows_without_bound_as_radius_shrinks():
    times = [contraction_time(a, Fr(1, 4), Fr(1, 11), 1.0, 3).T for a in (1.0, 0.5, 0.25, 0.125)]
    assert all(x < y for x, y in zip(times, times[1:]))
    assert times[-1] > 1e6


def test_unequal_exponents_satisfy_the_bound():
    bound = contraction_time(0.9, Fr(1, 4), Fr(1, 11), 0.3, 3)
    assert bound.lhs(3.0, 0.25, 1 / 11) <= 0.25
    assert bound.lhs(3.0, 0.25, 1 / 11) == pytest.approx(0.25, rel=1e-11)
    assert bound.d_exponent == 33


def test_contraction_time_rejects_inexact_power():
    with pytest.raises(TypeError):
        contraction_time(1.0, Fr(1, 2), Fr(1, 2), 1.0, 2.0)
