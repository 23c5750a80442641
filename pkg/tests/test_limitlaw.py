import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from wignerlab import ensemble as en
from wignerlab import limitlaw as ll
from wignerlab.rng import trial_stream

RAD = en.resolve_entry_law("rademacher")
GAU = en.resolve_entry_law("gaussian")


def _case_a(theta=2.0, U=(1.0,), law=RAD, diag=None, **kw):
    return ll.CaseALimitSpec(theta, 1.0, np.array(U), law, diag or law, **kw)


def test_h_variances_rademacher():
    s = _case_a()
    # -2/4 + 2/3
    assert s.h_diag_variances()[0] == pytest.approx(1 / 6)
    assert s.h_offdiag_variance() == pytest.approx(1 / 3)


def test_case_a_variance_single_coordinate():
    # Var W_11 = 1 plus Var H_11 = 1/6
    assert ll.case_a_variance(_case_a()) == pytest.approx(7 / 6)


def test_case_a_rejects_negative_h_variance():
    with pytest.raises(ll.LimitLawError):
        _case_a(kappa4=-5.0)


def test_case_a_needs_supercritical_theta():
    with pytest.raises(ll.LimitLawError):
        _case_a(theta=0.9)


def test_case_a_closed_form_needs_k1():
    s = _case_a(U=np.eye(2))
    with pytest.raises(ll.LimitLawError):
        ll.case_a_variance(s)


def test_case_a_two_coordinates_by_hand():
    u = np.array([1.0, 1.0]) / math.sqrt(2)
    s = _case_a(U=u, law=GAU, diag=en.default_diag_law(1.0, 1))
    hd, ho = 2 / 3, 1 / 3
    # 2 * (1/4)(2 + hd) + 4 * (1/4)(1 + ho)
    assert ll.case_a_variance(s) == pytest.approx(0.5 * (2 + hd) + (1 + ho))


@pytest.mark.parametrize("beta", [1, 2])
def test_case_a_monte_carlo_matches_formula(beta):
    u = np.array([0.6, 0.8])
    cplx = beta == 2
    off = en.resolve_entry_law({"kind": "rademacher", "complex": cplx})
    diag = en.default_diag_law(1.0, beta)
    s = ll.CaseALimitSpec(2.0, 1.0, u, off, diag, beta=beta)
    draws = ll.sample_Vj(s, trial_stream(21, beta), size=200_000)[:, 0]
    v = ll.case_a_variance(s)
    se = v * math.sqrt(2 / len(draws))
    assert abs(np.var(draws) - v) <= 5 * se
    assert abs(np.mean(draws)) <= 5 * math.sqrt(v / len(draws))


def test_goe_block_variance():
    assert ll.goe_block_variance(2.0, 1.0) == pytest.approx(4 / 3)
    with pytest.raises(ll.LimitLawError):
        ll.goe_block_variance(1.0, 1.0)


def test_goe_block_scalar_variance():
    d = ll.sample_goe_block(1, 2.0, 1.0, 1, trial_stream(22, 0), size=100_000)[:, 0]
    assert np.var(d) == pytest.approx(8 / 3, rel=0.03)


def test_goe_block_sorted_descending():
    d = ll.sample_goe_block(3, 2.0, 1.0, 2, trial_stream(23, 0), size=50)
    assert d.shape == (50, 3)
    assert np.all(np.diff(d, axis=1) <= 0)


def test_upsilon_gaussian_variances():
    s = ll.UpsilonSpec(2.5, 1.0, 3)
    # g = 1/2, g' = -1/3
    assert s.y_diag_variance() == pytest.approx(2 / 3)
    assert s.y_offdiag_variance() == pytest.approx(1 / 3)
    # g^4 (2 + 2/3)
    assert ll.upsilon_form_variance(s, [1, 0, 0]) == pytest.approx(1 / 6)


def test_upsilon_rejects_support_and_negative_variance():
    with pytest.raises(ll.LimitLawError):
        ll.UpsilonSpec(1.5, 1.0, 2)
    with pytest.raises(ll.LimitLawError):
        ll.UpsilonSpec(2.5, 1.0, 2, kappa4=-20.0)


@pytest.mark.parametrize("beta", [1, 2])
def test_upsilon_form_monte_carlo(beta):
    s = ll.UpsilonSpec(3.0, 1.0, 3, beta=beta)
    u = np.array([1.0, 2.0, 2.0]) / 3
    U = ll.sample_upsilon(s, trial_stream(24, beta), size=100_000)
    q = np.real(np.einsum("i,nij,j->n", u, U, u))
    v = ll.upsilon_form_variance(s, u)
    assert abs(np.var(q) - v) <= 5 * v * math.sqrt(2 / len(q))


def test_upsilon_is_self_adjoint():
    U = ll.sample_upsilon(ll.UpsilonSpec(2.5, 1.0, 4, beta=2), trial_stream(25, 0), size=10)
    assert np.allclose(U, np.conj(np.swapaxes(U, 1, 2)))


def test_kappa4_row_mixture():
    w = en.WindowOverride(1, rows={0: [(0.5, RAD), (0.5, GAU)]})
    # 0.5 * 1 + 0.5 * 3 - 3
    assert ll.kappa4_row(w, 0) == pytest.approx(-1.0)
    assert ll.kappa4_row(w, 3, base_law=RAD) == pytest.approx(-2.0)
    with pytest.raises(ll.LimitLawError):
        ll.kappa4_row(w, 3)


@settings(max_examples=40, deadline=None)
@given(theta=hst.floats(1.05, 10.0), kappa4=hst.floats(-2.0, 5.0))
def test_case_a_variance_is_positive_and_monotone_in_kappa4(theta, kappa4):
    try:
        a = ll.CaseALimitSpec(theta, 1.0, np.array([1.0]), GAU, GAU, kappa4=kappa4)
        b = ll.CaseALimitSpec(theta, 1.0, np.array([1.0]), GAU, GAU, kappa4=kappa4 + 1)
    except ll.LimitLawError:
        return
    assert 0 < ll.case_a_variance(a) < ll.case_a_variance(b)
