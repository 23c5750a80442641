import math

import numpy as np
import pytest

from wignerlab import ensemble as en
from wignerlab import outlier as ol
from wignerlab import spectral as sp
from wignerlab.rng import trial_stream


def _loc(spikes, N, block=None):
    return en.build_deformation(spikes, en.Localized(block), N)


def test_predict_single_spike():
    p = ol.predict_outliers(_loc([(2, 1)], 10))
    assert p.J_plus == 1 and p.k_plus == 1
    s = p.positive[0]
    assert s.rho == 2.5 and s.indices == (0,)
    assert s.c_theta == pytest.approx(4 / 3) and s.scale == pytest.approx(3.0)


def test_predict_subcritical_sticks_to_edge():
    p = ol.predict_outliers(_loc([(0.5, 3)], 10))
    assert p.J_plus == 0 and p.J_minus == 0
    assert p.expected_top() == 2.0
    assert p.top_edge_index == 0


def test_predict_both_sides():
    N = 12
    p = ol.predict_outliers(_loc([(3, 2), (-2, 1)], N))
    (pos,), (neg,) = p.positive, p.negative
    assert pos.rho == pytest.approx(3 + 1 / 3) and pos.indices == (0, 1)
    assert neg.rho == pytest.approx(-2.5) and neg.indices == (N - 1,)
    assert (p.J_plus, p.J_minus, p.k_plus) == (1, 1, 2)
    assert p.top_edge_index == 2 and p.bottom_edge_index == N - 2


def test_predict_index_ranges_partition():
    p = ol.predict_outliers(_loc([(5, 1), (3, 2), (2, 3), (0.7, 1)], 20))
    idx = [i for s in p.positive for i in s.indices]
    assert idx == list(range(p.k_plus))
    rhos = [s.rho for s in p.positive]
    assert all(a > b for a, b in zip(rhos, rhos[1:]))


def test_xi_hand_value():
    xi = ol.xi_matrix(np.zeros((4, 4)), np.eye(4)[:, :1], 2.5, theta=2.0)
    # sqrt(4) (1/2.5 - 1/2)
    assert xi.matrix[0, 0] == pytest.approx(-0.2, abs=1e-15)
    assert xi.asymmetry == 0.0


def test_xi_two_columns_diagonal():
    xi = ol.xi_matrix(np.zeros((5, 5)), np.eye(5)[:, :2], 3.0, theta=2.0)
    assert xi.matrix[0, 1] == 0.0 and xi.matrix[1, 0] == 0.0


def test_xi_rejects_spectrum():
    with pytest.raises(sp.SpectralError):
        ol.xi_matrix(np.diag([2.5, 0.0]), np.eye(2)[:, :1], 2.5, theta=2.0)


@pytest.mark.slow
def test_xi_bounded_in_probability():
    N, theta = 200, 2.0
    U = np.eye(N)[:, :2]
    spec = en.WignerSpec(N)
    hits = 0
    for t in range(1000):
        X = en.sample_wigner(spec, trial_stream(9, t))
        xi = ol.xi_matrix(X, U, sp.rho(theta), theta=theta)
        hits += np.max(np.abs(xi.matrix)) < 10
    assert hits >= 990


def test_master_det_hand_values():
    D = _loc([(2, 1)], 2)
    X = np.zeros((2, 2))
    # f(x) = 1 - 2/x
    assert ol.master_det(X, D, 2.0) == pytest.approx(0.0, abs=1e-15)
    assert ol.master_det(X, D, 1.0) == pytest.approx(-1.0)
    assert ol.master_det(X, D, 1e6) == pytest.approx(1.0, abs=1e-5)


def test_master_det_vanishes_on_new_eigenvalues():
    for t in range(20):
        rng = trial_stream(5, t)
        X = en.sample_wigner(en.WignerSpec(16), rng)
        D = en.build_deformation([(3, 1), (1.5, 1), (-2, 1)], en.Delocalized(), 16, rng)
        M = en.assemble_dense(X, D)
        s, w = sp.eigvals_desc(X), sp.eigvals_desc(M)
        for mu in w:
            if np.min(np.abs(s - mu)) > 1e-6:
                d = abs(ol.master_det(X, D, mu, spectrum=s))
                assert d <= 1e-8 * (1 + ol.master_det_condition(X, D, mu, spectrum=s))
        for x in (w[1:] + w[:-1]) / 2:
            if np.min(np.abs(s - x)) > 1e-6:
                assert abs(ol.master_det(X, D, x, spectrum=s)) > 1e-4


def test_z_matrix_trivial_and_hand():
    D = _loc([(2, 1), (-3, 1)], 4)
    assert np.allclose(ol.z_matrix(D, np.zeros((2, 2)), 4), np.diag([0.5, -1 / 3]))
    D1 = _loc([(2, 1)], 2)
    # Xi = sqrt2 (1/2.5 - g(2.5)) = -0.1 sqrt2, so Z = 1/2 + 0.1
    Z = ol.z_matrix_at(np.zeros((2, 2)), D1, 2.5)
    assert Z[0, 0] == pytest.approx(0.6, abs=1e-15)


def test_z_matrix_consistent_with_master_det():
    rng = trial_stream(8, 0)
    X = en.sample_wigner(en.WignerSpec(16), rng)
    D = en.build_deformation([(4, 1), (3, 1)], en.Delocalized(), 16, rng)
    M = en.assemble_dense(X, D)
    s = sp.eigvals_desc(X)
    for x in [3.7, 2.6, -3.1]:
        Z = ol.z_matrix_at(X, D, x, spectrum=s)
        g = sp.stieltjes(x)
        lhs = ol.master_det(X, D, x, spectrum=s)
        rhs = np.prod(D.thetas) * np.linalg.det(Z - g * np.eye(2))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)
    for mu in sp.eigvals_desc(M)[:2]:  # outliers of M off the support
        Z = ol.z_matrix_at(X, D, mu, spectrum=s)
        assert np.min(np.abs(np.linalg.eigvalsh(Z) - sp.stieltjes(mu))) <= 1e-8


def test_prop1_residual_hand_trace():
    N = 4
    D = _loc([(2, 1)], N)
    X = np.zeros((N, N))
    M = en.assemble_dense(X, D)
    sd = sp.eig_sym(M)
    # sqrt4 (2 - 2.5) + (-0.2) / (-1/3)
    r = ol.prop1_residuals(sd, X, D, 0)
    assert r[0] == pytest.approx(-0.4, abs=1e-14)


def test_prop1_rejects_subcritical():
    D = _loc([(0.5, 1)], 4)
    with pytest.raises(ValueError):
        ol.prop1_residuals(np.zeros(4), np.eye(4) * 0.1, D, 0)


@pytest.mark.slow
def test_prop1_median_small_at_1000():
    N = 1000
    D = _loc([(2, 1)], N)
    spec = en.WignerSpec(N)
    res = []
    for t in range(60):
        X = en.sample_wigner(spec, trial_stream(11, t))
        M = en.assemble_dense(X, D)
        w = sp.eig_sym(M, subset=(0, 0)).eigenvalues
        res.append(abs(ol.prop1_residuals(w, X, D, 0)[0]))
    assert np.median(res) < 0.5


@pytest.mark.slow
def test_outlier_count_frequency():
    N = 1000
    D = _loc([(3, 2), (2, 1)], N)
    spec = en.WignerSpec(N)
    good = 0
    for t in range(100):
        M = en.assemble_dense(en.sample_wigner(spec, trial_stream(12, t)), D)
        w = sp.eig_sym(M, subset=(0, 4)).eigenvalues
        good += int(np.sum(w > 2.25)) == 3
    assert good >= 99


def test_zeta_closed_form():
    N = 4
    e1 = np.eye(N)[0]
    vals = ol.zeta_values(np.zeros((N, N)), [3.0], e1, e1)
    # -sqrt4 (1/9 + g'(3)), g = (3 - sqrt5)/2, g' = g/(2g - 3)
    assert vals[0] == pytest.approx(0.11941856427765152, abs=1e-14)
    e2 = np.eye(N)[1]
    assert ol.zeta_values(np.zeros((N, N)), [3.0, 4.0], e1, e2).tolist() == [0.0, 0.0]


def test_window_properties():
    D = _loc([(3, 1)], 500)
    w = ol.make_window(D, 1.0, 500, 0.25)
    assert w.delta == 0.25 and w.L == pytest.approx(5.5)
    assert w.grid[0] == pytest.approx(2.5) and w.grid[-1] == pytest.approx(5.5)
    assert np.all(np.diff(w.grid) <= 500 ** (-1 / 3) + 1e-12)
    assert 3 > 1 / sp.stieltjes(2 + 2 * w.delta)
    x = np.linspace(-3, 3, 601)
    h = w.h(x)
    assert np.all(h[np.abs(x) <= 2 + 0.125] == 1.0)
    assert np.all(h[np.abs(x) >= 2.25] == 0.0)
    assert np.all((h >= 0) & (h <= 1))


def test_window_shrinks_delta():
    # theta = 2 sits exactly on the boundary 1/g(2.5) = 2
    assert ol.make_window(_loc([(2, 1)], 100), 1.0, 100, 0.25).delta == 0.125
    D = _loc([(1.1, 1)], 100)
    w = ol.make_window(D, 1.0, 100)
    assert w.delta < 0.25
    assert 1.1 > 1 / sp.stieltjes(2 + 2 * w.delta)


def test_zeta_scan_empty_grid():
    D = _loc([(2, 1)], 4)
    w = ol.ResolventWindow(1.0, 0.25, 4.5, np.array([]))
    with pytest.raises(ValueError):
        ol.zeta_scan(np.zeros((4, 4)), w, np.eye(4)[0], np.eye(4)[0])
