import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from sbm_ising import cw
from sbm_ising import limits as lim
from sbm_ising.experiments import critical_marginal_ks
from sbm_ising.lattice import exact_partition_cw


def test_sigma_examples():
    s = lim.sigma_matrix(1.0, 0.0)
    assert (s.sigma11, s.sigma12, s.sigma22) == (4.0, 0.0, 4.0)
    s = lim.sigma_matrix(0.5, 1.0)
    assert abs(s.sigma11 - 3) <= 1e-14 and abs(s.sigma12 - 1) <= 1e-14
    for beta in (0.1, 0.7, 1.5, 1.99):
        assert lim.sigma_matrix(beta, 0.0).sigma12 == 0.0


def test_sigma_domain():
    with pytest.raises(ValueError):
        lim.sigma_matrix(1.0, 1.0)
    with pytest.raises(ValueError):
        lim.sigma_matrix(4 / 3, 0.5)
    with pytest.raises(ValueError):
        lim.sigma_matrix(0.0, 0.5)
    with pytest.raises(ValueError):
        lim.sigma_matrix(0.5, 1.2)


def test_sigma_limits():
    s = lim.sigma_matrix(1e-8, 0.7).matrix
    assert np.max(np.abs(s - 2 * np.eye(2))) <= 1e-6
    for beta in (0.3, 0.9):
        s = lim.sigma_matrix(beta, 1 - 1e-9)
        assert abs(s.sigma12 / s.sigma11 - beta / (2 - beta)) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0.001, 0.99))
def test_sigma_is_inverse_curvature(alpha_hat, frac):
    # independent route: inverse of minus half the Hessian of G at the origin
    beta = frac * cw.critical_beta(alpha_hat)
    S = lim.sigma_matrix(beta, alpha_hat)
    Q = -0.5 * cw.hessian(alpha_hat, beta, (0.0, 0.0)).as_array()
    assert np.allclose(S.matrix, np.linalg.inv(Q), rtol=1e-9, atol=1e-12 * S.sigma11)
    assert S.sigma11 == S.sigma22
    S.cholesky()


def test_sigma_degenerates_at_criticality():
    alpha = 0.5
    bc = cw.critical_beta(alpha)
    dets = [np.linalg.det(lim.sigma_matrix(bc * f, alpha).matrix) for f in (0.9, 0.99, 0.999)]
    normalized = [d / lim.sigma_matrix(bc * f, alpha).sigma11 ** 2 for d, f in zip(dets, (0.9, 0.99, 0.999))]
    assert normalized[0] > normalized[1] > normalized[2] and normalized[2] < 1e-2


def test_cholesky_rejects_degenerate():
    g = lim.GaussianLimit(1.0, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        g.cholesky()


def test_sigma_against_lattice_moments():
    _, mu = exact_partition_cw(4000, 0.6, 0.8)
    emp = 4000 * mu.second_moments()
    assert np.allclose(emp, lim.sigma_matrix(0.6, 0.8).matrix, rtol=0.01)


# quartic law

def test_quartic_normalization_two_routes():
    q = lim.QuarticLimit()
    # closed form: integral of exp(-a t^4) over R is Gamma(1/4) / (2 a^(1/4))
    closed = math.gamma(0.25) / (2 * 2 ** 0.25)
    assert abs(q.line_integral / closed - 1) <= 1e-10
    # series route: Gauss-Hermite-free high-order rule on a truncated interval
    x, w = np.polynomial.legendre.leggauss(400)
    L = q.support
    alt = L * np.sum(w * np.exp(-2 * (L * x) ** 4))
    assert abs(alt / closed - 1) <= 1e-8
    assert abs(q.normalization - closed ** -2) <= 1e-12


def test_quartic_density_integrates_to_one():
    q = lim.QuarticLimit()
    L = q.support
    total, _ = integrate.dblquad(lambda y, x: q.density((x, y)), -L, L, -L, L, epsabs=1e-12)
    assert abs(total - 1) <= 1e-8


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_quartic_density_symmetry(x1, x2):
    f = lim.quartic_density
    assert f((x1, x2)) == f((-x1, -x2)) == f((x2, x1))
    assert f((x1, x2)) <= f((0.0, 0.0))


def test_quartic_density_peak():
    assert lim.quartic_density((0.0, 0.0)) == lim.default_quartic().normalization


def test_quartic_cdf_against_incomplete_gamma():
    q = lim.QuarticLimit()
    t = np.linspace(-2.5, 2.5, 3001)
    # P(|T| <= t) = P(Gamma(1/4) <= 2 t^4)
    ref = 0.5 + 0.5 * np.sign(t) * special.gammainc(0.25, 2 * t ** 4)
    assert np.max(np.abs(q.cdf(t) - ref)) <= 1e-6
    assert q.cdf(-100.0) == 0.0 and q.cdf(100.0) == 1.0


def test_quartic_moments():
    q = lim.QuarticLimit()
    assert abs(q.moment(4) - 1 / 8) <= 1e-12
    assert abs(q.moment(1)) <= 1e-14
    for a in (1 / 24, 1 / 12, 2.0):
        r = lim.QuarticLimit(a)
        assert abs(r.moment(4) - 1 / (4 * a)) <= 1e-10 / a


def test_quartic_sampler():
    x = lim.sample_quartic(10 ** 6, 3)
    se = math.sqrt(lim.default_quartic().moment(2) / 10 ** 6)
    assert np.all(np.abs(x.mean(axis=0)) <= 4 * se)
    m4 = (x ** 4).mean(axis=0)
    assert np.all(np.abs(m4 / 0.125 - 1) <= 0.01)
    assert abs(np.corrcoef(x.T)[0, 1]) <= 4 / 1000


def test_quartic_sampler_self_consistency():
    a = lim.sample_quartic(10 ** 5, 1)
    b = lim.sample_quartic(10 ** 5, 2)
    for j in (0, 1):
        assert stats.ks_2samp(a[:, j], b[:, j]).statistic <= 0.01
    assert np.array_equal(a, lim.sample_quartic(10 ** 5, 1))
    with pytest.raises(ValueError):
        lim.sample_quartic(0, 1)


def test_quartic_sampler_other_coefficient():
    q = lim.QuarticLimit(1 / 12)
    x = q.sample(20_000, 4)
    assert max(lim.ks_marginal(x, q)) <= lim.ks_critical_value(20_000)


# statistics

def test_covariance_examples():
    assert np.array_equal(lim.empirical_covariance(np.ones((10, 2))), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        lim.empirical_covariance(np.ones((1, 2)))
    S = lim.sigma_matrix(1.0, 0.5)
    x = S.sample(10 ** 5, 9)
    C = lim.empirical_covariance(x)
    assert C[0, 1] == C[1, 0]
    assert np.all(np.abs(C / S.matrix - 1) <= 0.05)


def test_ks_examples():
    S = lim.sigma_matrix(1.0, 0.5)
    x = S.sample(10 ** 4, 5)
    crit = lim.ks_critical_value(10 ** 4)
    assert abs(crit - 1.63 / 100) <= 3e-4
    assert max(lim.ks_marginal(x, S)) <= crit
    unit = lim.GaussianLimit(1.0, 0.0, 1.0, 0.0, 0.0)
    z = unit.sample(10 ** 4, 8)
    d = lim.ks_marginal(z + 1.0, unit)
    gap = 2 * stats.norm.cdf(0.5) - 1
    assert min(d) > 0.3 and max(abs(v - gap) for v in d) <= 0.02
    q = lim.default_quartic()
    assert max(lim.ks_marginal(q.sample(10 ** 4, 6), q)) <= crit


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(-5, 5))
def test_ks_range_and_permutation_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((200, 2)) + shift
    ref = lim.sigma_matrix(0.5, 0.5)
    d = lim.ks_marginal(x, ref)
    assert all(0 <= v <= 1 for v in d)
    assert lim.ks_marginal(x[rng.permutation(200)], ref) == d
    C = lim.empirical_covariance(x)
    assert np.allclose(lim.empirical_covariance(x[::-1]), C, rtol=1e-12, atol=1e-14)


def test_ks_statistic_matches_scipy():
    x = np.random.default_rng(0).standard_normal(500)
    assert abs(lim.ks_statistic(x, stats.norm.cdf) - stats.kstest(x, "norm").statistic) <= 1e-14


def test_lattice_ks_removes_discretization_jumps():
    # rounding Gaussian data to a lattice inflates the plain statistic but not the lattice-aware one
    h = 0.2
    rng = np.random.default_rng(1)
    x = h * np.round(rng.standard_normal(20_000) / h)
    plain = lim.ks_statistic(x, stats.norm.cdf)
    aware = lim.ks_statistic(x, stats.norm.cdf, spacing=h)
    assert plain > 0.03
    assert aware <= lim.ks_critical_value(20_000)


def test_ks_discrete_law():
    atoms = np.array([-1.0, 1.0])
    masses = np.array([0.5, 0.5])
    assert abs(lim.ks_discrete_law(atoms, masses, stats.norm.cdf) - max(0.5 - stats.norm.cdf(-1), stats.norm.cdf(-1))) <= 1e-14


def test_critical_marginal_quartic_coefficients():
    # the exact critical marginals match exp(-x^4/24) at alpha = 0 and exp(-x^4/12) otherwise
    assert max(critical_marginal_ks(4000, 0.0, lim.QuarticLimit(1 / 24))) <= 0.01
    assert max(critical_marginal_ks(4000, 0.5, lim.QuarticLimit(1 / 12))) <= 0.01
    assert max(critical_marginal_ks(4000, 1.0, lim.QuarticLimit(1 / 12))) <= 0.01
