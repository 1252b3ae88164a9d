import csv
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_log_partition, brute_quenched_log_partition
from sbm_ising import cw
from sbm_ising import lattice as lat
from sbm_ising.graph import MEAN_FIELD_OFFSET, ConcentrationSpec, ModelParams, sample_graph
from sbm_ising.lattice import CRITICAL, NeighborhoodSpec


def grid_free_energy(beta, alpha, points=401):
    g = np.linspace(-1, 1, points)
    G = cw.free_energy_functional(alpha, beta, (g[:, None], g[None, :]))
    return float(G.max()) / (2 * beta)


def test_log_binomial_examples():
    assert lat.log_binomial(4, 0) == 0.0
    assert abs(lat.log_binomial(4, 2) - math.log(6)) <= 1e-14
    ref = float(mpmath.log(mpmath.binomial(1000, 500)))
    assert abs(lat.log_binomial(1000, 500) - ref) <= 1e-9
    for bad in (-1, 5):
        with pytest.raises(ValueError):
            lat.log_binomial(4, bad)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10**6).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n))))
def test_log_binomial_high_precision(args):
    n, k = args
    mpmath.mp.dps = 40
    ref = mpmath.log(mpmath.binomial(n, k))
    assert abs(lat.log_binomial(n, k) - float(ref)) <= 1e-10


def test_log_binomial_vectorized_symmetric():
    k = np.arange(101)
    v = lat.log_binomial(100, k)
    assert np.array_equal(v, v[::-1])
    assert abs(np.logaddexp.reduce(v) - 100 * math.log(2)) <= 1e-12


@pytest.mark.parametrize("n", [2, 4, 6, 8, 10])
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 4.0])
@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_cw_partition_brute_force(n, beta, alpha):
    log_Z, mu = lat.exact_partition_cw(n, beta, alpha)
    assert abs(log_Z - brute_log_partition(n, beta, alpha)) <= 1e-10
    assert abs(mu.probabilities().sum() - 1) <= 1e-10


def test_cw_partition_infinite_temperature():
    for n in (2, 50, 1000):
        assert abs(lat.exact_partition_cw(n, 0.0, 0.7)[0] - n * math.log(2)) <= 1e-9 * n


@pytest.mark.parametrize("beta,alpha", [(0.5, 1.0), (4.0, 0.5), (4.0, 0.0), (1.3, 0.3)])
def test_measure_reflection_symmetry(beta, alpha):
    _, mu = lat.exact_partition_cw(60, beta, alpha)
    lw = mu.log_weights
    assert np.array_equal(lw, lw[::-1, ::-1])
    assert np.array_equal(lw, lw.T)


def test_streaming_matches_dense():
    for beta, alpha in [(0.5, 0.5), (4.0, 0.2)]:
        dense, _ = lat.exact_partition_cw(3000, beta, alpha, keep_measure=True)
        streamed, none = lat.exact_partition_cw(3000, beta, alpha, keep_measure=False, rows_per_block=97)
        assert none is None
        assert abs(dense - streamed) <= 1e-10 * abs(dense)


def test_free_energy_examples():
    assert abs(lat.finite_free_energy(10 * math.log(2), 10, 1.0) - math.log(2)) <= 1e-15
    with pytest.raises(ValueError):
        lat.finite_free_energy(1.0, 10, 0.0)


@pytest.mark.parametrize("beta,alpha", [(1.0, 1.0), (0.5, 1.0), (0.5, 0.5), (4.0, 0.5)])
def test_free_energy_monotone_convergence(beta, alpha):
    limit = grid_free_energy(beta, alpha)
    errs = [abs(lat.finite_free_energy(lat.exact_partition_cw(n, beta, alpha)[0], n, beta) - limit)
            for n in (100, 400, 1600)]
    assert errs[0] > errs[1] > errs[2]


def test_free_energy_ordered_phase():
    log_Z, _ = lat.exact_partition_cw(1600, 4.0, 0.5)
    assert abs(lat.finite_free_energy(log_Z, 1600, 4.0) - grid_free_energy(4.0, 0.5)) <= 0.01


def test_mass_near_examples():
    _, mu = lat.exact_partition_cw(400, 1.0, 1.0)
    assert abs(mu.mass_near((0, 0), 3.0) - 1) <= 1e-12
    # the origin is not a concentration point at criticality; a subcritical point is
    _, mu = lat.exact_partition_cw(4000, 0.5, 1.0)
    assert mu.mass_near((0, 0), 0.2) >= 0.99
    mg = cw.classify_phase(0.5, 4.0).m_g
    _, mu = lat.exact_partition_cw(400, 4.0, 0.5)
    assert abs(mu.mass_near((mg, mg), 0.1) - 0.5) <= 0.02
    assert mu.mass_near((5, 5), 0.1) == 0.0
    with pytest.raises(ValueError):
        mu.mass_near((0, 0), 0.0)


def test_mass_near_matches_direct_sum():
    _, mu = lat.exact_partition_cw(80, 2.5, 0.4)
    v = mu.values
    P = mu.probabilities()
    for center, r in [((0.3, -0.2), 0.25), ((0.0, 0.0), 0.5), ((0.9, 0.9), 0.05)]:
        d2 = (v[:, None] - center[0]) ** 2 + (v[None, :] - center[1]) ** 2
        assert abs(mu.mass_near(center, r) - P[d2 <= r * r].sum()) <= 1e-12


def test_argmax_and_top_k():
    _, mu = lat.exact_partition_cw(40, 4.0, 0.5)
    pts = mu.argmax_points()
    assert len(pts) == 2 and (pts[0][0], pts[0][1]) == (-pts[1][0], -pts[1][1])
    top = mu.top_k(5)
    assert [t[2] for t in top] == sorted([t[2] for t in top], reverse=True)
    assert (top[0][0], top[0][1]) in pts
    assert len(mu.top_k(10**6)) == 21 * 21


def test_marginals_and_moments():
    _, mu = lat.exact_partition_cw(100, 0.8, 0.6)
    assert np.allclose(mu.marginal(0), mu.marginal(1), atol=1e-15)
    atoms, masses = mu.scaled_marginal(0.5, 0)
    assert np.allclose(atoms, 10 * mu.values)
    S = mu.second_moments()
    P = mu.probabilities()
    v = mu.values
    assert abs(S[0, 1] - (P * np.multiply.outer(v, v)).sum()) <= 1e-14


def test_csv_export(tmp_path):
    _, mu = lat.exact_partition_cw(6, 1.0, 0.5)
    path = tmp_path / "lattice.csv"
    mu.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["m1", "m2", "probability"]
    assert len(rows) == 1 + 16
    assert abs(sum(float(r[2]) for r in rows[1:]) - 1) <= 1e-12


def test_lattice_size_guard():
    with pytest.raises(ValueError):
        lat.exact_partition_cw(100_002, 1.0, 0.5)
    with pytest.raises(ValueError):
        lat.exact_partition_cw(7, 1.0, 0.5)


# quenched enumeration

def test_gray_code_bond_sums_match_direct():
    g = sample_graph(ModelParams(10, 1.0, 0.5, 0.5), 4)
    bonds = lat.configuration_bond_sums(g)
    e = np.concatenate([g.intra, g.inter])
    rng = np.random.default_rng(0)
    for code in rng.integers(0, 1 << 10, 50):
        s = np.array([-1 if (code >> j) & 1 else 1 for j in range(10)])
        assert bonds[code] == int((s[e[:, 0]] * s[e[:, 1]]).sum())


def test_code_block_sums():
    s1, s2 = lat.code_block_sums(4, np.array([0, 1, 3, 4, 15]))
    assert s1.tolist() == [2, 0, -2, 2, -2]
    assert s2.tolist() == [2, 2, 2, 0, -2]


def test_quenched_partition_examples():
    g = sample_graph(ModelParams(10, 1.0, 0.5, 0.5), 1)
    assert abs(lat.exact_partition_sbm(g, 0.0) - 10 * math.log(2)) <= 1e-12
    for n in (2, 8):
        g = sample_graph(ModelParams(n, 1.0, 1.0, 1.0), 0)
        for beta in (0.5, 1.0, 3.0):
            cw_value = lat.exact_partition_cw(n, beta, 1.0)[0] - beta * MEAN_FIELD_OFFSET
            assert abs(lat.exact_partition_sbm(g, beta) - cw_value) <= 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_quenched_partition_brute_force(seed):
    g = sample_graph(ModelParams(10, 1.0, 0.6, 0.3), seed)
    for beta in (0.5, 2.0):
        assert abs(lat.exact_partition_sbm(g, beta) - brute_quenched_log_partition(g, beta)) <= 1e-10


def test_quenched_partition_sandwich():
    params = ModelParams(12, 1.0, 0.5, 0.5)
    rho = ConcentrationSpec.default(params).rho
    beta = 1.0
    cw_value = lat.exact_partition_cw(12, beta, 0.5)[0] - beta * MEAN_FIELD_OFFSET
    bound = 1.5 * beta * 12 * rho
    for seed in range(20):
        g = sample_graph(params, seed)
        assert abs(lat.exact_partition_sbm(g, beta) - cw_value) <= bound


def test_enumeration_guard():
    g = sample_graph(ModelParams(26, 1.0, 0.1, 0.5), 0)
    with pytest.raises(ValueError):
        lat.exact_partition_sbm(g, 1.0)


# asymptotics

def test_neighborhood_spec_ranges():
    NeighborhoodSpec(0.34, 0.21)
    for d, dc in [(0.3, 0.225), (0.5, 0.225), (0.4, 0.2), (0.4, 0.25)]:
        with pytest.raises(ValueError):
            NeighborhoodSpec(d, dc)


def test_prefactor_unique_maximum_converges():
    # radius n^(1/2 - delta) in x must grow for the sum to capture the Gaussian
    spec = NeighborhoodSpec(delta=0.34)
    D = lat.asymptotic_prefactor_D(10_000, 0.1, 0.5, 0, spec)
    assert abs(D / lat.limit_prefactor_D(0.1, 0.5, 0) - 1) <= 0.02


def test_prefactor_limit_closed_form():
    beta, alpha = 1.0, 0.5
    Q = -0.5 * cw.hessian(alpha, beta, (0.0, 0.0)).as_array()
    assert abs(lat.limit_prefactor_D(beta, alpha, 0) - 2 * math.pi / math.sqrt(np.linalg.det(Q))) <= 1e-12
    one_dim = math.gamma(0.25) / (2 * 2 ** 0.25)
    assert abs(lat.limit_prefactor_D(1.0, 1.0, CRITICAL) - one_dim ** 2) <= 1e-12
    assert abs(one_dim ** 2 - 2.3237) <= 1e-4


def test_prefactor_critical_converges():
    alpha = 0.5
    beta = cw.critical_beta(alpha)
    D = lat.asymptotic_prefactor_D(10_000, beta, alpha, CRITICAL)
    assert abs(D / lat.limit_prefactor_D(beta, alpha, CRITICAL) - 1) <= 0.02


def test_prefactor_symmetric_pair_equal():
    for beta, alpha in [(4.0, 0.5), (4.0, 0.01), (3.0, 0.0)]:
        d1 = lat.asymptotic_prefactor_D(2000, beta, alpha, 1)
        d2 = lat.asymptotic_prefactor_D(2000, beta, alpha, 2)
        assert d1 == d2
    d3 = lat.asymptotic_prefactor_D(2000, 4.0, 0.01, 3)
    assert d3 == lat.asymptotic_prefactor_D(2000, 4.0, 0.01, 4)


def test_prefactor_regime_mismatch():
    with pytest.raises(ValueError):
        lat.asymptotic_prefactor_D(100, 0.5, 0.5, 1)
    with pytest.raises(ValueError):
        lat.asymptotic_prefactor_D(100, 4.0, 0.5, 3)
    with pytest.raises(ValueError):
        lat.asymptotic_prefactor_D(100, 4.0, 0.5, CRITICAL)


@pytest.mark.parametrize("n,beta,alpha,tol", [
    (2000, 1.0, 1.0, 1e-3),
    (2000, 4.0, 0.01, 1e-3),
    (4000, 4.0 / 3.0, 0.5, 1e-2),
    (2000, 0.5, 0.5, 1e-3),
])
def test_approx_partition_matches_exact(n, beta, alpha, tol):
    exact, _ = lat.exact_partition_cw(n, beta, alpha, keep_measure=False)
    approx = lat.approx_partition(n, beta, alpha)
    assert abs(approx - exact) / abs(exact) <= tol


def test_mixture_weights():
    w = lat.mixture_weights(0.0)
    assert (w.w_sym, w.w_asym) == (0.25, 0.25)
    w = lat.mixture_weights(math.inf)
    assert (w.w_sym, w.w_asym) == (0.5, 0.0)
    w = lat.mixture_weights(math.log(3))
    assert abs(w.w_sym - 3 / 8) <= 1e-15 and abs(w.w_asym - 1 / 8) <= 1e-15
    with pytest.raises(ValueError):
        lat.mixture_weights(-0.1)
    with pytest.raises(ValueError):
        lat.MixtureWeights(0.3, 0.3, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 700))
def test_mixture_weights_sum(c):
    w = lat.mixture_weights(c)
    assert abs(2 * w.w_sym + 2 * w.w_asym - 1) <= 1e-12
    assert w.w_sym >= w.w_asym


def test_well_mass_ratio_matches_laplace_prediction():
    n, beta = 4000, 4.0
    for c in (0.5, 1.0, 2.0):
        alpha = c / n
        _, mu = lat.exact_partition_cw(n, beta, alpha)
        ratio = lat.well_mass_ratio(mu)
        assert abs(ratio / lat.predicted_mass_ratio(n, beta, alpha) - 1) <= 1e-3


def test_well_mass_ratio_requires_four_maxima():
    _, mu = lat.exact_partition_cw(100, 0.5, 0.5)
    with pytest.raises(ValueError):
        lat.well_mass_ratio(mu)
