"""Verification experiments for the limit theorems.

Every ``verify_*`` function returns a report dictionary whose leading keys are
``test, n, beta, alpha, statistic, threshold, pass``; ``status`` and
``details`` follow. A run that would exceed its resource budget is reported
with status ``SKIPPED`` and ``pass = None``.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from . import cw
from .glauber import ChainSettings, run_chain
from .graph import ConcentrationSpec, ModelParams, delta_bound_rate, sample_graph
from .lattice import (CRITICAL, MAX_LATTICE_N, NeighborhoodSpec, asymptotic_prefactor_D,
                      exact_partition_cw, limit_prefactor_D, maximizer_points,
                      predicted_mass_ratio, well_mass_ratio)
from .limits import (QuarticLimit, default_quartic, empirical_covariance, ks_critical_value,
                     ks_discrete_law, ks_marginal, sigma_matrix)

# largest dense lattice the verifiers will build ((n/2 + 1)^2 points)
DENSE_N_LIMIT = 10_000
DEFAULT_UPDATE_BUDGET = 5_000_000_000


def report(test, n, beta, alpha, statistic, threshold, passed, details=None, status=None) -> dict:
    if status is None:
        status = "PASS" if passed else "FAIL"
    return {
        "test": test,
        "n": n,
        "beta": beta,
        "alpha": alpha,
        "statistic": statistic,
        "threshold": threshold,
        "pass": passed,
        "status": status,
        "details": details or {},
    }


def skipped(test, n, beta, alpha, threshold, reason) -> dict:
    return report(test, n, beta, alpha, None, threshold, None, {"reason": reason}, "SKIPPED")


def _max_relative_error(emp, ref) -> float:
    """Largest entrywise relative error over the nonzero entries of ``ref``."""
    mask = ref != 0
    return float(np.max(np.abs(emp[mask] / ref[mask] - 1.0)))


def _lattice_too_big(n):
    return n > DENSE_N_LIMIT


def verify_slln(n: int, beta: float, alpha: float, radius: float = 0.1,
                threshold: float = 0.01) -> dict:
    """Mass of the exact lattice law outside the ``radius``-balls around the maximizers."""
    test = "SLLN"
    if _lattice_too_big(n):
        return skipped(test, n, beta, alpha, threshold, f"lattice for n={n} exceeds {DENSE_N_LIMIT}")
    _, mu = exact_partition_cw(n, beta, alpha, keep_measure=True)
    point = cw.classify_phase(alpha, beta)
    centers = list(maximizer_points(point).values())
    v = mu.values
    P = mu.probabilities()
    near = np.zeros(P.shape, dtype=bool)
    for c1, c2 in centers:
        near |= (v[:, None] - c1) ** 2 + (v[None, :] - c2) ** 2 <= radius * radius
    outside = float(P[~near].sum())
    return report(test, n, beta, alpha, outside, threshold, outside <= threshold,
                  {"regime": point.regime.value, "radius": radius,
                   "maximizers": [list(c) for c in centers]})


def verify_mixture(c: float, n: int = 4000, beta: float = 4.0, tolerance: float = 0.10,
                   radius: Optional[float] = None) -> dict:
    """Antisymmetric-to-symmetric well mass ratio at ``alpha = c/n`` against ``exp(-c)``."""
    test = "MIXTURE"
    alpha = c / n
    if _lattice_too_big(n):
        return skipped(test, n, beta, alpha, tolerance, f"lattice for n={n} exceeds {DENSE_N_LIMIT}")
    if radius is None:
        radius = n ** -0.4
    _, mu = exact_partition_cw(n, beta, alpha, keep_measure=True)
    ratio = well_mass_ratio(mu, radius)
    target = math.exp(-c)
    rel = abs(ratio / target - 1.0)
    predicted = predicted_mass_ratio(n, beta, alpha)
    return report(test, n, beta, alpha, rel, tolerance, rel <= tolerance,
                  {"c": c, "ratio": ratio, "target": target, "radius": radius,
                   "laplace_prediction": predicted,
                   "gap_exponent": 0.5 * n * cw.epsilon_gap(alpha, beta)})


def verify_clt_lattice(n: int, beta: float, alpha: float, tolerance: float = 0.05) -> dict:
    """Exact ``n E[m_i m_j]`` on the lattice against the limit covariance."""
    test = "CLT"
    if _lattice_too_big(n):
        return skipped(test, n, beta, alpha, tolerance, f"lattice for n={n} exceeds {DENSE_N_LIMIT}")
    _, mu = exact_partition_cw(n, beta, alpha, keep_measure=True)
    emp = n * mu.second_moments()
    sigma = sigma_matrix(beta, alpha).matrix
    stat = _max_relative_error(emp, sigma)
    return report(test, n, beta, alpha, stat, tolerance, stat <= tolerance,
                  {"mode": "cw", "empirical": emp.tolist(), "sigma": sigma.tolist()})


def verify_clt_glauber(n: int, beta: float, alpha: float, p: float, num_samples: int = 10_000,
                       seed: int = 0, graph_seed: int = 1, thinning_sweeps: int = 10,
                       burn_in_sweeps: Optional[int] = None, tolerance: float = 0.10,
                       level: float = 0.01, num_chains: int = 1, threads: int = 1,
                       update_budget: int = DEFAULT_UPDATE_BUDGET) -> dict:
    """Glauber samples of ``sqrt(n) m`` on one sampled graph against the Gaussian limit.

    Passes when every covariance entry is within ``tolerance`` (relative) and
    both lattice-aware marginal KS statistics are below the ``level`` critical
    value.
    """
    test = "CLT"
    settings = ChainSettings.defaults(n, beta, alpha, thinning_sweeps=thinning_sweeps,
                                      num_samples=num_samples, seed=seed)
    if burn_in_sweeps is not None:
        settings = ChainSettings(burn_in_sweeps, thinning_sweeps, num_samples, seed)
    updates = num_chains * n * (settings.burn_in_sweeps + num_samples * thinning_sweeps)
    if updates > update_budget:
        return skipped(test, n, beta, alpha, tolerance,
                       f"{updates} updates exceed the budget of {update_budget}")
    g = sample_graph(ModelParams(n, beta, p, alpha), graph_seed)
    batch = run_chain(g, beta, settings, 0.5, num_chains=num_chains, threads=threads)
    limit = sigma_matrix(beta, alpha)
    emp = empirical_covariance(batch)
    rel = _max_relative_error(emp, limit.matrix)
    d1, d2 = ks_marginal(batch, limit, spacing=batch.lattice_spacing())
    crit = ks_critical_value(batch.num_samples, level)
    passed = rel <= tolerance and max(d1, d2) <= crit
    return report(test, n, beta, alpha, rel, tolerance, passed,
                  {"mode": "sbm", "p": p, "graph_seed": graph_seed, "chain_seed": seed,
                   "num_samples": batch.num_samples, "burn_in_sweeps": settings.burn_in_sweeps,
                   "thinning_sweeps": thinning_sweeps, "empirical": emp.tolist(),
                   "sigma": limit.matrix.tolist(), "ks": [d1, d2], "ks_threshold": crit})


def critical_marginal_ks(n: int, alpha: float, limit: Optional[QuarticLimit] = None) -> tuple[float, float]:
    """KS distances between the exact critical lattice marginals of ``n^(1/4) m`` and a quartic law."""
    limit = limit or default_quartic()
    beta = cw.critical_beta(alpha)
    _, mu = exact_partition_cw(n, beta, alpha, keep_measure=True)
    out = []
    for axis in (0, 1):
        atoms, masses = mu.scaled_marginal(0.25, axis)
        out.append(ks_discrete_law(atoms, masses, limit.cdf))
    return out[0], out[1]


def verify_critical(n: int, alpha: float, tolerance: float = 0.05, d_n: int = 10_000,
                    d_tolerance: float = 0.02) -> dict:
    """Critical lattice marginals against the quartic law, plus the critical prefactor."""
    test = "CRITICAL"
    beta = cw.critical_beta(alpha)
    if _lattice_too_big(n) or d_n > MAX_LATTICE_N:
        return skipped(test, n, beta, alpha, tolerance, "lattice size exceeds the limit")
    d1, d2 = critical_marginal_ks(n, alpha)
    stat = max(d1, d2)
    Dn = asymptotic_prefactor_D(d_n, beta, alpha, CRITICAL, NeighborhoodSpec())
    D_lim = limit_prefactor_D(beta, alpha, CRITICAL)
    d_rel = abs(Dn / D_lim - 1.0)
    passed = stat <= tolerance and d_rel <= d_tolerance
    return report(test, n, beta, alpha, stat, tolerance, passed,
                  {"ks": [d1, d2], "prefactor_n": d_n, "prefactor": Dn, "prefactor_limit": D_lim,
                   "prefactor_rel_error": d_rel, "prefactor_tolerance": d_tolerance})


def verify_concentration(n: int = 400, p: float = 0.5, alpha: float = 0.5, num_graphs: int = 200,
                         num_configs: int = 50, seed: int = 0, rho: Optional[float] = None,
                         threshold: float = 0.99, threads: int = 1) -> dict:
    """Fraction of (graph, configuration) draws with ``|delta_n| <= 1.5 n rho``."""
    test = "CONCENTRATION"
    params = ModelParams(n, 1.0, p, alpha)
    spec = ConcentrationSpec(rho) if rho is not None else ConcentrationSpec.default(params)
    rate = delta_bound_rate(params, spec, num_graphs, num_configs, seed, threads)
    return report(test, n, None, alpha, rate, threshold, rate >= threshold,
                  {"p": p, "rho": spec.rho, "admissible_rho": spec.is_admissible(params),
                   "num_graphs": num_graphs, "num_configs": num_configs, "seed": seed})
