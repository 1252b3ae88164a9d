"""Exact computations on the magnetization lattice.

With ``l = n/2`` spins per community, the magnetizations take the values
``m = (2k - l)/l`` for ``k = 0..l`` up spins, and the averaged model's
partition function collapses to a double sum over ``(k1, k2)``:

    Z_bar = sum_{k1,k2} C(l,k1) C(l,k2) exp(beta n/2 * E_alpha(m1, m2)).

Everything is accumulated in log space.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np
from scipy.special import logsumexp

from . import cw
from .graph import BlockGraph

MAX_LATTICE_N = 100_000
MAX_ENUM_N = 24
# above this many lattice points the full weight matrix is not kept
DENSE_LIMIT = 25_000_000
CRITICAL = "CRITICAL"

_HALF_LOG_2PI = np.longdouble(0.5) * np.log(np.longdouble(2) * np.longdouble(np.pi))


# ---------------------------------------------------------------------------
# binomials
# ---------------------------------------------------------------------------

def _log_factorial_ld(x: np.ndarray) -> np.ndarray:
    """``log(x!)`` in extended precision for integer arrays ``x >= 0``."""
    x = np.asarray(x, dtype=np.int64)
    out = np.empty(x.shape, dtype=np.longdouble)
    small = x < 30
    out[small] = [math.lgamma(v + 1) for v in x[small]]
    z = x[~small].astype(np.longdouble) + 1
    zi = 1 / z
    zi2 = zi * zi
    series = zi * (np.longdouble(1) / 12 - zi2 * (np.longdouble(1) / 360 - zi2 * (
        np.longdouble(1) / 1260 - zi2 * np.longdouble(1) / 1680)))
    out[~small] = (z - np.longdouble(0.5)) * np.log(z) - z + _HALF_LOG_2PI + series
    return out


def log_binomial(n_half: int, k):
    """``log C(n_half, k)``, scalar or vectorized over ``k``.

    Log-factorials are evaluated in extended precision (Stirling series above
    30) so the difference keeps about 1e-12 absolute accuracy even for
    ``n_half`` around 1e6. The result is exactly symmetric in ``k``.
    """
    kk = np.asarray(k)
    scalar = kk.ndim == 0
    kk = np.atleast_1d(kk).astype(np.int64)
    if n_half < 0 or np.any(kk < 0) or np.any(kk > n_half):
        raise ValueError(f"need 0 <= k <= n_half, got n_half={n_half}, k={k}")
    low = np.minimum(kk, n_half - kk)
    uniq, inv = np.unique(low, return_inverse=True)
    lf_n = _log_factorial_ld(np.array([n_half]))[0]
    vals = lf_n - _log_factorial_ld(uniq) - _log_factorial_ld(n_half - uniq)
    res = vals.astype(np.float64)[inv]
    return float(res[0]) if scalar else res.reshape(np.shape(k))


def lattice_values(n: int) -> np.ndarray:
    """Magnetizations ``(2k - l)/l``, ``k = 0..l``, for one community."""
    half = n // 2
    return (2.0 * np.arange(half + 1) - half) / half


def _check_n(n, limit):
    if int(n) != n or n < 2 or n % 2:
        raise ValueError(f"n must be an even integer >= 2, got {n}")
    if n > limit:
        raise ValueError(f"n={n} exceeds the supported size {limit}")


# ---------------------------------------------------------------------------
# lattice measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LatticeMeasure:
    """Induced law of ``(m1, m2)`` under the averaged Gibbs measure.

    ``log_weights[k1, k2]`` is the unnormalized log mass of the lattice point
    with ``k1`` and ``k2`` up spins (row-major in ``m1`` then ``m2``).
    """

    n: int
    beta: float
    alpha: float
    log_weights: np.ndarray
    log_Z: float

    @property
    def values(self) -> np.ndarray:
        return lattice_values(self.n)

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_Z)

    def marginal(self, axis: int = 0) -> np.ndarray:
        """Law of ``m1`` (axis 0) or ``m2`` (axis 1) on :attr:`values`."""
        return self.probabilities().sum(axis=1 - axis)

    def scaled_marginal(self, exponent: float, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Atoms and masses of ``n**exponent * m_axis``."""
        return self.n ** exponent * self.values, self.marginal(axis)

    def second_moments(self) -> np.ndarray:
        """Matrix of ``E[m_i m_j]``."""
        P = self.probabilities()
        v = self.values
        p1, p2 = P.sum(axis=1), P.sum(axis=0)
        e11 = float(np.dot(p1, v * v))
        e22 = float(np.dot(p2, v * v))
        e12 = float(v @ P @ v)
        return np.array([[e11, e12], [e12, e22]])

    def mass_near(self, center, radius: float) -> float:
        return induced_measure_mass_near(self, center, radius)

    def argmax_points(self) -> list[tuple[float, float]]:
        """Every lattice point attaining the largest mass."""
        lw = self.log_weights
        k1, k2 = np.nonzero(lw == lw.max())
        v = self.values
        return [(float(v[a]), float(v[b])) for a, b in zip(k1, k2)]

    def top_k(self, k: int = 10) -> list[tuple[float, float, float]]:
        """The ``k`` heaviest points as ``(m1, m2, probability)``, ties in row-major order."""
        flat = self.log_weights.ravel()
        k = min(k, flat.size)
        order = np.argsort(-flat, kind="stable")[:k]
        side = self.log_weights.shape[1]
        v = self.values
        return [(float(v[i // side]), float(v[i % side]), float(math.exp(flat[i] - self.log_Z)))
                for i in order]

    def to_csv(self, path) -> None:
        P = self.probabilities()
        v = self.values
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m1", "m2", "probability"])
            for i, a in enumerate(v):
                for j, b in enumerate(v):
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(P[i, j]))])


def _row_terms(n, beta, alpha):
    """Split ``log w(k1, k2) = a[k1] + a[k2] + c * m1 * m2``."""
    half = n // 2
    m = lattice_values(n)
    a = log_binomial(half, np.arange(half + 1)) + 0.5 * beta * n * 0.25 * m * m
    c = 0.5 * beta * n * 0.5 * alpha
    return m, a, c


def exact_partition_cw(n: int, beta: float, alpha: float, keep_measure: Optional[bool] = None,
                       rows_per_block: int = 512):
    """Exact ``log Z_bar`` by summing over the ``(n/2 + 1)^2`` lattice points.

    Returns ``(log_Z, measure)``. The measure holds the full weight matrix and
    is ``None`` when ``keep_measure`` is false (the default for lattices above
    ``DENSE_LIMIT`` points, where the sum streams over row blocks).
    """
    _check_n(n, MAX_LATTICE_N)
    if beta < 0:
        raise ValueError("beta must be non-negative")
    m, a, c = _row_terms(n, beta, alpha)
    size = len(m)
    if keep_measure is None:
        keep_measure = size * size <= DENSE_LIMIT
    if keep_measure:
        lw = a[:, None] + a[None, :] + c * np.multiply.outer(m, m)
        log_Z = float(logsumexp(lw))
        return log_Z, LatticeMeasure(n, beta, alpha, lw, log_Z)

    # streaming log-sum-exp with a running maximum
    run_max, run_sum = -np.inf, 0.0
    for start in range(0, size, rows_per_block):
        block = a[start:start + rows_per_block, None] + a[None, :] \
            + c * np.multiply.outer(m[start:start + rows_per_block], m)
        bmax = float(block.max())
        if bmax > run_max:
            run_sum *= math.exp(run_max - bmax)
            run_max = bmax
        run_sum += float(np.exp(block - run_max).sum())
    return run_max + math.log(run_sum), None


def finite_free_energy(log_Z: float, n: int, beta: float) -> float:
    if not beta > 0:
        raise ValueError("beta must be positive")
    return log_Z / (n * beta)


def _ball_indices(values, center, radius):
    lo = np.searchsorted(values, center - radius - 1e-12, side="left")
    hi = np.searchsorted(values, center + radius + 1e-12, side="right")
    return lo, hi


def induced_measure_mass_near(measure: LatticeMeasure, center, radius: float) -> float:
    """Mass of lattice points within Euclidean ``radius`` of ``center``."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    v = measure.values
    c1, c2 = center
    lo1, hi1 = _ball_indices(v, c1, radius)
    lo2, hi2 = _ball_indices(v, c2, radius)
    if lo1 >= hi1 or lo2 >= hi2:
        return 0.0
    d1 = v[lo1:hi1, None] - c1
    d2 = v[None, lo2:hi2] - c2
    inside = d1 * d1 + d2 * d2 <= radius * radius
    block = measure.log_weights[lo1:hi1, lo2:hi2]
    if not inside.any():
        return 0.0
    return float(np.exp(logsumexp(block[inside]) - measure.log_Z))


# ---------------------------------------------------------------------------
# quenched enumeration
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _gray_bond_sums(n, indptr, indices, total):
    """Bond sum of every configuration, indexed by the bit code of its down spins."""
    num = 1 << n
    out = np.empty(num, dtype=np.int32)
    s = np.ones(n, dtype=np.int8)
    bond = total
    out[0] = bond
    for i in range(1, num):
        j = 0
        t = i
        while (t & 1) == 0:
            t >>= 1
            j += 1
        h = 0
        for q in range(indptr[j], indptr[j + 1]):
            h += s[indices[q]]
        bond -= 2 * s[j] * h
        s[j] = -s[j]
        out[i ^ (i >> 1)] = bond
    return out


def configuration_bond_sums(g: BlockGraph, limit: int = MAX_ENUM_N) -> np.ndarray:
    """Integer bond sum of all ``2**n`` configurations.

    Entry ``c`` belongs to the configuration whose spin ``j`` is ``-1``
    exactly when bit ``j`` of ``c`` is set.
    """
    if g.n > limit:
        raise ValueError(f"exhaustive enumeration needs n <= {limit}, got {g.n}")
    indptr, indices = g.adjacency
    return _gray_bond_sums(g.n, indptr, indices, g.num_edges)


def code_block_sums(n: int, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Community spin sums for configuration codes."""
    half = n // 2
    codes = np.asarray(codes, dtype=np.uint64)
    low = np.uint64((1 << half) - 1)
    down1 = np.bitwise_count(codes & low).astype(np.int64)
    down2 = np.bitwise_count(codes >> np.uint64(half)).astype(np.int64)
    return half - 2 * down1, half - 2 * down2


def exact_partition_sbm(g: BlockGraph, beta: float) -> float:
    """Exact quenched ``log Z`` for one graph by enumerating all configurations."""
    bonds = configuration_bond_sums(g)
    values, counts = np.unique(bonds, return_counts=True)
    scale = beta / (g.n * g.params.p)
    return float(logsumexp(scale * values + np.log(counts)))


# ---------------------------------------------------------------------------
# Laplace-type asymptotics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NeighborhoodSpec:
    """Ball exponents: radius ``n**-delta`` around maxima, ``n**-delta_c`` at criticality."""

    delta: float = 0.4
    delta_c: float = 0.225

    def __post_init__(self):
        if not 1 / 3 < self.delta < 1 / 2:
            raise ValueError(f"delta must lie in (1/3, 1/2), got {self.delta}")
        if not 1 / 5 < self.delta_c < 1 / 4:
            raise ValueError(f"delta_c must lie in (1/5, 1/4), got {self.delta_c}")


def maximizer_points(point: cw.PhasePoint) -> dict:
    """Maximizers keyed ``0`` (origin) or ``1..4`` (symmetric pair, then antisymmetric pair)."""
    if point.regime is cw.Regime.UNIQUE:
        return {0: (0.0, 0.0)}
    if point.regime is cw.Regime.CRITICAL:
        return {CRITICAL: (0.0, 0.0)}
    pts = {1: (point.m_g, point.m_g), 2: (-point.m_g, -point.m_g)}
    if point.regime is cw.Regime.FOUR_MAX:
        pts[3] = (point.m_l, -point.m_l)
        pts[4] = (-point.m_l, point.m_l)
    return pts


def asymptotic_prefactor_D(n: int, beta: float, alpha: float, which: Union[int, str],
                           spec: NeighborhoodSpec = NeighborhoodSpec(),
                           quartic_coefficient: float = 2.0) -> float:
    """Riemann sum of the local weight around one maximizer.

    Around a Gaussian maximizer ``m_i`` the variable is ``x = sqrt(n) (m - m_i)``
    and the weight is ``exp(-x^T Q x / 2) / sqrt((1 - m1^2)(1 - m2^2))`` with
    ``Q = -D^2 G(m_i) / 2``. At criticality ``x = n**(1/4) m`` and the weight is
    ``exp(-q (x1^4 + x2^4)) / sqrt((1 - m1^2)(1 - m2^2))``. Each point is
    weighted by the area of its lattice cell in ``x`` coordinates
    (``16/n`` and ``16/n**1.5``), so the sum converges to the integral of the
    weight.
    """
    point = cw.classify_phase(alpha, beta)
    pts = maximizer_points(point)
    if which not in pts:
        raise ValueError(f"maximizer {which!r} does not exist in regime {point.regime.value}")
    center = pts[which]
    v = lattice_values(n)
    if which == CRITICAL:
        radius = n ** (-spec.delta_c)
        scale, cell = n ** 0.25, 16.0 / n ** 1.5
    else:
        radius = n ** (-spec.delta)
        scale, cell = math.sqrt(n), 16.0 / n
        Q = -0.5 * cw.hessian(alpha, beta, center).as_array()

    lo1, hi1 = _ball_indices(v, center[0], radius)
    lo2, hi2 = _ball_indices(v, center[1], radius)
    m1 = v[lo1:hi1, None]
    m2 = v[None, lo2:hi2]
    d1 = m1 - center[0]
    d2 = m2 - center[1]
    inside = d1 * d1 + d2 * d2 <= radius * radius
    x1, x2 = scale * d1, scale * d2
    if which == CRITICAL:
        expo = -quartic_coefficient * (x1 ** 4 + x2 ** 4)
    else:
        expo = -0.5 * (Q[0, 0] * x1 * x1 + 2.0 * Q[0, 1] * x1 * x2 + Q[1, 1] * x2 * x2)
    with np.errstate(divide="ignore"):
        jac = 1.0 / np.sqrt((1.0 - m1 * m1) * (1.0 - m2 * m2))
    terms = np.exp(expo) * jac
    return cell * math.fsum(terms[inside & np.isfinite(terms)])


def limit_prefactor_D(beta: float, alpha: float, which: Union[int, str],
                      quartic_coefficient: float = 2.0) -> float:
    """``n -> infinity`` value of :func:`asymptotic_prefactor_D`."""
    point = cw.classify_phase(alpha, beta)
    pts = maximizer_points(point)
    if which not in pts:
        raise ValueError(f"maximizer {which!r} does not exist in regime {point.regime.value}")
    if which == CRITICAL:
        one_dim = math.gamma(0.25) / (2.0 * quartic_coefficient ** 0.25)
        return one_dim * one_dim
    m1, m2 = pts[which]
    Q = -0.5 * cw.hessian(alpha, beta, (m1, m2)).as_array()
    return 2.0 * math.pi / math.sqrt(np.linalg.det(Q)) / math.sqrt((1 - m1 * m1) * (1 - m2 * m2))


def approx_partition(n: int, beta: float, alpha: float, spec: NeighborhoodSpec = NeighborhoodSpec(),
                     quartic_coefficient: float = 2.0) -> float:
    """Laplace approximation of ``log Z_bar``.

    ``log Z_bar ~ (n/2) M + log(sum_i w_i D_i / pi)`` where ``M`` is the
    global maximum of ``G``, the antisymmetric terms carry ``exp(-(n/2) eps)``,
    and ``w_i`` converts the cell-area normalization of ``D`` into the
    ``4/n`` point weight of the binomial asymptotics (``1/4`` around Gaussian
    maxima, ``sqrt(n)/4`` at criticality).
    """
    point = cw.classify_phase(alpha, beta)
    pts = maximizer_points(point)
    D = {k: asymptotic_prefactor_D(n, beta, alpha, k, spec, quartic_coefficient) for k in pts}
    if point.regime is cw.Regime.UNIQUE:
        return 0.5 * n * point.M0 + math.log(0.25 * D[0] / math.pi)
    if point.regime is cw.Regime.CRITICAL:
        return 0.5 * n * point.M0 + math.log(0.25 * math.sqrt(n) * D[CRITICAL] / math.pi)
    total = D[1] + D[2]
    if point.regime is cw.Regime.FOUR_MAX:
        total += math.exp(-0.5 * n * point.epsilon_gap) * (D[3] + D[4])
    return 0.5 * n * point.M1 + math.log(0.25 * total / math.pi)


# ---------------------------------------------------------------------------
# mixture weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureWeights:
    w_sym: float
    w_asym: float
    c: float

    def __post_init__(self):
        if abs(2 * self.w_sym + 2 * self.w_asym - 1) > 1e-12:
            raise ValueError("mixture weights must sum to one")


def mixture_weights(c: float) -> MixtureWeights:
    """Limit weights of the symmetric and antisymmetric wells for ``n alpha_n -> c``."""
    if math.isnan(c) or c < 0:
        raise ValueError(f"c must be >= 0 or +inf, got {c}")
    if math.isinf(c):
        return MixtureWeights(0.5, 0.0, c)
    r = math.exp(-c)
    return MixtureWeights(0.5 / (1 + r), 0.5 * r / (1 + r), c)


def well_mass_ratio(measure: LatticeMeasure, radius: Optional[float] = None) -> float:
    """Mass near the antisymmetric maxima over mass near the symmetric maxima."""
    point = cw.classify_phase(measure.alpha, measure.beta)
    if point.regime is not cw.Regime.FOUR_MAX:
        raise ValueError("the ratio needs four maxima")
    if radius is None:
        radius = measure.n ** (-NeighborhoodSpec().delta)
    pts = maximizer_points(point)
    sym = sum(measure.mass_near(pts[i], radius) for i in (1, 2))
    asym = sum(measure.mass_near(pts[i], radius) for i in (3, 4))
    return asym / sym


def predicted_mass_ratio(n: int, beta: float, alpha: float,
                         spec: NeighborhoodSpec = NeighborhoodSpec()) -> float:
    """Finite-``n`` Laplace prediction ``exp(-(n/2) eps) (D3 + D4)/(D1 + D2)``."""
    point = cw.classify_phase(alpha, beta)
    if point.regime is not cw.Regime.FOUR_MAX:
        raise ValueError("the ratio needs four maxima")
    D = {k: asymptotic_prefactor_D(n, beta, alpha, k, spec) for k in (1, 2, 3, 4)}
    return math.exp(-0.5 * n * point.epsilon_gap) * (D[3] + D[4]) / (D[1] + D[2])
