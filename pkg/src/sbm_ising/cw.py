"""Bipartite Curie-Weiss free-energy landscape.

The free-energy functional on ``[-1, 1]^2`` is

    G(m) = beta * E_alpha(m) - I(m1) - I(m2),
    E_alpha(m) = |m|^2 / 4 + alpha / 2 * m1 * m2,

with ``I`` the binary entropy ``I(x) = (1+x)/2 log((1+x)/2) + (1-x)/2 log((1-x)/2)``.
Its maximizers sit at the origin, on the diagonal ``(m_g, m_g)`` and on the
antidiagonal ``(m_l, -m_l)``. Everything here is closed form or a scalar root.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import xlogy

LOG2 = math.log(2.0)
ROOT_TOL = 1e-12
MAX_ITER = 200
CRITICAL_RTOL = 1e-12


class Magnetization(NamedTuple):
    """Community magnetization pair ``(m1, m2)``."""

    m1: float
    m2: float


class Regime(str, enum.Enum):
    UNIQUE = "UNIQUE"
    CRITICAL = "CRITICAL"
    TWO_MAX = "TWO_MAX"
    FOUR_MAX = "FOUR_MAX"


@dataclass(frozen=True)
class Hessian2:
    """Symmetric 2x2 matrix ``[[a11, a12], [a12, a22]]``."""

    a11: float
    a12: float
    a22: float

    def eigenvalues(self) -> tuple[float, float]:
        """Closed-form eigenvalues, ascending."""
        mean = 0.5 * (self.a11 + self.a22)
        rad = math.hypot(0.5 * (self.a11 - self.a22), self.a12)
        return mean - rad, mean + rad

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])


@dataclass(frozen=True)
class PhasePoint:
    alpha: float
    beta: float
    regime: Regime
    beta_c: float
    beta_star: Optional[float]
    m_star: float
    m_g: Optional[float]
    m_l: Optional[float]
    M0: float
    M1: Optional[float]
    M2: Optional[float]
    epsilon_gap: Optional[float]
    # alpha == 0: decoupled communities, four equal maxima for beta > 2
    limit_case: bool = False

    def maximizers(self) -> list[tuple[float, float]]:
        """Local maximizers of ``G`` for this point, symmetric pair first."""
        if self.regime in (Regime.UNIQUE, Regime.CRITICAL):
            return [(0.0, 0.0)]
        pts = [(self.m_g, self.m_g), (-self.m_g, -self.m_g)]
        if self.regime is Regime.FOUR_MAX:
            pts += [(self.m_l, -self.m_l), (-self.m_l, self.m_l)]
        return pts

    def to_dict(self) -> dict:
        d = asdict(self)
        d["regime"] = self.regime.value
        return d


# ---------------------------------------------------------------------------
# functional and derivatives
# ---------------------------------------------------------------------------

def _binary_entropy(x):
    up = 0.5 * (1.0 + x)
    dn = 0.5 * (1.0 - x)
    return xlogy(up, up) + xlogy(dn, dn)


def entropy(m):
    """``I(m1) + I(m2)``; endpoints use ``0 log 0 = 0``. Vectorized."""
    m1, m2 = m
    return _binary_entropy(np.asarray(m1, dtype=float)) + _binary_entropy(
        np.asarray(m2, dtype=float)
    )


def energy(alpha, m):
    m1, m2 = m
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    return 0.25 * (m1 * m1 + m2 * m2) + 0.5 * alpha * m1 * m2


def free_energy_functional(alpha, beta, m):
    """``G = beta * E_alpha(m) - I(m)``, broadcasting over array inputs."""
    return beta * energy(alpha, m) - entropy(m)


def _check_interior(m1, m2):
    if not (abs(m1) < 1.0 and abs(m2) < 1.0):
        raise ValueError(f"magnetization {(m1, m2)} outside the open square (-1, 1)^2")


def gradient(alpha, beta, m) -> tuple[float, float]:
    m1, m2 = (float(v) for v in m)
    _check_interior(m1, m2)
    g1 = beta * (0.5 * m1 + 0.5 * alpha * m2) - math.atanh(m1)
    g2 = beta * (0.5 * m2 + 0.5 * alpha * m1) - math.atanh(m2)
    return g1, g2


def hessian(alpha, beta, m) -> Hessian2:
    m1, m2 = (float(v) for v in m)
    _check_interior(m1, m2)
    return Hessian2(
        a11=0.5 * beta - 1.0 / (1.0 - m1 * m1),
        a12=0.5 * beta * alpha,
        a22=0.5 * beta - 1.0 / (1.0 - m2 * m2),
    )


# ---------------------------------------------------------------------------
# scalar roots
# ---------------------------------------------------------------------------

def _safeguarded_newton(
    f: Callable[[float], float],
    df: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = ROOT_TOL,
    maxiter: int = MAX_ITER,
) -> float:
    """Root of an increasing ``f`` on ``[lo, hi]`` with ``f(lo) < 0 < f(hi)``.

    Newton steps are taken when they stay inside the current bracket and
    shrink it fast enough; otherwise the bracket is bisected.
    """
    flo, fhi = f(lo), f(hi)
    if flo >= 0.0:
        return lo
    if fhi <= 0.0:
        return hi
    x = 0.5 * (lo + hi)
    width_prev = hi - lo
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        if abs(fx) <= tol * 1e-3 or hi - lo <= 4.0 * np.spacing(x):
            break
        d = df(x)
        step_ok = False
        if d > 0.0:
            xn = x - fx / d
            if lo < xn < hi and abs(fx / d) < 0.5 * width_prev:
                step_ok = True
        width_prev = hi - lo
        x = xn if step_ok else 0.5 * (lo + hi)
    return x


def _tanh_fixed_point(k: float) -> float:
    """Positive root of ``m = tanh(k m)``; zero when ``k <= 1``."""
    if k <= 1.0:
        return 0.0
    f = lambda m: m - math.tanh(k * m)
    df = lambda m: 1.0 - k / math.cosh(k * m) ** 2
    return _safeguarded_newton(f, df, 1e-16, 1.0 - 1e-16)


def solve_m_star(beta: float) -> float:
    """Positive solution of ``atanh(m) = beta m / 2`` (0 for ``beta <= 2``)."""
    return _tanh_fixed_point(0.5 * beta)


def solve_m_g(alpha: float, beta: float) -> float:
    """Diagonal maximizer ``m_g = tanh(beta (1 + alpha) m_g / 2)``."""
    return _tanh_fixed_point(0.5 * beta * (1.0 + alpha))


def solve_m_l(alpha: float, beta: float) -> float:
    """Antidiagonal stationary point ``m_l = tanh(beta (1 - alpha) m_l / 2)``."""
    if alpha >= 1.0:
        return 0.0
    return _tanh_fixed_point(0.5 * beta * (1.0 - alpha))


def _atanh_ratio_minus_one(u: float) -> float:
    """``atanh(u)/u - 1`` without cancellation for small ``u``."""
    if u < 0.05:
        u2 = u * u
        # sum_{k>=1} u^{2k} / (2k+1); 9 terms reach 1e-25 at u = 0.05
        total, term = 0.0, 1.0
        for k in range(1, 10):
            term *= u2
            total += term / (2 * k + 1)
        return total
    return math.atanh(u) / u - 1.0


def atanh_ratio(u: float) -> float:
    """``phi(u) = atanh(u) / u`` with ``phi(0) = 1``."""
    return 1.0 + _atanh_ratio_minus_one(u)


def psi(u: float) -> float:
    """``psi(u) = (1 - u^2) atanh(u) / u``, strictly decreasing from 1 to 0."""
    return (1.0 - u * u) * atanh_ratio(u)


def _one_minus_psi(u: float) -> float:
    s = _atanh_ratio_minus_one(u)
    return u * u * (1.0 + s) - s


def solve_t_star(alpha: float) -> float:
    """Unique ``t in (0, 1)`` with ``psi(t) = (1 - alpha) / (1 + alpha)``.

    At ``alpha = 1`` the root sits at the boundary; the largest double below
    one is returned. ``alpha = 0`` has no interior root and raises.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"t_* is defined for alpha in (0, 1], got {alpha}")
    if alpha == 1.0:
        return float(np.nextafter(1.0, 0.0))
    target = 2.0 * alpha / (1.0 + alpha)  # 1 - (1 - alpha)/(1 + alpha)

    def f(t):
        return _one_minus_psi(t) - target

    def df(t):
        # -(psi') = ((1 + t^2) atanh(t) - t) / t^2
        return ((1.0 + t * t) * math.atanh(t) - t) / (t * t)

    return _safeguarded_newton(f, df, 1e-300, float(np.nextafter(1.0, 0.0)))


def beta_star(alpha: float) -> float:
    """Inverse temperature above which the antidiagonal maxima appear."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"beta_star requires alpha in (0, 1), got {alpha}")
    t = solve_t_star(alpha)
    return 2.0 / (1.0 - alpha) * atanh_ratio(t)


def critical_beta(alpha: float) -> float:
    return 2.0 / (1.0 + alpha)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def classify_phase(alpha: float, beta: float) -> PhasePoint:
    """Number and location of the maximizers of ``G`` at ``(alpha, beta)``.

    ``beta == beta_star`` counts as TWO_MAX. ``alpha == 0`` is reported as the
    decoupled limit: four equal maxima at ``(+-m*, +-m*)`` for ``beta > 2``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")

    bc = critical_beta(alpha)
    m_star = solve_m_star(beta)
    M0 = 2.0 * LOG2
    limit = alpha == 0.0
    if limit:
        bstar: Optional[float] = 2.0
    elif alpha < 1.0:
        bstar = beta_star(alpha)
    else:
        bstar = None
    base = dict(alpha=alpha, beta=beta, beta_c=bc, beta_star=bstar, m_star=m_star,
                M0=M0, limit_case=limit)

    if abs(beta - bc) <= CRITICAL_RTOL * bc:
        return PhasePoint(regime=Regime.CRITICAL, m_g=None, m_l=None, M1=None, M2=None,
                          epsilon_gap=None, **base)
    if beta < bc:
        return PhasePoint(regime=Regime.UNIQUE, m_g=None, m_l=None, M1=None, M2=None,
                          epsilon_gap=None, **base)

    m_g = solve_m_g(alpha, beta)
    M1 = float(free_energy_functional(alpha, beta, (m_g, m_g)))
    if limit or (bstar is not None and beta > bstar):
        m_l = solve_m_l(alpha, beta)
        M2 = float(free_energy_functional(alpha, beta, (m_l, -m_l)))
        return PhasePoint(regime=Regime.FOUR_MAX, m_g=m_g, m_l=m_l, M1=M1, M2=M2,
                          epsilon_gap=M1 - M2, **base)
    return PhasePoint(regime=Regime.TWO_MAX, m_g=m_g, m_l=None, M1=M1, M2=None,
                      epsilon_gap=None, **base)


def epsilon_gap(alpha: float, beta: float) -> float:
    point = classify_phase(alpha, beta)
    if point.epsilon_gap is None:
        raise ValueError(f"no antidiagonal maximum at alpha={alpha}, beta={beta}")
    return point.epsilon_gap


def epsilon_gap_expansion_check(beta: float, alphas) -> list[tuple[float, float]]:
    """``(alpha, eps(alpha)/alpha)`` pairs; the ratio tends to ``m*^2 beta``."""
    if beta <= 2.0:
        raise ValueError("the gap expansion needs beta > 2")
    return [(float(a), epsilon_gap(a, beta) / a) for a in alphas]


def maximizer_slope(beta: float) -> float:
    """First-order coefficient ``s`` in ``m_g = m* + s alpha + o(alpha)``."""
    ms = solve_m_star(beta)
    return 0.5 * beta * ms / (1.0 / (1.0 - ms * ms) - 0.5 * beta)


def maximizer_expansion_check(beta: float, alpha: float) -> tuple[float, float]:
    """Linearized predictions ``(m* + s alpha, m* - s alpha)`` for ``(m_g, m_l)``."""
    if beta <= 2.0:
        raise ValueError("the maximizer expansion needs beta > 2")
    ms = solve_m_star(beta)
    s = maximizer_slope(beta)
    return ms + s * alpha, ms - s * alpha
