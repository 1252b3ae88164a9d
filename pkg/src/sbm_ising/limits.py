"""Limiting laws of the rescaled magnetization and goodness-of-fit statistics."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, stats
from scipy.interpolate import PchipInterpolator

from .graph import make_rng


@dataclass(frozen=True)
class GaussianLimit:
    """Centered bivariate normal with exchangeable covariance."""

    sigma11: float
    sigma12: float
    sigma22: float
    beta: float
    alpha_hat: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.sigma11, self.sigma12], [self.sigma12, self.sigma22]])

    def cholesky(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.matrix)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite") from None

    def sample(self, num: int, seed: int) -> np.ndarray:
        L = self.cholesky()
        z = make_rng(seed).standard_normal((num, 2))
        return z @ L.T

    def marginal_cdf(self, axis: int = 0):
        var = self.sigma11 if axis == 0 else self.sigma22
        return stats.norm(scale=math.sqrt(var)).cdf


def sigma_matrix(beta: float, alpha_hat: float) -> GaussianLimit:
    """Limit covariance of ``sqrt(n) m`` below the critical temperature.

    Diagonal ``(2 - b)/((1 - b) + b^2 (1 - a^2)/4)``, off-diagonal the
    diagonal times ``b a/(2 - b)``.
    """
    if not 0 <= alpha_hat <= 1:
        raise ValueError(f"alpha_hat must lie in [0, 1], got {alpha_hat}")
    if not 0 < beta < 2.0 / (1.0 + alpha_hat):
        raise ValueError(f"beta={beta} is not below the critical value {2.0 / (1.0 + alpha_hat)}")
    diag = (2.0 - beta) / ((1.0 - beta) + 0.25 * beta * beta * (1.0 - alpha_hat * alpha_hat))
    off = diag * beta * alpha_hat / (2.0 - beta)
    return GaussianLimit(diag, off, diag, beta, alpha_hat)


# ---------------------------------------------------------------------------
# quartic law
# ---------------------------------------------------------------------------

TABLE_POINTS = 2048


class QuarticLimit:
    """Product law with density proportional to ``exp(-a (x1^4 + x2^4))``.

    The normalization comes from adaptive quadrature; the one-dimensional CDF
    is tabulated once on ``TABLE_POINTS`` nodes and interpolated monotonically.
    """

    def __init__(self, coefficient: float = 2.0):
        if not coefficient > 0:
            raise ValueError("the quartic coefficient must be positive")
        self.coefficient = float(coefficient)
        half, _ = integrate.quad(self._kernel, 0.0, np.inf, epsabs=0.0, epsrel=1e-13)
        self.line_integral = 2.0 * half
        self.normalization = self.line_integral ** -2
        # beyond this the one-dimensional tail mass is below 1e-30
        self.support = (70.0 / self.coefficient) ** 0.25
        self._lock = threading.Lock()
        self._cdf = None

    def _kernel(self, t):
        t2 = t * t
        return np.exp(-self.coefficient * t2 * t2)

    def density_1d(self, t):
        return self._kernel(np.asarray(t, dtype=float)) / self.line_integral

    def density(self, x) -> float:
        s1, s2 = (np.square(np.asarray(v, dtype=float)) for v in x)
        return self.normalization * np.exp(-self.coefficient * (s1 * s1 + s2 * s2))

    def _build_table(self):
        nodes = np.linspace(-self.support, self.support, TABLE_POINTS)
        pieces = [integrate.quad(self._kernel, a, b, epsabs=1e-15, epsrel=1e-13)[0]
                  for a, b in zip(nodes[:-1], nodes[1:])]
        cum = np.concatenate([[0.0], np.cumsum(pieces)]) / self.line_integral
        cum = np.clip(cum, 0.0, 1.0)
        return PchipInterpolator(nodes, cum, extrapolate=False)

    def cdf(self, t):
        """Marginal CDF from the tabulated interpolant."""
        if self._cdf is None:
            with self._lock:
                if self._cdf is None:
                    self._cdf = self._build_table()
        t = np.asarray(t, dtype=float)
        out = self._cdf(np.clip(t, -self.support, self.support))
        return np.where(t <= -self.support, 0.0, np.where(t >= self.support, 1.0, out))

    def marginal_cdf(self, axis: int = 0):
        return self.cdf

    def moment(self, k: int) -> float:
        """``E[t^k]`` of one coordinate, by quadrature."""
        val, _ = integrate.quad(lambda t: t ** k * self._kernel(t), -np.inf, np.inf,
                                epsabs=0.0, epsrel=1e-12)
        return val / self.line_integral

    def sample(self, num: int, seed: int) -> np.ndarray:
        return sample_quartic(num, seed, self.coefficient)


_DEFAULT_QUARTIC: Optional[QuarticLimit] = None
_DEFAULT_LOCK = threading.Lock()


def default_quartic() -> QuarticLimit:
    global _DEFAULT_QUARTIC
    if _DEFAULT_QUARTIC is None:
        with _DEFAULT_LOCK:
            if _DEFAULT_QUARTIC is None:
                _DEFAULT_QUARTIC = QuarticLimit()
    return _DEFAULT_QUARTIC


def quartic_density(x) -> float:
    """Normalized density ``f(x) ~ exp(-2 (x1^4 + x2^4))``."""
    return default_quartic().density(x)


def sample_quartic(num: int, seed: int, coefficient: float = 2.0) -> np.ndarray:
    """``num`` i.i.d. pairs with independent ``exp(-a t^4)`` coordinates.

    Rejection from ``N(0, s^2)`` with ``s^4 = 1/(4a)``; the log acceptance
    ratio ``-a t^4 + t^2/(2 s^2)`` peaks at ``1/4``.
    """
    if num < 1:
        raise ValueError("num must be >= 1")
    rng = make_rng(seed)
    s = (4.0 * coefficient) ** -0.25
    need = 2 * num
    out = np.empty(need)
    filled = 0
    while filled < need:
        batch = max(1024, int(1.3 * (need - filled)))
        t = s * rng.standard_normal(batch)
        u = rng.random(batch)
        log_ratio = -coefficient * t ** 4 + t * t / (2 * s * s) - 0.25
        acc = t[np.log(u) < log_ratio]
        take = min(len(acc), need - filled)
        out[filled:filled + take] = acc[:take]
        filled += take
    return out.reshape(num, 2)


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

def _as_samples(batch) -> np.ndarray:
    arr = batch.samples if hasattr(batch, "samples") else batch
    arr = np.asarray(arr, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("samples must be an (N, 2) array")
    return arr


def empirical_covariance(batch) -> np.ndarray:
    """Unbiased sample covariance of the (rescaled) pairs, exactly symmetric."""
    x = _as_samples(batch)
    if len(x) < 2:
        raise ValueError("need at least two samples")
    c = np.cov(x, rowvar=False, ddof=1)
    off = 0.5 * (c[0, 1] + c[1, 0])
    return np.array([[c[0, 0], off], [off, c[1, 1]]])


def ks_critical_value(num: int, level: float = 0.01) -> float:
    """Exact one-sample KS critical value at the given level."""
    return float(stats.kstwo.ppf(1.0 - level, num))


def ks_statistic(x, cdf, spacing: Optional[float] = None) -> float:
    """One-sample KS distance between data and a continuous reference CDF.

    With ``spacing`` the data are taken to live on a lattice of that step, and
    the reference is discretized onto the same cells (each atom receives the
    reference mass of the cell centered on it). This removes the lattice jumps
    that would otherwise dominate the statistic.
    """
    x = np.sort(np.asarray(x, dtype=float))
    num = len(x)
    if num == 0:
        raise ValueError("empty sample")
    if spacing is None:
        F = cdf(x)
        ecdf_hi = np.arange(1, num + 1) / num
        ecdf_lo = np.arange(0, num) / num
        return float(min(1.0, max(np.max(ecdf_hi - F), np.max(F - ecdf_lo), 0.0)))
    h = float(spacing)
    steps = int(round((x[-1] - x[0]) / h))
    atoms = x[0] + h * np.arange(-1, steps + 1)
    # empirical CDF at each atom, tolerant of rounding in the data
    ecdf = np.searchsorted(x, atoms + 0.25 * h, side="right") / num
    ref = cdf(atoms + 0.5 * h)
    return float(min(1.0, np.max(np.abs(ecdf - ref))))


def ks_discrete_law(atoms, masses, cdf) -> float:
    """Sup distance between the CDF of a finite law and a continuous CDF."""
    atoms = np.asarray(atoms, dtype=float)
    order = np.argsort(atoms)
    atoms = atoms[order]
    cum = np.cumsum(np.asarray(masses, dtype=float)[order])
    cum /= cum[-1]
    F = cdf(atoms)
    before = np.concatenate([[0.0], cum[:-1]])
    return float(max(np.max(np.abs(cum - F)), np.max(np.abs(before - F))))


def ks_marginal(batch, reference, spacing: Optional[float] = None) -> tuple[float, float]:
    """KS distances of both rescaled marginals against ``reference``.

    ``reference`` is a :class:`GaussianLimit` or a :class:`QuarticLimit`.
    """
    x = _as_samples(batch)
    return (ks_statistic(x[:, 0], reference.marginal_cdf(0), spacing),
            ks_statistic(x[:, 1], reference.marginal_cdf(1), spacing))
