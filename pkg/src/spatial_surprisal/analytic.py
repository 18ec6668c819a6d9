"""Closed-form normal approximation of the unscaled Moran's I.

Given a value scheme and a degree ``k``, every ordered pair-set cardinality
``|S_pq|`` is approximated by a normal variable whose moments come from a
binomial (different values) or Poisson-binomial (same value) count. The
unscaled Moran's I is a fixed linear combination of these counts, so its
law is normal with the mean and variance assembled below. Self-information
is the negative log density of that law at an observed value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .errors import CorrectionInfeasible, DegenerateScheme, SchemeSizeMismatch
from .moran import foreground_coefficients
from .scheme import ValueScheme

_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class PairMoments:
    """Means and variances of ``|S_pq|``; the diagonal holds same-value sets."""

    mu: np.ndarray
    sigma2: np.ndarray

    def mu_pq(self, p: int, q: int) -> float:
        return float(self.mu[p, q])

    def mu_pp(self, p: int) -> float:
        return float(self.mu[p, p])

    def sigma2_pq(self, p: int, q: int) -> float:
        return float(self.sigma2[p, q])

    def sigma2_pp(self, p: int) -> float:
        return float(self.sigma2[p, p])


@dataclass(frozen=True)
class Corrections:
    delta_n_scaling: bool = False
    common_neighbor: bool = False

    def names(self) -> list[str]:
        out = []
        if self.delta_n_scaling:
            out.append("delta_n_scaling")
        if self.common_neighbor:
            out.append("common_neighbor")
        return out

    @classmethod
    def parse(cls, spec: str | None) -> "Corrections":
        """Parse a comma list such as ``"delta_n,common_neighbor"``."""
        names = {s.strip().replace("-", "_") for s in (spec or "").split(",") if s.strip()}
        unknown = names - {"delta_n", "delta_n_scaling", "common_neighbor", "none", "all"}
        if unknown:
            raise ValueError(f"unknown corrections: {sorted(unknown)}")
        everything = "all" in names
        return cls(
            delta_n_scaling=everything or bool(names & {"delta_n", "delta_n_scaling"}),
            common_neighbor=everything or "common_neighbor" in names,
        )


def pair_moments(scheme: ValueScheme, k: float, n: int | None = None) -> PairMoments:
    """Per-pair moments of the pair-set cardinalities.

    Different values p != q::

        mu_pq     = min(n_p, n_q) * k * max(n_p, n_q) / N
        sigma2_pq = min(n_p, n_q) * a * (1 - a),   a = k * max(n_p, n_q) / N

    Same value p::

        mu_pp     = (n_p - 1) * k * n_p / N - 1
        sigma2_pp = 2 (n_p - 1) (k n_p / N) [1 - k (2 n_p - 1) / (3 N)]

    Means are left unclamped except that ``mu_pp`` is floored at 0. The
    success probability ``a`` and the bracketed factor are clamped into
    [0, 1] so variances stay non-negative outside the sparse regime.
    """
    if n is None:
        n = scheme.n
    if scheme.n != n:
        raise SchemeSizeMismatch(f"scheme has {scheme.n} observations, N = {n}")
    if not k > 0 or n < 2:
        raise ValueError(f"need k > 0 and N >= 2, got k={k}, N={n}")
    sizes = scheme.sizes.astype(np.float64)
    lo = np.minimum.outer(sizes, sizes)
    hi = np.maximum.outer(sizes, sizes)
    mu = lo * k * hi / n
    a = np.clip(k * hi / n, 0.0, 1.0)
    sigma2 = lo * a * (1.0 - a)

    same_mu = np.maximum((sizes - 1.0) * k * sizes / n - 1.0, 0.0)
    rate = np.clip(k * sizes / n, 0.0, 1.0)
    bracket = np.clip(1.0 - k * (2.0 * sizes - 1.0) / (3.0 * n), 0.0, 1.0)
    same_var = 2.0 * (sizes - 1.0) * rate * bracket
    np.fill_diagonal(mu, same_mu)
    np.fill_diagonal(sigma2, same_var)
    return PairMoments(mu, sigma2)


def delta_scale_factor(delta_n: int, k: float, n: int) -> float:
    """Ratio of the actual to the nominal edge total, ``1 + delta_n / (k N)``."""
    return 1.0 + delta_n / (k * n)


def apply_delta_correction(pm: PairMoments, delta_n: int, k: float, n: int) -> PairMoments:
    """Rescale counts to a graph whose edge total differs from ``k N``.

    Means and variances are both multiplied by ``f = 1 + delta_n / (k N)``:
    a pair count over ``f k N`` weakly dependent edges grows linearly in
    its mean and, to first order, in its variance.
    """
    f = delta_scale_factor(delta_n, k, n)
    if not f > 0:
        raise CorrectionInfeasible(f"scaling factor {f} <= 0 for delta_n={delta_n}, kN={k * n}")
    return PairMoments(pm.mu * f, pm.sigma2 * f)


def apply_common_neighbor_correction(pm: PairMoments) -> PairMoments:
    """Undo the undercount of same-value pairs caused by shared neighbours.

    Each same-value mean with ``mu_pp > 1`` is divided by
    ``(mu_pp - 1) / mu_pp``; smaller means and all variances are kept.
    """
    mu = pm.mu.copy()
    diag = np.diag(mu).copy()
    big = diag > 1.0
    diag[big] = diag[big] * diag[big] / (diag[big] - 1.0)
    np.fill_diagonal(mu, diag)
    return PairMoments(mu, pm.sigma2.copy())


def approx_mean(scheme: ValueScheme, k: float, pm: PairMoments | None = None) -> float:
    """``sum_{p != q} d_p d_q mu_pq + sum_p d_p^2 mu_pp`` over ordered pairs."""
    if pm is None:
        pm = pair_moments(scheme, k)
    d = scheme.deviations
    return math.fsum((np.outer(d, d) * pm.mu).ravel().tolist())


def approx_variance(scheme: ValueScheme, k: float, pm: PairMoments | None = None) -> float:
    """Variance from the foreground pair sets, the largest value as background.

    With ``r`` the background and ``d = c - mean``::

        sum_{p != q, p, q != r} (d_p d_q - 2 d_p d_r + d_r^2)^2 sigma2_pq
          + sum_{p != r} (c_p - c_r)^4 sigma2_pp
    """
    if scheme.m < 2:
        raise DegenerateScheme("variance needs at least two distinct values")
    if pm is None:
        pm = pair_moments(scheme, k)
    coef = foreground_coefficients(scheme, scheme.background_index)
    return math.fsum((coef * coef * pm.sigma2).ravel().tolist())


@dataclass(frozen=True, eq=False)
class AnalyticDist:
    """Normal law of the unscaled Moran's I for one value scheme."""

    mean: float
    variance: float
    k_used: float
    corrections: Corrections = field(default_factory=Corrections)
    delta_n: int = 0
    scheme: ValueScheme | None = None

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def logpdf(self, x) -> np.ndarray | float:
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        out = -0.5 * z * z - math.log(self.std) - _LN_SQRT_2PI
        return float(out) if np.ndim(out) == 0 else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        out = ndtr((np.asarray(x, dtype=np.float64) - self.mean) / self.std)
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, n: int, seed: int) -> np.ndarray:
        return np.random.default_rng(seed).normal(self.mean, self.std, size=n)

    def with_moments(self, mean: float, variance: float) -> "AnalyticDist":
        return replace(self, mean=mean, variance=variance)

    def to_dict(self) -> dict:
        return {
            "mu": self.mean,
            "sigma2": self.variance,
            "sigma": self.std,
            "k": self.k_used,
            "delta_n": self.delta_n,
            "corrections": self.corrections.names(),
        }


def corrected_moments(
    scheme: ValueScheme,
    k: float,
    corrections: Corrections = Corrections(),
    delta_n: int = 0,
) -> PairMoments:
    """Pair moments with the requested corrections applied.

    The common-neighbour adjustment acts on the regular-graph counts first;
    the edge-total rescaling is applied last.
    """
    pm = pair_moments(scheme, k)
    if corrections.common_neighbor:
        pm = apply_common_neighbor_correction(pm)
    if corrections.delta_n_scaling:
        pm = apply_delta_correction(pm, delta_n, k, scheme.n)
    return pm


def analytic_distribution(
    scheme: ValueScheme,
    k: float,
    corrections: Corrections = Corrections(),
    delta_n: int = 0,
) -> AnalyticDist:
    if scheme.m < 2 or scheme.ss <= 0.0:
        raise DegenerateScheme("analytic law needs at least two distinct values")
    pm = corrected_moments(scheme, k, corrections, delta_n)
    mean = approx_mean(scheme, k, pm)
    variance = approx_variance(scheme, k, pm)
    if not variance > 0.0:
        raise DegenerateScheme(
            "approximate variance is zero; every foreground value occurs once"
        )
    return AnalyticDist(mean, variance, float(k), corrections, int(delta_n), scheme)


def self_information(i_bar_observed: float, d: AnalyticDist) -> float:
    """Surprisal ``-ln phi(i_bar; mu, sigma^2)`` in nats (normal density)."""
    z = (i_bar_observed - d.mean) / d.std
    return 0.5 * z * z + math.log(d.std) + _LN_SQRT_2PI


def ease_ratio(j_more: float, j_less: float) -> float:
    """How many times likelier the less surprising observation is."""
    return math.exp(j_more - j_less)


def tail_probability(i_bar_observed: float, d: AnalyticDist, side: str = "two") -> float:
    """Normal tail mass beyond the observed value, via ``erfc``."""
    z = (i_bar_observed - d.mean) / (d.std * math.sqrt(2.0))
    if side == "upper":
        return 0.5 * math.erfc(z)
    if side == "lower":
        return 0.5 * math.erfc(-z)
    if side == "two":
        return min(1.0, math.erfc(abs(z)))
    raise ValueError(f"side must be 'upper', 'lower' or 'two', got {side!r}")
