"""Gamma models of nonnegative speed: density, moments, maximum likelihood
fitting and sampling.  Parameterized by shape ``alpha`` and rate ``beta``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, gammaln, polygamma

SPEED_FLOOR = 0.1  # m/s
MIN_SPEED_SAMPLES = 5

_NEWTON_TOL = 1e-10
_NEWTON_MAXITER = 100


class DegenerateDataError(ValueError):
    """Too few samples, or no spread, to estimate a gamma law."""


@dataclass(frozen=True)
class GammaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"gamma {name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def mean(self) -> float:
        return self.alpha / self.beta

    @property
    def variance(self) -> float:
        return self.alpha / self.beta**2

    def pdf(self, s):
        return gamma_pdf(s, self)

    def logpdf(self, s):
        return gamma_logpdf(s, self)


def gamma_logpdf(s, p: GammaParams):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0) or np.any(np.isnan(s)):
        raise ValueError("speed must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = p.alpha * np.log(p.beta) - gammaln(p.alpha) + (p.alpha - 1.0) * np.log(s) - p.beta * s
    if p.alpha == 1.0:
        out = np.where(s == 0, np.log(p.beta), out)
    if out.ndim == 0:
        return float(out)
    return out


def gamma_pdf(s, p: GammaParams):
    """beta^alpha / Gamma(alpha) * s^(alpha-1) * exp(-beta s).

    At ``s == 0`` this is +inf for alpha < 1 and 0 for alpha > 1.
    """
    return np.exp(gamma_logpdf(s, p))


def gamma_stats(p: GammaParams) -> tuple[float, float]:
    """(mean, variance) = (alpha / beta, alpha / beta^2)."""
    return p.mean, p.variance


def _solve_shape(target: float) -> float:
    """Solve log(a) - digamma(a) = target > 0 for a.

    Newton from the moment-based seed, guarded by a bracket: the left side
    is strictly decreasing, so any Newton step leaving the bracket is
    replaced by bisection (geometric, since a spans many decades).
    """
    a = (3.0 - target + np.sqrt((target - 3.0) ** 2 + 24.0 * target)) / (12.0 * target)
    lo, hi = 0.0, np.inf
    for _ in range(_NEWTON_MAXITER):
        g = np.log(a) - digamma(a) - target
        if g > 0:
            lo = a
        else:
            hi = a
        dg = 1.0 / a - polygamma(1, a)
        new = a - g / dg
        if not (lo < new < hi) or not np.isfinite(new):
            new = np.sqrt(lo * hi) if lo > 0 and np.isfinite(hi) else (2.0 * a if g > 0 else a / 2.0)
        if abs(new - a) <= _NEWTON_TOL * a:
            return float(new)
        a = new
    return float(a)


def gamma_mle(samples) -> GammaParams:
    """Maximum-likelihood gamma fit.

    Samples below ``SPEED_FLOOR`` are discarded first.  The shape solves
    ``log(a) - digamma(a) = log(mean) - mean(log s)``; the rate is then
    ``a / mean`` so the fitted mean equals the sample mean.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if np.any(s < 0) or np.any(~np.isfinite(s)):
        raise ValueError("speed samples must be finite and nonnegative")
    s = s[s >= SPEED_FLOOR]
    if s.size < 2:
        raise DegenerateDataError(f"{s.size} usable speed samples, need at least 2")
    mean = s.mean()
    target = np.log(mean) - np.log(s).mean()
    if not target > 1e-12:
        raise DegenerateDataError("speed samples have no spread")
    alpha = _solve_shape(float(target))
    return GammaParams(alpha, alpha / mean)


def gamma_moments_fit(samples) -> GammaParams:
    """Method-of-moments fit: alpha = mean^2 / var, beta = mean / var."""
    s = np.asarray(samples, dtype=float).ravel()
    s = s[s >= SPEED_FLOOR]
    if s.size < 2:
        raise DegenerateDataError("need at least two samples")
    mean, var = s.mean(), s.var()
    if not var > 0:
        raise DegenerateDataError("speed samples have no spread")
    return GammaParams(mean * mean / var, mean / var)


def fit_speed(samples) -> GammaParams | None:
    """Gamma fit with the fallback policy used by map learning.

    Fewer than ``MIN_SPEED_SAMPLES`` usable samples, or no spread, gives
    ``None`` (uninformative speed).  If the likelihood fit fails numerically
    a moment fit is tried before giving up.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if np.count_nonzero(s >= SPEED_FLOOR) < MIN_SPEED_SAMPLES:
        return None
    try:
        return gamma_mle(s)
    except DegenerateDataError:
        return None
    except (FloatingPointError, ValueError, OverflowError):
        try:
            return gamma_moments_fit(samples)
        except DegenerateDataError:
            return None


def gamma_loglik(samples, p: GammaParams) -> float:
    return float(np.sum(gamma_logpdf(samples, p)))


def gamma_sample(p: GammaParams, rng: np.random.Generator, size=None):
    """Gamma draws with shape alpha and rate beta (numpy's scale = 1/beta)."""
    out = rng.gamma(p.alpha, 1.0 / p.beta, size=size)
    if size is None:
        return float(out)
    return out
