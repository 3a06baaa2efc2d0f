"""Circular statistics: modified Bessel functions, von Mises densities,
mixtures, sampling and concentration inversion.

Angles are radians in ``[0, 2*pi)``; heading 0 is the +x axis and angles
grow counterclockwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
LOG_TWO_PI = float(np.log(TWO_PI))

KAPPA_MAX = 1e4
RBAR_CAP = 0.99999
BESSEL_X_MAX = 700.0
RBAR_UNDEFINED = 1e-12

_SERIES_SWITCH = 15.0
_SERIES_MAX_TERMS = 200
_ASYMPTOTIC_TERMS = 25
_NEWTON_TOL = 1e-12
_NEWTON_MAXITER = 100


def wrap_angle(theta):
    """Wrap any real angle (scalar or array) into ``[0, 2*pi)``."""
    out = np.mod(theta, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    out = np.where(out >= TWO_PI, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def angle_diff(a, b):
    """Signed wrapped difference ``a - b`` in ``[-pi, pi)``."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + np.pi, TWO_PI) - np.pi
    if np.ndim(d) == 0:
        return float(d)
    return d


def angular_distance(a, b):
    """Unsigned wrapped distance ``min(|a-b|, 2*pi - |a-b|)`` in ``[0, pi]``."""
    return np.abs(angle_diff(a, b))


# ---------------------------------------------------------------------------
# modified Bessel functions of the first kind, orders 0 and 1
# ---------------------------------------------------------------------------


def _check_order(order):
    if order not in (0, 1):
        raise ValueError(f"unsupported Bessel order {order!r}; expected 0 or 1")


def _series(order, x):
    """Power series sum_k (x/2)^(2k+order) / (k! (k+order)!)."""
    if x.size == 1:
        return np.array([_series_scalar(order, float(x[0]))])
    half = x / 2.0
    q = half * half
    term = np.ones_like(x) if order == 0 else half.copy()
    total = term.copy()
    for k in range(1, _SERIES_MAX_TERMS):
        term = term * q / (k * (k + order))
        total = total + term
        if np.all(term <= 1e-17 * total):
            break
    return total


def _asymptotic_sum(order, x):
    """sum_k (-1)^k a_k(order) / x^k of the large-argument expansion.

    I_order(x) ~ exp(x) / sqrt(2 pi x) * sum.  Truncated at a fixed number of
    terms, which is past the smallest term for every x >= 15.
    """
    if x.size == 1:
        return np.array([_asymptotic_scalar(order, float(x[0]))])
    mu = 4.0 * order * order
    term = np.ones_like(x)
    total = term.copy()
    for k in range(1, _ASYMPTOTIC_TERMS):
        term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total = total + term
    return total


def _series_scalar(order, x):
    half = x / 2.0
    q = half * half
    term = 1.0 if order == 0 else half
    total = term
    for k in range(1, _SERIES_MAX_TERMS):
        term *= q / (k * (k + order))
        total += term
        if term <= 1e-17 * total:
            break
    return total


def _asymptotic_scalar(order, x):
    mu = 4.0 * order * order
    term = total = 1.0
    for k in range(1, _ASYMPTOTIC_TERMS):
        term = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        total += term
    return total


def log_bessel_i(order: int, x):
    """Natural log of I_order(x); finite for all x >= 0 (except log I_1(0))."""
    _check_order(order)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise ValueError("Bessel argument must be nonnegative")
    flat = np.atleast_1d(xa).astype(float)
    out = np.empty_like(flat)
    small = flat <= _SERIES_SWITCH
    if np.any(small):
        with np.errstate(divide="ignore"):
            out[small] = np.log(_series(order, flat[small]))
    if np.any(~small):
        xl = flat[~small]
        out[~small] = xl - 0.5 * np.log(TWO_PI * xl) + np.log(_asymptotic_sum(order, xl))
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def bessel_i(order: int, x):
    """Modified Bessel function of the first kind I_order(x) for order 0 or 1.

    Raises ``OverflowError`` above ``BESSEL_X_MAX``; use :func:`log_bessel_i`
    or :func:`bessel_ratio` there.
    """
    _check_order(order)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise ValueError("Bessel argument must be nonnegative")
    if np.any(xa > BESSEL_X_MAX):
        raise OverflowError(f"I_{order}(x) overflow regime for x > {BESSEL_X_MAX}")
    flat = np.atleast_1d(xa).astype(float)
    out = np.empty_like(flat)
    small = flat <= _SERIES_SWITCH
    if np.any(small):
        out[small] = _series(order, flat[small])
    if np.any(~small):
        xl = flat[~small]
        out[~small] = np.exp(xl) / np.sqrt(TWO_PI * xl) * _asymptotic_sum(order, xl)
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def bessel_ratio(kappa):
    """A(kappa) = I_1(kappa) / I_0(kappa), stable for any kappa >= 0."""
    ka = np.asarray(kappa, dtype=float)
    if np.any(ka < 0):
        raise ValueError("kappa must be nonnegative")
    flat = np.atleast_1d(ka).astype(float)
    out = np.empty_like(flat)
    small = flat <= _SERIES_SWITCH
    if np.any(small):
        out[small] = _series(1, flat[small]) / _series(0, flat[small])
    if np.any(~small):
        xl = flat[~small]
        out[~small] = _asymptotic_sum(1, xl) / _asymptotic_sum(0, xl)
    if ka.ndim == 0:
        return float(out[0])
    return out.reshape(ka.shape)


def circular_variance(kappa):
    """Von Mises circular variance ``1 - A(kappa)``, in [0, 1]."""
    return 1.0 - bessel_ratio(kappa)


def circular_std(kappa):
    """Square root of :func:`circular_variance`; 1 for the uniform case."""
    return np.sqrt(circular_variance(kappa))


# ---------------------------------------------------------------------------
# von Mises components and mixtures
# ---------------------------------------------------------------------------


def _check_kappa(kappa):
    k = float(kappa)
    if not np.isfinite(k) or k < 0:
        raise ValueError(f"kappa must be finite and >= 0, got {kappa!r}")
    if k > KAPPA_MAX * (1 + 1e-12):
        raise ValueError(f"kappa {k} exceeds KAPPA_MAX={KAPPA_MAX}")
    return k


@dataclass(frozen=True)
class VonMisesComponent:
    """A single von Mises law; ``kappa == 0`` is the uniform circle."""

    mu: float
    kappa: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        object.__setattr__(self, "mu", wrap_angle(float(self.mu)))
        object.__setattr__(self, "kappa", _check_kappa(self.kappa))


@dataclass(frozen=True, eq=False)
class VonMisesMixture:
    """Weighted mixture of von Mises components.

    ``mus``, ``kappas`` and ``weights`` are read-only float arrays of equal
    length M >= 1.  Weights must be positive and sum to one within 1e-9.
    """

    mus: np.ndarray
    kappas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        mus = np.array(self.mus, dtype=float, ndmin=1)
        kappas = np.array(self.kappas, dtype=float, ndmin=1)
        weights = np.array(self.weights, dtype=float, ndmin=1)
        if not (mus.ndim == kappas.ndim == weights.ndim == 1):
            raise ValueError("mixture parameters must be one-dimensional")
        if not (len(mus) == len(kappas) == len(weights)) or len(mus) == 0:
            raise ValueError("mus, kappas and weights must have the same nonzero length")
        if not np.all(np.isfinite(mus)):
            raise ValueError("mixture means must be finite")
        for k in kappas:
            _check_kappa(k)
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValueError("mixture weights must be finite and > 0")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights sum to {weights.sum()!r}, expected 1")
        mus = wrap_angle(mus)
        for arr, name in ((mus, "mus"), (kappas, "kappas"), (weights, "weights")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def single(cls, mu: float, kappa: float) -> "VonMisesMixture":
        return cls([mu], [kappa], [1.0])

    @classmethod
    def uniform(cls) -> "VonMisesMixture":
        return cls([0.0], [0.0], [1.0])

    @classmethod
    def from_components(
        cls, components: Sequence[VonMisesComponent], weights: Sequence[float]
    ) -> "VonMisesMixture":
        return cls([c.mu for c in components], [c.kappa for c in components], weights)

    @property
    def components(self) -> list[VonMisesComponent]:
        return [VonMisesComponent(m, k) for m, k in zip(self.mus, self.kappas)]

    def __len__(self) -> int:
        return len(self.weights)

    def __repr__(self) -> str:
        return (
            f"VonMisesMixture(mus={self.mus.tolist()}, kappas={self.kappas.tolist()}, "
            f"weights={self.weights.tolist()})"
        )

    def pdf(self, theta):
        return mixture_pdf(theta, self)

    def logpdf(self, theta):
        return mixture_logpdf(theta, self)

    def sample(self, rng: np.random.Generator, size=None):
        return mixture_sample(self, rng, size)

    def mode_direction(self, n_grid: int = 3600) -> float:
        """Most probable direction, located on an ``n_grid`` point grid."""
        grid = np.arange(n_grid) * (TWO_PI / n_grid)
        return float(grid[np.argmax(self.logpdf(grid))])


def vm_logpdf(theta, mu, kappa):
    """Log density of VM(mu, kappa) at ``theta``; broadcasts over arrays."""
    kappa = np.asarray(kappa, dtype=float)
    out = kappa * np.cos(np.asarray(theta, dtype=float) - mu) - LOG_TWO_PI - log_bessel_i(0, kappa)
    if np.ndim(out) == 0:
        return float(out)
    return out


def vm_pdf(theta, mu, kappa):
    """Von Mises density exp(kappa cos(theta - mu)) / (2 pi I_0(kappa)).

    Evaluated in the log domain so that kappa up to ``KAPPA_MAX`` stays finite.
    """
    return np.exp(vm_logpdf(theta, mu, kappa))


def component_logpdf(theta, m: VonMisesMixture) -> np.ndarray:
    """Per-component weighted log densities, shape ``(len(theta), M)``."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))[:, None]
    return np.log(m.weights)[None, :] + vm_logpdf(th, m.mus[None, :], m.kappas[None, :])


def mixture_logpdf(theta, m: VonMisesMixture):
    comp = component_logpdf(theta, m)
    top = comp.max(axis=1)
    out = top + np.log(np.exp(comp - top[:, None]).sum(axis=1))
    if np.ndim(theta) == 0:
        return float(out[0])
    return out.reshape(np.shape(theta))


def mixture_pdf(theta, m: VonMisesMixture):
    """Mixture density sum_m w_m VM(theta; mu_m, kappa_m)."""
    return np.exp(mixture_logpdf(theta, m))


# ---------------------------------------------------------------------------
# summary statistics and concentration inversion
# ---------------------------------------------------------------------------


class CircularStats(NamedTuple):
    mean: float
    rbar: float
    defined: bool


def circular_stats(angles, weights=None) -> CircularStats:
    """Circular mean and mean resultant length of (optionally weighted) angles.

    ``defined`` is False when the resultant vanishes (rbar < 1e-12); the
    reported mean is then 0 and carries no information.
    """
    a = np.asarray(angles, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("circular_stats needs at least one angle")
    if weights is None:
        w = np.full(a.size, 1.0 / a.size)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != a.shape:
            raise ValueError("weights must match angles")
        total = w.sum()
        if not total > 0:
            raise ValueError("weights must have a positive sum")
        w = w / total
    c = float(np.dot(w, np.cos(a)))
    s = float(np.dot(w, np.sin(a)))
    rbar = min(float(np.hypot(c, s)), 1.0)
    if rbar < RBAR_UNDEFINED:
        return CircularStats(0.0, rbar, False)
    return CircularStats(wrap_angle(np.arctan2(s, c)), rbar, True)


def _ratio_derivative(kappa, a):
    if kappa < 1e-8:
        return 0.5
    return 1.0 - a / kappa - a * a


def kappa_from_rbar(rbar: float, full_output: bool = False):
    """Invert A(kappa) = rbar for the von Mises concentration.

    Closed-form seed rbar (2 - rbar^2) / (1 - rbar^2) refined by Newton's
    method.  Results are capped at ``KAPPA_MAX``; with ``full_output`` a
    ``(kappa, saturated)`` pair is returned.
    """
    r = float(rbar)
    if not (0.0 <= r <= 1.0) or np.isnan(r):
        raise ValueError(f"rbar must lie in [0, 1], got {rbar!r}")
    if r <= 0.0:
        kappa, saturated = 0.0, False
    elif r >= RBAR_CAP or r >= bessel_ratio(KAPPA_MAX):
        kappa, saturated = KAPPA_MAX, True
    else:
        kappa = r * (2.0 - r * r) / (1.0 - r * r)
        kappa = min(kappa, KAPPA_MAX)
        for _ in range(_NEWTON_MAXITER):
            a = bessel_ratio(kappa)
            step = (a - r) / _ratio_derivative(kappa, a)
            new = kappa - step
            if new <= 0:
                new = kappa / 2.0
            new = min(new, KAPPA_MAX)
            if abs(new - kappa) <= _NEWTON_TOL * max(1.0, kappa):
                kappa = new
                break
            kappa = new
        saturated = False
    if full_output:
        return kappa, saturated
    return kappa


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def vm_sample(mu: float, kappa: float, rng: np.random.Generator, size=None):
    """Exact von Mises draws by wrapped-Cauchy envelope rejection.

    ``size=None`` returns a float; otherwise an array of that shape.
    """
    kappa = _check_kappa(kappa)
    n = 1 if size is None else int(np.prod(size))
    if kappa < 1e-8:
        out = rng.uniform(0.0, TWO_PI, n)
    else:
        if kappa < 1e-5:
            s = 1.0 / kappa + kappa
        else:
            tau = 1.0 + np.sqrt(1.0 + 4.0 * kappa * kappa)
            rho = (tau - np.sqrt(2.0 * tau)) / (2.0 * kappa)
            s = (1.0 + rho * rho) / (2.0 * rho)
        out = np.empty(n)
        filled = 0
        while filled < n:
            need = n - filled
            batch = max(need + need // 2, 16)
            u1, u2, u3 = rng.random((3, batch))
            z = np.cos(np.pi * u1)
            f = (1.0 + s * z) / (s + z)
            c = kappa * (s - f)
            with np.errstate(divide="ignore", invalid="ignore"):
                ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
            sign = np.where(u3 > 0.5, 1.0, -1.0)
            theta = mu + sign * np.arccos(np.clip(f, -1.0, 1.0))
            acc = theta[ok][:need]
            out[filled : filled + acc.size] = acc
            filled += acc.size
        out = wrap_angle(out)
    out = np.asarray(out, dtype=float)
    if size is None:
        return float(out[0])
    return out.reshape(size)


def mixture_sample(m: VonMisesMixture, rng: np.random.Generator, size=None):
    """Draw ``(angle, mode index)``: the mode from Categorical(weights), then
    the angle from that component."""
    n = 1 if size is None else int(np.prod(size))
    modes = rng.choice(len(m), size=n, p=m.weights)
    angles = np.empty(n)
    for j in range(len(m)):
        sel = modes == j
        k = int(sel.sum())
        if k:
            angles[sel] = vm_sample(m.mus[j], m.kappas[j], rng, size=k)
    if size is None:
        return float(angles[0]), int(modes[0])
    return angles.reshape(size), modes.reshape(size)


def product_of_von_mises(mu1: float, kappa1: float, mu2: float, kappa2: float):
    """Parameters of VM(mu1, kappa1) * VM(mu2, kappa2), which is again von Mises
    (up to normalization): resultant of the two weighted unit vectors."""
    c = kappa1 * np.cos(mu1) + kappa2 * np.cos(mu2)
    s = kappa1 * np.sin(mu1) + kappa2 * np.sin(mu2)
    return wrap_angle(np.arctan2(s, c)), float(np.hypot(c, s))
