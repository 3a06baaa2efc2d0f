"""Inference with a fitted map: hallucinated next positions, fusion of the
prior with a current belief by rejection sampling, and multimodal
trajectory generation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circular import TWO_PI, VonMisesMixture, vm_logpdf, vm_sample
from .grid import DirectionalPrimitive, PrimitiveMap, locate
from .speed import gamma_sample

DEFAULT_SPEED = 1.0  # m/s, when a cell offers no speed model
FUSION_MIN_MASS = 1e-12
MAX_PROPOSALS_FACTOR = 1000

_CENTER_GRID = 360
_ENVELOPE_GRID = 720
_CHECK_GRID = 3600


class OutsideMapError(ValueError):
    """A query position does not fall inside the grid."""


class FusionDegenerateError(ValueError):
    """Prior and belief share (numerically) no probability mass."""


class FusionConvergenceError(RuntimeError):
    def __init__(self, message, acceptance_rate):
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


def _grid(n):
    return np.arange(n) * (TWO_PI / n)


def _as_mixture(d) -> VonMisesMixture:
    if isinstance(d, VonMisesMixture):
        return d
    if isinstance(d, DirectionalPrimitive):
        return VonMisesMixture.uniform() if d.mixture is None else d.mixture
    raise TypeError(f"expected a VonMisesMixture or DirectionalPrimitive, got {type(d).__name__}")


def _default_speed(prim: DirectionalPrimitive, s0: Optional[float]) -> float:
    if s0 is not None:
        return float(s0)
    v = prim.dominant_speed()
    return DEFAULT_SPEED if v is None else v


# ---------------------------------------------------------------------------
# hallucination
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Hallucination:
    positions: np.ndarray  # (n, 2)
    angles: np.ndarray
    speeds: np.ndarray
    modes: np.ndarray  # -1 for an uninformative cell
    uninformative: bool

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "angles": self.angles.tolist(),
            "speeds": self.speeds.tolist(),
            "modes": self.modes.tolist(),
            "uninformative": self.uninformative,
        }


def hallucinate(
    m: PrimitiveMap,
    position,
    n: int,
    rng: np.random.Generator,
    dt: float = 1.0,
    use_speed: bool = True,
    s0: Optional[float] = None,
) -> Hallucination:
    """Project a vehicle at ``position`` one step of ``dt`` seconds ahead,
    ``n`` times, along directions (and speeds) sampled from its cell."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x, y = map(float, position)
    loc = locate(m.spec, x, y)
    if loc is None:
        raise OutsideMapError(f"position ({x}, {y}) is outside the map")
    prim = m.cell(*loc)
    base = _default_speed(prim, s0)
    if prim.is_uninformative:
        angles = rng.uniform(0.0, TWO_PI, n)
        modes = np.full(n, -1)
        speeds = np.full(n, base)
    else:
        angles, modes = prim.mixture.sample(rng, size=n)
        speeds = np.full(n, base)
        if use_speed:
            for j, g in enumerate(prim.speed_modes):
                sel = modes == j
                if g is not None and sel.any():
                    speeds[sel] = gamma_sample(g, rng, size=int(sel.sum()))
    step = speeds * dt
    pos = np.column_stack([x + step * np.cos(angles), y + step * np.sin(angles)])
    return Hallucination(pos.reshape(n, 2), angles, speeds, modes, prim.is_uninformative)


# ---------------------------------------------------------------------------
# fusion
# ---------------------------------------------------------------------------


def product_logdensity(prior, belief, theta):
    return _as_mixture(prior).logpdf(theta) + _as_mixture(belief).logpdf(theta)


def product_density(prior, belief, theta):
    """Unnormalized fused density: prior density times belief density."""
    return np.exp(product_logdensity(prior, belief, theta))


def fused_logpdf(prior, belief, theta, n_grid: int = _CHECK_GRID):
    """Log of the product normalized numerically (trapezoid rule on a
    periodic ``n_grid`` point grid)."""
    g = _grid(n_grid)
    lg = product_logdensity(prior, belief, g)
    top = lg.max()
    log_z = top + np.log(np.exp(lg - top).mean() * TWO_PI)
    return product_logdensity(prior, belief, theta) - log_z


@dataclass(frozen=True, eq=False)
class FusedDirection:
    prior: VonMisesMixture
    belief: VonMisesMixture
    samples: np.ndarray
    acceptance_rate: float
    n_proposals: int
    proposal_mu: float
    proposal_kappa: float

    def to_dict(self) -> dict:
        return {
            "samples": self.samples.tolist(),
            "acceptance_rate": self.acceptance_rate,
            "n_proposals": self.n_proposals,
            "proposal": {"mu": self.proposal_mu, "kappa": self.proposal_kappa},
        }


def _envelope(logp_fn, log_q_fn, grid):
    """Max of log(p/q) on ``grid``, refined around the three largest local
    maxima so narrow peaks between grid points are not missed."""
    r = logp_fn(grid) - log_q_fn(grid)
    best = float(r.max())
    n = grid.size
    step = TWO_PI / n
    peaks = np.flatnonzero((r >= np.roll(r, 1)) & (r >= np.roll(r, -1)))
    for j in peaks[np.argsort(r[peaks])[::-1][:3]]:
        fine = grid[j] + np.linspace(-step, step, 201)
        best = max(best, float((logp_fn(fine) - log_q_fn(fine)).max()))
    return best


def fuse(
    prior,
    belief,
    n_accept: int,
    rng: np.random.Generator,
    kappa_q: float = 0.5,
    envelope_factor: float = 1.2,
    max_proposals: Optional[int] = None,
) -> FusedDirection:
    """Draw ``n_accept`` samples of prior * belief by rejection sampling.

    The proposal is VM(center, ``kappa_q``) with center at the coarse-grid
    argmax of the product.  The envelope constant is ``envelope_factor``
    times the largest product/proposal ratio found on a 720-point grid.
    """
    if n_accept < 1:
        raise ValueError("n_accept must be >= 1")
    prior, belief = _as_mixture(prior), _as_mixture(belief)
    if max_proposals is None:
        max_proposals = MAX_PROPOSALS_FACTOR * n_accept

    def logp(t):
        return product_logdensity(prior, belief, t)

    check = _grid(_CHECK_GRID)
    lp_check = logp(check)
    top = lp_check.max()
    mass = np.exp(top) * np.exp(lp_check - top).mean() * TWO_PI if np.isfinite(top) else 0.0
    if not mass >= FUSION_MIN_MASS:
        raise FusionDegenerateError(f"prior and belief overlap mass {mass:.3g} below {FUSION_MIN_MASS}")

    coarse = _grid(_CENTER_GRID)
    center = float(coarse[np.argmax(logp(coarse))])

    def logq(t):
        return vm_logpdf(t, center, kappa_q)

    log_k = np.log(envelope_factor) + _envelope(logp, logq, _grid(_ENVELOPE_GRID))
    if np.any(lp_check > log_k + logq(check) + 1e-12):
        raise AssertionError("rejection envelope does not dominate the target")

    samples = np.empty(n_accept)
    got, proposed = 0, 0
    rate = float(np.exp(np.log(mass) - log_k))
    while got < n_accept:
        if proposed >= max_proposals:
            acc = got / proposed
            raise FusionConvergenceError(
                f"only {got} of {n_accept} samples accepted after {proposed} proposals", acc
            )
        need = n_accept - got
        batch = int(min(max(np.ceil(1.2 * need / max(rate, 1e-6)), 64), max_proposals - proposed))
        theta = vm_sample(center, kappa_q, rng, size=batch)
        u = rng.random(batch)
        with np.errstate(divide="ignore"):
            ok = np.log(u) + log_k + logq(theta) <= logp(theta)
        idx = np.flatnonzero(ok)
        if idx.size >= need:
            samples[got:] = theta[idx[:need]]
            proposed += int(idx[need - 1]) + 1
            got = n_accept
        else:
            samples[got : got + idx.size] = theta[idx]
            got += idx.size
            proposed += batch
    return FusedDirection(prior, belief, samples, got / proposed, proposed, center, kappa_q)


# ---------------------------------------------------------------------------
# trajectory generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GeneratedTrajectory:
    points: np.ndarray  # (n, 2)
    terminated_reason: str  # "horizon" | "left_map" | "uninformative_cell"

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "terminated_reason": self.terminated_reason}


def _one_trajectory(m, x0, T, dt, use_speed, s0, rng):
    pts = [x0]
    x, y = x0
    reason = "horizon"
    for _ in range(T):
        loc = locate(m.spec, x, y)
        if loc is None:
            reason = "left_map"
            break
        prim = m.cell(*loc)
        if prim.is_uninformative:
            reason = "uninformative_cell"
            break
        theta, mode = prim.mixture.sample(rng)
        g = prim.speed_modes[mode]
        s = gamma_sample(g, rng) if (use_speed and g is not None) else _default_speed(prim, s0)
        x, y = x + s * dt * np.cos(theta), y + s * dt * np.sin(theta)
        pts.append((x, y))
    return GeneratedTrajectory(np.array(pts, dtype=float), reason)


def generate_trajectories(
    m: PrimitiveMap,
    x0,
    K: int,
    T: int,
    rng: np.random.Generator,
    dt: float = 1.0,
    use_speed: bool = True,
    s0: Optional[float] = None,
) -> list[GeneratedTrajectory]:
    """K rollouts of up to T steps: locate the cell, sample a direction (and
    speed) from it, move, repeat.  Each rollout uses its own child stream of
    ``rng`` so results do not depend on evaluation order."""
    if K < 1 or T < 1:
        raise ValueError("K and T must be >= 1")
    start = (float(x0[0]), float(x0[1]))
    if locate(m.spec, *start) is None:
        raise OutsideMapError(f"start position {start} is outside the map")
    return [_one_trajectory(m, start, T, dt, use_speed, s0, child) for child in rng.spawn(K)]
