"""Learning a primitive map: mode discovery by density-based clustering on
the circle, EM for the von Mises mixture of each cell, and gamma speed
models per mode."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import __version__
from .circular import (
    KAPPA_MAX,
    RBAR_CAP,
    TWO_PI,
    VonMisesMixture,
    angular_distance,
    circular_stats,
    circular_std,
    component_logpdf,
    kappa_from_rbar,
)
from .grid import MIN_CELL_COUNT, DirectionalPrimitive, GridSpec, PrimitiveMap, bin_observations
from .ingest import Observations
from .speed import GammaParams, fit_speed

STARVED_WEIGHT = 1e-6


class FitConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of map fitting.

    ``dbscan_min_pts=None`` applies the rule ``max(min_pts_floor,
    min_pts_fraction * n)`` per cell.  A cluster only counts as a mode when
    its angular density is at least ``cluster_contrast`` times that of the
    remaining points over the rest of the circle; this keeps uniform data
    mode-free.
    """

    dbscan_eps: float = float(np.radians(15.0))
    dbscan_min_pts: Optional[int] = None
    min_pts_fraction: float = 0.01
    min_pts_floor: int = 5
    cluster_contrast: float = 3.0
    em_tol: float = 1e-6
    em_max_iter: int = 200
    kappa_max: float = KAPPA_MAX
    speed_window: float = 2.0
    min_cell_count: int = MIN_CELL_COUNT

    def __post_init__(self):
        if not 0 < self.dbscan_eps < np.pi:
            raise FitConfigError("dbscan_eps must be in (0, pi)")
        if self.dbscan_min_pts is not None and self.dbscan_min_pts < 1:
            raise FitConfigError("dbscan_min_pts must be >= 1")
        if self.speed_window <= 0:
            raise FitConfigError("speed_window must be > 0")
        if not 0 < self.kappa_max <= KAPPA_MAX:
            raise FitConfigError(f"kappa_max must be in (0, {KAPPA_MAX}]")
        if self.em_tol <= 0 or self.em_max_iter < 1:
            raise FitConfigError("em_tol > 0 and em_max_iter >= 1 required")
        if self.cluster_contrast < 0 or self.min_cell_count < 1:
            raise FitConfigError("cluster_contrast >= 0 and min_cell_count >= 1 required")

    def min_pts(self, n: int) -> int:
        if self.dbscan_min_pts is not None:
            return int(self.dbscan_min_pts)
        return max(self.min_pts_floor, int(np.ceil(self.min_pts_fraction * n)))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise FitConfigError(f"unknown fit config keys: {unknown}")
        return cls(**d)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# mode discovery
# ---------------------------------------------------------------------------


class Cluster(NamedTuple):
    members: np.ndarray
    mean: float
    rbar: float


def _arc_span(a: np.ndarray) -> tuple[float, float]:
    """Smallest arc containing all angles: (start, length)."""
    s = np.sort(a)
    gaps = np.diff(np.concatenate([s, [s[0] + TWO_PI]]))
    j = int(np.argmax(gaps))
    start = s[(j + 1) % len(s)]
    return float(start), float(TWO_PI - gaps[j])


def dbscan_circular(angles, eps: float, min_pts: int) -> np.ndarray:
    """DBSCAN labels (-1 for noise) under the wrapped angular metric.

    Neighborhoods on the circle are arcs, so core points connect exactly
    when consecutive cores (in circular order) lie within ``eps``.  Border
    points join the cluster of their nearest core.
    """
    a = np.asarray(angles, dtype=float)
    n = a.size
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    order = np.argsort(a, kind="stable")
    s = a[order]
    ext = np.concatenate([s - TWO_PI, s, s + TWO_PI])
    counts = np.searchsorted(ext, s + eps, side="right") - np.searchsorted(ext, s - eps, side="left")
    counts = np.minimum(counts, n)
    core = counts >= min_pts
    cidx = np.flatnonzero(core)
    if cidx.size == 0:
        return labels
    cs = s[cidx]
    gaps = np.diff(np.concatenate([cs, [cs[0] + TWO_PI]]))  # gap after each core
    breaks = gaps > eps
    sorted_labels = np.full(n, -1, dtype=np.int64)
    if not breaks.any():
        core_label = np.zeros(cidx.size, dtype=np.int64)
    else:
        # start labelling right after the first break so no cluster straddles the seam
        first = (int(np.argmax(breaks)) + 1) % cidx.size
        core_label = np.empty(cidx.size, dtype=np.int64)
        lab = 0
        for k in range(cidx.size):
            j = (first + k) % cidx.size
            core_label[j] = lab
            if breaks[j]:
                lab += 1
    sorted_labels[cidx] = core_label
    # border points: nearest core within eps
    border = np.flatnonzero(~core)
    if border.size:
        pos = np.searchsorted(cs, s[border])
        left = (pos - 1) % cidx.size
        right = pos % cidx.size
        dl = angular_distance(s[border], cs[left])
        dr = angular_distance(s[border], cs[right])
        near = np.where(dl <= dr, left, right)
        dist = np.minimum(dl, dr)
        ok = dist <= eps
        sorted_labels[border[ok]] = core_label[near[ok]]
    # relabel clusters by first appearance in input order for determinism
    labels[order] = sorted_labels
    _, first_pos = np.unique(labels[labels >= 0], return_index=True)
    remap = {old: new for new, old in enumerate(labels[labels >= 0][np.sort(first_pos)])}
    return np.array([remap.get(l, -1) for l in labels], dtype=np.int64)


def discover_modes(angles, cfg: FitConfig = FitConfig()) -> list[Cluster]:
    """Directional modes of a cell's angles.

    Density-based clusters under the wrapped metric, kept only when they
    span less than a half circle and are ``cfg.cluster_contrast`` times
    denser than the remaining angles spread over the rest of the circle.
    An empty list means the cell has no mode.
    """
    a = np.asarray(angles, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("discover_modes needs at least one angle")
    labels = dbscan_circular(a, cfg.dbscan_eps, cfg.min_pts(a.size))
    out = []
    for lab in range(labels.max() + 1):
        members = np.flatnonzero(labels == lab)
        _, span = _arc_span(a[members])
        if span >= np.pi:
            continue
        inner = members.size / max(span, cfg.dbscan_eps)
        rest = (a.size - members.size) / (TWO_PI - span)
        if inner < cfg.cluster_contrast * rest:
            continue
        st = circular_stats(a[members])
        out.append(Cluster(members, st.mean, st.rbar))
    return out


# ---------------------------------------------------------------------------
# EM for the von Mises mixture
# ---------------------------------------------------------------------------


@dataclass
class EMResult:
    mixture: VonMisesMixture
    loglik: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    dropped: int = 0
    saturated: int = 0

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.loglik) >= -1e-9))


def _loglik_and_resp(theta, mix):
    comp = component_logpdf(theta, mix)
    top = comp.max(axis=1, keepdims=True)
    lse = top[:, 0] + np.log(np.exp(comp - top).sum(axis=1))
    return float(lse.sum()), np.exp(comp - lse[:, None])


def _m_step(theta, resp, prev: VonMisesMixture, kappa_max):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    mus, kappas, saturated = [], [], 0
    for k in range(resp.shape[1]):
        if nk[k] <= 0:
            mus.append(prev.mus[k])
            kappas.append(0.0)
            continue
        st = circular_stats(theta, resp[:, k])
        if not st.defined:
            mus.append(prev.mus[k])
            kappas.append(0.0)
            continue
        kap, sat = kappa_from_rbar(st.rbar, full_output=True)
        if kap >= kappa_max:
            kap, sat = kappa_max, True
        mus.append(st.mean)
        kappas.append(kap)
        saturated += int(sat)
    return weights, np.array(mus), np.array(kappas), saturated


def _init_from_seeds(seeds: Sequence[Cluster], kappa_max):
    sizes = np.array([len(c.members) for c in seeds], dtype=float)
    sizes = np.maximum(sizes, 1.0)
    mus = [c.mean for c in seeds]
    kappas = [min(kappa_from_rbar(min(c.rbar, 1.0)), kappa_max) for c in seeds]
    return VonMisesMixture(mus, kappas, sizes / sizes.sum())


def arc_seeds(theta, M: int) -> list[Cluster]:
    """M seed clusters of equal count along the circle, cut open at the
    widest gap between sorted angles."""
    theta = np.asarray(theta, dtype=float).ravel()
    if M < 1:
        raise ValueError("need at least one component")
    if theta.size < M:
        raise ValueError("need at least as many angles as components")
    order = np.argsort(theta, kind="stable")
    s = theta[order]
    gaps = np.diff(np.concatenate([s, [s[0] + TWO_PI]]))
    cut = (int(np.argmax(gaps)) + 1) % s.size
    order = np.roll(order, -cut)
    out = []
    for members in np.array_split(order, M):
        st = circular_stats(theta[members])
        out.append(Cluster(members, st.mean, st.rbar))
    return out


def em_fit(angles, seeds: Sequence[Cluster] | int, cfg: FitConfig = FitConfig()) -> EMResult:
    """Fit a von Mises mixture by expectation maximization.

    ``seeds`` are the clusters used for initialization (means, rbar-derived
    concentrations, size-proportional weights); an integer M instead seeds
    from :func:`arc_seeds`.  Components whose weight falls below
    1e-6 are dropped and EM restarts from the survivors.
    """
    theta = np.asarray(angles, dtype=float).ravel()
    if isinstance(seeds, (int, np.integer)):
        seeds = arc_seeds(theta, int(seeds))
    if len(seeds) < 1:
        raise ValueError("need at least one seed cluster")
    init = _init_from_seeds(seeds, cfg.kappa_max)
    if theta.size < len(init):
        raise ValueError("need at least as many angles as components")

    overall = circular_stats(theta)
    if overall.rbar >= RBAR_CAP:
        # degenerate: all angles (nearly) identical
        mix = VonMisesMixture.single(overall.mean, cfg.kappa_max)
        ll, _ = _loglik_and_resp(theta, mix)
        return EMResult(mix, [ll], 1, True, len(init) - 1, 1)

    result = EMResult(init)
    mix = init
    ll, resp = _loglik_and_resp(theta, mix)
    result.loglik.append(ll)
    while True:
        converged = False
        for _ in range(cfg.em_max_iter):
            weights, mus, kappas, saturated = _m_step(theta, resp, mix, cfg.kappa_max)
            starved = weights < STARVED_WEIGHT
            if starved.any() and (~starved).any():
                keep = ~starved
                result.dropped += int(starved.sum())
                w = weights[keep]
                mix = VonMisesMixture(mus[keep], kappas[keep], w / w.sum())
                ll, resp = _loglik_and_resp(theta, mix)
                result.loglik = [ll]
                break
            mix = VonMisesMixture(mus, kappas, weights)
            new_ll, resp = _loglik_and_resp(theta, mix)
            result.loglik.append(new_ll)
            result.n_iter += 1
            result.saturated = saturated
            if abs(new_ll - ll) <= cfg.em_tol * abs(ll) or new_ll == ll:
                ll = new_ll
                converged = True
                break
            ll = new_ll
        else:
            break
        if converged:
            break
    result.mixture = mix
    result.converged = converged
    return result


# ---------------------------------------------------------------------------
# speed models
# ---------------------------------------------------------------------------


def speed_window_mask(theta, mixture: VonMisesMixture, multiplier: float = 2.0) -> np.ndarray:
    """Boolean ``(n, M)``: angle within ``multiplier`` circular std of each
    mode.  A zero-concentration mode has no direction, so it takes all."""
    theta = np.asarray(theta, dtype=float).ravel()
    sigma = np.atleast_1d(circular_std(mixture.kappas))
    d = angular_distance(theta[:, None], mixture.mus[None, :])
    mask = d <= multiplier * sigma[None, :]
    mask[:, mixture.kappas == 0] = True
    return mask


def fit_speed_modes(theta, speed, mixture: VonMisesMixture, multiplier: float = 2.0) -> tuple:
    """Gamma speed model per mode from observations inside that mode's
    angular window; ``None`` where the selection is degenerate."""
    speed = np.asarray(speed, dtype=float).ravel()
    mask = speed_window_mask(theta, mixture, multiplier)
    return tuple(fit_speed(speed[mask[:, m]]) for m in range(len(mixture)))


# ---------------------------------------------------------------------------
# whole map
# ---------------------------------------------------------------------------


@dataclass
class CellFit:
    ix: int
    iy: int
    n: int
    n_modes: int
    n_iter: int = 0
    converged: bool = True
    dropped: int = 0
    saturated: int = 0
    monotone: bool = True
    time_ms: float = 0.0


@dataclass
class FitReport:
    cells_fitted: int = 0
    cells_uninformative: int = 0
    n_observations: int = 0
    n_outside: int = 0
    dropped_components: int = 0
    saturations: int = 0
    non_monotone_cells: int = 0
    wall_time_s: float = 0.0
    cells: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def fit_cell(theta, speed, cfg: FitConfig = FitConfig()) -> tuple[DirectionalPrimitive, Optional[EMResult]]:
    n = len(theta)
    if n < cfg.min_cell_count:
        return DirectionalPrimitive.uninformative(n), None
    clusters = discover_modes(theta, cfg)
    if not clusters:
        return DirectionalPrimitive.uninformative(n), None
    em = em_fit(theta, clusters, cfg)
    modes = fit_speed_modes(theta, speed, em.mixture, cfg.speed_window)
    return DirectionalPrimitive(em.mixture, modes, n), em


def fit_map(obs: Observations, spec: GridSpec, cfg: FitConfig = FitConfig(), return_report: bool = False):
    """Fit every cell of ``spec`` from ``obs``.

    Cells with fewer than ``cfg.min_cell_count`` observations, or without a
    discovered mode, are uninformative.  With ``return_report`` a
    ``(map, FitReport)`` pair is returned.
    """
    if len(obs) == 0:
        raise ValueError("fit_map needs at least one observation")
    t0 = time.perf_counter()
    binned = bin_observations(spec, obs)
    report = FitReport(n_observations=len(obs), n_outside=binned.n_outside)
    cells = []
    for k, idx in enumerate(binned.indices):
        if idx.size == 0:
            cells.append(DirectionalPrimitive.uninformative(0))
            report.cells_uninformative += 1
            continue
        tc = time.perf_counter()
        prim, em = fit_cell(obs.theta[idx], obs.speed[idx], cfg)
        cells.append(prim)
        if em is None:
            report.cells_uninformative += 1
            continue
        ix, iy = spec.unflat(k)
        rec = CellFit(
            ix, iy, int(idx.size), len(em.mixture), em.n_iter, em.converged,
            em.dropped, em.saturated, em.monotone, 1e3 * (time.perf_counter() - tc),
        )
        report.cells.append(rec)
        report.cells_fitted += 1
        report.dropped_components += em.dropped
        report.saturations += em.saturated
        report.non_monotone_cells += int(not em.monotone)
    report.wall_time_s = time.perf_counter() - t0
    metadata = {
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "created_by": f"dirprim {__version__}",
        "n_observations": len(obs),
    }
    m = PrimitiveMap(spec, tuple(cells), metadata)
    return (m, report) if return_report else m
