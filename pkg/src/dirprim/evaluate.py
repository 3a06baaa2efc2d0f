"""Evaluation protocol: held-out split, average direction/speed densities,
likelihood improvement from fusing prior and observation, wrapped RMSE."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .circular import TWO_PI, VonMisesMixture, angle_diff, component_logpdf
from .grid import PrimitiveMap, locate, locate_many
from .infer import fused_logpdf
from .ingest import Observations
from .speed import gamma_pdf

DEFAULT_KAPPA_OBS = 2.5


def split_test(obs: Observations, fraction: float = 0.10, rng: np.random.Generator | None = None):
    """Shuffle then cut: ``round(fraction * n)`` observations go to test."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n = len(obs)
    if n == 0:
        raise ValueError("cannot split an empty observation set")
    rng = np.random.default_rng() if rng is None else rng
    perm = rng.permutation(n)
    n_test = int(round(fraction * n))
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return obs[train_idx], obs[test_idx]


def split_tracks(tracks, fraction: float = 0.10, rng: np.random.Generator | None = None):
    """Per-trajectory variant of :func:`split_test`: whole tracks go to the
    test side, ``round(fraction * n_tracks)`` of them."""
    tracks = list(tracks)
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if not tracks:
        raise ValueError("cannot split an empty track list")
    rng = np.random.default_rng() if rng is None else rng
    perm = rng.permutation(len(tracks))
    n_test = int(round(fraction * len(tracks)))
    test = set(perm[:n_test].tolist())
    return [t for i, t in enumerate(tracks) if i not in test], [t for i, t in enumerate(tracks) if i in test]


@dataclass
class DensitySummary:
    mean: float
    std: float
    n: int
    n_outside: int = 0
    per_cell: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_std(v) -> tuple[float, float]:
    # constant inputs (e.g. a uniform map) report their value and std 0 exactly
    if np.all(v == v[0]):
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std())


def _summarize(values, flat, n_outside, spec) -> DensitySummary:
    if values.size == 0:
        return DensitySummary(float("nan"), float("nan"), 0, n_outside)
    rows = []
    for k in np.unique(flat):
        ix, iy = spec.unflat(int(k))
        mean, std = _mean_std(values[flat == k])
        rows.append({"ix": ix, "iy": iy, "n": int(np.count_nonzero(flat == k)), "mean": mean, "std": std})
    mean, std = _mean_std(values)
    return DensitySummary(mean, std, int(values.size), n_outside, rows)


def direction_densities(m: PrimitiveMap, test: Observations):
    """Per-observation direction density in its own cell; returns
    ``(densities, flat_cells)`` for the observations inside the map."""
    flat = locate_many(m.spec, test.x, test.y)
    inside = np.flatnonzero(flat >= 0)
    dens = np.empty(inside.size)
    for k in np.unique(flat[inside]):
        sel = flat[inside] == k
        dens[sel] = m.cells[int(k)].pdf(test.theta[inside][sel])
    return dens, flat[inside]


def avg_density_direction(m: PrimitiveMap, test: Observations) -> DensitySummary:
    """Mean and std of the cell direction density at each test heading.
    Uninformative cells contribute 1/(2 pi); points off the map are counted
    in ``n_outside`` and excluded."""
    if len(test) == 0:
        raise ValueError("empty test set")
    dens, flat = direction_densities(m, test)
    return _summarize(dens, flat, len(test) - dens.size, m.spec)


def avg_density_speed(m: PrimitiveMap, test: Observations, floor_density: float = 0.0) -> DensitySummary:
    """Mean and std of the gamma density of each test speed under the speed
    model of its most responsible direction mode.  Modes (or cells) without
    a speed model contribute ``floor_density``."""
    if len(test) == 0:
        raise ValueError("empty test set")
    flat = locate_many(m.spec, test.x, test.y)
    inside = np.flatnonzero(flat >= 0)
    dens = np.full(inside.size, float(floor_density))
    for k in np.unique(flat[inside]):
        prim = m.cells[int(k)]
        if prim.is_uninformative:
            continue
        sel = np.flatnonzero(flat[inside] == k)
        rows = inside[sel]
        mode = np.argmax(component_logpdf(test.theta[rows], prim.mixture), axis=1)
        for j, g in enumerate(prim.speed_modes):
            pick = mode == j
            if g is not None and pick.any():
                dens[sel[pick]] = gamma_pdf(test.speed[rows[pick]], g)
    return _summarize(dens, flat[inside], len(test) - inside.size, m.spec)


# ---------------------------------------------------------------------------
# likelihood improvement
# ---------------------------------------------------------------------------


def predecessor_cell(m: PrimitiveMap, ix: int, iy: int) -> Optional[tuple[int, int]]:
    """The fitted neighbor one cell upstream of the dominant flow direction."""
    prim = m.cell(ix, iy)
    if prim.is_uninformative:
        return None
    mu = prim.mixture.mus[prim.dominant_mode()]
    cx, cy = m.spec.center(ix, iy)
    h = m.spec.cell_size
    loc = locate(m.spec, cx - h * np.cos(mu), cy - h * np.sin(mu))
    if loc is None or loc == (ix, iy) or m.cell(*loc).is_uninformative:
        return None
    return loc


def predecessor_belief(kappa_obs: float = DEFAULT_KAPPA_OBS) -> Callable:
    """Belief builder: VM(most probable direction of the predecessor cell,
    ``kappa_obs``), or None without a fitted predecessor."""

    def build(m: PrimitiveMap, cell: tuple[int, int]) -> Optional[VonMisesMixture]:
        pred = predecessor_cell(m, *cell)
        if pred is None:
            return None
        return VonMisesMixture.single(m.cell(*pred).mixture.mode_direction(), kappa_obs)

    return build


def improvement_percent(l_star: float, l_t: float) -> float:
    """(L* - Lt) / |Lt| * 100; equals (L* - Lt) / Lt * 100 whenever Lt > 0."""
    return (l_star - l_t) / abs(l_t) * 100.0


@dataclass
class ImprovementReport:
    cells: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    mean_improvement: float = float("nan")
    fraction_positive: float = float("nan")
    L0: float = 0.0
    Lt: float = 0.0
    Lstar: float = 0.0
    aggregate_improvement: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def likelihood_improvement(
    m: PrimitiveMap,
    test: Observations,
    eval_cells: Optional[Sequence[tuple[int, int]]] = None,
    belief_builder: Optional[Callable] = None,
) -> ImprovementReport:
    """Per-cell log-likelihoods of the test headings under the prior (L0),
    the observation belief (Lt) and their normalized product (L*), with the
    percentage improvement of L* over Lt.

    ``eval_cells`` defaults to every fitted cell holding test points.  Cells
    whose belief cannot be built (no fitted predecessor) are skipped.
    """
    if belief_builder is None:
        belief_builder = predecessor_belief()
    flat = locate_many(m.spec, test.x, test.y)
    if eval_cells is None:
        eval_cells = [m.spec.unflat(int(k)) for k in np.unique(flat[flat >= 0])
                      if not m.cells[int(k)].is_uninformative]
    rep = ImprovementReport()
    for ix, iy in eval_cells:
        theta = test.theta[flat == m.spec.flat_index(ix, iy)]
        prim = m.cell(ix, iy)
        if theta.size == 0 or prim.is_uninformative:
            rep.skipped.append({"ix": ix, "iy": iy, "reason": "no test data" if theta.size == 0 else "uninformative"})
            continue
        belief = belief_builder(m, (ix, iy))
        if belief is None:
            rep.skipped.append({"ix": ix, "iy": iy, "reason": "no predecessor"})
            continue
        l0 = float(np.sum(prim.logpdf(theta)))
        lt = float(np.sum(belief.logpdf(theta)))
        ls = float(np.sum(fused_logpdf(prim.mixture, belief, theta)))
        rep.cells.append({
            "ix": ix, "iy": iy, "n": int(theta.size), "L0": l0, "Lt": lt, "Lstar": ls,
            "improvement": improvement_percent(ls, lt),
        })
        rep.L0 += l0
        rep.Lt += lt
        rep.Lstar += ls
    if rep.cells:
        imp = np.array([c["improvement"] for c in rep.cells])
        rep.mean_improvement = float(imp.mean())
        rep.fraction_positive = float(np.mean(imp > 0))
        rep.aggregate_improvement = improvement_percent(rep.Lstar, rep.Lt)
    return rep


# ---------------------------------------------------------------------------
# angles
# ---------------------------------------------------------------------------


def rmse_angles(samples, truth: float) -> float:
    """Root-mean-square wrapped angular error in degrees (inputs radians)."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("need at least one sample")
    d = -angle_diff(truth, s)  # (-pi, pi]
    return float(np.degrees(np.sqrt(np.mean(d * d))))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    direction: DensitySummary
    speed: DensitySummary
    n_test: int
    uniform_density: float = 1.0 / TWO_PI
    improvement: Optional[ImprovementReport] = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "n_test": self.n_test,
            "direction": self.direction.to_dict(),
            "speed": self.speed.to_dict(),
            "uniform_density": self.uniform_density,
            "config": self.config,
        }
        if self.improvement is not None:
            d["improvement"] = self.improvement.to_dict()
        return d


def evaluate(
    m: PrimitiveMap,
    test: Observations,
    speed_floor_density: float = 0.0,
    improvement: bool = False,
    kappa_obs: float = DEFAULT_KAPPA_OBS,
    config: Optional[dict] = None,
) -> EvalReport:
    imp = None
    if improvement:
        imp = likelihood_improvement(m, test, belief_builder=predecessor_belief(kappa_obs))
    return EvalReport(
        avg_density_direction(m, test),
        avg_density_speed(m, test, speed_floor_density),
        len(test),
        improvement=imp,
        config=dict(config or {}),
    )


def write_cell_csv(report: EvalReport, path) -> None:
    """Per-cell rows: direction and speed density means, counts."""
    speed = {(r["ix"], r["iy"]): r for r in report.speed.per_cell}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ix", "iy", "n", "direction_mean", "direction_std", "speed_mean", "speed_std"])
        for r in report.direction.per_cell:
            s = speed.get((r["ix"], r["iy"]), {"mean": "", "std": ""})
            w.writerow([r["ix"], r["iy"], r["n"], r["mean"], r["std"], s["mean"], s["std"]])
