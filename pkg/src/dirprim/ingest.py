"""Trajectory ingestion: CSV parsing, heading/speed derivation and synthetic
scenarios (corridor, three-way junction, roundabout).

The CSV format has a header row with at least ``track_id,t,x,y`` (seconds,
meters).  Extra columns are ignored.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .circular import TWO_PI, vm_sample, wrap_angle
from .speed import SPEED_FLOOR

REQUIRED_COLUMNS = ("track_id", "t", "x", "y")
SCENARIOS = ("corridor", "three_way", "roundabout")


class TrajectoryParseError(ValueError):
    pass


class ScenarioConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RawTrajectory:
    """One track: strictly increasing times ``t`` with positions ``x``, ``y``."""

    id: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (t.ndim == x.ndim == y.ndim == 1) or not (len(t) == len(x) == len(y)):
            raise ValueError("t, x, y must be 1-d arrays of equal length")
        if len(t) < 2:
            raise ValueError(f"track {self.id!r} needs at least 2 samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"track {self.id!r} timestamps not strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return len(self.t)


class MotionObservation(NamedTuple):
    x: float
    y: float
    theta: float
    speed: float


@dataclass(frozen=True, eq=False)
class Observations:
    """Columnar set of motion observations (position, heading, speed)."""

    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    speed: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, f.name), dtype=float).ravel() for f in fields(self)]
        if len({a.size for a in arrs}) != 1:
            raise ValueError("observation columns must have equal length")
        for f, a in zip(fields(self), arrs):
            object.__setattr__(self, f.name, a)

    @classmethod
    def empty(cls) -> "Observations":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def from_records(cls, records: Iterable[MotionObservation]) -> "Observations":
        rows = list(records)
        if not rows:
            return cls.empty()
        a = np.array(rows, dtype=float)
        return cls(a[:, 0], a[:, 1], wrap_angle(a[:, 2]), a[:, 3])

    @classmethod
    def concatenate(cls, parts: Iterable["Observations"]) -> "Observations":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(cls)))

    def __len__(self):
        return self.x.size

    def __getitem__(self, idx) -> "Observations":
        return Observations(self.x[idx], self.y[idx], self.theta[idx], self.speed[idx])

    def __iter__(self):
        for row in zip(self.x, self.y, self.theta, self.speed):
            yield MotionObservation(*map(float, row))

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def parse_trajectories(path) -> list[RawTrajectory]:
    """Read a ``track_id,t,x,y`` CSV into trajectories, one per track id.

    Rows are grouped by ``track_id`` and sorted by time.  Tracks with
    duplicate timestamps or fewer than two samples are skipped; a single
    warning reports how many.
    """
    groups: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TrajectoryParseError(f"{path}: line 1: missing header row")
        header = [h.strip() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise TrajectoryParseError(f"{path}: line 1: missing columns {missing}")
        col = {c: header.index(c) for c in REQUIRED_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise TrajectoryParseError(f"{path}: line {lineno}: expected {len(header)} fields")
            try:
                t, x, y = (float(row[col[c]]) for c in ("t", "x", "y"))
            except ValueError as exc:
                raise TrajectoryParseError(f"{path}: line {lineno}: {exc}") from None
            if not (np.isfinite(t) and np.isfinite(x) and np.isfinite(y)):
                raise TrajectoryParseError(f"{path}: line {lineno}: non-finite value")
            groups.setdefault(row[col["track_id"]].strip(), []).append((t, x, y))

    tracks, rejected = [], 0
    for tid, rows in groups.items():
        a = np.array(sorted(rows, key=lambda r: r[0]))
        if len(a) < 2 or np.any(np.diff(a[:, 0]) <= 0):
            rejected += 1
            continue
        tracks.append(RawTrajectory(tid, a[:, 0], a[:, 1], a[:, 2]))
    if rejected:
        warnings.warn(f"skipped {rejected} track(s) with duplicate timestamps or < 2 samples")
    return tracks


def write_trajectories(tracks: Iterable[RawTrajectory], path) -> None:
    """Write tracks as CSV to a path or an open text stream."""
    if hasattr(path, "write"):
        _write_rows(tracks, path)
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _write_rows(tracks, fh)


def _write_rows(tracks, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REQUIRED_COLUMNS)
    for tr in tracks:
        for t, x, y in zip(tr.t, tr.x, tr.y):
            w.writerow([tr.id, repr(float(t)), repr(float(x)), repr(float(y))])


def observations_to_tracks(obs: Observations, prefix: str = "obs") -> list[RawTrajectory]:
    """Encode each observation as a two-sample track that derives back to it
    (one second apart).  Used to persist held-out test observations."""
    out = []
    for i, (x, y, th, s) in enumerate(obs):
        out.append(
            RawTrajectory(
                f"{prefix}{i}",
                [0.0, 1.0],
                [x, x + s * np.cos(th)],
                [y, y + s * np.sin(th)],
            )
        )
    return out


# ---------------------------------------------------------------------------
# motion derivation
# ---------------------------------------------------------------------------


def derive_motion(traj: RawTrajectory, speed_floor: float = SPEED_FLOOR) -> Observations:
    """Heading and speed of each consecutive sample pair, placed at the pair's
    first point.  Pairs slower than ``speed_floor`` are dropped."""
    dx, dy, dt = np.diff(traj.x), np.diff(traj.y), np.diff(traj.t)
    speed = np.hypot(dx, dy) / dt
    keep = speed >= speed_floor
    theta = wrap_angle(np.arctan2(dy[keep], dx[keep]))
    return Observations(traj.x[:-1][keep], traj.y[:-1][keep], np.atleast_1d(theta), speed[keep])


def derive_all(tracks: Iterable[RawTrajectory], speed_floor: float = SPEED_FLOOR) -> Observations:
    return Observations.concatenate(derive_motion(tr, speed_floor) for tr in tracks)


# ---------------------------------------------------------------------------
# synthetic scenarios
# ---------------------------------------------------------------------------


@dataclass
class ScenarioConfig:
    """Knobs of the synthetic scenario generator; loadable from JSON.

    Headings carry von Mises noise with concentration ``heading_kappa``.
    Per-step speeds are gamma with shape ``speed_shape`` and mean
    ``speed_mean``; turning vehicles in the junction fan move at
    ``speed_mean * turn_speed_ratio``.  Distances are meters, angles degrees.
    """

    n_tracks: int = 100
    dt: float = 0.1
    heading_kappa: float = 200.0
    speed_mean: float = 10.0
    speed_shape: float = 100.0
    lane_gain: float = 0.2
    lateral_spread: float = 0.5
    # corridor: straight road from (0, corridor_y) along corridor_heading
    corridor_length: float = 300.0
    corridor_y: float = 10.0
    corridor_heading: float = 0.0
    # three_way: northbound main road at x=main_x, junction line at junction_y
    branch_weights: list = field(default_factory=lambda: [0.5, 0.25, 0.25])
    main_x: float = 2.5
    junction_y: float = 50.0
    approach_length: float = 50.0
    branch_length: float = 40.0
    fan_angle: float = 45.0
    fan_offset: float = 7.5
    turn_speed_ratio: float = 0.7071067811865476
    # roundabout: counterclockwise circle
    center_x: float = 0.0
    center_y: float = 0.0
    radius: float = 20.0
    radius_noise: float = 0.0
    arc_degrees: float = 270.0

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ScenarioConfigError(f"unknown scenario keys: {unknown}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def validate(self) -> None:
        w = np.asarray(self.branch_weights, dtype=float)
        if w.shape != (3,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ScenarioConfigError(f"branch_weights must be 3 nonnegative values summing to 1, got {self.branch_weights}")
        if self.n_tracks < 0 or self.dt <= 0 or self.speed_mean <= 0 or self.speed_shape <= 0:
            raise ScenarioConfigError("n_tracks >= 0 and dt, speed_mean, speed_shape > 0 required")
        if self.heading_kappa < 0 or self.radius <= 0 or self.radius_noise < 0:
            raise ScenarioConfigError("heading_kappa, radius_noise >= 0 and radius > 0 required")
        if not 0 < self.fan_angle < 90:
            raise ScenarioConfigError("fan_angle must be in (0, 90) degrees")


class _Walker:
    """Integrates one vehicle at fixed time steps with noisy headings."""

    def __init__(self, x, y, cfg: ScenarioConfig, rng: np.random.Generator):
        self.t, self.pts = 0.0, [(0.0, x, y)]
        self.cfg, self.rng = cfg, rng

    @property
    def pos(self):
        return self.pts[-1][1], self.pts[-1][2]

    def speed(self, scale=1.0):
        c = self.cfg
        return self.rng.gamma(c.speed_shape, c.speed_mean * scale / c.speed_shape)

    def noise(self):
        return vm_sample(0.0, self.cfg.heading_kappa, self.rng)

    def step(self, heading, speed, frac=1.0):
        x, y = self.pos
        dt = self.cfg.dt * frac
        self.t += dt
        self.pts.append((self.t, x + speed * dt * np.cos(heading), y + speed * dt * np.sin(heading)))

    def lane_heading(self, heading, lane_x, lane_y, speed):
        """``heading`` plus noise and a correction steering back onto the
        lane line through ``(lane_x, lane_y)``."""
        x, y = self.pos
        # signed offset to the left of the direction of travel
        err = -(x - lane_x) * np.sin(heading) + (y - lane_y) * np.cos(heading)
        corr = np.arctan2(-self.cfg.lane_gain * err, speed * self.cfg.dt)
        return heading + corr + self.noise()

    def track(self, tid):
        a = np.array(self.pts)
        return RawTrajectory(tid, a[:, 0], a[:, 1], a[:, 2])


def _corridor(cfg, rng):
    h = np.radians(cfg.corridor_heading)
    ux, uy = np.cos(h), np.sin(h)
    tracks = []
    for i in range(cfg.n_tracks):
        lane = rng.uniform(-cfg.lateral_spread, cfg.lateral_spread)
        lx, ly = -uy * lane, cfg.corridor_y + ux * lane
        w = _Walker(lx, ly, cfg, rng)
        while (w.pos[0] - lx) * ux + (w.pos[1] - ly) * uy < cfg.corridor_length:
            v = w.speed()
            w.step(w.lane_heading(h, lx, ly, v), v)
        tracks.append(w.track(f"corridor-{i:05d}"))
    return tracks


def _three_way(cfg, rng):
    names = ("straight", "left", "right")
    north = np.pi / 2
    fan = np.radians(cfg.fan_angle)
    tracks = []
    for i in range(cfg.n_tracks):
        branch = int(rng.choice(3, p=cfg.branch_weights))
        lane_x = cfg.main_x + rng.uniform(-cfg.lateral_spread, cfg.lateral_spread)
        w = _Walker(lane_x, cfg.junction_y - cfg.approach_length, cfg, rng)
        # approach; the last step is shortened to land on the junction line
        while True:
            y = w.pos[1]
            v = w.speed()
            hd = w.lane_heading(north, lane_x, 0.0, v)
            dy = v * cfg.dt * np.sin(hd)
            if y + dy >= cfg.junction_y:
                w.step(hd, v, frac=(cfg.junction_y - y) / dy)
                break
            w.step(hd, v)
        if branch == 0:
            while w.pos[1] < cfg.junction_y + cfg.branch_length:
                v = w.speed()
                w.step(w.lane_heading(north, lane_x, 0.0, v), v)
        else:
            sign = 1.0 if branch == 1 else -1.0
            x0 = w.pos[0]
            while sign * (x0 - w.pos[0]) < cfg.fan_offset:
                w.step(north + sign * fan + w.noise(), w.speed(cfg.turn_speed_ratio))
            heading = north + sign * north
            x1, y_lane = w.pos
            while sign * (x1 - w.pos[0]) < cfg.branch_length:
                v = w.speed()
                w.step(w.lane_heading(heading, 0.0, y_lane, v), v)
        tracks.append(w.track(f"three_way-{i:05d}-{names[branch]}"))
    return tracks


def _roundabout(cfg, rng):
    tracks = []
    arc = np.radians(cfg.arc_degrees)
    for i in range(cfg.n_tracks):
        r = cfg.radius + rng.uniform(-cfg.radius_noise, cfg.radius_noise)
        phi = rng.uniform(0.0, TWO_PI)
        end = phi + arc
        t, pts = 0.0, []
        while True:
            pts.append((t, cfg.center_x + r * np.cos(phi), cfg.center_y + r * np.sin(phi)))
            if phi >= end:
                break
            v = rng.gamma(cfg.speed_shape, cfg.speed_mean / cfg.speed_shape)
            # chord length equals v * dt
            dphi = 2.0 * np.arcsin(min(1.0, v * cfg.dt / (2.0 * r)))
            phi += dphi
            t += cfg.dt
        a = np.array(pts)
        tracks.append(RawTrajectory(f"roundabout-{i:05d}", a[:, 0], a[:, 1], a[:, 2]))
    return tracks


def synth_scenario(kind: str, config: ScenarioConfig | dict | None, rng: np.random.Generator) -> list[RawTrajectory]:
    """Generate synthetic ground-truth trajectories.

    * ``corridor``: straight tracks along ``corridor_heading`` with lane
      keeping around random lateral offsets.
    * ``three_way``: northbound approach that splits at ``junction_y`` into
      straight / left / right with ``branch_weights``.  Turning vehicles
      first cross a fan at ``90 +- fan_angle`` degrees.
    * ``roundabout``: counterclockwise arcs of radius ``radius``; the track
      id suffix and start angle are random.
    """
    if config is None:
        config = ScenarioConfig()
    elif isinstance(config, dict):
        config = ScenarioConfig.from_dict(config)
    config.validate()
    try:
        gen = {"corridor": _corridor, "three_way": _three_way, "roundabout": _roundabout}[kind]
    except KeyError:
        raise ScenarioConfigError(f"unknown scenario {kind!r}; expected one of {SCENARIOS}") from None
    return gen(config, rng)
