"""Uniform square grid, per-cell directional primitives and the persisted
map format (JSON, schema ``dirprim/1``)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .circular import LOG_TWO_PI, TWO_PI, VonMisesMixture
from .ingest import Observations
from .speed import GammaParams

FORMAT_VERSION = "dirprim/1"
MIN_CELL_COUNT = 10
DEFAULT_CELL_SIZE = 5.0


class MapFormatError(ValueError):
    pass


class MapVersionError(MapFormatError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """``nx`` by ``ny`` square cells of side ``cell_size`` whose lower-left
    corner is ``(origin_x, origin_y)``.  Cells are half-open."""

    origin_x: float
    origin_y: float
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (math.isfinite(self.origin_x) and math.isfinite(self.origin_y)):
            raise ValueError("grid origin must be finite")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValueError("cell_size must be > 0")
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be positive integers")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))

    @classmethod
    def covering(cls, x, y, cell_size: float = DEFAULT_CELL_SIZE, margin: int = 0) -> "GridSpec":
        """Smallest grid aligned to multiples of ``cell_size`` containing all
        points, padded by ``margin`` cells on each side."""
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if x.size == 0:
            raise ValueError("cannot size a grid from zero points")
        ix0 = math.floor(x.min() / cell_size) - margin
        iy0 = math.floor(y.min() / cell_size) - margin
        ix1 = math.floor(x.max() / cell_size) + margin
        iy1 = math.floor(y.max() / cell_size) + margin
        return cls(ix0 * cell_size, iy0 * cell_size, cell_size, ix1 - ix0 + 1, iy1 - iy0 + 1)

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def flat_index(self, ix: int, iy: int) -> int:
        return iy * self.nx + ix

    def unflat(self, k: int) -> tuple[int, int]:
        return k % self.nx, k // self.nx

    def center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin_x + (ix + 0.5) * self.cell_size,
            self.origin_y + (iy + 0.5) * self.cell_size,
        )

    def to_dict(self) -> dict:
        return {
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "cell_size": self.cell_size,
            "nx": self.nx,
            "ny": self.ny,
        }


def locate(spec: GridSpec, x: float, y: float) -> Optional[tuple[int, int]]:
    """Cell ``(ix, iy)`` containing the point, or ``None`` outside the grid."""
    ix = math.floor((x - spec.origin_x) / spec.cell_size)
    iy = math.floor((y - spec.origin_y) / spec.cell_size)
    if 0 <= ix < spec.nx and 0 <= iy < spec.ny:
        return ix, iy
    return None


def locate_many(spec: GridSpec, x, y) -> np.ndarray:
    """Vectorized :func:`locate`: flat cell indices, -1 for outside points."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ix = np.floor((x - spec.origin_x) / spec.cell_size)
    iy = np.floor((y - spec.origin_y) / spec.cell_size)
    inside = (ix >= 0) & (ix < spec.nx) & (iy >= 0) & (iy < spec.ny)
    return np.where(inside, iy * spec.nx + ix, -1).astype(np.int64)


@dataclass(frozen=True)
class Binned:
    indices: list  # flat cell index -> array of observation indices
    n_outside: int


def bin_observations(spec: GridSpec, obs: Observations) -> Binned:
    """Partition observation indices by cell; outside points are dropped and
    counted."""
    flat = locate_many(spec, obs.x, obs.y)
    inside = np.flatnonzero(flat >= 0)
    order = inside[np.argsort(flat[inside], kind="stable")]
    counts = np.bincount(flat[inside], minlength=spec.n_cells)
    buckets = np.split(order, np.cumsum(counts)[:-1])
    return Binned(buckets, int(len(obs) - inside.size))


@dataclass(frozen=True, eq=False)
class DirectionalPrimitive:
    """A cell's direction mixture with one optional speed model per mode.

    ``mixture is None`` marks an uninformative cell (uniform direction, no
    speed model).
    """

    mixture: Optional[VonMisesMixture]
    speed_modes: tuple = ()
    support_count: int = 0

    def __post_init__(self):
        modes = tuple(self.speed_modes)
        if self.mixture is None:
            if modes:
                raise ValueError("uninformative primitive cannot carry speed models")
        elif len(modes) != len(self.mixture):
            raise ValueError("need one speed entry (or None) per mixture component")
        object.__setattr__(self, "speed_modes", modes)

    @classmethod
    def uninformative(cls, support_count: int = 0) -> "DirectionalPrimitive":
        return cls(None, (), support_count)

    @property
    def is_uninformative(self) -> bool:
        return self.mixture is None

    def logpdf(self, theta):
        if self.mixture is None:
            return np.full(np.shape(theta), -LOG_TWO_PI) if np.ndim(theta) else -LOG_TWO_PI
        return self.mixture.logpdf(theta)

    def pdf(self, theta):
        if self.mixture is None:
            return np.full(np.shape(theta), 1.0 / TWO_PI) if np.ndim(theta) else 1.0 / TWO_PI
        return self.mixture.pdf(theta)

    def dominant_mode(self) -> Optional[int]:
        if self.mixture is None:
            return None
        return int(np.argmax(self.mixture.weights))

    def dominant_speed(self) -> Optional[float]:
        """Mean speed of the heaviest mode, if it has a speed model."""
        m = self.dominant_mode()
        if m is None or self.speed_modes[m] is None:
            return None
        return self.speed_modes[m].mean


@dataclass(frozen=True, eq=False)
class PrimitiveMap:
    spec: GridSpec
    cells: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        cells = tuple(self.cells)
        if len(cells) != self.spec.n_cells:
            raise ValueError(f"expected {self.spec.n_cells} cells, got {len(cells)}")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def uninformative(cls, spec: GridSpec, metadata: dict | None = None) -> "PrimitiveMap":
        cell = DirectionalPrimitive.uninformative()
        return cls(spec, (cell,) * spec.n_cells, dict(metadata or {}))

    def cell(self, ix: int, iy: int) -> DirectionalPrimitive:
        if not (0 <= ix < self.spec.nx and 0 <= iy < self.spec.ny):
            raise IndexError(f"cell ({ix}, {iy}) outside {self.spec.nx}x{self.spec.ny} grid")
        return self.cells[self.spec.flat_index(ix, iy)]

    def primitive_at(self, x: float, y: float) -> Optional[DirectionalPrimitive]:
        loc = locate(self.spec, x, y)
        return None if loc is None else self.cell(*loc)

    def fitted_cells(self) -> list[tuple[int, int]]:
        return [self.spec.unflat(k) for k, c in enumerate(self.cells) if not c.is_uninformative]

    def __eq__(self, other):
        if not isinstance(other, PrimitiveMap):
            return NotImplemented
        return map_to_dict(self) == map_to_dict(other)

    __hash__ = None


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _cell_to_dict(ix, iy, c: DirectionalPrimitive) -> dict:
    d = {"ix": ix, "iy": iy, "support_count": int(c.support_count)}
    if c.mixture is None:
        d.update(weights=None, mus=None, kappas=None, speed=None)
    else:
        d.update(
            weights=[float(v) for v in c.mixture.weights],
            mus=[float(v) for v in c.mixture.mus],
            kappas=[float(v) for v in c.mixture.kappas],
            speed=[None if g is None else {"alpha": g.alpha, "beta": g.beta} for g in c.speed_modes],
        )
    return d


def map_to_dict(m: PrimitiveMap) -> dict:
    cells = []
    for k, c in enumerate(m.cells):
        ix, iy = m.spec.unflat(k)
        cells.append(_cell_to_dict(ix, iy, c))
    return {"version": FORMAT_VERSION, "spec": m.spec.to_dict(), "metadata": m.metadata, "cells": cells}


def dumps_map(m: PrimitiveMap) -> str:
    """Deterministic JSON text; floats use shortest round-trip repr."""
    return json.dumps(map_to_dict(m), sort_keys=True, indent=1, allow_nan=False) + "\n"


def save_map(m: PrimitiveMap, path) -> None:
    Path(path).write_text(dumps_map(m), encoding="utf-8")


def _finite_list(v, n, name, where):
    if not isinstance(v, list) or len(v) != n:
        raise MapFormatError(f"{where}: {name} must be a list of length {n}")
    out = []
    for a in v:
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not math.isfinite(a):
            raise MapFormatError(f"{where}: {name} contains non-finite or non-numeric value {a!r}")
        out.append(float(a))
    return out


def _cell_from_dict(d, where) -> tuple[int, int, DirectionalPrimitive]:
    try:
        ix, iy, support = int(d["ix"]), int(d["iy"]), int(d["support_count"])
        weights, mus, kappas, speed = d["weights"], d["mus"], d["kappas"], d["speed"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MapFormatError(f"{where}: missing or invalid field ({exc})") from None
    where = f"cell ({ix}, {iy})"
    if weights is None:
        if any(v is not None for v in (mus, kappas, speed)):
            raise MapFormatError(f"{where}: uninformative cell must have null mus/kappas/speed")
        return ix, iy, DirectionalPrimitive.uninformative(support)
    if not isinstance(weights, list) or not weights:
        raise MapFormatError(f"{where}: weights must be a nonempty list")
    n = len(weights)
    w = _finite_list(weights, n, "weights", where)
    mu = _finite_list(mus, n, "mus", where)
    ka = _finite_list(kappas, n, "kappas", where)
    if not isinstance(speed, list) or len(speed) != n:
        raise MapFormatError(f"{where}: speed must be a list of length {n}")
    try:
        mix = VonMisesMixture(mu, ka, w)
        modes = []
        for g in speed:
            if g is None:
                modes.append(None)
            else:
                a, b = _finite_list([g["alpha"], g["beta"]], 2, "speed", where)
                modes.append(GammaParams(a, b))
    except (ValueError, KeyError, TypeError) as exc:
        raise MapFormatError(f"{where}: {exc}") from None
    return ix, iy, DirectionalPrimitive(mix, tuple(modes), support)


def map_from_dict(doc: dict) -> PrimitiveMap:
    if not isinstance(doc, dict):
        raise MapFormatError("map document must be a JSON object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise MapVersionError(f"unsupported map version {version!r}; expected {FORMAT_VERSION!r}")
    try:
        s = doc["spec"]
        spec = GridSpec(float(s["origin_x"]), float(s["origin_y"]), float(s["cell_size"]), s["nx"], s["ny"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MapFormatError(f"invalid grid spec: {exc}") from None
    raw = doc.get("cells")
    if not isinstance(raw, list) or len(raw) != spec.n_cells:
        raise MapFormatError(f"cells must be a list of {spec.n_cells} entries")
    cells: list = [None] * spec.n_cells
    for i, d in enumerate(raw):
        ix, iy, prim = _cell_from_dict(d, f"cell entry {i}")
        if not (0 <= ix < spec.nx and 0 <= iy < spec.ny):
            raise MapFormatError(f"cell ({ix}, {iy}): index outside grid")
        k = spec.flat_index(ix, iy)
        if cells[k] is not None:
            raise MapFormatError(f"cell ({ix}, {iy}): duplicate entry")
        cells[k] = prim
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise MapFormatError("metadata must be an object")
    return PrimitiveMap(spec, tuple(cells), metadata)


def load_map(path) -> PrimitiveMap:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MapFormatError(f"{path}: invalid JSON ({exc})") from None
    return map_from_dict(doc)


def iter_cells(m: PrimitiveMap, only_fitted: bool = False):
    """Yield ``(ix, iy, primitive)`` in flat order."""
    for k, c in enumerate(m.cells):
        if only_fitted and c.is_uninformative:
            continue
        ix, iy = m.spec.unflat(k)
        yield ix, iy, c


def cells_from_indices(spec: GridSpec, cells: Sequence[tuple[int, int]]) -> list[int]:
    return [spec.flat_index(ix, iy) for ix, iy in cells]
