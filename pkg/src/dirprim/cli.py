"""Command-line interface.

Angles given as flags are in degrees; angles inside JSON payloads are in
radians.  All randomness is drawn from ``--seed``.

Exit codes: 0 success, 2 usage, 3 file I/O, 4 bad data or format,
5 domain error (position outside the map, unknown cell), 6 fusion failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Optional

import numpy as np

from . import __version__
from .circular import TWO_PI, VonMisesMixture
from .evaluate import DEFAULT_KAPPA_OBS, evaluate, split_test, split_tracks, write_cell_csv
from .grid import DEFAULT_CELL_SIZE, GridSpec, MapFormatError, dumps_map, iter_cells, load_map, save_map
from .infer import (
    FusionConvergenceError,
    FusionDegenerateError,
    OutsideMapError,
    fuse,
    generate_trajectories,
    hallucinate,
)
from .ingest import (
    SCENARIOS,
    ScenarioConfig,
    derive_all,
    observations_to_tracks,
    parse_trajectories,
    synth_scenario,
    write_trajectories,
)
from .learn import FitConfig, fit_map

DEFAULT_SEED = 0

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4
EXIT_DOMAIN = 5
EXIT_FUSION = 6


class UsageError(Exception):
    pass


class DomainError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError("config file must hold a JSON object")
    return cfg


def _seed(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", DEFAULT_SEED)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise UsageError("seed must be an integer in [0, 2**64)")
    return seed


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ValueError(f"config section {name!r} must be an object")
    return dict(sec)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _jsonable(obj):
    """Replace NaN with None so reports stay strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _parse_cell(text: str) -> tuple[int, int]:
    try:
        ix, iy = (int(p) for p in text.split(","))
    except ValueError:
        raise UsageError(f"--cell expects 'ix,iy', got {text!r}") from None
    return ix, iy


def _primitive_at(m, x, y):
    prim = m.primitive_at(x, y)
    if prim is None:
        raise OutsideMapError(f"position ({x}, {y}) is outside the map")
    return prim


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg, seed) -> int:
    scen = _section(cfg, "scenario")
    if args.n_tracks is not None:
        scen["n_tracks"] = args.n_tracks
    tracks = synth_scenario(args.scenario, ScenarioConfig.from_dict(scen), np.random.default_rng(seed))
    if args.out is None:
        buf = io.StringIO()
        write_trajectories(tracks, buf)
        sys.stdout.write(buf.getvalue())
    else:
        write_trajectories(tracks, args.out)
    return EXIT_OK


def _grid_for(obs, grid_cfg: dict) -> GridSpec:
    if {"origin_x", "origin_y", "nx", "ny"} <= set(grid_cfg):
        return GridSpec(**{k: grid_cfg[k] for k in ("origin_x", "origin_y", "cell_size", "nx", "ny")})
    return GridSpec.covering(obs.x, obs.y, grid_cfg.get("cell_size", DEFAULT_CELL_SIZE), grid_cfg.get("margin", 0))


def cmd_fit(args, cfg, seed) -> int:
    tracks = parse_trajectories(args.input)
    obs = derive_all(tracks)
    if len(obs) == 0:
        raise ValueError(f"{args.input}: no motion observations")
    grid_cfg = _section(cfg, "grid")
    for key in ("cell_size", "margin"):
        if getattr(args, key) is not None:
            grid_cfg[key] = getattr(args, key)
    fit_cfg = _section(cfg, "fit")
    if args.eps_deg is not None:
        fit_cfg["dbscan_eps"] = math.radians(args.eps_deg)
    if args.min_pts is not None:
        fit_cfg["dbscan_min_pts"] = args.min_pts
    if args.kappa_max is not None:
        fit_cfg["kappa_max"] = args.kappa_max
    if args.min_cell_count is not None:
        fit_cfg["min_cell_count"] = args.min_cell_count
    fc = FitConfig.from_dict(fit_cfg)

    train = obs
    if args.test_fraction is not None:
        rng = np.random.default_rng(seed)
        if args.split_by == "track":
            train_tracks, test_tracks = split_tracks(tracks, args.test_fraction, rng)
            train = derive_all(train_tracks)
            if args.holdout is not None:
                write_trajectories(test_tracks, args.holdout)
        else:
            train, test = split_test(obs, args.test_fraction, rng)
            if args.holdout is not None:
                write_trajectories(observations_to_tracks(test), args.holdout)
    spec = _grid_for(obs, grid_cfg)
    m, report = fit_map(train, spec, fc, return_report=True)
    m.metadata["seed"] = seed
    if args.out is None:
        sys.stdout.write(dumps_map(m))
    else:
        save_map(m, args.out)
    if args.report is not None:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(_dump(report.to_dict()))
    return EXIT_OK


def cmd_eval(args, cfg, seed) -> int:
    m = load_map(args.model)
    test = derive_all(parse_trajectories(args.test))
    if len(test) == 0:
        raise ValueError(f"{args.test}: no motion observations")
    ecfg = _section(cfg, "eval")
    floor = args.speed_floor_density if args.speed_floor_density is not None else ecfg.get("speed_floor_density", 0.0)
    kappa_obs = args.kappa_obs if args.kappa_obs is not None else ecfg.get("kappa_obs", DEFAULT_KAPPA_OBS)
    improvement = args.improvement or bool(ecfg.get("improvement", False))
    echo = {
        "seed": seed,
        "model": args.model,
        "test": args.test,
        "speed_floor_density": floor,
        "kappa_obs": kappa_obs,
        "improvement": improvement,
        "map_config_hash": m.metadata.get("config_hash"),
    }
    rep = evaluate(m, test, floor, improvement, kappa_obs, config=echo)
    if args.csv is not None:
        write_cell_csv(rep, args.csv)
    _emit(_dump(_jsonable(rep.to_dict())), args.out)
    return EXIT_OK


def cmd_hallucinate(args, cfg, seed) -> int:
    m = load_map(args.model)
    h = hallucinate(m, (args.x, args.y), args.n, np.random.default_rng(seed), args.dt, args.use_speed, args.s0)
    _emit(_dump({"seed": seed, "x": args.x, "y": args.y, "dt": args.dt, **h.to_dict()}), args.out)
    return EXIT_OK


def cmd_fuse(args, cfg, seed) -> int:
    m = load_map(args.model)
    prior = _primitive_at(m, args.x, args.y)
    belief = VonMisesMixture.single(math.radians(args.belief_mu), args.belief_kappa)
    res = fuse(prior, belief, args.n, np.random.default_rng(seed), kappa_q=args.kappa_q)
    out = {"seed": seed, "x": args.x, "y": args.y,
           "belief": {"mu": belief.mus[0], "kappa": args.belief_kappa}, **res.to_dict()}
    _emit(_dump(out), args.out)
    return EXIT_OK


def cmd_trajgen(args, cfg, seed) -> int:
    m = load_map(args.model)
    trajs = generate_trajectories(
        m, (args.x0, args.y0), args.k, args.t, np.random.default_rng(seed), args.dt, args.use_speed, args.s0
    )
    if args.format == "json":
        _emit(_dump({"seed": seed, "trajectories": [t.to_dict() for t in trajs]}), args.out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["traj", "step", "x", "y", "terminated_reason"])
        for k, t in enumerate(trajs):
            for j, (x, y) in enumerate(t.points):
                w.writerow([k, j, repr(float(x)), repr(float(y)), t.terminated_reason])
        _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_export_polar(args, cfg, seed) -> int:
    m = load_map(args.model)
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    if args.all:
        cells = [(ix, iy, p) for ix, iy, p in iter_cells(m, only_fitted=True)]
    else:
        ix, iy = _parse_cell(args.cell)
        if not (0 <= ix < m.spec.nx and 0 <= iy < m.spec.ny):
            raise DomainError(f"cell ({ix}, {iy}) is outside the {m.spec.nx}x{m.spec.ny} grid")
        cells = [(ix, iy, m.cell(ix, iy))]
    centers = (np.arange(args.bins) + 0.5) * (TWO_PI / args.bins)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ix", "iy", "bin_center_deg", "density"])
    for ix, iy, prim in cells:
        dens = prim.pdf(centers)
        for c, d in zip(np.degrees(centers), dens):
            w.writerow([ix, iy, repr(float(c)), repr(float(d))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(default):
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=default, help=f"64-bit RNG seed (default {DEFAULT_SEED})")
        g.add_argument("--config", default=default, help="JSON config file; flags override it")
        g.add_argument("--out", default=default, help="output file (default stdout)")
        return g

    # global flags are accepted before or after the subcommand; the copy on
    # each subparser suppresses its defaults so it cannot clobber the other
    common = global_flags(argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="dirprim", description="Directional primitive maps.", parents=[global_flags(None)])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic trajectory CSV")
    s.add_argument("scenario", choices=SCENARIOS)
    s.add_argument("--n-tracks", type=int, default=None)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fit", parents=[common], help="fit a primitive map from a trajectory CSV")
    s.add_argument("input")
    s.add_argument("--cell-size", type=float, default=None, help=f"metres (default {DEFAULT_CELL_SIZE})")
    s.add_argument("--margin", type=int, default=None, help="padding cells around the data")
    s.add_argument("--eps-deg", type=float, default=None, help="DBSCAN neighborhood radius in degrees")
    s.add_argument("--min-pts", type=int, default=None)
    s.add_argument("--kappa-max", type=float, default=None)
    s.add_argument("--min-cell-count", type=int, default=None)
    s.add_argument("--test-fraction", type=float, default=None, help="hold out this fraction before fitting")
    s.add_argument("--split-by", choices=("observation", "track"), default="observation")
    s.add_argument("--holdout", default=None, help="write held-out observations as a CSV here")
    s.add_argument("--report", default=None, help="write the fit report JSON here")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("eval", parents=[common], help="evaluate a model on a test CSV")
    s.add_argument("model")
    s.add_argument("test")
    s.add_argument("--speed-floor-density", type=float, default=None)
    s.add_argument("--improvement", action="store_true", help="also compute likelihood improvement")
    s.add_argument("--kappa-obs", type=float, default=None)
    s.add_argument("--csv", default=None, help="write per-cell rows here")
    s.set_defaults(func=cmd_eval)

    def position(sp, xname="--x", yname="--y"):
        sp.add_argument(xname, type=float, required=True)
        sp.add_argument(yname, type=float, required=True)

    def motion(sp):
        sp.add_argument("--dt", type=float, default=1.0)
        sp.add_argument("--use-speed", action=argparse.BooleanOptionalAction, default=True)
        sp.add_argument("--s0", type=float, default=None, help="fixed speed when not sampling speeds")

    s = sub.add_parser("hallucinate", parents=[common], help="sample next positions from a cell")
    s.add_argument("model")
    position(s)
    s.add_argument("--n", type=int, default=100)
    motion(s)
    s.set_defaults(func=cmd_hallucinate)

    s = sub.add_parser("fuse", parents=[common], help="fuse a cell prior with a von Mises belief")
    s.add_argument("model")
    position(s)
    s.add_argument("--belief-mu", type=float, required=True, help="degrees")
    s.add_argument("--belief-kappa", type=float, required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--kappa-q", type=float, default=0.5)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("trajgen", parents=[common], help="generate multimodal trajectories")
    s.add_argument("model")
    position(s, "--x0", "--y0")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--t", type=int, default=50)
    s.add_argument("--format", choices=("json", "csv"), default="json")
    motion(s)
    s.set_defaults(func=cmd_trajgen)

    s = sub.add_parser("export-polar", parents=[common], help="tabulate cell direction densities")
    s.add_argument("model")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--cell", help="'ix,iy'")
    g.add_argument("--all", action="store_true", help="every fitted cell")
    s.add_argument("--bins", type=int, default=360)
    s.set_defaults(func=cmd_export_polar)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        cfg = _load_config(args.config)
        seed = _seed(args, cfg)
        return args.func(args, cfg, seed)
    except UsageError as e:
        return _fail(EXIT_USAGE, e)
    except (OutsideMapError, DomainError) as e:
        return _fail(EXIT_DOMAIN, e)
    except (FusionDegenerateError, FusionConvergenceError) as e:
        return _fail(EXIT_FUSION, e)
    except OSError as e:
        return _fail(EXIT_IO, e)
    except (ValueError, MapFormatError, json.JSONDecodeError) as e:
        return _fail(EXIT_DATA, e)


def _fail(code: int, err: Exception) -> int:
    sys.stderr.write(f"dirprim: error: {err}\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
