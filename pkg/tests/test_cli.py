import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dirprim.circular import TWO_PI, angle_diff, circular_stats
from dirprim.cli import EXIT_DATA, EXIT_DOMAIN, EXIT_FUSION, EXIT_IO, EXIT_USAGE, main
from dirprim.grid import DirectionalPrimitive, GridSpec, PrimitiveMap, load_map, locate, save_map
from dirprim.circular import VonMisesMixture


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def corridor(tmp_path_factory):
    d = tmp_path_factory.mktemp("corridor")
    assert main(["synth", "corridor", "--n-tracks", "60", "--seed", "5", "--out", str(d / "c.csv")]) == 0
    assert main(["fit", str(d / "c.csv"), "--out", str(d / "m.json"), "--test-fraction", "0.1",
                 "--holdout", str(d / "h.csv"), "--report", str(d / "r.json")]) == 0
    return d


def tight_map(path):
    spec = GridSpec(0, 0, 5, 1, 1)
    prim = DirectionalPrimitive(VonMisesMixture.single(0.0, 100.0), (None,))
    save_map(PrimitiveMap(spec, (prim,)), path)


class TestSynth:
    def test_track_count(self, tmp_path, capsys):
        code, _, _ = run(["synth", "corridor", "--n-tracks", 100, "--out", tmp_path / "a.csv"], capsys)
        ids = {r["track_id"] for r in csv.DictReader(open(tmp_path / "a.csv"))}
        assert code == 0 and len(ids) == 100

    def test_bad_scenario(self, capsys):
        code, _, err = run(["synth", "spiral"], capsys)
        assert code == EXIT_USAGE and "invalid choice" in err

    def test_byte_identical(self, tmp_path, capsys):
        run(["--seed", 7, "synth", "three_way", "--n-tracks", 20, "--out", tmp_path / "a.csv"], capsys)
        run(["synth", "three_way", "--n-tracks", 20, "--seed", 7, "--out", tmp_path / "b.csv"], capsys)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        run(["synth", "three_way", "--n-tracks", 20, "--seed", 8, "--out", tmp_path / "c.csv"], capsys)
        assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()

    def test_stdout_and_config(self, tmp_path, capsys):
        (tmp_path / "cfg.json").write_text(json.dumps({"seed": 3, "scenario": {"n_tracks": 4}}))
        code, out, _ = run(["synth", "roundabout", "--config", tmp_path / "cfg.json"], capsys)
        assert code == 0 and len({l.split(",")[0] for l in out.splitlines()[1:]}) == 4
        # flag overrides config
        code, out, _ = run(["synth", "roundabout", "--config", tmp_path / "cfg.json", "--n-tracks", 2], capsys)
        assert len({l.split(",")[0] for l in out.splitlines()[1:]}) == 2

    def test_bad_config_key(self, tmp_path, capsys):
        (tmp_path / "cfg.json").write_text(json.dumps({"scenario": {"bogus": 1}}))
        code, _, _ = run(["synth", "corridor", "--config", tmp_path / "cfg.json"], capsys)
        assert code == EXIT_DATA


class TestFit:
    def test_corridor_single_mode(self, corridor):
        m = load_map(corridor / "m.json")
        fitted = m.fitted_cells()
        assert fitted
        assert all(len(m.cell(*c).mixture) == 1 for c in fitted)
        rep = json.loads((corridor / "r.json").read_text())
        assert rep["cells_fitted"] == len(fitted)

    def test_byte_identical(self, corridor, tmp_path, capsys):
        run(["fit", corridor / "c.csv", "--out", tmp_path / "m.json", "--test-fraction", 0.1], capsys)
        assert (tmp_path / "m.json").read_bytes() == (corridor / "m.json").read_bytes()

    def test_split_by_track(self, corridor, tmp_path, capsys):
        code, _, _ = run(["fit", corridor / "c.csv", "--out", tmp_path / "m.json", "--test-fraction", 0.1,
                          "--split-by", "track", "--holdout", tmp_path / "h.csv"], capsys)
        ids = {r["track_id"] for r in csv.DictReader(open(tmp_path / "h.csv"))}
        assert code == 0 and len(ids) == 6 and all(i.startswith("corridor-") for i in ids)

    def test_empty_csv(self, tmp_path, capsys):
        (tmp_path / "e.csv").write_text("track_id,t,x,y\n")
        code, _, err = run(["fit", tmp_path / "e.csv"], capsys)
        assert code == EXIT_DATA and "error" in err

    def test_missing_file(self, tmp_path, capsys):
        assert run(["fit", tmp_path / "nope.csv"], capsys)[0] == EXIT_IO

    def test_malformed_csv(self, tmp_path, capsys):
        (tmp_path / "b.csv").write_text("track_id,t,x,y\na,0,0,zz\n")
        assert run(["fit", tmp_path / "b.csv"], capsys)[0] == EXIT_DATA


class TestEval:
    def test_uniform_model(self, corridor, tmp_path, capsys):
        run(["fit", corridor / "c.csv", "--min-cell-count", 10**9, "--out", tmp_path / "u.json"], capsys)
        code, out, _ = run(["eval", tmp_path / "u.json", corridor / "h.csv"], capsys)
        rep = json.loads(out)
        assert code == 0
        assert_allclose(rep["direction"]["mean"], 0.1592, atol=1e-4)
        assert rep["direction"]["std"] == 0.0

    def test_fitted_report(self, corridor, tmp_path, capsys):
        code, out, _ = run(["eval", corridor / "m.json", corridor / "h.csv", "--seed", 11,
                            "--improvement", "--csv", tmp_path / "cells.csv"], capsys)
        rep = json.loads(out)
        assert code == 0 and rep["direction"]["mean"] > 1 / TWO_PI
        assert rep["config"]["seed"] == 11 and rep["config"]["kappa_obs"] == 2.5
        assert "improvement" in rep and (tmp_path / "cells.csv").exists()

    def test_missing_model(self, corridor, tmp_path, capsys):
        assert run(["eval", tmp_path / "nope.json", corridor / "h.csv"], capsys)[0] == EXIT_IO

    def test_corrupt_model(self, corridor, tmp_path, capsys):
        (tmp_path / "bad.json").write_text('{"version": "dirprim/9"}')
        assert run(["eval", tmp_path / "bad.json", corridor / "h.csv"], capsys)[0] == EXIT_DATA


class TestHallucinate:
    def test_zero(self, corridor, capsys):
        code, out, _ = run(["hallucinate", corridor / "m.json", "--x", 50, "--y", 10, "--n", 0], capsys)
        assert code == 0 and json.loads(out)["positions"] == []

    def test_outside(self, corridor, capsys):
        code, _, _ = run(["hallucinate", corridor / "m.json", "--x", -500, "--y", 10, "--n", 3], capsys)
        assert code == EXIT_DOMAIN

    def test_deterministic(self, corridor, capsys):
        a = run(["hallucinate", corridor / "m.json", "--x", 50, "--y", 10, "--n", 20, "--seed", 4], capsys)[1]
        b = run(["hallucinate", corridor / "m.json", "--x", 50, "--y", 10, "--n", 20, "--seed", 4], capsys)[1]
        assert a == b and len(json.loads(a)["positions"]) == 20


class TestFuse:
    def test_uniform_belief_matches_prior(self, tmp_path, capsys):
        tight_map(tmp_path / "t.json")
        code, out, _ = run(["fuse", tmp_path / "t.json", "--x", 1, "--y", 1, "--belief-mu", 123,
                            "--belief-kappa", 0, "--n", 5000], capsys)
        d = json.loads(out)
        s = circular_stats(np.array(d["samples"]))
        assert code == 0 and abs(angle_diff(s.mean, 0.0)) < np.radians(1)
        assert 0 < d["acceptance_rate"] <= 1

    def test_degenerate(self, tmp_path, capsys):
        tight_map(tmp_path / "t.json")
        code, _, err = run(["fuse", tmp_path / "t.json", "--x", 1, "--y", 1, "--belief-mu", 180,
                            "--belief-kappa", 100, "--n", 10], capsys)
        assert code == EXIT_FUSION and "overlap" in err

    def test_belief_in_radians(self, tmp_path, capsys):
        tight_map(tmp_path / "t.json")
        out = run(["fuse", tmp_path / "t.json", "--x", 1, "--y", 1, "--belief-mu", 90,
                   "--belief-kappa", 1, "--n", 10], capsys)[1]
        assert_allclose(json.loads(out)["belief"]["mu"], np.pi / 2)


@pytest.fixture(scope="module")
def roundabout(tmp_path_factory):
    d = tmp_path_factory.mktemp("rb")
    main(["synth", "roundabout", "--n-tracks", "100", "--seed", "2", "--out", str(d / "r.csv")])
    main(["fit", str(d / "r.csv"), "--margin", "1", "--out", str(d / "m.json")])
    return d


class TestTrajgen:
    def test_three_polylines(self, roundabout, capsys):
        code, out, _ = run(["trajgen", roundabout / "m.json", "--x0", 20, "--y0", 0.5, "--k", 3,
                            "--t", 30, "--dt", 0.2], capsys)
        trajs = json.loads(out)["trajectories"]
        m = load_map(roundabout / "m.json")
        assert code == 0 and len(trajs) == 3
        for t in trajs:
            pts = t["points"]
            assert all(locate(m.spec, *p) is not None for p in pts[:-1])
            if t["terminated_reason"] == "horizon":
                assert len(pts) == 31

    def test_outside(self, roundabout, capsys):
        assert run(["trajgen", roundabout / "m.json", "--x0", 900, "--y0", 0], capsys)[0] == EXIT_DOMAIN

    def test_deterministic_csv(self, roundabout, capsys):
        argv = ["trajgen", roundabout / "m.json", "--x0", 20, "--y0", 0.5, "--k", 4, "--t", 10, "--format", "csv"]
        a, b = run(argv, capsys)[1], run(argv, capsys)[1]
        assert a == b and a.startswith("traj,step,x,y,terminated_reason")


class TestExportPolar:
    def test_normalized(self, corridor, capsys):
        code, out, _ = run(["export-polar", corridor / "m.json", "--all", "--bins", 360], capsys)
        rows = list(csv.DictReader(out.splitlines()))
        assert code == 0
        by_cell = {}
        for r in rows:
            by_cell.setdefault((r["ix"], r["iy"]), []).append(float(r["density"]))
        assert by_cell
        for dens in by_cell.values():
            assert len(dens) == 360
            assert_allclose(sum(dens) * TWO_PI / 360, 1.0, atol=1e-3)

    def test_uninformative_constant(self, tmp_path, capsys):
        save_map(PrimitiveMap.uninformative(GridSpec(0, 0, 5, 3, 2)), tmp_path / "u.json")
        out = run(["export-polar", tmp_path / "u.json", "--cell", "2,1", "--bins", 8], capsys)[1]
        dens = {float(r["density"]) for r in csv.DictReader(out.splitlines())}
        assert dens == {1 / TWO_PI}

    def test_unknown_cell(self, corridor, capsys):
        assert run(["export-polar", corridor / "m.json", "--cell", "999,0"], capsys)[0] == EXIT_DOMAIN

    def test_needs_selection(self, corridor, capsys):
        assert run(["export-polar", corridor / "m.json"], capsys)[0] == EXIT_USAGE


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dirprim", "synth", "corridor", "--n-tracks", "2"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("track_id,t,x,y")


def test_bad_seed(capsys):
    assert run(["--seed", -1, "synth", "corridor"], capsys)[0] == EXIT_USAGE
