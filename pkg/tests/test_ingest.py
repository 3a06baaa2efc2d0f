import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from dirprim.circular import angle_diff, circular_stats
from dirprim.ingest import (
    Observations,
    RawTrajectory,
    ScenarioConfig,
    ScenarioConfigError,
    TrajectoryParseError,
    derive_all,
    derive_motion,
    observations_to_tracks,
    parse_trajectories,
    synth_scenario,
    write_trajectories,
)


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestParse:
    def test_two_rows(self, tmp_path):
        tracks = parse_trajectories(write(tmp_path, "track_id,t,x,y\na,0,0,0\na,1,1,1\n"))
        assert len(tracks) == 1 and len(tracks[0]) == 2 and tracks[0].id == "a"

    def test_duplicate_timestamp_skips_track(self, tmp_path):
        text = "track_id,t,x,y\na,0,0,0\na,0,1,1\nb,0,0,0\nb,1,1,0\n"
        with pytest.warns(UserWarning, match="skipped 1"):
            tracks = parse_trajectories(write(tmp_path, text))
        assert [t.id for t in tracks] == ["b"]

    def test_header_only(self, tmp_path):
        assert parse_trajectories(write(tmp_path, "track_id,t,x,y\n")) == []

    def test_unsorted_rows_are_sorted(self, tmp_path):
        tracks = parse_trajectories(write(tmp_path, "track_id,t,x,y\na,2,2,0\na,0,0,0\na,1,1,0\n"))
        assert_allclose(tracks[0].x, [0, 1, 2])

    def test_extra_columns_and_order(self, tmp_path):
        tracks = parse_trajectories(write(tmp_path, "y,x,speed,t,track_id\n0,0,9,0,a\n1,2,9,1,a\n"))
        assert_allclose(tracks[0].x, [0, 2])

    @pytest.mark.parametrize(
        "text,needle",
        [
            ("", "line 1"),
            ("track_id,t,x\n", "missing columns"),
            ("track_id,t,x,y\na,0,0,zz\n", "line 2"),
            ("track_id,t,x,y\na,0,0,0\na,1,nan,0\n", "line 3"),
            ("track_id,t,x,y\na,0,0\n", "line 2"),
        ],
    )
    def test_errors_name_line(self, tmp_path, text, needle):
        with pytest.raises(TrajectoryParseError, match=needle):
            parse_trajectories(write(tmp_path, text))

    def test_round_trip(self, tmp_path, rng):
        tracks = synth_scenario("corridor", {"n_tracks": 3, "corridor_length": 20}, rng)
        p = tmp_path / "rt.csv"
        write_trajectories(tracks, p)
        back = parse_trajectories(p)
        assert [t.id for t in back] == [t.id for t in tracks]
        for a, b in zip(tracks, back):
            assert np.array_equal(a.t, b.t) and np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)


class TestRawTrajectory:
    def test_needs_two(self):
        with pytest.raises(ValueError):
            RawTrajectory("a", [0.0], [0.0], [0.0])

    def test_increasing(self):
        with pytest.raises(ValueError):
            RawTrajectory("a", [0.0, 0.0], [0.0, 1.0], [0.0, 1.0])


class TestDeriveMotion:
    def test_diagonal(self):
        o = derive_motion(RawTrajectory("a", [0, 1], [0, 1], [0, 1]))
        assert_allclose([o.theta[0], o.speed[0]], [math.pi / 4, math.sqrt(2)], rtol=1e-14)

    def test_stationary_dropped(self):
        assert len(derive_motion(RawTrajectory("a", [0, 1], [0, 0], [0, 0]))) == 0

    def test_backwards(self):
        o = derive_motion(RawTrajectory("a", [0, 2], [0, -2], [0, 0]))
        assert_allclose([o.theta[0], o.speed[0]], [math.pi, 1.0], rtol=1e-14)

    def test_position_is_first_point(self):
        o = derive_motion(RawTrajectory("a", [0, 1, 2], [5, 6, 8], [1, 1, 1]))
        assert_allclose(o.x, [5, 6])
        assert_allclose(o.speed, [1, 2])

    def test_holdout_encoding_round_trip(self, rng):
        obs = derive_all(synth_scenario("roundabout", {"n_tracks": 2}, rng))
        back = derive_all(observations_to_tracks(obs))
        assert_allclose(back.x, obs.x)
        assert_allclose(back.speed, obs.speed, rtol=1e-12)
        assert np.all(np.abs(angle_diff(back.theta, obs.theta)) < 1e-12)


class TestObservations:
    def test_subset_and_iter(self):
        o = Observations([0, 1, 2], [0, 0, 0], [0, 1, 2], [1, 1, 1])
        sub = o[np.array([2, 0])]
        assert len(sub) == 2 and list(sub)[0].x == 2.0

    def test_lengths_must_match(self):
        with pytest.raises(ValueError):
            Observations([0, 1], [0], [0], [0])

    def test_concatenate_empty(self):
        assert len(Observations.concatenate([])) == 0


class TestScenarios:
    def test_corridor_concentrated(self, rng):
        obs = derive_all(synth_scenario("corridor", {"n_tracks": 100, "heading_kappa": 50}, rng))
        assert circular_stats(obs.theta).rbar > 0.97

    def test_three_way_branch_counts(self, rng):
        tracks = synth_scenario("three_way", {"n_tracks": 1000}, rng)
        counts = np.array([sum(t.id.endswith(s) for t in tracks) for s in ("straight", "left", "right")])
        p = np.array([0.5, 0.25, 0.25])
        sigma = np.sqrt(1000 * p * (1 - p))
        assert np.all(np.abs(counts - 1000 * p) <= 3 * sigma)

    def test_roundabout_tangent(self, rng):
        tracks = synth_scenario("roundabout", {"n_tracks": 30, "radius": 20.0}, rng)
        obs = derive_all(tracks)
        ends = np.concatenate([np.column_stack([t.x[1:], t.y[1:]]) for t in tracks])
        mid = 0.5 * (obs.positions + ends)
        # a chord is exactly tangent at its midpoint
        dev_mid = np.abs(angle_diff(obs.theta, np.arctan2(mid[:, 1], mid[:, 0]) + np.pi / 2))
        assert np.degrees(dev_mid.max()) < 1e-6
        # at the first sample the offset is half the arc step, v dt / (2 r)
        dev = np.abs(angle_diff(obs.theta, np.arctan2(obs.y, obs.x) + np.pi / 2))
        assert np.all(dev <= np.arcsin(obs.speed * 0.1 / 40.0) + 1e-9)
        assert np.degrees(np.median(dev)) < 2.0

    def test_deterministic(self):
        a = synth_scenario("three_way", {"n_tracks": 5}, np.random.default_rng(9))
        b = synth_scenario("three_way", {"n_tracks": 5}, np.random.default_rng(9))
        assert all(np.array_equal(p.x, q.x) and p.id == q.id for p, q in zip(a, b))

    def test_unknown_kind(self, rng):
        with pytest.raises(ScenarioConfigError):
            synth_scenario("spiral", None, rng)

    def test_unknown_key(self):
        with pytest.raises(ScenarioConfigError):
            ScenarioConfig.from_dict({"n_trakcs": 3})

    def test_from_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"n_tracks": 7, "radius": 15}))
        cfg = ScenarioConfig.from_json(p)
        assert cfg.n_tracks == 7 and cfg.radius == 15

    def test_invalid_values(self, rng):
        with pytest.raises(ScenarioConfigError):
            synth_scenario("three_way", {"branch_weights": [0.5, 0.5, 0.5]}, rng)
