import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from dirprim.circular import TWO_PI, VonMisesMixture, vm_sample
from dirprim.evaluate import (
    avg_density_direction,
    avg_density_speed,
    evaluate,
    fused_logpdf,
    improvement_percent,
    likelihood_improvement,
    predecessor_cell,
    rmse_angles,
    split_test,
    split_tracks,
    write_cell_csv,
)
from dirprim.grid import DirectionalPrimitive, GridSpec, PrimitiveMap
from dirprim.ingest import Observations, derive_all, synth_scenario
from dirprim.learn import fit_map
from dirprim.speed import GammaParams, gamma_pdf

FIG2_AT_0 = 0.888890333673416916183809026451


def obs_at(x, y, theta, speed=None):
    n = len(theta)
    speed = np.full(n, 5.0) if speed is None else speed
    return Observations(np.full(n, x), np.full(n, y), theta, speed)


class TestSplit:
    def test_exact_count(self, rng):
        obs = obs_at(1, 1, np.zeros(1000))
        train, test = split_test(obs, 0.10, rng)
        assert len(test) == 100 and len(train) == 900

    @pytest.mark.parametrize("f", [0.0, 1.0, -0.1, 1.5])
    def test_bad_fraction(self, f, rng):
        with pytest.raises(ValueError):
            split_test(obs_at(1, 1, np.zeros(10)), f, rng)

    def test_empty(self, rng):
        with pytest.raises(ValueError):
            split_test(Observations.empty(), 0.1, rng)

    def test_seeded_and_disjoint(self):
        obs = Observations(np.arange(50.0), np.zeros(50), np.zeros(50), np.ones(50))
        a = split_test(obs, 0.2, np.random.default_rng(3))
        b = split_test(obs, 0.2, np.random.default_rng(3))
        assert np.array_equal(a[1].x, b[1].x)
        assert sorted(np.concatenate([a[0].x, a[1].x])) == list(range(50))


class TestSplitTracks:
    def test_whole_tracks(self, rng):
        tracks = synth_scenario("corridor", {"n_tracks": 20, "corridor_length": 10}, rng)
        train, test = split_tracks(tracks, 0.1, rng)
        assert len(test) == 2 and len(train) == 18
        assert not {t.id for t in train} & {t.id for t in test}

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            split_tracks([], 0.1, rng)


class TestAvgDensity:
    def test_uniform_map(self, rng):
        m = PrimitiveMap.uninformative(GridSpec(0, 0, 5, 3, 3))
        test = Observations(rng.uniform(0, 15, 300), rng.uniform(0, 15, 300), rng.uniform(0, TWO_PI, 300), np.ones(300))
        d = avg_density_direction(m, test)
        assert d.mean == 1 / TWO_PI and d.std == 0.0 and d.n == 300

    def test_outside_counted(self):
        m = PrimitiveMap.uninformative(GridSpec(0, 0, 5, 1, 1))
        test = Observations([1.0, 50.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0])
        d = avg_density_direction(m, test)
        assert d.n == 1 and d.n_outside == 1

    def test_fitted_beats_uniform(self):
        for seed in range(3):
            rng = np.random.default_rng(seed)
            obs = derive_all(synth_scenario("corridor", {"n_tracks": 60}, rng))
            train, test = split_test(obs, 0.1, rng)
            spec = GridSpec.covering(obs.x, obs.y, 5.0)
            fitted = avg_density_direction(fit_map(train, spec), test).mean
            assert fitted > avg_density_direction(PrimitiveMap.uninformative(spec), test).mean

    def test_closed_form_point(self, fig2):
        m = PrimitiveMap(GridSpec(0, 0, 5, 1, 1), (DirectionalPrimitive(fig2, (None,) * 3),))
        d = avg_density_direction(m, obs_at(1, 1, np.array([0.0])))
        assert_allclose(d.mean, FIG2_AT_0, rtol=1e-12)

    def test_per_cell_rows(self, rng):
        m = PrimitiveMap.uninformative(GridSpec(0, 0, 5, 2, 1))
        test = Observations([1.0, 6.0, 7.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
        rows = avg_density_direction(m, test).per_cell
        assert [(r["ix"], r["n"]) for r in rows] == [(0, 1), (1, 2)]


class TestAvgSpeed:
    def prim(self, g):
        return DirectionalPrimitive(VonMisesMixture.single(0.0, 10.0), (g,))

    def test_fitted_beats_mismatched(self, rng):
        from dirprim.speed import gamma_mle

        sp = rng.gamma(100.0, 0.1, 500)
        test = obs_at(1, 1, np.zeros(500), sp)
        fitted = gamma_mle(sp)
        # right mean, variance ten times too large
        control = GammaParams(fitted.alpha / 10, fitted.beta / 10)
        spec = GridSpec(0, 0, 5, 1, 1)
        good = avg_density_speed(PrimitiveMap(spec, (self.prim(fitted),)), test).mean
        bad = avg_density_speed(PrimitiveMap(spec, (self.prim(control),)), test).mean
        assert good > bad

    def test_all_floor(self):
        m = PrimitiveMap(GridSpec(0, 0, 5, 2, 1), (self.prim(None), DirectionalPrimitive.uninformative()))
        test = Observations([1.0, 6.0], [1.0, 1.0], [0.0, 0.0], [3.0, 3.0])
        d = avg_density_speed(m, test, floor_density=0.01)
        assert d.mean == 0.01 and d.std == 0.0

    def test_at_mean(self):
        g = GammaParams(9.0, 1.5)
        m = PrimitiveMap(GridSpec(0, 0, 5, 1, 1), (self.prim(g),))
        d = avg_density_speed(m, obs_at(1, 1, np.array([0.0]), np.array([g.mean])))
        assert_allclose(d.mean, gamma_pdf(g.mean, g), rtol=1e-14)

    def test_mode_by_responsibility(self):
        mix = VonMisesMixture([0.0, np.pi], [20.0, 20.0], [0.5, 0.5])
        g0, g1 = GammaParams(100, 10), GammaParams(100, 50)
        m = PrimitiveMap(GridSpec(0, 0, 5, 1, 1), (DirectionalPrimitive(mix, (g0, g1)),))
        d = avg_density_speed(m, obs_at(1, 1, np.array([np.pi - 0.1]), np.array([2.0])))
        assert_allclose(d.mean, gamma_pdf(2.0, g1))


class TestImprovement:
    def test_formula(self):
        assert improvement_percent(150.0, 100.0) == 50.0
        assert improvement_percent(-50.0, -100.0) == 50.0

    def test_three_way_positive(self):
        rng = np.random.default_rng(0)
        obs = derive_all(synth_scenario("three_way", {"n_tracks": 300}, rng))
        train, test = split_test(obs, 0.1, rng)
        m = fit_map(train, GridSpec.covering(obs.x, obs.y, 5.0))
        rep = likelihood_improvement(m, test)
        assert rep.mean_improvement > 0 and rep.fraction_positive >= 0.9
        for c in rep.cells:
            assert_allclose(c["improvement"], improvement_percent(c["Lstar"], c["Lt"]))

    def test_misleading_prior_negative(self):
        # prior says 0 deg, belief and truth say 90 deg
        rng = np.random.default_rng(0)
        spec = GridSpec(0, 0, 5, 1, 1)
        m = PrimitiveMap(spec, (DirectionalPrimitive(VonMisesMixture.single(0.0, 20.0), (None,)),))
        test = obs_at(1, 1, vm_sample(np.pi / 2, 20.0, rng, 200))
        belief = VonMisesMixture.single(np.pi / 2, 2.5)
        rep = likelihood_improvement(m, test, [(0, 0)], lambda m_, c: belief)
        assert rep.cells[0]["improvement"] < 0

    def test_log_normalizer_identity(self, fig2, rng):
        # L* - Lt = L0 - N log Z, whatever the belief
        theta, _ = fig2.sample(rng, 300)
        belief = VonMisesMixture.single(-np.pi / 2, 2.5)
        l0 = fig2.logpdf(theta).sum()
        lt = belief.logpdf(theta).sum()
        ls = fused_logpdf(fig2, belief, theta).sum()
        g = np.arange(3600) * TWO_PI / 3600
        log_z = np.log(np.mean(fig2.pdf(g) * belief.pdf(g)) * TWO_PI)
        assert_allclose(ls - lt, l0 - theta.size * log_z, rtol=1e-9)

    def test_predecessor_and_skip(self):
        spec = GridSpec(0, 0, 5, 3, 1)
        east = DirectionalPrimitive(VonMisesMixture.single(0.0, 20.0), (None,))
        m = PrimitiveMap(spec, (east, east, DirectionalPrimitive.uninformative()))
        assert predecessor_cell(m, 1, 0) == (0, 0)
        assert predecessor_cell(m, 0, 0) is None
        test = Observations([1.0, 6.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0])
        rep = likelihood_improvement(m, test)
        assert [(c["ix"], c["iy"]) for c in rep.cells] == [(1, 0)]
        assert rep.skipped == [{"ix": 0, "iy": 0, "reason": "no predecessor"}]


class TestRmse:
    def test_values(self):
        assert rmse_angles(np.full(5, 0.3), 0.3) == 0.0
        assert_allclose(rmse_angles(np.radians([90.0, -90.0]), 0.0), 90.0)
        assert_allclose(rmse_angles(np.radians([350.0]), np.radians(10.0)), 20.0)

    def test_empty(self):
        with pytest.raises(ValueError):
            rmse_angles([], 0.0)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(-10, 10), st.integers(-3, 3))
    def test_wrap_invariance(self, samples, truth, k):
        s = np.array(samples)
        assert_allclose(rmse_angles(s + k * TWO_PI, truth), rmse_angles(s, truth), atol=1e-7)
        assert_allclose(rmse_angles(s, truth + k * TWO_PI), rmse_angles(s, truth), atol=1e-7)


class TestReport:
    def test_json_and_csv(self, tmp_path):
        m = PrimitiveMap.uninformative(GridSpec(0, 0, 5, 2, 1))
        test = Observations([1.0, 6.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0])
        rep = evaluate(m, test, improvement=True, config={"seed": 1})
        d = rep.to_dict()
        json.dumps(d)
        assert d["config"] == {"seed": 1} and d["n_test"] == 2
        assert d["direction"]["std"] >= 0 and d["speed"]["std"] >= 0
        write_cell_csv(rep, tmp_path / "c.csv")
        rows = list(csv.DictReader(open(tmp_path / "c.csv")))
        assert len(rows) == 2 and float(rows[0]["direction_mean"]) == 1 / TWO_PI
