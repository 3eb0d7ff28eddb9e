import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import cv_exhaustive, nmse_two_pass
from soundfield_ot.baselines import tikhonov
from soundfield_ot.eval import (CSV_COLUMNS, ConfigError, SweepSpec, TrialError, cross_validate,
                                cv_errors, default_hyper_grid, derive_seed, make_estimator,
                                monte_carlo, nmse, rows_to_csv, run_trial, sensor_folds)
from soundfield_ot.model import PlaneWaveDictionary, Region, SensorArray
from soundfield_ot.simulate import GroundTruth, MeasurementSet, ScenarioConfig, simulate

SMALL_REGION = Region.centered_square(0.6)
TINY_BASE = ScenarioConfig(num_sensors=4, estimation_grid_size=8, num_true_waves=2)
TINY_GRIDS = {"ot": [{"gamma": 0.1, "eta": 10.0}, {"gamma": 1.0, "eta": 1.0}],
              "tikhonov": [{"lambda": 0.01}, {"lambda": 1.0}],
              "lasso": [{"lambda": 0.01}, {"lambda": 1.0}],
              "ladlasso": [{"lambda": 0.1}, {"lambda": 1.0}]}


def tiny_spec(**kw):
    args = dict(param="sigma_delta_rad", values=(0.0, 0.5), base=TINY_BASE, folds=2,
                hyper_grids=TINY_GRIDS, phase_grid_K=8, resolution=(20, 20))
    args.update(kw)
    return SweepSpec(**args)


def on_grid_truth(d, idx, amps, Q=9):
    return GroundTruth(d.directions_rad[idx], amps, np.zeros((Q, len(idx))))


class TestNmse:
    def test_exact_estimate(self):
        d = PlaneWaveDictionary.uniform(1000.0, 50)
        amps = np.array([1.0 - 0.5j, 0.3j])
        est = np.zeros(50, dtype=complex)
        est[[7, 31]] = amps
        assert nmse(est, d, on_grid_truth(d, [7, 31], amps)) <= 1e-28

    def test_zero_estimate(self):
        d = PlaneWaveDictionary.uniform(1000.0, 20)
        truth = GroundTruth([0.123, -2.0], [1.0, 2j], np.zeros((3, 2)))
        assert nmse(np.zeros(20), d, truth) == 1.0

    def test_against_two_pass_oracle(self):
        rng = np.random.default_rng(1)
        d = PlaneWaveDictionary.uniform(1000.0, 10)
        est = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        truth = GroundTruth(rng.uniform(-np.pi, np.pi, 3), rng.standard_normal(3) + 0j,
                            np.zeros((2, 3)))
        res = (23, 17)
        xs = -0.3 + 0.6 * (np.arange(23) + 0.5) / 23
        ys = -0.3 + 0.6 * (np.arange(17) + 0.5) / 17
        ref = nmse_two_pass(d.directions_rad, est, truth.directions_rad, truth.amplitudes,
                            d.wavenumber_radpm, xs, ys)
        assert nmse(est, d, truth, SMALL_REGION, res) == pytest.approx(ref, rel=1e-12)

    def test_grid_size(self):
        pts = SMALL_REGION.grid_points(190, 190)
        assert pts.shape == (36100, 2)

    def test_zero_truth(self):
        d = PlaneWaveDictionary.uniform(1000.0, 5)
        truth = GroundTruth([0.1], [0.0], np.zeros((1, 1)))
        with pytest.raises(ValueError):
            nmse(np.ones(5), d, truth)

    def test_length_mismatch(self):
        d = PlaneWaveDictionary.uniform(1000.0, 5)
        truth = GroundTruth([0.1], [1.0], np.zeros((1, 1)))
        with pytest.raises(ValueError):
            nmse(np.ones(4), d, truth)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1),
           c=st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False,
                                allow_infinity=False))
    def test_scale_invariance_and_sign(self, seed, c):
        rng = np.random.default_rng(seed)
        d = PlaneWaveDictionary.uniform(1000.0, 12)
        est = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        dirs = rng.uniform(-np.pi, np.pi, 2)
        amps = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        res = (30, 30)
        base = nmse(est, d, GroundTruth(dirs, amps, np.zeros((1, 2))), SMALL_REGION, res)
        scaled = nmse(c * est, d, GroundTruth(dirs, c * amps, np.zeros((1, 2))), SMALL_REGION,
                      res)
        assert base >= 0
        assert abs(scaled - base) <= 1e-12 * max(1.0, base)


class TestCrossValidation:
    def setup_method(self):
        _, self.meas, self.d = simulate(ScenarioConfig(num_sensors=6, estimation_grid_size=10,
                                                       rng_seed=3))
        self.fit = make_estimator("tikhonov")

    def test_single_candidate(self):
        assert cross_validate(self.fit, self.meas, self.d, [{"lambda": 0.7}], 3) == \
            {"lambda": 0.7}

    def test_duplicates_return_first(self):
        grid = [{"lambda": 0.1}, {"lambda": 0.1}]
        best = cross_validate(self.fit, self.meas, self.d, grid, 2)
        assert best is not grid[1] and best == grid[0]

    def test_tie_prefers_stronger_regularization(self):
        # all-constant estimator: every candidate scores the same
        zero = lambda m, d, h: tikhonov(np.eye(d.size)[:1], [0.0], 1.0)  # noqa: E731
        grid = [{"lambda": 0.1}, {"lambda": 10.0}, {"lambda": 1.0}]
        assert cross_validate(zero, self.meas, self.d, grid, 2) == {"lambda": 10.0}
        ot_grid = [{"gamma": 1.0, "eta": 10.0}, {"gamma": 1.0, "eta": 0.1}]
        assert cross_validate(zero, self.meas, self.d, ot_grid, 2) == ot_grid[1]

    def test_two_fold_matches_exhaustive(self):
        grid = [{"lambda": v} for v in (1e-3, 1e-1, 1.0, 10.0)]
        G = self.d.steering_matrix(self.meas.array.positions_m)
        got = cv_errors(self.fit, self.meas, self.d, grid, 2)
        ref = cv_exhaustive(lambda Gk, pk, h: tikhonov(Gk, pk, h["lambda"]).values,
                            G, self.meas.pressures, grid, 2)
        np.testing.assert_allclose(got, ref, rtol=1e-12)
        best = cross_validate(self.fit, self.meas, self.d, grid, 2)
        assert best == grid[int(np.argmin(ref))]

    def test_folds_partition(self):
        parts = sensor_folds(9, 3)
        assert sorted(np.concatenate(parts).tolist()) == list(range(9))
        np.testing.assert_array_equal(parts[1], [1, 4, 7])

    def test_too_few_sensors(self):
        with pytest.raises(ConfigError):
            cross_validate(self.fit, self.meas.subset([0, 1]), self.d,
                           [{"lambda": 1.0}, {"lambda": 2.0}], 3)
        with pytest.raises(ConfigError):
            sensor_folds(5, 1)

    def test_default_grids(self):
        assert len(default_hyper_grid("ot")) == 49
        lams = [h["lambda"] for h in default_hyper_grid("lasso")]
        np.testing.assert_allclose(lams, np.logspace(-4, 2, 7))
        with pytest.raises(ConfigError):
            default_hyper_grid("ridge")


class TestMonteCarlo:
    def test_single_trial_equals_single_run(self):
        spec = tiny_spec(values=(0.5,))
        reports, rows = monte_carlo(spec, 1, master_seed=11)
        seed = derive_seed(11, 0)
        truth, meas, d = simulate(spec.config_at(0.5, seed))
        for rep in reports:
            est = make_estimator(rep.method, 8)
            hyper = cross_validate(est, meas, d, TINY_GRIDS[rep.method], 2)
            score = nmse(est(meas, d, hyper), d, truth, spec.region, spec.resolution)
            assert rep.nmse == pytest.approx(score, rel=1e-9)
            assert rep.per_trial == [rep.nmse] and rep.stderr == 0.0

    def test_deterministic(self):
        spec = tiny_spec()
        _, rows1 = monte_carlo(spec, 2, master_seed=5)
        _, rows2 = monte_carlo(spec, 2, master_seed=5)
        assert rows_to_csv(rows1) == rows_to_csv(rows2)

    def test_report_is_mean_of_trials(self):
        reports, _ = monte_carlo(tiny_spec(methods=("tikhonov",)), 3, master_seed=2)
        for rep in reports:
            assert rep.nmse == pytest.approx(np.mean(rep.per_trial), rel=1e-15)
            assert len(rep.seeds) == 3 and len(set(rep.seeds)) == 3

    def test_common_seeds_across_points(self):
        _, rows = monte_carlo(tiny_spec(methods=("tikhonov",)), 2, master_seed=4)
        by_value = {}
        for r in rows:
            by_value.setdefault(r["value"], []).append(r["seed"])
        assert by_value[0.0] == by_value[0.5]

    def test_csv_columns(self):
        _, rows = monte_carlo(tiny_spec(methods=("lasso",), values=(0.25,)), 2, master_seed=0)
        text = rows_to_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 3 and all(line.endswith(",") for line in lines[1:])
        timed = rows_to_csv(rows, timing=True).strip().split("\n")
        assert all(float(line.rsplit(",", 1)[1]) > 0 for line in timed[1:])

    def test_failed_trial_aborts_point(self):
        bad = tiny_spec(methods=("tikhonov",), hyper_grids={"tikhonov": [{"lambda": -1.0}]},
                        values=(0.1,))
        reports, rows = monte_carlo(bad, 2, master_seed=0)
        assert rows == [] and np.isnan(reports[0].nmse) and "trial 0" in reports[0].error
        with pytest.raises(TrialError) as info:
            run_trial(bad, 0.1, 1, 0)
        assert info.value.trial == 1

    def test_invalid_inputs(self):
        with pytest.raises(ConfigError):
            monte_carlo(tiny_spec(), 0)
        with pytest.raises(ConfigError):
            tiny_spec(param="snr_db")
        with pytest.raises(ConfigError):
            tiny_spec(values=())
        with pytest.raises(ConfigError):
            tiny_spec(methods=("ot", "music"))

    def test_sensor_sweep_uses_integer_counts(self):
        spec = tiny_spec(param="num_sensors", values=(4.0, 6.0), methods=("tikhonov",))
        assert spec.config_at(6.0, 0).num_sensors == 6
        _, rows = monte_carlo(spec, 1)
        assert [r["value"] for r in rows] == [4.0, 6.0]


def test_measurement_subset_used_by_cv_keeps_geometry():
    arr = SensorArray.circular(4, 0.2)
    m = MeasurementSet(np.arange(4) + 0j, arr, 1000.0)
    sub = m.subset([1, 3])
    np.testing.assert_array_equal(sub.array.positions_m, arr.positions_m[[1, 3]])
