"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The sweep criteria run the shipped reduced presets in ``configs/`` and take a
few minutes in total on one core. The full-size sigma sweep is opt-in through
``SOUNDFIELD_OT_FULL_SWEEP=1`` because it needs hours on a single core.
"""
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import cost_matrix, inverse_barycenter_oracle, lp_transport
from soundfield_ot.baselines import lasso
from soundfield_ot.cli import load_config, main, sweep_spec_from_config
from soundfield_ot.eval import monte_carlo
from soundfield_ot.lift import make_ground_cost, make_phase_grid
from soundfield_ot.model import PlaneWaveDictionary, SensorArray
from soundfield_ot.ot_solver import BarycenterProblem, estimate_ot, ot_distance, solve_barycenter
from soundfield_ot.eval import nmse
from soundfield_ot.simulate import GroundTruth, MeasurementSet

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
K_FREQ = 2 * np.pi * 1000.0 / 343.0
BASELINES = ("tikhonov", "lasso", "ladlasso")


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, detail
    return emit


def sweep_means(config_name, trials=None):
    cfg = load_config(CONFIGS / config_name)
    spec = sweep_spec_from_config(cfg)
    t0 = time.perf_counter()
    reports, _ = monte_carlo(spec, trials or cfg.sweep.trials, cfg.seed)
    elapsed = time.perf_counter() - t0
    assert not any(r.error for r in reports), [r.error for r in reports if r.error]
    means = {(r.method, r.value): r.nmse for r in reports}
    return spec, means, elapsed


def test_transport_oracle_equivalence(report):
    rng = np.random.default_rng(100)
    t0 = time.perf_counter()
    worst = 0.0
    n = 60
    for _ in range(n):
        K = int(rng.integers(2, 6))
        gamma = float(10 ** rng.uniform(-3, 0.5))
        a = rng.uniform(0, 1, K) * (rng.uniform(size=K) < 0.8)
        b = rng.uniform(0, 1, K)
        if a.sum() == 0:
            a[0] = 1.0
        b *= a.sum() / b.sum()
        val, _ = ot_distance(a, b, make_ground_cost(make_phase_grid(K), gamma))
        ref = lp_transport(a, b, cost_matrix(K, gamma))
        worst = max(worst, abs(val - ref) / max(abs(ref), 1e-300))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-7 and elapsed < 10.0,
           f"{n} instances, worst relative error {worst:.2e} (<= 1e-7), {elapsed:.2f} s (< 10 s)")


def test_estimator_oracle_equivalence(report):
    rng = np.random.default_rng(200)
    t0 = time.perf_counter()
    worst = 0.0
    n = 24
    for _ in range(n):
        Q, L, K = int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(2, 6))
        dirs = np.sort(rng.uniform(-np.pi, np.pi, L))
        pos = rng.uniform(-0.3, 0.3, (Q, 2))
        G = np.exp(-1j * K_FREQ * pos @ np.stack([np.cos(dirs), np.sin(dirs)], 0))
        p = rng.standard_normal(Q) + 1j * rng.standard_normal(Q)
        gamma, eta = float(10 ** rng.uniform(-2, 0.5)), float(10 ** rng.uniform(-0.5, 1.5))
        grid = make_phase_grid(K)
        sol = solve_barycenter(BarycenterProblem(p, G, grid, make_ground_cost(grid, gamma), eta))
        ref = inverse_barycenter_oracle(p, G, K, gamma, eta)
        worst = max(worst, abs(sol.objective - ref) / abs(ref))
    elapsed = time.perf_counter() - t0
    report(2, worst <= 1e-6 and elapsed < 60.0,
           f"{n} instances, worst relative error {worst:.2e} (<= 1e-6), {elapsed:.2f} s (< 60 s)")


INVARIANT_TESTS = [
    "tests/test_ot_solver.py::TestSolveBarycenter::test_solution_invariants",
    "tests/test_ot_solver.py::TestSolveBarycenter::test_sparsity_inequality_tight_for_diracs",
    "tests/test_ot_solver.py::TestSolveBarycenter::test_convexity",
    "tests/test_ot_solver.py::TestSolveBarycenter::test_deterministic",
    "tests/test_ot_solver.py::TestOtDistance::test_symmetry_lower_bound_and_marginals",
    "tests/test_ot_solver.py::TestPricing::test_closed_form_matches_enumeration",
    "tests/test_lift.py::TestMoments::test_moment_bounded_by_mass",
    "tests/test_lift.py::TestMoments::test_equality_only_for_single_node",
    "tests/test_lift.py::TestMoments::test_lift_then_moment_is_identity_on_grid",
    "tests/test_lift.py::TestMoments::test_mass_additivity_over_split",
    "tests/test_lift.py::TestGroundCost::test_symmetric_and_circulant",
    "tests/test_model.py::TestSteeringVector::test_unit_modulus",
    "tests/test_model.py::TestFieldPressure::test_linearity",
    "tests/test_model.py::TestFieldPressure::test_plane_wave_translation",
    "tests/test_simulate.py::TestDrawScenario::test_deterministic",
    "tests/test_baselines.py::test_sensing_matrix_unit_modulus",
    "tests/test_baselines.py::TestLasso::test_stationarity",
    "tests/test_baselines.py::TestLasso::test_l1_norm_monotone_in_lambda",
    "tests/test_baselines.py::TestHomogeneity::test_scaling_laws",
    "tests/test_eval.py::TestNmse::test_scale_invariance_and_sign",
    "tests/test_eval.py::TestMonteCarlo::test_deterministic",
    "tests/test_eval.py::TestMonteCarlo::test_report_is_mean_of_trials",
    "tests/test_cli.py::TestSimulate::test_round_trip",
    "tests/test_cli.py::TestSimulate::test_byte_identical_on_repeat",
]


def test_invariant_suite(report):
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *INVARIANT_TESTS], cwd=ROOT, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr
    report(3, proc.returncode == 0 and elapsed < 120.0,
           f"{len(INVARIANT_TESTS)} property tests: {tail}; {elapsed:.1f} s (< 120 s)")


def test_noise_free_exact_recovery(report):
    t0 = time.perf_counter()
    d = PlaneWaveDictionary.uniform(1000.0, 8)
    arr = SensorArray.circular(8, 0.25)
    grid = make_phase_grid(16)
    G = d.steering_matrix(arr.positions_m)
    rng = np.random.default_rng(300)
    worst_ot = worst_lasso = 0.0
    for i in range(10):
        n = 1 + i % 2
        idx = np.sort(rng.choice(8, n, replace=False))
        amps = rng.uniform(0.5, 2.0, n) * np.exp(1j * grid.nodes_rad[rng.integers(0, 16, n)])
        truth = GroundTruth(d.directions_rad[idx], amps, np.zeros((8, n)))
        phi = np.zeros(8, dtype=complex)
        phi[idx] = amps
        meas = MeasurementSet(G @ phi, arr, 1000.0)
        worst_ot = max(worst_ot, nmse(estimate_ot(meas, d, grid, gamma=1e-3, eta=1e4), d,
                                      truth))
        worst_lasso = max(worst_lasso, nmse(lasso(G, meas.pressures, 1e-4), d, truth))
    elapsed = time.perf_counter() - t0
    report(4, worst_ot <= 1e-3 and worst_lasso <= 1e-3 and elapsed < 30.0,
           f"worst NMSE OT {worst_ot:.1e}, Lasso {worst_lasso:.1e} (<= 1e-3), "
           f"{elapsed:.1f} s (< 30 s)")


def _check_sigma_sweep(spec, means):
    sigmas = sorted(spec.values)
    monotone = all(means[(m, a)] <= means[(m, b)] for m in spec.methods
                   for a, b in zip(sigmas, sigmas[1:]))
    top = sigmas[-1]
    best = min(means[(m, top)] for m in BASELINES)
    table = "; ".join(f"{m} " + "/".join(f"{means[(m, s)]:.4f}" for s in sigmas)
                      for m in spec.methods)
    return monotone and means[("ot", top)] <= best, \
        f"OT {means[('ot', top)]:.4f} vs best baseline {best:.4f} at sigma={top}, " \
        f"non-decreasing: {monotone} [{table}]"


@pytest.mark.slow
def test_sigma_sweep_reduced_preset(report):
    spec, means, elapsed = sweep_means("sweep_sigma_reduced.yaml")
    ok, detail = _check_sigma_sweep(spec, means)
    report(5, ok and elapsed <= 900.0, f"reduced preset, {detail}, {elapsed:.0f} s (<= 900 s)")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("SOUNDFIELD_OT_FULL_SWEEP") != "1",
                    reason="full-size sweep is opt-in (SOUNDFIELD_OT_FULL_SWEEP=1)")
def test_sigma_sweep_full_size(report):
    spec, means, elapsed = sweep_means("sweep_sigma.yaml")
    ok, detail = _check_sigma_sweep(spec, means)
    report(5, ok, f"full size, {detail}, {elapsed:.0f} s")


@pytest.mark.slow
def test_microphone_sweep_gap(report):
    spec, means, elapsed = sweep_means("sweep_mics_reduced.yaml")
    lo, hi = min(spec.values), max(spec.values)

    def gap(method, q):
        return means[(method, q)] - means[("ot", q)]

    def best_gap(q):
        return min(means[(m, q)] for m in BASELINES) - means[("ot", q)]

    per = {m: (gap(m, lo), gap(m, hi)) for m in BASELINES}
    ok = best_gap(hi) >= best_gap(lo) and all(g_hi >= g_lo for g_lo, g_hi in per.values())
    detail = f"best-baseline gap Q={lo}: {best_gap(lo):+.4f}, Q={hi}: {best_gap(hi):+.4f}; " + \
        "; ".join(f"{m} {a:+.4f} -> {b:+.4f}" for m, (a, b) in per.items())
    report(6, ok, detail)


def test_sweep_csv_determinism(report, tmp_path):
    args = ["sweep", str(CONFIGS / "tiny.yaml"), "--seed", "3", "--threads", "1"]
    rc_a = main(args + ["--out-dir", str(tmp_path / "a")])
    rc_b = main(args + ["--out-dir", str(tmp_path / "b")])
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    b = (tmp_path / "b" / "sweep.csv").read_bytes()
    report(7, rc_a == rc_b == 0 and a == b and len(a) > 0,
           f"two runs, {len(a)} bytes each, identical: {a == b}")
