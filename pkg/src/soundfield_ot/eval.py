"""NMSE scoring, leave-sensors-out cross-validation and Monte Carlo sweeps."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from . import baselines
from .lift import PhaseGrid
from .model import CoefficientVector, PlaneWaveDictionary, Region
from .ot_solver import BarycenterSolution, SolverOptions, assemble_problem, \
    extract_coefficients, solve_barycenter
from .simulate import GroundTruth, MeasurementSet, ScenarioConfig, simulate, trial_seed

log = logging.getLogger(__name__)

METHODS = ("ot", "tikhonov", "lasso", "ladlasso")
SWEEP_PARAMS = ("sigma_delta_rad", "num_sensors", "frequency_hz")
DEFAULT_REGION = Region.centered_square(0.6)
DEFAULT_RESOLUTION = (190, 190)

CSV_COLUMNS = ("sweep_param", "value", "method", "trial", "nmse", "lambda_or_gamma", "eta",
               "seed", "wall_ms")


class ConfigError(ValueError):
    pass


class TrialError(RuntimeError):
    def __init__(self, msg, trial=None, value=None):
        super().__init__(msg)
        self.trial = trial
        self.value = value


# ---------------------------------------------------------------------------
# NMSE
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _test_grid(region: Region, resolution: tuple) -> np.ndarray:
    pts = region.grid_points(*resolution)
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=4)
def _grid_steering(frequency_hz, speed, directions: bytes, region, resolution):
    d = PlaneWaveDictionary(frequency_hz, np.frombuffer(directions), speed)
    return d.steering_matrix(_test_grid(region, resolution))


def nmse(estimate, dictionary: PlaneWaveDictionary, truth: GroundTruth,
         region: Region = DEFAULT_REGION, resolution=DEFAULT_RESOLUTION) -> float:
    """Field-domain NMSE of an estimate against the unperturbed true waves."""
    coeffs = estimate.values if isinstance(estimate, CoefficientVector) else \
        np.asarray(estimate, dtype=complex)
    if coeffs.size != dictionary.size:
        raise ValueError(f"estimate has {coeffs.size} coefficients, dictionary {dictionary.size}")
    resolution = tuple(int(r) for r in resolution)
    G = _grid_steering(dictionary.frequency_hz, dictionary.speed_of_sound_mps,
                       dictionary.directions_rad.tobytes(), region, resolution)
    est = G @ coeffs
    ref = truth.field_at(_test_grid(region, resolution), dictionary.wavenumber_radpm)
    den = float(np.sum(np.abs(ref) ** 2))
    if den == 0.0:
        raise ValueError("true field vanishes on the evaluation grid")
    return float(np.sum(np.abs(est - ref) ** 2)) / den


# ---------------------------------------------------------------------------
# Estimators behind one calling convention
# ---------------------------------------------------------------------------

def log_grid(lo=1e-4, hi=1e2, num=7) -> list:
    return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), num)]


def default_hyper_grid(method: str) -> list:
    if method == "ot":
        return [{"gamma": g, "eta": e} for g, e in itertools.product(log_grid(), log_grid())]
    if method in ("tikhonov", "lasso", "ladlasso"):
        return [{"lambda": lam} for lam in log_grid()]
    raise ConfigError(f"unknown method {method!r}")


def regularization_strength(hyper: dict) -> tuple:
    """Larger means more regularised: large lambda/gamma, small eta."""
    return (hyper.get("lambda", 0.0), hyper.get("gamma", 0.0), -hyper.get("eta", 0.0))


class OTEstimator:
    """Inverse-barycenter estimator; keeps the last solution per training set as a warm start."""

    def __init__(self, K: int = 50, opts: SolverOptions = SolverOptions()):
        self.grid = PhaseGrid(K)
        self.opts = opts
        self._warm: dict = {}
        self.last_solution: Optional[BarycenterSolution] = None

    def __call__(self, meas: MeasurementSet, dictionary: PlaneWaveDictionary,
                 hyper: dict) -> CoefficientVector:
        problem = assemble_problem(meas, dictionary, self.grid, hyper["gamma"], hyper["eta"])
        key = (meas.array.positions_m.tobytes(), meas.pressures.tobytes())
        sol = solve_barycenter(problem, self.opts, self._warm.get(key))
        if len(self._warm) > 16:
            self._warm.clear()
        self._warm[key] = sol
        self.last_solution = sol
        return extract_coefficients(sol, self.grid)


def make_estimator(method: str, phase_grid_K: int = 50,
                   solver_opts: SolverOptions = SolverOptions(),
                   baseline_opts: baselines.BaselineOptions = baselines.BaselineOptions()
                   ) -> Callable[[MeasurementSet, PlaneWaveDictionary, dict], CoefficientVector]:
    if method == "ot":
        return OTEstimator(phase_grid_K, solver_opts)

    def G_of(meas, dictionary):
        return dictionary.steering_matrix(meas.array.positions_m)

    if method == "tikhonov":
        return lambda m, d, h: baselines.tikhonov(G_of(m, d), m.pressures, h["lambda"])
    if method == "lasso":
        return lambda m, d, h: baselines.lasso(G_of(m, d), m.pressures, h["lambda"],
                                               baseline_opts)
    if method == "ladlasso":
        return lambda m, d, h: baselines.lad_lasso(G_of(m, d), m.pressures, h["lambda"],
                                                   baseline_opts)
    raise ConfigError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def sensor_folds(Q: int, folds: int) -> list:
    """Interleaved partition: sensor q goes to fold q mod folds."""
    if folds < 2 or Q < folds:
        raise ConfigError(f"need 2 <= folds <= Q, got folds={folds}, Q={Q}")
    return [np.arange(f, Q, folds) for f in range(folds)]


def cv_errors(estimator, meas: MeasurementSet, dictionary: PlaneWaveDictionary,
              hyper_grid: Sequence[dict], folds: int) -> np.ndarray:
    """Mean held-out squared prediction error for every candidate."""
    parts = sensor_folds(len(meas), folds)
    errs = np.zeros(len(hyper_grid))
    Q = len(meas)
    for held in parts:
        train = np.setdiff1d(np.arange(Q), held)
        tr = meas.subset(train)
        G_held = dictionary.steering_matrix(meas.array.positions_m[held])
        for i, h in enumerate(hyper_grid):
            a = estimator(tr, dictionary, h).values
            errs[i] += float(np.sum(np.abs(G_held @ a - meas.pressures[held]) ** 2))
    return errs / Q


def cross_validate(estimator, meas: MeasurementSet, dictionary: PlaneWaveDictionary,
                   hyper_grid: Sequence[dict], folds: int = 3) -> dict:
    """Candidate with the smallest CV error; ties go to stronger regularisation, then order."""
    if len(hyper_grid) == 0:
        raise ConfigError("empty hyperparameter grid")
    if len(hyper_grid) == 1:
        sensor_folds(len(meas), folds)
        return dict(hyper_grid[0])
    errs = cv_errors(estimator, meas, dictionary, hyper_grid, folds)
    best = min(range(len(hyper_grid)),
               key=lambda i: (errs[i], tuple(-s for s in regularization_strength(hyper_grid[i])),
                              i))
    return dict(hyper_grid[best])


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple
    base: ScenarioConfig = ScenarioConfig()
    methods: tuple = METHODS
    folds: int = 3
    hyper_grids: Optional[dict] = None
    phase_grid_K: int = 50
    solver_opts: SolverOptions = SolverOptions()
    baseline_opts: baselines.BaselineOptions = baselines.BaselineOptions()
    region: Region = DEFAULT_REGION
    resolution: tuple = DEFAULT_RESOLUTION

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {self.param!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one value")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")

    def grid_for(self, method: str) -> list:
        if self.hyper_grids and method in self.hyper_grids:
            return list(self.hyper_grids[method])
        return default_hyper_grid(method)

    def config_at(self, value, seed: int) -> ScenarioConfig:
        v = int(value) if self.param == "num_sensors" else float(value)
        return replace(self.base, **{self.param: v}, rng_seed=int(seed))


@dataclass
class EvaluationReport:
    method: str
    sweep_param: str
    value: float
    nmse: float
    stderr: float
    per_trial: list
    hyperparameters: list
    seeds: list
    scenario: dict
    wall_time_s: float
    error: Optional[str] = None


def derive_seed(master_seed: int, trial: int) -> int:
    """Scenario seed of a trial. Sweep points share it, so every point sees the
    same waves and noise draws (common random numbers across the sweep)."""
    return int(trial_seed(master_seed, trial).generate_state(1)[0])


def run_trial(spec: SweepSpec, value, trial: int, master_seed: int) -> list:
    """All methods on one scenario draw; returns one row dict per method."""
    seed = derive_seed(master_seed, trial)
    cfg = spec.config_at(value, seed)
    truth, meas, dictionary = simulate(cfg)
    rows = []
    for method in spec.methods:
        t0 = time.perf_counter()
        est = make_estimator(method, spec.phase_grid_K, spec.solver_opts, spec.baseline_opts)
        try:
            hyper = cross_validate(est, meas, dictionary, spec.grid_for(method), spec.folds)
            coeffs = est(meas, dictionary, hyper)
            score = nmse(coeffs, dictionary, truth, spec.region, spec.resolution)
        except Exception as exc:
            raise TrialError(f"{method} failed at {spec.param}={value}, trial {trial}: {exc}",
                             trial, value) from exc
        rows.append({
            "sweep_param": spec.param, "value": value, "method": method, "trial": trial,
            "nmse": score, "lambda_or_gamma": hyper.get("lambda", hyper.get("gamma")),
            "eta": hyper.get("eta"), "seed": seed,
            "wall_ms": 1000.0 * (time.perf_counter() - t0),
        })
    return rows


def _run_job(args):
    spec, value, trial, master_seed = args
    try:
        return run_trial(spec, value, trial, master_seed)
    except TrialError as exc:
        return exc


def monte_carlo(spec: SweepSpec, trials: int, master_seed: int = 0, threads: int = 1,
                progress: Optional[Callable[[str], None]] = None):
    """Run every (sweep value, trial) and aggregate per (value, method).

    Returns ``(reports, rows)``; rows are ordered by value, trial, method.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    jobs = [(spec, v, t, master_seed) for v in spec.values for t in range(trials)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_job(job))
            if progress:
                progress(f"{spec.param}={job[1]} trial {job[2]} done")
    reports, rows = [], []
    for vi, v in enumerate(spec.values):
        chunk = results[vi * trials:(vi + 1) * trials]
        failed = next((r for r in chunk if isinstance(r, TrialError)), None)
        scenario = spec.config_at(v, 0).to_dict()
        scenario.pop("rng_seed")
        if failed is not None:
            log.error("sweep point %s=%s aborted: %s", spec.param, v, failed)
            for m in spec.methods:
                reports.append(EvaluationReport(m, spec.param, v, float("nan"), float("nan"),
                                                [], [], [], scenario, 0.0, str(failed)))
            continue
        flat = [row for trial_rows in chunk for row in trial_rows]
        rows.extend(flat)
        for m in spec.methods:
            mine = [r for r in flat if r["method"] == m]
            vals = np.array([r["nmse"] for r in mine])
            se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
            reports.append(EvaluationReport(
                m, spec.param, v, float(vals.mean()), se, vals.tolist(),
                [{"lambda_or_gamma": r["lambda_or_gamma"], "eta": r["eta"]} for r in mine],
                [r["seed"] for r in mine], scenario,
                sum(r["wall_ms"] for r in mine) / 1000.0,
            ))
    return reports, rows


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def rows_to_csv(rows, timing: bool = False) -> str:
    """CSV text; wall_ms is left empty unless ``timing`` so reruns are byte-identical."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) if (c != "wall_ms" or timing) else "" for c in CSV_COLUMNS])
    return buf.getvalue()


def summarize(reports) -> str:
    lines = [f"{'param':>16} {'value':>10} {'method':>9} {'mean NMSE':>11} {'stderr':>9}"]
    for r in reports:
        lines.append(f"{r.sweep_param:>16} {r.value:>10.4g} {r.method:>9} {r.nmse:>11.4g} "
                     f"{r.stderr:>9.2g}" + (f"  FAILED: {r.error}" if r.error else ""))
    return "\n".join(lines)
