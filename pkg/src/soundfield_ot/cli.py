"""Command-line front end.

    soundfield-ot simulate CONFIG            scenario.yaml + measurements.yaml
    soundfield-ot estimate MEASUREMENTS      estimate_<method>.yaml (+ SVGs with --render)
    soundfield-ot cv MEASUREMENTS            cv_<method>.yaml
    soundfield-ot sweep CONFIG               sweep.csv + sweep_summary.txt

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import eval as ev
from .baselines import BaselineOptions
from .model import Region
from .ot_solver import ConvergenceError, DataError, SolverOptions
from .render import heatmap_svg, stem_svg
from .serialize import (FileFormatError, read_measurements, read_scenario, write_estimate,
                        write_measurements, write_scenario)
from .simulate import ScenarioConfig, draw_scenario, make_rng, measure

log = logging.getLogger("soundfield_ot")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ScenarioSection(_Section):
    num_true_waves: int = Field(3, ge=1)
    frequency_hz: float = Field(1000.0, gt=0)
    array_radius_m: float = Field(0.25, gt=0)
    num_sensors: int = Field(9, ge=1)
    sigma_delta_rad: float = Field(0.5, ge=0)
    snr_db: float = 15.0
    estimation_grid_size: int = Field(50, ge=1)
    speed_of_sound_mps: float = Field(343.0, gt=0)


class EstimationSection(_Section):
    method: Literal["ot", "tikhonov", "lasso", "ladlasso"] = "ot"
    phase_grid: int = Field(50, ge=2)
    folds: int = Field(3, ge=2)
    gamma: Optional[float] = Field(None, gt=0)
    eta: Optional[float] = Field(None, gt=0)
    lambda_: Optional[float] = Field(None, gt=0, alias="lambda")


class SolverSection(_Section):
    rel_gap: float = Field(1e-5, gt=0)
    feas_tol: float = Field(1e-7, gt=0)
    max_iters: int = Field(50000, ge=1)
    algorithm: Literal["colgen", "admm"] = "colgen"


class BaselineSection(_Section):
    tol: float = Field(1e-8, gt=0)
    rel_gap: float = Field(1e-5, gt=0)
    max_iters: int = Field(100000, ge=1)


class OTGrid(_Section):
    gamma: list[float] = Field(default_factory=ev.log_grid)
    eta: list[float] = Field(default_factory=ev.log_grid)


class LambdaGrid(_Section):
    lambda_: list[float] = Field(default_factory=ev.log_grid, alias="lambda")


class HyperGrids(_Section):
    ot: OTGrid = Field(default_factory=OTGrid)
    tikhonov: LambdaGrid = Field(default_factory=LambdaGrid)
    lasso: LambdaGrid = Field(default_factory=LambdaGrid)
    ladlasso: LambdaGrid = Field(default_factory=LambdaGrid)

    def as_candidates(self) -> dict:
        out = {"ot": [{"gamma": g, "eta": e} for g in self.ot.gamma for e in self.ot.eta]}
        for m in ("tikhonov", "lasso", "ladlasso"):
            out[m] = [{"lambda": v} for v in getattr(self, m).lambda_]
        return out


class SweepSection(_Section):
    param: Literal["sigma_delta_rad", "num_sensors", "frequency_hz"] = "sigma_delta_rad"
    values: list[float] = Field(default_factory=lambda: [0.1, 0.3, 0.5])
    trials: int = Field(30, ge=1)
    methods: list[Literal["ot", "tikhonov", "lasso", "ladlasso"]] = \
        Field(default_factory=lambda: list(ev.METHODS))

    @field_validator("values")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("at least one sweep value is required")
        return v


class EvaluationSection(_Section):
    region_side_m: float = Field(0.6, gt=0)
    resolution: tuple[int, int] = (190, 190)


class RunConfig(_Section):
    seed: int = Field(0, ge=0)
    output_dir: str = "out"
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    estimation: EstimationSection = Field(default_factory=EstimationSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    baseline: BaselineSection = Field(default_factory=BaselineSection)
    hyper_grids: HyperGrids = Field(default_factory=HyperGrids)
    sweep: SweepSection = Field(default_factory=SweepSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)

    def scenario_config(self, seed: Optional[int] = None) -> ScenarioConfig:
        return ScenarioConfig(**self.scenario.model_dump(),
                              rng_seed=self.seed if seed is None else seed)

    def solver_options(self) -> SolverOptions:
        s = self.solver
        return SolverOptions(rel_gap=s.rel_gap, feas_tol=s.feas_tol, max_iters=s.max_iters,
                             method=s.algorithm)

    def baseline_options(self) -> BaselineOptions:
        b = self.baseline
        return BaselineOptions(tol=b.tol, rel_gap=b.rel_gap, max_iters=b.max_iters)

    def region(self) -> Region:
        return Region.centered_square(self.evaluation.region_side_m)


class ConfigFileError(ValueError):
    pass


def _line_of(node, loc) -> Optional[int]:
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = next((v for k, v in node.value if k.value == str(key)), None)
            if nxt is None:
                hit = next((k for k, _ in node.value if k.value == str(key)), None)
                return None if hit is None else hit.start_mark.line + 1
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) \
                and key < len(node.value):
            node = node.value[key]
        else:
            break
    return node.start_mark.line + 1 if node is not None else None


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration; errors name the field and line."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text) or {}
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigFileError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigFileError(f"{path}: top level must be a mapping")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = [k for k in err["loc"] if not str(k).startswith("function-")]
            line = _line_of(root, loc) if root is not None else None
            where = ".".join(str(k) for k in loc)
            msgs.append(f"{path}:{line if line else '?'}: {where}: {err['msg']}")
        raise ConfigFileError("\n".join(msgs)) from exc


def _out_dir(args, cfg: Optional[RunConfig] = None) -> Path:
    d = Path(args.out_dir if args.out_dir else (cfg.output_dir if cfg else "out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    scenario = cfg.scenario_config(seed)
    rng = make_rng(seed)
    truth, array, dictionary = draw_scenario(scenario, rng)
    meas = measure(truth, array, scenario.frequency_hz, scenario.snr_db, rng,
                   scenario.speed_of_sound_mps, seed=seed)
    out = _out_dir(args, cfg)
    write_scenario(out / "scenario.yaml", scenario, truth, array, dictionary)
    write_measurements(out / "measurements.yaml", meas, dictionary)
    print(f"wrote {out / 'scenario.yaml'} and {out / 'measurements.yaml'} ({len(meas)} sensors)")
    return EXIT_OK


def _estimation_setup(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    meas, dictionary = read_measurements(args.measurements)
    method = args.method or cfg.estimation.method
    K = args.phase_grid or cfg.estimation.phase_grid
    s = cfg.solver
    opts = SolverOptions(rel_gap=args.rel_gap or s.rel_gap, feas_tol=args.feas_tol or s.feas_tol,
                         max_iters=args.max_iters or s.max_iters,
                         method=args.solver or s.algorithm)
    b = cfg.baseline
    bopts = BaselineOptions(tol=args.tol or b.tol, rel_gap=args.rel_gap or b.rel_gap,
                            max_iters=args.max_iters or b.max_iters)
    est = ev.make_estimator(method, K, opts, bopts)
    folds = args.folds or cfg.estimation.folds
    return cfg, meas, dictionary, method, est, folds


def _given_hyper(args, cfg, method) -> Optional[dict]:
    e = cfg.estimation
    if method == "ot":
        g = args.gamma if args.gamma is not None else e.gamma
        h = args.eta if args.eta is not None else e.eta
        return {"gamma": g, "eta": h} if g is not None and h is not None else None
    lam = args.lam if args.lam is not None else e.lambda_
    return {"lambda": lam} if lam is not None else None


def cmd_estimate(args) -> int:
    cfg, meas, dictionary, method, est, folds = _estimation_setup(args)
    hyper = _given_hyper(args, cfg, method)
    if hyper is None:
        grid = cfg.hyper_grids.as_candidates()[method]
        hyper = ev.cross_validate(est, meas, dictionary, grid, folds)
        print(f"cross-validated hyperparameters: {hyper}")
    coeffs = est(meas, dictionary, hyper)
    extra = {}
    if method == "ot" and est.last_solution is not None:
        d = est.last_solution.diagnostics
        extra["solver"] = {"objective": float(est.last_solution.objective),
                           "gap": float(d.gap), "iterations": int(d.iterations),
                           "runtime_s": float(d.runtime_s)}
    truth = None
    if args.scenario:
        _, truth, _, _ = read_scenario(args.scenario)
        extra["nmse"] = ev.nmse(coeffs, dictionary, truth, cfg.region(),
                                tuple(cfg.evaluation.resolution))
        print(f"NMSE {extra['nmse']:.6g}")
    out = _out_dir(args, cfg)
    path = out / f"estimate_{method}.yaml"
    write_estimate(path, method, hyper, coeffs.values, dictionary, extra)
    print(f"wrote {path}")
    if args.render:
        region = cfg.region()
        res = (args.render_resolution, args.render_resolution)
        from .model import field_grid
        F = np.abs(field_grid(dictionary, coeffs, region, res))
        extent = (region.x_min, region.x_max, region.y_min, region.y_max)
        (out / f"field_{method}.svg").write_text(
            heatmap_svg(F, f"|p| estimate ({method})", markers=meas.array.positions_m,
                        extent=extent))
        (out / f"coefficients_{method}.svg").write_text(
            stem_svg(dictionary.directions_rad, np.abs(coeffs.values),
                     f"|alpha| estimate ({method})"))
        if truth is not None:
            T = np.abs(truth.field_at(region.grid_points(*res), dictionary.wavenumber_radpm))
            (out / "field_truth.svg").write_text(
                heatmap_svg(T.reshape(res), "|p| ground truth",
                            markers=meas.array.positions_m, extent=extent))
        print(f"rendered SVGs to {out}")
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg, meas, dictionary, method, est, folds = _estimation_setup(args)
    grid = cfg.hyper_grids.as_candidates()[method]
    errs = ev.cv_errors(est, meas, dictionary, grid, folds)
    best = ev.cross_validate(est, meas, dictionary, grid, folds) if len(grid) > 1 else grid[0]
    out = _out_dir(args, cfg)
    path = out / f"cv_{method}.yaml"
    body = {"method": method, "folds": folds, "best": {k: float(v) for k, v in best.items()},
            "candidates": [{**{k: float(v) for k, v in h.items()}, "cv_error": float(e)}
                           for h, e in zip(grid, errs)]}
    path.write_text(yaml.safe_dump(body, sort_keys=False))
    print(f"best {best}; wrote {path}")
    return EXIT_OK


def sweep_spec_from_config(cfg: RunConfig) -> ev.SweepSpec:
    sw = cfg.sweep
    values = tuple(int(v) for v in sw.values) if sw.param == "num_sensors" else tuple(sw.values)
    return ev.SweepSpec(
        param=sw.param, values=values, base=cfg.scenario_config(), methods=tuple(sw.methods),
        folds=cfg.estimation.folds, hyper_grids=cfg.hyper_grids.as_candidates(),
        phase_grid_K=cfg.estimation.phase_grid, solver_opts=cfg.solver_options(),
        baseline_opts=cfg.baseline_options(), region=cfg.region(),
        resolution=tuple(cfg.evaluation.resolution))


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    spec = sweep_spec_from_config(cfg)
    trials = args.trials or cfg.sweep.trials
    reports, rows = ev.monte_carlo(spec, trials, cfg.seed, args.threads,
                                   progress=(lambda m: log.info(m)))
    out = _out_dir(args, cfg)
    (out / "sweep.csv").write_text(ev.rows_to_csv(rows, timing=args.timing))
    summary = ev.summarize(reports)
    (out / "sweep_summary.txt").write_text(summary + "\n")
    print(summary)
    print(f"wrote {out / 'sweep.csv'}")
    failed = [r for r in reports if r.error]
    return EXIT_SOLVER if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="soundfield-ot", description=__doc__.splitlines()[0] if
                                 __doc__ else None)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--threads", type=int, default=1)

    def method_flags(p):
        p.add_argument("measurements")
        p.add_argument("--config", default=None, help="run configuration (grids, solver)")
        p.add_argument("--method", choices=ev.METHODS, default=None)
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--phase-grid", type=int, default=None)
        p.add_argument("--rel-gap", type=float, default=None)
        p.add_argument("--feas-tol", type=float, default=None)
        p.add_argument("--max-iters", type=int, default=None)
        p.add_argument("--tol", type=float, default=None, help="Lasso stationarity tolerance")
        p.add_argument("--solver", choices=("colgen", "admm"), default=None)
        p.add_argument("--folds", type=int, default=None)

    p = sub.add_parser("simulate", help="draw a scenario and its measurements")
    p.add_argument("config")
    shared(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="estimate plane-wave coefficients")
    method_flags(p)
    p.add_argument("--scenario", default=None, help="scenario file, enables NMSE")
    p.add_argument("--render", action="store_true", help="write SVG heatmaps")
    p.add_argument("--render-resolution", type=int, default=80)
    shared(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("cv", help="cross-validate hyperparameters")
    method_flags(p)
    shared(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="Monte Carlo sweep to CSV")
    p.add_argument("config")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--timing", action="store_true", help="record wall_ms (breaks byte-identity)")
    shared(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigFileError, ev.ConfigError, FileFormatError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DataError, ev.TrialError, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
