"""Sound-field reconstruction from mis-calibrated microphone arrays.

Complex plane-wave coefficients are lifted to non-negative measures on the
phase circle; per-sensor phase errors then become transport of mass, and the
field estimate is the first moment of an optimal-transport barycenter fitted
to the sensor data. Tikhonov, Lasso and LAD-Lasso estimators are included for
comparison.
"""
from .baselines import BaselineOptions, lad_lasso, lasso, tikhonov
from .lift import (DiscreteMeasure, GroundCost, PhaseGrid, VectorMeasure, first_moment,
                   lift_coefficient, lift_vector, make_ground_cost, make_phase_grid, total_mass)
from .model import (CoefficientVector, PlaneWaveDictionary, Region, SensorArray, field_at,
                    field_pressure, steering_vector)
from .ot_solver import (BarycenterProblem, BarycenterSolution, ConvergenceError, SolverOptions,
                        TransportPlan, assemble_problem, estimate_ot, extract_coefficients,
                        ot_barycenter, ot_distance, solve_barycenter)
from .simulate import GroundTruth, MeasurementSet, ScenarioConfig, simulate

__version__ = "0.1.0"

__all__ = [
    "BaselineOptions", "lad_lasso", "lasso", "tikhonov",
    "DiscreteMeasure", "GroundCost", "PhaseGrid", "VectorMeasure", "first_moment",
    "lift_coefficient", "lift_vector", "make_ground_cost", "make_phase_grid", "total_mass",
    "CoefficientVector", "PlaneWaveDictionary", "Region", "SensorArray", "field_at",
    "field_pressure", "steering_vector",
    "BarycenterProblem", "BarycenterSolution", "ConvergenceError", "SolverOptions",
    "TransportPlan", "assemble_problem", "estimate_ot", "extract_coefficients",
    "ot_barycenter", "ot_distance", "solve_barycenter",
    "GroundTruth", "MeasurementSet", "ScenarioConfig", "simulate",
]
