"""Moment-based covariance-matching characterization of diffuse sources.

Estimates the mean location, dispersion, and power of a spatially
distributed source seen by a (possibly irregular) linear array, without
assuming a distribution shape, plus simulators, parametric ML baselines,
and Monte-Carlo sweep harnesses for SAR-tomography scenarios.
"""

__version__ = "0.1.0"

from .bench import (EstimatorEntry, PRESETS, SweepConfig, SweepResult, preset_fig2,
                    preset_fig3, preset_fig4, rmse, run_sweep, write_metric_csv)
from .covmodel import (LinearParams, SourceParams, apply_steering_transform,
                       covariance_exact, covariance_moment, form_matrix_exact,
                       form_matrix_moment, selection_matrix)
from .estimator import (ConcentratedCriterion, EstimationResult, EstimatorConfig,
                        concentrated_step, estimate, estimate_multi)
from .geometry import (ArrayGeometry, d_max, displacement_powers, geometry_from_json,
                       height_to_omega, omega_to_height, steering, uniform_geometry,
                       vertical_resolution)
from .mle import MlConfig, ml_estimate, negative_log_likelihood
from .shapes import ShapeSpec, central_moments, charfn, sample, shape_from_json
from .sim import Scenario, covariance_root, draw_snapshots, scenario_from_height, trial_seed
from .stats import (SnapshotSet, WeightSpec, build_weight, read_csnp,
                    sample_covariance, write_csnp)

__all__ = [
    "ArrayGeometry", "ConcentratedCriterion", "EstimationResult", "EstimatorConfig",
    "EstimatorEntry", "LinearParams", "MlConfig", "PRESETS", "Scenario",
    "ShapeSpec", "SnapshotSet", "SourceParams", "SweepConfig", "SweepResult",
    "WeightSpec", "apply_steering_transform", "build_weight", "central_moments",
    "charfn", "concentrated_step", "covariance_exact", "covariance_moment",
    "covariance_root", "d_max", "displacement_powers", "draw_snapshots", "estimate",
    "estimate_multi", "form_matrix_exact", "form_matrix_moment", "geometry_from_json",
    "height_to_omega", "ml_estimate", "negative_log_likelihood", "omega_to_height",
    "preset_fig2", "preset_fig3", "preset_fig4", "read_csnp", "rmse", "run_sweep",
    "sample", "sample_covariance", "scenario_from_height", "selection_matrix",
    "shape_from_json", "steering", "trial_seed", "uniform_geometry",
    "vertical_resolution", "write_csnp", "write_metric_csv",
]
