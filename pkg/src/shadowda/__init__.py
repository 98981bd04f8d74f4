"""Weak-constraint shadowing data assimilation for stochastic dynamical systems.

The package refines full trajectories of noisy, partially observed dynamical
systems: a regularized shadowing iteration started at the (completed)
observations, a classical Newton shadowing refinement, and a weak-constraint
variational baseline, together with the benchmark models and the twin
experiment harness used to compare them.
"""

from .errors import (BlowUpError, ConfigError, DampingOverflowError,
                     DivergenceError, FactorizationError, SolverError)
from .harness import (REFERENCE_LONGRUN, REFERENCE_TABLES, EnsembleSummary,
                      ExperimentConfig, HistogramData, LongRunResult,
                      MethodSpec, MethodSummary, ReplicateResult,
                      draw_twin_data, dw_experiment, ensemble_histograms,
                      ensemble_report, experiment_climatology,
                      histogram_series, json_line, l63_experiment,
                      l96_experiment, long_run_unobserved, longrun_report,
                      mismatch_histograms, run_ensemble, run_method,
                      run_replicate, summarize, table_experiment,
                      write_histogram_csv, write_moments_csv,
                      write_replicates_csv, write_summary_csv,
                      write_trace_jsonl)
from .config import load_config, parse_config, save_config, serialize_config
from .linalg import (BlockBidiagonalMatrix, BlockCovariance, SteppedCovariance,
                     gaussian_sample, solve_shifted_gram, weighted_sq_norm)
from .mismatch import (cost_model, cost_obs, cost_obs_completed, mismatch,
                       mismatch_jacobian, whitened_data_mismatch,
                       whitened_model_mismatch)
from .models import ModelSpec, available_models, make_model, register_model
from .obs import (Climatology, CompletedObservations, ObservationSet,
                  climatology, climatology_cached, complete, obs_from_csv,
                  obs_from_json, obs_to_csv, obs_to_json, observe,
                  observed_steps, trajectory_from_csv, trajectory_to_csv)
from .results import AssimilationResult, trace_record
from .shadowing import (ShadowingConfig, lm_step, newton_shadow, select_alpha,
                        weak_shadow)
from .w4dvar import (W4DVarConfig, cost_gradient, gauss_newton_step,
                     initial_trajectory, stationarity_residual, w4dvar_solve)

__version__ = "0.1.0"

__all__ = [
    "AssimilationResult", "BlockBidiagonalMatrix", "BlockCovariance",
    "BlowUpError", "Climatology", "CompletedObservations", "ConfigError",
    "DampingOverflowError", "DivergenceError", "EnsembleSummary",
    "ExperimentConfig", "FactorizationError", "HistogramData",
    "LongRunResult", "MethodSpec", "MethodSummary", "ModelSpec",
    "ObservationSet", "REFERENCE_LONGRUN", "REFERENCE_TABLES",
    "ReplicateResult", "ShadowingConfig", "SolverError", "SteppedCovariance",
    "W4DVarConfig", "available_models", "climatology", "climatology_cached",
    "complete", "cost_gradient", "cost_model", "cost_obs",
    "cost_obs_completed", "draw_twin_data", "dw_experiment",
    "ensemble_histograms", "ensemble_report", "experiment_climatology",
    "gauss_newton_step", "gaussian_sample", "histogram_series",
    "initial_trajectory", "json_line", "l63_experiment", "l96_experiment",
    "lm_step", "load_config", "long_run_unobserved", "longrun_report",
    "make_model", "mismatch", "mismatch_histograms", "mismatch_jacobian",
    "newton_shadow", "obs_from_csv", "obs_from_json", "obs_to_csv",
    "obs_to_json", "observe", "observed_steps", "parse_config",
    "register_model", "run_ensemble", "run_method", "run_replicate",
    "save_config", "select_alpha", "serialize_config", "solve_shifted_gram",
    "stationarity_residual", "summarize", "table_experiment", "trace_record",
    "trajectory_from_csv", "trajectory_to_csv", "w4dvar_solve", "weak_shadow",
    "weighted_sq_norm", "whitened_data_mismatch", "whitened_model_mismatch",
    "write_histogram_csv", "write_moments_csv", "write_replicates_csv",
    "write_summary_csv", "write_trace_jsonl", "__version__",
]
