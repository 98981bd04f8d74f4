"""Result container shared by the assimilation solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# termination reasons
DATA_MISMATCH_BOUND = "data_mismatch_bound"
MAX_ITERATIONS = "max_iterations"
CONVERGED = "converged"
ALPHA_INFEASIBLE = "alpha_infeasible"

TERMINATIONS = (DATA_MISMATCH_BOUND, MAX_ITERATIONS, CONVERGED, ALPHA_INFEASIBLE)


@dataclass
class AssimilationResult:
    """Analysis trajectory plus solver diagnostics.

    ``trace`` holds one record per applied update with keys
    (iteration, alpha, cost_obs, cost_model, step_norm); ``alpha`` is the
    regularization weight for the shadowing solvers and the damping factor for
    the variational solver.  ``alpha_history`` repeats the alpha column and has
    length ``iterations``.
    """

    method: str
    analysis: np.ndarray
    iterations: int
    termination: str
    cost_obs: float
    cost_model: float
    alpha_history: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination reason {self.termination!r}")
        if len(self.alpha_history) != self.iterations:
            raise ValueError("alpha_history length must equal the iteration count")


def trace_record(iteration: int, alpha, cost_obs: float, cost_model: float,
                 step_norm: float) -> dict:
    """Uniform per-update trace record used by every solver."""
    return {
        "iteration": int(iteration),
        "alpha": None if alpha is None else float(alpha),
        "cost_obs": None if cost_obs is None else float(cost_obs),
        "cost_model": float(cost_model),
        "step_norm": float(step_norm),
    }
