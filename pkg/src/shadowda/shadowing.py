"""Shadowing solvers: orbit refinement driven by the model mismatch.

Both solvers iterate on a full trajectory u and move it toward the set of
(pseudo-)orbits by reducing the mismatch g(u), starting from the completed
observations.  They differ in how the underdetermined linear update is
regularized:

Newton shadowing
    delta = -J^T (J J^T)^{-1} g, the minimum 2-norm solution of the Newton
    equation J delta = -g.  Appropriate when the data are already close to an
    orbit of the deterministic map.

Weak-constraint shadowing
    delta = -Co J^T (J Co J^T + alpha Cm)^{-1} g with Co the completed
    observation covariance and Cm the model-error covariance.  This is the
    minimizer of 0.5 ||J delta + g||^2_{Cm} + 0.5 alpha ||delta||^2_{Co}, so
    alpha trades mismatch reduction against distance traveled from the data.
    With alpha = 0 and Co = I it reduces to the Newton update.

The scale alpha is chosen per iteration by a discrepancy argument: the
observation-space motion of the step, ||H delta||_{Co}, must not exceed rho
times the remaining observation budget sqrt(M) - ||H(u) - y||_{Co}.  By the
triangle inequality the post-update data mismatch then stays below sqrt(M),
which keeps the iterates statistically consistent with the data while the
mismatch shrinks.  The iteration stops as soon as the normalized squared data
mismatch exceeds the threshold r, i.e. when the analysis has used up the
noise level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, SolverError
from .linalg import BlockCovariance, ShiftedGramSolver, weighted_sq_norm
from .mismatch import cost_model, cost_obs, mismatch, mismatch_jacobian
from .models import ModelSpec
from .obs import CompletedObservations, ObservationSet
from . import results
from .results import AssimilationResult, trace_record

__all__ = ["ShadowingConfig", "newton_shadow", "lm_step", "select_alpha",
           "weak_shadow", "ALPHA_CAP"]

# largest candidate regularization weight tried by the discrepancy search
ALPHA_CAP = 2.0 ** 40


@dataclass(frozen=True)
class ShadowingConfig:
    """Tuning knobs shared by the shadowing solvers.

    ``alpha=None`` selects the adaptive discrepancy search; a fixed
    non-negative value disables it.  ``r`` is the stopping threshold on
    ||H(u) - y||^2_{Co} / M and ``rho`` the fraction of the remaining
    observation budget a single step may consume.
    """

    rho: float = 0.8
    r: float = 0.99
    alpha: float | None = None
    max_iterations: int = 50
    newton_tolerance: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.r <= 0.0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.alpha is not None and self.alpha < 0.0:
            raise ValueError(f"fixed alpha must be non-negative, got {self.alpha}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")


def newton_shadow(model: ModelSpec, y: np.ndarray,
                  cfg: ShadowingConfig | None = None) -> AssimilationResult:
    """Refine the full-dimension pseudo-trajectory ``y`` into a near-orbit.

    Iterates minimum-norm Newton updates until ||g(u)||_inf drops below
    ``cfg.newton_tolerance`` or ``cfg.max_iterations`` is reached.  Raises
    :class:`DivergenceError` if the mismatch norm grows three iterations in a
    row (no nearby orbit; typical for data from the stochastic model).
    """
    cfg = cfg or ShadowingConfig()
    u = np.array(y, dtype=float)
    eye = BlockCovariance(np.eye(model.dim))
    g = mismatch(model, u)
    g_norm = float(np.abs(g).max())
    trace: list[dict] = []
    alphas: list[float] = []
    iterations = 0
    growth_streak = 0
    while True:
        if g_norm < cfg.newton_tolerance:
            termination = results.CONVERGED
            break
        if iterations >= cfg.max_iterations:
            termination = results.MAX_ITERATIONS
            break
        jac = mismatch_jacobian(model, u)
        try:
            delta = ShiftedGramSolver(jac, eye, eye).solve(0.0, g)
        except SolverError as exc:
            exc.trace = trace
            raise
        u = u + delta
        g = mismatch(model, u)
        new_norm = float(np.abs(g).max())
        iterations += 1
        alphas.append(0.0)
        trace.append(trace_record(iterations, 0.0, None, cost_model(model, u),
                                  float(np.linalg.norm(delta))))
        if new_norm > g_norm:
            growth_streak += 1
            if growth_streak >= 3:
                err = DivergenceError(
                    f"mismatch norm grew {growth_streak} consecutive iterations "
                    f"(now {new_norm:.3g}); no shadowing orbit nearby")
                err.trace = trace
                raise err
        else:
            growth_streak = 0
        g_norm = new_norm
    return AssimilationResult("newton", u, iterations, termination,
                              float("nan"), cost_model(model, u), alphas, trace)


def lm_step(model: ModelSpec, u: np.ndarray, completed: CompletedObservations,
            alpha: float) -> np.ndarray:
    """One regularized update -Co J^T (J Co J^T + alpha Cm)^{-1} g(u)."""
    jac = mismatch_jacobian(model, u)
    solver = ShiftedGramSolver(jac, completed.cov, model.cm)
    return solver.solve(alpha, mismatch(model, u))


def _alpha_candidates(start: float):
    """Yield 0, 1, 2, 4, ... from ``start`` (a previous candidate) upward."""
    if start <= 0.0:
        yield 0.0
        alpha = 1.0
    else:
        alpha = start
    while alpha <= ALPHA_CAP:
        yield alpha
        alpha *= 2.0


def _step_data_norm(delta: np.ndarray, obs: ObservationSet) -> float:
    """Observation-space motion ||H delta||_{Co} of a trajectory update."""
    return float(np.sqrt(weighted_sq_norm(delta[obs.steps][:, obs.components],
                                          obs.cov)))


def _search_alpha(solver: ShiftedGramSolver, g: np.ndarray, budget: float,
                  obs: ObservationSet, rho: float, alpha_prev: float):
    """Walk the candidate grid; return (alpha, delta) or None if infeasible."""
    if budget <= 0.0:
        return None
    for alpha in _alpha_candidates(alpha_prev):
        delta = solver.solve(alpha, g)
        if _step_data_norm(delta, obs) <= rho * budget:
            return alpha, delta
    return None


def select_alpha(model: ModelSpec, u: np.ndarray, obs: ObservationSet,
                 completed: CompletedObservations, cfg: ShadowingConfig,
                 alpha_prev: float = 0.0):
    """Discrepancy-principle choice of the regularization weight at ``u``.

    Returns the first (alpha, delta) on the grid {0} U {2^nu} starting at
    ``alpha_prev`` whose step satisfies
    ``||H delta||_{Co} <= rho (sqrt(M) - ||H(u) - y||_{Co})``, or None when
    the budget is non-positive or no candidate up to 2^40 qualifies.
    """
    jac = mismatch_jacobian(model, u)
    solver = ShiftedGramSolver(jac, completed.cov, model.cm)
    budget = np.sqrt(obs.count) - np.sqrt(weighted_sq_norm(obs.residual(u), obs.cov))
    return _search_alpha(solver, mismatch(model, u), budget, obs,
                         cfg.rho, alpha_prev)


def weak_shadow(model: ModelSpec, obs: ObservationSet,
                completed: CompletedObservations,
                cfg: ShadowingConfig | None = None) -> AssimilationResult:
    """Weak-constraint shadowing from the completed observations.

    Before each update the normalized squared data mismatch
    ||H(u) - y||^2_{Co} / M is tested against ``cfg.r``; the analysis is the
    first iterate past the threshold.  In adaptive mode the regularization
    weight is re-selected every iteration and never decreases; a fixed
    ``cfg.alpha`` skips the search but keeps the stopping rule.
    """
    cfg = cfg or ShadowingConfig()
    u = np.array(completed.values, dtype=float)
    m_count = obs.count
    alpha_prev = 0.0
    iterations = 0
    alphas: list[float] = []
    trace: list[dict] = []
    while True:
        data_sq = weighted_sq_norm(obs.residual(u), obs.cov)
        if data_sq / m_count > cfg.r:
            termination = results.DATA_MISMATCH_BOUND
            break
        if iterations >= cfg.max_iterations:
            termination = results.MAX_ITERATIONS
            break
        g = mismatch(model, u)
        jac = mismatch_jacobian(model, u)
        solver = ShiftedGramSolver(jac, completed.cov, model.cm)
        if cfg.alpha is None:
            budget = np.sqrt(m_count) - np.sqrt(data_sq)
            found = _search_alpha(solver, g, budget, obs, cfg.rho,
                                  alpha_prev)
            if found is None:
                termination = results.ALPHA_INFEASIBLE
                break
            alpha, delta = found
            alpha_prev = alpha
        else:
            alpha = cfg.alpha
            delta = solver.solve(alpha, g)
        u = u + delta
        iterations += 1
        alphas.append(alpha)
        trace.append(trace_record(
            iterations, alpha, cost_obs(u, obs), cost_model(model, u),
            _step_data_norm(delta, obs)))
    return AssimilationResult("shadow", u, iterations, termination,
                              cost_obs(u, obs), cost_model(model, u),
                              alphas, trace)
