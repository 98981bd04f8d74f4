"""Weak-constraint variational assimilation (the comparison baseline).

Minimizes J(u) = J_o(u) + J_m(u)
             = 0.5 ||H(u) - y||^2_{Co} + 0.5 ||g(u)||^2_{Cm}
over the full trajectory with a Levenberg-Marquardt iteration on the stacked
whitened residual [Cm^{-1/2} g(u); Co^{-1/2}(H(u) - y)].  The Gauss-Newton
matrix of this residual is block tridiagonal, so each damped step is one
banded Cholesky solve.  Damping follows the classical multiplicative
schedule (x10 on reject, /10 on accept) with the damping term scaled by the
Gauss-Newton diagonal.

Termination follows the cost: the solver stops once a trial step changes
J by less than ``tolerance`` relative to the initial cost (as damping grows
the trial steps shrink, so this also exits cleanly at a minimizer).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DampingOverflowError
from .linalg import blocks_to_banded, _banded_cholesky, _banded_solve
from .mismatch import cost_model, cost_obs, mismatch
from .models import ModelSpec
from .obs import Climatology, CompletedObservations, ObservationSet
from . import results
from .results import AssimilationResult, trace_record

__all__ = ["W4DVarConfig", "w4dvar_solve", "stationarity_residual",
           "gauss_newton_step", "initial_trajectory", "cost_gradient"]


@dataclass(frozen=True)
class W4DVarConfig:
    init: str = "observations"  # "observations" | "background"
    tolerance: float = 1e-6
    max_iterations: int = 500
    initial_damping: float = 1e-3
    damping_cap: float = 1e12

    def __post_init__(self):
        if self.init not in ("observations", "background"):
            raise ValueError(f"init must be 'observations' or 'background', "
                             f"got {self.init!r}")
        if self.tolerance <= 0 or self.initial_damping <= 0:
            raise ValueError("tolerance and initial_damping must be positive")


def initial_trajectory(kind: str, completed: CompletedObservations,
                       clim: Climatology | None = None) -> np.ndarray:
    """Resolve an initialization name to a trajectory array.

    ``observations`` starts from the completed observations; ``background``
    from the climatological mean repeated at every step.
    """
    if kind == "observations":
        return np.array(completed.values, dtype=float)
    if kind == "background":
        if clim is None:
            raise ValueError("background initialization requires a climatology")
        return np.tile(clim.mean, (completed.values.shape[0], 1))
    raise ValueError(f"unknown initialization {kind!r}")


def _obs_precision(model: ModelSpec, obs: ObservationSet) -> np.ndarray:
    """H^T Co^{-1} H for a single step, padded to (m, m)."""
    full = np.zeros((model.dim, model.dim))
    full[np.ix_(obs.components, obs.components)] = obs.cov.inv
    return full


def cost_gradient(model: ModelSpec, u: np.ndarray, obs: ObservationSet) -> np.ndarray:
    """Gradient of J_o + J_m with respect to the trajectory, shape (N+1, m)."""
    u = np.asarray(u, dtype=float)
    lower = -model.jacobian(u[:-1])                      # (N, m, m)
    w = mismatch(model, u) @ model.cm.inv                # Cm^{-1} g, (N, m)
    grad = np.zeros_like(u)
    grad[:-1] = (lower.transpose(0, 2, 1) @ w[:, :, None])[:, :, 0]
    grad[1:] += w
    r = obs.residual(u) @ obs.cov.inv
    grad[np.ix_(obs.steps, obs.components)] += r
    return grad


class _Linearization:
    """Gauss-Newton system of the stacked residual at a fixed trajectory."""

    def __init__(self, model: ModelSpec, u: np.ndarray, obs: ObservationSet):
        n_states, m = u.shape
        lower = -model.jacobian(u[:-1])
        prec = model.cm.inv
        t = lower.transpose(0, 2, 1) @ prec              # L_n^T Cm^{-1}
        diag = np.zeros((n_states, m, m))
        diag[:-1] += t @ lower
        diag[1:] += prec
        obs_prec = _obs_precision(model, obs)
        diag[obs.steps] += obs_prec
        sub = prec @ lower                               # block (n+1, n)
        self._diag_scale = diag.diagonal(axis1=1, axis2=2).copy()  # (K, m)
        self._base_ab = blocks_to_banded(diag, sub)
        self._m = m
        self._k = n_states
        self.grad = cost_gradient(model, u, obs)

    def step(self, damping: float) -> np.ndarray:
        """Solve (A + damping * diag(A)) delta = -grad."""
        ab = self._base_ab.copy()
        ab.reshape(2 * self._m, self._k, self._m)[0] += damping * self._diag_scale
        chol = _banded_cholesky(ab, self._m)
        x = _banded_solve(chol, -self.grad.reshape(-1))
        return x.reshape(self.grad.shape)


def gauss_newton_step(model: ModelSpec, u: np.ndarray, obs: ObservationSet,
                      damping: float = 0.0) -> np.ndarray:
    """One (damped) Gauss-Newton trial step at ``u``; does not update costs."""
    return _Linearization(model, np.asarray(u, dtype=float), obs).step(damping)


def stationarity_residual(model: ModelSpec, u: np.ndarray,
                          obs: ObservationSet) -> float:
    """Sup-norm of the cost gradient; ~0 at a minimizer of J_o + J_m."""
    return float(np.abs(cost_gradient(model, u, obs)).max())


def w4dvar_solve(model: ModelSpec, obs: ObservationSet, init: np.ndarray,
                 cfg: W4DVarConfig | None = None) -> AssimilationResult:
    """Run the Levenberg-Marquardt minimization from the trajectory ``init``.

    Returns the analysis with per-accepted-step trace records whose ``alpha``
    column holds the damping factor.  Raises
    :class:`DampingOverflowError` if damping passes ``cfg.damping_cap``
    without producing a usable trial step.
    """
    cfg = cfg or W4DVarConfig()
    u = np.array(init, dtype=float)
    cost = cost_obs(u, obs) + cost_model(model, u)
    cost0 = cost
    if cost0 == 0.0:
        return AssimilationResult("w4dvar", u, 0, results.CONVERGED,
                                  cost_obs(u, obs), cost_model(model, u), [], [])
    damping = cfg.initial_damping
    iterations = 0
    alphas: list[float] = []
    trace: list[dict] = []
    termination = results.MAX_ITERATIONS
    done = False
    while not done and iterations < cfg.max_iterations:
        lin = _Linearization(model, u, obs)
        while True:
            delta = lin.step(damping)
            trial = u + delta
            jo = cost_obs(trial, obs)
            jm = cost_model(model, trial)
            new_cost = jo + jm
            if np.isfinite(new_cost) and new_cost <= cost:
                small = (cost - new_cost) / cost0 < cfg.tolerance
                u = trial
                cost = new_cost
                iterations += 1
                alphas.append(damping)
                trace.append(trace_record(iterations, damping, jo, jm,
                                          float(np.linalg.norm(delta))))
                damping = max(damping / 10.0, 1e-12)
                if small:
                    termination = results.CONVERGED
                    done = True
                break
            if np.isfinite(new_cost) and (new_cost - cost) / cost0 < cfg.tolerance:
                # flat to within tolerance: at a minimizer, stop without the step
                termination = results.CONVERGED
                done = True
                break
            damping *= 10.0
            if damping > cfg.damping_cap:
                err = DampingOverflowError(
                    f"no cost decrease up to damping {damping:.3g}")
                err.trace = trace
                raise err
    return AssimilationResult("w4dvar", u, iterations, termination,
                              cost_obs(u, obs), cost_model(model, u),
                              alphas, trace)
