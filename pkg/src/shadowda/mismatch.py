"""Model-mismatch functional, its Jacobian, and the two cost terms.

For a trajectory u = (u_0, ..., u_N) the mismatch stacks the one-step defects

    g_n(u) = u_{n+1} - F_n(u_n),    n = 0..N-1,

so g(u) = 0 exactly when u is an orbit of the deterministic map.  The Jacobian
of g is block bidiagonal with rows [-DF_n, I] at block columns (n, n+1), i.e.
an mN x m(N+1) matrix; it is returned in the structured form the banded
solvers consume.
"""

from __future__ import annotations

import numpy as np

from .linalg import BlockBidiagonalMatrix, weighted_sq_norm
from .models import ModelSpec
from .obs import CompletedObservations, ObservationSet

__all__ = [
    "mismatch",
    "mismatch_jacobian",
    "cost_obs",
    "cost_model",
    "cost_obs_completed",
    "whitened_data_mismatch",
    "whitened_model_mismatch",
]


def mismatch(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    """One-step defects of the trajectory ``u`` (N+1, m); shape (N, m)."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] < 2 or u.shape[1] != model.dim:
        raise ValueError(f"expected trajectory of shape (N+1, {model.dim}) with N >= 1, "
                         f"got {u.shape}")
    return u[1:] - model.step_deterministic(u[:-1])


def mismatch_jacobian(model: ModelSpec, u: np.ndarray) -> BlockBidiagonalMatrix:
    """Jacobian of :func:`mismatch` at ``u`` as a block-bidiagonal operator."""
    u = np.asarray(u, dtype=float)
    return BlockBidiagonalMatrix(-model.jacobian(u[:-1]))


def cost_obs(u: np.ndarray, obs: ObservationSet) -> float:
    """Data term J_o = 0.5 ||H(u) - y||^2 weighted by the observation covariance."""
    if obs.cov is None:
        raise ValueError("observations carry no covariance")
    return 0.5 * weighted_sq_norm(obs.residual(u), obs.cov)


def cost_obs_completed(u: np.ndarray, completed: CompletedObservations) -> float:
    """Data term against the completed observations (all steps, all components)."""
    dev = np.asarray(u, dtype=float) - completed.values
    return 0.5 * weighted_sq_norm(dev, completed.cov)


def cost_model(model: ModelSpec, u: np.ndarray) -> float:
    """Model term J_m = 0.5 ||g(u)||^2 weighted by the model-error covariance."""
    return 0.5 * weighted_sq_norm(mismatch(model, u), model.cm)


def whitened_data_mismatch(u: np.ndarray, obs: ObservationSet) -> np.ndarray:
    """C_o^{-1/2}(H(u) - y), shape (observed steps, d); N(0,1) for perfect data."""
    if obs.cov is None:
        raise ValueError("observations carry no covariance")
    return obs.cov.whiten(obs.residual(u))


def whitened_model_mismatch(model: ModelSpec, u: np.ndarray) -> np.ndarray:
    """C_m^{-1/2} g(u), shape (N, m); N(0,1) when u is a stochastic truth."""
    return model.cm.whiten(mismatch(model, u))
