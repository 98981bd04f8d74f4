"""Benchmark dynamical systems as explicit stochastic one-step maps.

Each model advances states with a forward-Euler map ``x_{n+1} = F(x_n)`` plus,
in the stochastic variant, additive Gaussian noise with per-step covariance
``cm`` (the Euler-Maruyama discretization of the underlying SDE).  Three
systems are built in:

``dw``
    Scalar double-well gradient flow, drift x(1 - x^2), step 0.05.  Stable
    equilibria at +-1, unstable at 0; with unit noise the state hops between
    the wells.
``l63``
    Lorenz's three-variable convection system (parameters 10, 28, 8/3),
    step 0.005.
``l96``
    Lorenz's cyclic 15-site advection lattice with forcing 8, step 0.005.
    The noise couples neighboring sites: cm = tau sigma_m^2 W with W having
    0.5 on the diagonal and 0.25 on the two cyclic off-diagonals.

Steps and Jacobians accept batched states (leading axes are broadcast), which
keeps long climatology runs and ensemble tests cheap.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import BlowUpError, ConfigError
from .linalg import BlockCovariance

__all__ = ["ModelSpec", "make_model", "available_models", "register_model"]


class ModelSpec:
    """A named one-step model: deterministic map, Jacobian, and noise level.

    Attributes
    ----------
    name : str
        Canonical registry name.
    dim : int
        State dimension m.
    tau : float
        Time step of the map.
    sigma_m : float
        Model noise intensity; the per-step covariance is ``cm``.
    cm : BlockCovariance
        Per-step model-error covariance (m, m).
    ref_init : ndarray
        Fixed reference state that spin-up runs start from.
    """

    def __init__(self, name: str, dim: int, tau: float, sigma_m: float,
                 cm: BlockCovariance, ref_init: np.ndarray,
                 step: Callable[[np.ndarray], np.ndarray],
                 jac: Callable[[np.ndarray], np.ndarray]):
        self.name = name
        self.dim = dim
        self.tau = tau
        self.sigma_m = sigma_m
        self.cm = cm
        self.ref_init = np.asarray(ref_init, dtype=float)
        self._step = step
        self._jac = jac

    def step_deterministic(self, x: np.ndarray, n: int = 0) -> np.ndarray:
        """Apply the deterministic map F to ``x`` (batched over leading axes)."""
        return self._step(np.asarray(x, dtype=float))

    def step_stochastic(self, x: np.ndarray, rng: np.random.Generator,
                        n: int = 0) -> np.ndarray:
        """Apply F and add one draw of N(0, cm) per state in the batch."""
        x = np.asarray(x, dtype=float)
        noise = rng.standard_normal(x.shape) @ self.cm.sqrt
        return self._step(x) + noise

    def jacobian(self, x: np.ndarray, n: int = 0) -> np.ndarray:
        """Jacobian dF/dx at ``x``; shape (..., m, m) for batched input."""
        return self._jac(np.asarray(x, dtype=float))

    def generate_truth(self, rng: np.random.Generator, n_steps: int,
                       spinup_time: float = 5.0) -> np.ndarray:
        """Spin up the stochastic map, then record n_steps+1 consecutive states.

        The spin-up runs ceil(spinup_time / tau) stochastic steps from
        ``ref_init`` and is discarded; the returned trajectory has shape
        (n_steps + 1, dim).  Raises BlowUpError if the state leaves the
        representable range.
        """
        if n_steps < 0:
            raise ValueError("n_steps must be non-negative")
        x = self.ref_init.copy()
        n_spin = int(np.ceil(spinup_time / self.tau)) if spinup_time > 0 else 0
        for _ in range(n_spin):
            x = self.step_stochastic(x, rng)
        traj = np.empty((n_steps + 1, self.dim))
        traj[0] = x
        for n in range(n_steps):
            x = self.step_stochastic(x, rng, n)
            traj[n + 1] = x
        if not np.all(np.isfinite(traj)):
            bad = int(np.argmax(~np.all(np.isfinite(traj), axis=1)))
            raise BlowUpError(step_index=bad)
        return traj

    def orbit(self, x0: np.ndarray, n_steps: int) -> np.ndarray:
        """Deterministic trajectory of n_steps+1 states starting at ``x0``."""
        x = np.asarray(x0, dtype=float).reshape(self.dim)
        traj = np.empty((n_steps + 1, self.dim))
        traj[0] = x
        for n in range(n_steps):
            x = self._step(x)
            traj[n + 1] = x
        return traj

    def __repr__(self) -> str:  # pragma: no cover
        return (f"ModelSpec({self.name!r}, dim={self.dim}, tau={self.tau}, "
                f"sigma_m={self.sigma_m:g})")


# ---------------------------------------------------------------------------
# double well

_DW_TAU = 0.05


def _dw_step(x):
    return x + _DW_TAU * x * (1.0 - x * x)


def _dw_jac(x):
    return (1.0 + _DW_TAU * (1.0 - 3.0 * x * x))[..., None]


def _make_dw(sigma_m: float | None) -> ModelSpec:
    sigma = 1.0 if sigma_m is None else float(sigma_m)
    cm = BlockCovariance([[_DW_TAU * sigma ** 2]])
    return ModelSpec("dw", 1, _DW_TAU, sigma, cm, np.array([1.0]),
                     _dw_step, _dw_jac)


# ---------------------------------------------------------------------------
# Lorenz 63

_L63_TAU = 0.005
_L63_SIGMA, _L63_RHO, _L63_BETA = 10.0, 28.0, 8.0 / 3.0


def _l63_step(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([
        x1 + _L63_TAU * _L63_SIGMA * (x2 - x1),
        x2 + _L63_TAU * (_L63_RHO * x1 - x2 - x1 * x3),
        x3 + _L63_TAU * (x1 * x2 - _L63_BETA * x3),
    ], axis=-1)


def _l63_jac(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    t = _L63_TAU
    jac = np.zeros(x.shape[:-1] + (3, 3))
    jac[..., 0, 0] = 1.0 - t * _L63_SIGMA
    jac[..., 0, 1] = t * _L63_SIGMA
    jac[..., 1, 0] = t * (_L63_RHO - x3)
    jac[..., 1, 1] = 1.0 - t
    jac[..., 1, 2] = -t * x1
    jac[..., 2, 0] = t * x2
    jac[..., 2, 1] = t * x1
    jac[..., 2, 2] = 1.0 - t * _L63_BETA
    return jac


def _make_l63(sigma_m: float | None) -> ModelSpec:
    # default reproduces per-step noise variance tau sigma_m^2 = 0.6
    sigma = np.sqrt(0.6 / _L63_TAU) if sigma_m is None else float(sigma_m)
    cm = BlockCovariance(_L63_TAU * sigma ** 2 * np.eye(3))
    return ModelSpec("l63", 3, _L63_TAU, sigma, cm, np.array([1.0, 1.0, 1.0]),
                     _l63_step, _l63_jac)


# ---------------------------------------------------------------------------
# Lorenz 96, cyclic with 15 sites

_L96_TAU = 0.005
_L96_DIM = 15
_L96_FORCING = 8.0


def _l96_step(x):
    xm1 = np.roll(x, 1, axis=-1)    # x_{l-1}
    xp1 = np.roll(x, -1, axis=-1)   # x_{l+1}
    xm2 = np.roll(x, 2, axis=-1)    # x_{l-2}
    return x + _L96_TAU * (xm1 * (xp1 - xm2) - x + _L96_FORCING)


def _l96_jac(x):
    m = _L96_DIM
    t = _L96_TAU
    idx = np.arange(m)
    jac = np.zeros(x.shape[:-1] + (m, m))
    jac[..., idx, idx] = 1.0 - t
    jac[..., idx, (idx - 1) % m] = t * (x[..., (idx + 1) % m] - x[..., (idx - 2) % m])
    jac[..., idx, (idx - 2) % m] = -t * x[..., (idx - 1) % m]
    jac[..., idx, (idx + 1) % m] = t * x[..., (idx - 1) % m]
    return jac


def _make_l96(sigma_m: float | None) -> ModelSpec:
    sigma = np.sqrt(20.0) if sigma_m is None else float(sigma_m)
    m = _L96_DIM
    eye = np.eye(m)
    coupling = 0.5 * eye + 0.25 * (np.roll(eye, 1, axis=1) + np.roll(eye, -1, axis=1))
    cm = BlockCovariance(_L96_TAU * sigma ** 2 * coupling)
    ref = np.full(m, 8.0)
    ref[0] += 0.01
    return ModelSpec("l96", m, _L96_TAU, sigma, cm, ref, _l96_step, _l96_jac)


# ---------------------------------------------------------------------------
# registry

_REGISTRY: dict[str, Callable[[float | None], ModelSpec]] = {}
_ALIASES: dict[str, str] = {}


def register_model(name: str, builder: Callable[[float | None], ModelSpec],
                   aliases: tuple[str, ...] = ()) -> None:
    """Add a model builder to the registry under ``name`` (plus aliases)."""
    _REGISTRY[name] = builder
    for alias in aliases:
        _ALIASES[alias] = name


def available_models() -> list[str]:
    return sorted(_REGISTRY)


def make_model(name: str, sigma_m: float | None = None) -> ModelSpec:
    """Instantiate a registered model, optionally overriding sigma_m."""
    key = _ALIASES.get(name, name)
    if key not in _REGISTRY:
        raise ConfigError(
            f"unknown model {name!r}; available: {', '.join(available_models())}")
    return _REGISTRY[key](sigma_m)


register_model("dw", _make_dw, aliases=("double_well", "doublewell"))
register_model("l63", _make_l63, aliases=("lorenz63",))
register_model("l96", _make_l96, aliases=("lorenz96",))
