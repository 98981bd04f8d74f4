"""Observations: sampling, climatological completion, and serialization.

An observation operator here is a 0/1 selection: a subset of state components
observed at a subset of time steps.  Partially observed trajectories are
"completed" for solvers that need full-dimension data at every step: missing
entries are filled with climatological means from a long deterministic run of
the model, and the observation covariance is extended with the climatological
(co)variances of the unobserved components, keeping zero coupling between the
observed and unobserved blocks.

Component indices are 0-based throughout the in-memory API; files written or
read by this module number components 1..m.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import BlockCovariance, SteppedCovariance
from .models import ModelSpec

__all__ = [
    "ObservationSet",
    "Climatology",
    "CompletedObservations",
    "observe",
    "observed_steps",
    "climatology",
    "complete",
    "obs_to_csv",
    "obs_from_csv",
    "obs_to_json",
    "obs_from_json",
    "trajectory_to_csv",
    "trajectory_from_csv",
]


def _fmt(x: float) -> str:
    # 17 significant digits: lossless for IEEE doubles
    return f"{float(x):.17g}"


@dataclass
class ObservationSet:
    """Raw observations of selected components at selected steps.

    ``values[i, j]`` observes component ``components[j]`` at step ``steps[i]``.
    ``cov`` is the per-step observation-error covariance over the observed
    components (None only for the exact, noise-free limit).  ``n_steps`` is
    the total trajectory length N the observations were drawn from.
    """

    components: np.ndarray
    steps: np.ndarray
    values: np.ndarray
    cov: BlockCovariance | None
    n_steps: int

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=int)
        self.steps = np.asarray(self.steps, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if self.components.ndim != 1 or np.any(np.diff(self.components) <= 0):
            raise ValueError("components must be strictly increasing 0-based indices")
        if self.components.size and self.components[0] < 0:
            raise ValueError("components must be non-negative")
        if self.steps.ndim != 1 or np.any(np.diff(self.steps) <= 0):
            raise ValueError("steps must be strictly increasing")
        if self.steps.size and (self.steps[0] < 0 or self.steps[-1] > self.n_steps):
            raise ValueError("steps must lie in [0, n_steps]")
        if self.values.shape != (self.steps.size, self.components.size):
            raise ValueError(
                f"values shape {self.values.shape} != (n steps, n components) "
                f"({self.steps.size}, {self.components.size})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observation values contain non-finite entries")
        if self.cov is not None and self.cov.dim != self.components.size:
            raise ValueError("covariance dimension does not match component count")

    @property
    def count(self) -> int:
        """Total number of scalar observations M."""
        return self.values.size

    def project(self, traj: np.ndarray) -> np.ndarray:
        """Apply the selection operator H to a full trajectory (N+1, m)."""
        traj = np.asarray(traj)
        if traj.shape[0] != self.n_steps + 1:
            raise ValueError(f"trajectory has {traj.shape[0]} states, expected "
                             f"{self.n_steps + 1}")
        return traj[self.steps][:, self.components]

    def residual(self, traj: np.ndarray) -> np.ndarray:
        """H(traj) - values, shape (n observed steps, d)."""
        return self.project(traj) - self.values


def observed_steps(n_steps: int, stride: int) -> np.ndarray:
    """Steps 0, stride, 2*stride, ... up to and including n_steps if hit."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(0, n_steps + 1, stride)


def observe(truth: np.ndarray, components, steps, cov,
            rng: np.random.Generator) -> ObservationSet:
    """Sample noisy observations of ``truth`` (N+1, m).

    ``cov`` may be a BlockCovariance, an array, or None / all-zero for the
    exact noise-free limit (no sampling performed).
    """
    truth = np.asarray(truth, dtype=float)
    components = np.asarray(components, dtype=int)
    steps = np.asarray(steps, dtype=int)
    n_steps = truth.shape[0] - 1
    if np.any(components >= truth.shape[1]):
        raise ValueError("component index out of range for this model")
    if cov is not None and not isinstance(cov, BlockCovariance):
        arr = np.atleast_2d(np.asarray(cov, dtype=float))
        cov = None if not arr.any() else BlockCovariance(arr)
    values = truth[steps][:, components]
    if cov is not None:
        values = values + cov.sample(rng, size=steps.size)
    return ObservationSet(components, steps, values, cov, n_steps)


@dataclass
class Climatology:
    """Long-run mean and covariance of the deterministic model."""

    mean: np.ndarray
    cov: np.ndarray
    n_samples: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)


def climatology(model: ModelSpec, n_steps: int, *, chains: int = 1,
                spinup_time: float = 5.0) -> Climatology:
    """Moments of a long deterministic run after spin-up.

    The ``n_steps`` samples may be split across ``chains`` trajectories that
    start from slightly perturbed copies of the reference state and are each
    spun up independently; on an ergodic attractor the pooled moments agree
    with a single long run and the wall time drops by the chain count.
    Deterministic: no randomness is involved.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    chains = max(1, min(int(chains), n_steps))
    x = np.tile(model.ref_init, (chains, 1))
    x[:, 0] += 0.1 * np.arange(chains)
    n_spin = int(np.ceil(spinup_time / model.tau)) if spinup_time > 0 else 0
    for _ in range(n_spin):
        x = model.step_deterministic(x)
    per_chain = -(-n_steps // chains)  # ceil
    s = np.zeros(model.dim)
    ss = np.zeros((model.dim, model.dim))
    for _ in range(per_chain):
        x = model.step_deterministic(x)
        s += x.sum(axis=0)
        ss += x.T @ x
    total = per_chain * chains
    mean = s / total
    cov = ss / total - np.outer(mean, mean)
    return Climatology(mean, cov, total)


_CLIM_CACHE: dict[tuple, Climatology] = {}


def climatology_cached(model: ModelSpec, n_steps: int, *, chains: int = 1,
                       spinup_time: float = 5.0) -> Climatology:
    """Memoized :func:`climatology` (the run is deterministic)."""
    key = (model.name, model.dim, n_steps, chains, spinup_time)
    if key not in _CLIM_CACHE:
        _CLIM_CACHE[key] = climatology(model, n_steps, chains=chains,
                                       spinup_time=spinup_time)
    return _CLIM_CACHE[key]


@dataclass
class CompletedObservations:
    """Full-dimension data at every step plus the extended covariance.

    ``values`` has shape (N+1, m): raw observations where available,
    climatological means elsewhere.  ``cov`` weights the whole stack: a single
    (m, m) block when every step carries an observation, or a per-step
    :class:`~shadowda.linalg.SteppedCovariance` when steps are sparse in time
    (observed steps use the extended block, unobserved steps the full
    climatological covariance).
    """

    values: np.ndarray
    cov: BlockCovariance | SteppedCovariance
    components: np.ndarray = field(default_factory=lambda: np.arange(0))

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.components = np.asarray(self.components, dtype=int)


def complete(obs: ObservationSet, clim: Climatology | None = None) -> CompletedObservations:
    """Fill unobserved entries with climatological means and extend the covariance.

    For fully observed data (every component at every step) the climatology may
    be omitted and the result carries the raw values and covariance unchanged.
    At a step with an observation, the extended block keeps the observation
    covariance on the observed components, climatological (co)variances on the
    unobserved ones, and zero coupling between the two groups; a step with no
    observation is an entirely unobserved state, so its block is the full
    climatological covariance.  Raises if either block is not positive
    definite.
    """
    if obs.cov is None:
        raise ValueError("cannot complete exact (covariance-free) observations")
    d = obs.components.size
    n_total = obs.n_steps + 1
    if clim is None:
        # identity path: only valid when every step and component is observed
        if obs.steps.size != n_total or not np.array_equal(obs.components, np.arange(d)):
            raise ValueError("climatology required when observations are partial")
        return CompletedObservations(np.array(obs.values), obs.cov, obs.components)
    m = clim.mean.size
    unobserved = np.setdiff1d(np.arange(m), obs.components)
    values = np.tile(clim.mean, (n_total, 1))
    values[np.ix_(obs.steps, obs.components)] = obs.values
    cov = np.zeros((m, m))
    cov[np.ix_(obs.components, obs.components)] = obs.cov.block
    if unobserved.size:
        cov[np.ix_(unobserved, unobserved)] = clim.cov[np.ix_(unobserved, unobserved)]
    try:
        cov_block = BlockCovariance(cov)
    except ValueError as exc:
        raise ValueError(f"completed covariance is not positive definite: {exc}") from exc
    if obs.steps.size == n_total:
        return CompletedObservations(values, cov_block, obs.components)
    try:
        clim_block = BlockCovariance(clim.cov)
    except ValueError as exc:
        raise ValueError(f"climatological covariance is not positive definite: {exc}") from exc
    index = np.ones(n_total, dtype=int)
    index[obs.steps] = 0
    stepped = SteppedCovariance((cov_block, clim_block), index)
    return CompletedObservations(values, stepped, obs.components)


# ---------------------------------------------------------------------------
# serialization

def obs_to_csv(obs: ObservationSet, path) -> None:
    """Write rows (step, component, value); components numbered from 1."""
    with open(path, "w") as fh:
        fh.write("step,component,value\n")
        for i, step in enumerate(obs.steps):
            for j, comp in enumerate(obs.components):
                fh.write(f"{step},{comp + 1},{_fmt(obs.values[i, j])}\n")


def obs_from_csv(path, cov, n_steps: int | None = None) -> ObservationSet:
    """Inverse of :func:`obs_to_csv`; the covariance is supplied separately."""
    steps, comps, vals = [], [], []
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "step,component,value":
            raise ValueError(f"unexpected header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            a, b, c = line.split(",")
            steps.append(int(a))
            comps.append(int(b) - 1)
            vals.append(float(c))
    u_steps = np.unique(steps)
    u_comps = np.unique(comps)
    values = np.full((u_steps.size, u_comps.size), np.nan)
    si = {s: i for i, s in enumerate(u_steps)}
    ci = {c: j for j, c in enumerate(u_comps)}
    for s, c, v in zip(steps, comps, vals):
        values[si[s], ci[c]] = v
    if np.any(np.isnan(values)):
        raise ValueError("observation file does not cover a full step x component grid")
    if n_steps is None:
        n_steps = int(u_steps[-1])
    if cov is not None and not isinstance(cov, BlockCovariance):
        cov = BlockCovariance(cov)
    return ObservationSet(u_comps, u_steps, values, cov, n_steps)


def obs_to_json(obs: ObservationSet, path) -> None:
    """Full-fidelity JSON including the covariance block (1-based components)."""
    doc = {
        "components": [int(c) + 1 for c in obs.components],
        "steps": [int(s) for s in obs.steps],
        "n_steps": int(obs.n_steps),
        "values": [[v for v in row] for row in obs.values.tolist()],
        "covariance": None if obs.cov is None else obs.cov.block.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def obs_from_json(path) -> ObservationSet:
    with open(path) as fh:
        doc = json.load(fh)
    cov = doc.get("covariance")
    return ObservationSet(
        np.asarray(doc["components"], dtype=int) - 1,
        np.asarray(doc["steps"], dtype=int),
        np.asarray(doc["values"], dtype=float),
        None if cov is None else BlockCovariance(np.asarray(cov, dtype=float)),
        int(doc["n_steps"]),
    )


def trajectory_to_csv(traj: np.ndarray, path) -> None:
    """Write a trajectory (N+1, m) as rows step,x1,...,xm."""
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    m = traj.shape[1]
    with open(path, "w") as fh:
        fh.write("step," + ",".join(f"x{j + 1}" for j in range(m)) + "\n")
        for n, row in enumerate(traj):
            fh.write(str(n) + "," + ",".join(_fmt(v) for v in row) + "\n")


def trajectory_from_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        fh.readline()
        for line in fh:
            if line.strip():
                rows.append([float(v) for v in line.split(",")[1:]])
    return np.asarray(rows, dtype=float)
