"""Twin-experiment orchestration.

A twin experiment generates a synthetic truth with the stochastic model,
observes it with synthetic noise, runs one or more assimilation methods on
the same data, and scores the analyses.  This module runs seeded replicate
ensembles of such experiments, aggregates the standard score columns
(iterations, data cost, model cost, combined cost), bins the whitened
mismatches of the analyses into histograms, and performs the long-run
partially-observed study that compares analysis distance to truth over the
unobserved components.

Normalization conventions, applied at report time (raw costs are stored):

* data cost      J_o / M          with M the number of scalar observations,
* model cost     J_m / (N m),
* combined cost  2 (J_o + J_m) / (M + N m).

Ensembles run replicate seeds ``base_seed .. base_seed + replicates - 1``;
aggregation always reduces in sorted seed order, so summaries do not depend
on worker scheduling.  Setting the environment variable
``ASSIM_DETERMINISTIC=1`` additionally forces single-process execution.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigError, SolverError
from .mismatch import cost_obs, whitened_data_mismatch, whitened_model_mismatch
from .models import ModelSpec, make_model
from .obs import (Climatology, ObservationSet, climatology_cached, complete,
                  observe, observed_steps)
from .results import AssimilationResult
from .shadowing import ShadowingConfig, newton_shadow, weak_shadow
from .w4dvar import W4DVarConfig, initial_trajectory, w4dvar_solve

__all__ = [
    "MethodSpec",
    "ExperimentConfig",
    "ReplicateResult",
    "MethodSummary",
    "EnsembleSummary",
    "HistogramData",
    "LongRunResult",
    "run_replicate",
    "run_method",
    "draw_twin_data",
    "run_ensemble",
    "summarize",
    "experiment_climatology",
    "mismatch_histograms",
    "ensemble_histograms",
    "histogram_series",
    "long_run_unobserved",
    "dw_experiment",
    "l63_experiment",
    "l96_experiment",
    "table_experiment",
    "REFERENCE_TABLES",
    "REFERENCE_LONGRUN",
    "write_summary_csv",
    "write_replicates_csv",
    "write_histogram_csv",
    "write_moments_csv",
    "write_trace_jsonl",
    "json_line",
    "ensemble_report",
    "longrun_report",
]

_METHOD_KINDS = ("newton", "shadow", "w4dvar")


def _fmt(x: float) -> str:
    # 17 significant digits: lossless for IEEE doubles
    return f"{float(x):.17g}"


@dataclass(frozen=True)
class MethodSpec:
    """One assimilation method entry of an experiment.

    ``kind`` selects the solver; ``name`` labels the summary row and output
    files.  ``alpha=None`` gives the adaptive shadowing variant, a fixed value
    the non-adaptive one.  ``init`` applies to the variational solver only.
    """

    name: str
    kind: str
    rho: float = 0.8
    r: float = 0.99
    alpha: float | None = None
    init: str = "observations"
    max_iterations: int | None = None

    def __post_init__(self):
        if not self.name or not all(c.isalnum() or c in "._-" for c in self.name):
            raise ConfigError(f"method name {self.name!r} is not file-name safe")
        if self.kind not in _METHOD_KINDS:
            raise ConfigError(f"unknown method kind {self.kind!r}; "
                              f"expected one of {', '.join(_METHOD_KINDS)}")
        if not 0.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (0, 1), got {self.rho}")
        if self.r <= 0.0:
            raise ConfigError(f"r must be positive, got {self.r}")
        if self.alpha is not None and self.alpha < 0.0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if self.init not in ("observations", "background"):
            raise ConfigError(f"init must be 'observations' or 'background', "
                              f"got {self.init!r}")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of a replicate ensemble.

    Components are 0-based here; the config-file layer converts from the
    1-based numbering used at user-facing boundaries.  ``obs_noise_variance``
    is the variance of each observed scalar (the observation covariance is
    that multiple of the identity).  ``sigma_m`` overrides the model noise
    intensity; None keeps the model default.  ``clim_steps``/``clim_chains``
    size the deterministic climatology run used to complete partially
    observed data.
    """

    model: str
    n_steps: int
    obs_components: tuple
    obs_stride: int
    obs_noise_variance: float
    sigma_m: float | None = None
    methods: tuple = ()
    replicates: int = 100
    base_seed: int = 1
    clim_steps: int | None = None
    clim_chains: int = 1
    spinup_time: float = 5.0

    def __post_init__(self):
        comps = tuple(int(c) for c in self.obs_components)
        object.__setattr__(self, "obs_components", comps)
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.model:
            raise ConfigError("model name must be non-empty")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be positive")
        if not comps or any(c < 0 for c in comps) or sorted(set(comps)) != list(comps):
            raise ConfigError("obs_components must be strictly increasing and non-negative")
        if self.obs_stride < 1:
            raise ConfigError("obs_stride must be >= 1")
        if self.obs_noise_variance <= 0:
            raise ConfigError("obs_noise_variance must be positive")
        if self.sigma_m is not None and self.sigma_m <= 0:
            raise ConfigError("sigma_m must be positive")
        if not self.methods:
            raise ConfigError("at least one method is required")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError("method names must be unique")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be non-negative")
        if self.clim_steps is not None and self.clim_steps < 1:
            raise ConfigError("clim_steps must be positive")
        if self.clim_chains < 1:
            raise ConfigError("clim_chains must be >= 1")
        if self.spinup_time < 0:
            raise ConfigError("spinup_time must be non-negative")

    @property
    def obs_count(self) -> int:
        """Number of scalar observations M implied by the observation spec."""
        n_obs_steps = observed_steps(self.n_steps, self.obs_stride).size
        return n_obs_steps * len(self.obs_components)


@dataclass
class ReplicateResult:
    """One truth/observation realization and every method's outcome on it.

    ``input_digest`` hashes the shared truth and observation values; methods
    that raised a solver error appear in ``errors`` instead of ``methods``.
    """

    seed: int
    input_digest: str
    obs: ObservationSet
    methods: dict
    errors: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MethodSummary:
    """Mean/std score columns of one method over an ensemble."""

    method: str
    replicates: int
    failures: int
    iterations: tuple
    cost_obs: tuple
    cost_model: tuple
    combined: tuple

    def __post_init__(self):
        for col in (self.iterations, self.cost_obs, self.cost_model, self.combined):
            if np.isfinite(col[1]) and col[1] < 0:
                raise ValueError("standard deviations must be non-negative")


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-method summaries plus the normalization constants used."""

    rows: tuple
    replicates: int
    obs_count: int
    n_steps: int
    dim: int

    def row(self, method: str) -> MethodSummary:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)


def _model_for(cfg: ExperimentConfig) -> ModelSpec:
    model = make_model(cfg.model, cfg.sigma_m)
    if any(c >= model.dim for c in cfg.obs_components):
        raise ConfigError(f"obs_components {cfg.obs_components} out of range for "
                          f"model {cfg.model!r} with dimension {model.dim}")
    return model


def _needs_climatology(cfg: ExperimentConfig, model: ModelSpec) -> bool:
    partial = (cfg.obs_stride > 1
               or cfg.obs_components != tuple(range(model.dim)))
    background = any(m.kind == "w4dvar" and m.init == "background"
                     for m in cfg.methods)
    return partial or background


def experiment_climatology(cfg: ExperimentConfig,
                           model: ModelSpec | None = None) -> Climatology | None:
    """Climatology sized by the config, or None when the run needs none."""
    model = model or _model_for(cfg)
    if cfg.clim_steps is None:
        if _needs_climatology(cfg, model):
            raise ConfigError(
                "clim_steps is required: observations are partial or a method "
                "starts from the background")
        return None
    return climatology_cached(model, cfg.clim_steps, chains=cfg.clim_chains,
                              spinup_time=cfg.spinup_time)


def draw_twin_data(cfg: ExperimentConfig, seed: int):
    """Sample one truth/observation realization; returns (model, truth, obs).

    The draw depends only on the model and observation spec, never on the
    method list, so every consumer of a seed sees the same data.
    """
    model = _model_for(cfg)
    rng = np.random.default_rng(seed)
    truth = model.generate_truth(rng, cfg.n_steps, cfg.spinup_time)
    steps = observed_steps(cfg.n_steps, cfg.obs_stride)
    comps = np.asarray(cfg.obs_components, dtype=int)
    cov = cfg.obs_noise_variance * np.eye(comps.size)
    obs = observe(truth, comps, steps, cov, rng)
    return model, truth, obs


def run_method(model: ModelSpec, obs, completed, clim,
               ms: MethodSpec) -> AssimilationResult:
    if ms.kind == "newton":
        scfg = ShadowingConfig() if ms.max_iterations is None else \
            ShadowingConfig(max_iterations=ms.max_iterations)
        res = newton_shadow(model, completed.values, scfg)
        # the refinement itself never weights observations; fill the cost in
        # afterwards so reports can still compare methods
        return dataclasses.replace(res, cost_obs=cost_obs(res.analysis, obs))
    if ms.kind == "shadow":
        kwargs = {"rho": ms.rho, "r": ms.r, "alpha": ms.alpha}
        if ms.max_iterations is not None:
            kwargs["max_iterations"] = ms.max_iterations
        return weak_shadow(model, obs, completed, ShadowingConfig(**kwargs))
    kwargs = {"init": ms.init}
    if ms.max_iterations is not None:
        kwargs["max_iterations"] = ms.max_iterations
    init = initial_trajectory(ms.init, completed, clim)
    return w4dvar_solve(model, obs, init, W4DVarConfig(**kwargs))


def run_replicate(cfg: ExperimentConfig, seed: int,
                  clim: Climatology | None = None) -> ReplicateResult:
    """One seeded twin experiment: shared data, every configured method.

    The truth and observations are drawn from ``default_rng(seed)`` before
    any method runs, so all methods consume identical realizations and the
    result is deterministic given the seed.  A method raising a solver error
    is recorded under ``errors`` and does not abort the replicate.
    """
    model, truth, obs = draw_twin_data(cfg, seed)
    if clim is None:
        clim = experiment_climatology(cfg, model)
    digest = hashlib.sha256(truth.tobytes() + obs.values.tobytes()).hexdigest()
    completed = complete(obs, clim)
    methods: dict = {}
    errors: dict = {}
    for ms in cfg.methods:
        try:
            methods[ms.name] = run_method(model, obs, completed, clim, ms)
        except SolverError as exc:
            errors[ms.name] = f"{type(exc).__name__}: {exc}"
    return ReplicateResult(seed, digest, obs, methods, errors)


def _replicate_task(args) -> ReplicateResult:
    cfg, seed = args
    return run_replicate(cfg, seed)


def run_ensemble(cfg: ExperimentConfig, jobs: int = 1):
    """Run the full replicate ensemble; returns (EnsembleSummary, replicates).

    ``jobs > 1`` distributes replicates over a process pool; results are
    reduced in seed order either way, so the summary is identical for any
    job count.  ``ASSIM_DETERMINISTIC=1`` forces jobs to 1.
    """
    seeds = range(cfg.base_seed, cfg.base_seed + cfg.replicates)
    if os.environ.get("ASSIM_DETERMINISTIC") == "1":
        jobs = 1
    jobs = max(1, int(jobs))
    if jobs == 1:
        clim = experiment_climatology(cfg)
        replicates = [run_replicate(cfg, s, clim) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            replicates = list(pool.map(_replicate_task,
                                       [(cfg, s) for s in seeds]))
    replicates.sort(key=lambda r: r.seed)
    return summarize(cfg, replicates), replicates


def _mean_std(xs) -> tuple:
    if not xs:
        return (float("nan"), float("nan"))
    arr = np.asarray(xs, dtype=float)
    return (float(arr.mean()), float(arr.std()))


def summarize(cfg: ExperimentConfig, replicates) -> EnsembleSummary:
    """Aggregate replicate results into the normalized score columns.

    Reduction happens in sorted seed order, so the summary is invariant to
    the order replicates are supplied in.
    """
    reps = sorted(replicates, key=lambda r: r.seed)
    model = _model_for(cfg)
    m_count = cfg.obs_count
    nm = cfg.n_steps * model.dim
    rows = []
    for ms in cfg.methods:
        its, jos, jms, combs = [], [], [], []
        failures = 0
        for rep in reps:
            res = rep.methods.get(ms.name)
            if res is None:
                failures += 1
                continue
            its.append(float(res.iterations))
            jos.append(res.cost_obs / m_count)
            jms.append(res.cost_model / nm)
            combs.append(2.0 * (res.cost_obs + res.cost_model) / (m_count + nm))
        rows.append(MethodSummary(ms.name, len(its), failures, _mean_std(its),
                                  _mean_std(jos), _mean_std(jms),
                                  _mean_std(combs)))
    return EnsembleSummary(tuple(rows), len(reps), m_count, cfg.n_steps,
                           model.dim)


# ---------------------------------------------------------------------------
# histograms

@dataclass(frozen=True, eq=False)
class HistogramData:
    """Binned counts plus sample moments of a pooled scalar series.

    ``n`` counts all samples, including any outside the bin range, and is
    the normalization of ``density`` (so the density integrates to the
    in-range fraction).  ``variance`` is the centered sample variance and
    ``skew`` the standardized third moment.
    """

    edges: np.ndarray
    counts: np.ndarray
    n: int
    mean: float
    variance: float
    skew: float

    @property
    def density(self) -> np.ndarray:
        widths = np.diff(self.edges)
        return self.counts / (max(self.n, 1) * widths)


def histogram_series(samples, bins: int = 61, lo: float = -6.0,
                     hi: float = 6.0) -> HistogramData:
    """Bin a scalar series on a fixed grid and attach its sample moments."""
    x = np.asarray(samples, dtype=float).ravel()
    if hi <= lo:
        raise ValueError("histogram range must satisfy lo < hi")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x, edges)
    if x.size:
        mean = float(x.mean())
        variance = float(x.var())
        skew = float(stats.skew(x))
    else:
        mean = variance = skew = float("nan")
    return HistogramData(edges, counts, int(x.size), mean, variance, skew)


def mismatch_histograms(model: ModelSpec, obs: ObservationSet, result,
                        bins: int = 61, lo: float = -6.0,
                        hi: float = 6.0) -> dict:
    """Histograms of the whitened data and model mismatches of one analysis.

    ``result`` may be an AssimilationResult or a bare trajectory.  Both
    mismatch series are pooled over components and steps; perfect statistics
    would make each standard normal.
    """
    u = getattr(result, "analysis", result)
    return {
        "data": histogram_series(whitened_data_mismatch(u, obs), bins, lo, hi),
        "model": histogram_series(whitened_model_mismatch(model, u), bins, lo, hi),
    }


def ensemble_histograms(cfg: ExperimentConfig, replicates, bins: int = 61,
                        lo: float = -6.0, hi: float = 6.0) -> dict:
    """Whitened-mismatch histograms pooled over all replicates.

    Returns a dict keyed by (method name, kind) with kind in
    {"data", "model"}; methods that failed in every replicate are omitted.
    """
    model = _model_for(cfg)
    out: dict = {}
    for ms in cfg.methods:
        data_pool, model_pool = [], []
        for rep in replicates:
            res = rep.methods.get(ms.name)
            if res is None:
                continue
            data_pool.append(whitened_data_mismatch(res.analysis, rep.obs).ravel())
            model_pool.append(whitened_model_mismatch(model, res.analysis).ravel())
        if not data_pool:
            continue
        out[(ms.name, "data")] = histogram_series(np.concatenate(data_pool),
                                                  bins, lo, hi)
        out[(ms.name, "model")] = histogram_series(np.concatenate(model_pool),
                                                   bins, lo, hi)
    return out


# ---------------------------------------------------------------------------
# long-run partially observed study

@dataclass
class LongRunResult:
    """Distances to truth over unobserved components, plus their spread.

    ``distances`` maps method names (plus "baseline", the climatological-mean
    trajectory) to mean squared distance per unobserved scalar;
    ``unobserved_std`` maps method names (plus "truth") to the standard
    deviation of the pooled unobserved values; ``histograms`` bins those
    values.  ``baseline_level`` is the climatological mean the completed data
    holds at unobserved entries.
    """

    n_steps: int
    seed: int
    baseline_level: float
    clim_spread: float
    distances: dict
    unobserved_std: dict
    histograms: dict
    errors: dict = field(default_factory=dict)


def long_run_unobserved(cfg: ExperimentConfig, n_long: int = 10_000,
                        seed: int | None = None, methods=None,
                        bins: int = 70, lo: float = -15.0,
                        hi: float = 20.0) -> LongRunResult:
    """Score analyses on one long partially observed trajectory.

    The distance is the mean squared deviation from the truth per unobserved
    scalar, sum ||X - u||^2 over unobserved components / (N (m - d)); the
    baseline entry scores the constant climatological-mean trajectory the
    methods are initialized from.  Rejects fully observed configurations,
    for which the metric is undefined.
    """
    model = _model_for(cfg)
    comps = np.asarray(cfg.obs_components, dtype=int)
    if comps.size >= model.dim:
        raise ConfigError("all components are observed: there are no "
                          "unobserved components to score")
    if n_long < 1:
        raise ConfigError("n_long must be positive")
    clim = experiment_climatology(cfg, model)
    if seed is None:
        seed = cfg.base_seed
    rng = np.random.default_rng(seed)
    truth = model.generate_truth(rng, n_long, cfg.spinup_time)
    steps = observed_steps(n_long, cfg.obs_stride)
    cov = cfg.obs_noise_variance * np.eye(comps.size)
    obs = observe(truth, comps, steps, cov, rng)
    completed = complete(obs, clim)

    unobs = np.setdiff1d(np.arange(model.dim), comps)

    def distance(u: np.ndarray) -> float:
        dev = (truth - u)[:, unobs]
        return float(np.sum(dev * dev) / (n_long * unobs.size))

    baseline = np.tile(clim.mean, (n_long + 1, 1))
    distances = {"baseline": distance(baseline)}
    unobserved_std = {"truth": float(np.std(truth[:, unobs]))}
    histograms = {"truth": histogram_series(truth[:, unobs], bins, lo, hi)}
    errors: dict = {}
    if methods is None:
        methods = tuple(m for m in cfg.methods if m.kind != "newton")
    for ms in methods:
        try:
            res = run_method(model, obs, completed, clim, ms)
        except SolverError as exc:
            errors[ms.name] = f"{type(exc).__name__}: {exc}"
            continue
        values = res.analysis[:, unobs]
        distances[ms.name] = distance(res.analysis)
        unobserved_std[ms.name] = float(np.std(values))
        histograms[ms.name] = histogram_series(values, bins, lo, hi)
    return LongRunResult(
        n_long, seed,
        baseline_level=float(np.mean(clim.mean[unobs])),
        clim_spread=float(np.sqrt(np.mean(np.diag(clim.cov)[unobs]))),
        distances=distances, unobserved_std=unobserved_std,
        histograms=histograms, errors=errors)


# ---------------------------------------------------------------------------
# bundled benchmark configurations

def dw_experiment(replicates: int = 100, base_seed: int = 1,
                  methods=None) -> ExperimentConfig:
    """Double well, N=4000, fully observed with noise variance 0.16."""
    if methods is None:
        methods = (
            MethodSpec("shadow_fixed_r0.99", "shadow", alpha=1.0, r=0.99),
            MethodSpec("shadow", "shadow"),
            MethodSpec("w4dvar", "w4dvar", init="observations"),
        )
    return ExperimentConfig(
        model="dw", n_steps=4000, obs_components=(0,), obs_stride=1,
        obs_noise_variance=0.16, sigma_m=1.0, methods=methods,
        replicates=replicates, base_seed=base_seed)


def l63_experiment(replicates: int = 100, base_seed: int = 1,
                   methods=None) -> ExperimentConfig:
    """Lorenz 63, N=2000, first component observed with noise variance 0.05."""
    if methods is None:
        methods = (
            MethodSpec("shadow_fixed_r0.9", "shadow", alpha=1.0, r=0.9),
            MethodSpec("shadow_fixed_r0.99", "shadow", alpha=1.0, r=0.99),
            MethodSpec("shadow", "shadow"),
            MethodSpec("w4dvar", "w4dvar", init="observations"),
        )
    return ExperimentConfig(
        model="l63", n_steps=2000, obs_components=(0,), obs_stride=1,
        obs_noise_variance=0.05, sigma_m=float(np.sqrt(0.6 / 0.005)),
        methods=methods, replicates=replicates, base_seed=base_seed,
        clim_steps=20_000_000, clim_chains=200)


def l96_experiment(replicates: int = 100, base_seed: int = 1,
                   methods=None) -> ExperimentConfig:
    """Lorenz 96, N=1000, components 1/6/11 observed every 10 steps."""
    if methods is None:
        methods = (
            MethodSpec("shadow_fixed_r0.9", "shadow", alpha=1.0, r=0.9),
            MethodSpec("shadow_fixed_r0.99", "shadow", alpha=1.0, r=0.99),
            MethodSpec("shadow", "shadow"),
            MethodSpec("w4dvar_bg", "w4dvar", init="background"),
            MethodSpec("w4dvar_obs", "w4dvar", init="observations"),
        )
    return ExperimentConfig(
        model="l96", n_steps=1000, obs_components=(0, 5, 10), obs_stride=10,
        obs_noise_variance=0.01, sigma_m=float(np.sqrt(20.0)),
        methods=methods, replicates=replicates, base_seed=base_seed,
        clim_steps=2_000_000, clim_chains=100)


_TABLE_BUILDERS = {
    "table1": dw_experiment,
    "table2": l63_experiment,
    "table3": l96_experiment,
}


def table_experiment(name: str, replicates: int = 100,
                     base_seed: int = 1) -> ExperimentConfig:
    """Bundled configuration for a reproduction target (table1|table2|table3)."""
    if name not in _TABLE_BUILDERS:
        raise ConfigError(f"unknown table {name!r}; expected one of "
                          f"{', '.join(sorted(_TABLE_BUILDERS))}")
    return _TABLE_BUILDERS[name](replicates=replicates, base_seed=base_seed)


# Reference statistics the bundled configurations reproduce: per method,
# (mean, std) of iterations, data cost, model cost, and combined cost under
# the normalizations in the module docstring.
REFERENCE_TABLES = {
    "table1": {
        "shadow_fixed_r0.99": {"iterations": (2.0, 0.0), "cost_obs": (0.516, 0.008),
                               "cost_model": (0.050, 0.002), "combined": (0.565, 0.009)},
        "shadow": {"iterations": (6.8, 0.6), "cost_obs": (0.492, 0.001),
                   "cost_model": (0.062, 0.005), "combined": (0.554, 0.005)},
        "w4dvar": {"iterations": (4.3, 0.5), "cost_obs": (0.365, 0.006),
                   "cost_model": (0.133, 0.003), "combined": (0.499, 0.008)},
    },
    "table2": {
        "shadow_fixed_r0.9": {"iterations": (3.7, 0.5), "cost_obs": (0.54, 0.08),
                              "cost_model": (0.10, 0.01), "combined": (0.41, 0.02)},
        "shadow_fixed_r0.99": {"iterations": (4.0, 0.0), "cost_obs": (0.60, 0.02),
                               "cost_model": (0.09, 0.003), "combined": (0.43, 0.01)},
        "shadow": {"iterations": (6.2, 0.6), "cost_obs": (0.494, 0.002),
                   "cost_model": (0.101, 0.005), "combined": (0.398, 0.007)},
        "w4dvar": {"iterations": (5.1, 0.3), "cost_obs": (0.064, 0.002),
                   "cost_model": (0.145, 0.005), "combined": (0.249, 0.008)},
    },
    "table3": {
        "shadow_fixed_r0.9": {"iterations": (3.2, 0.5), "cost_obs": (0.50, 0.06),
                              "cost_model": (0.03, 0.01), "combined": (0.09, 0.03)},
        "shadow_fixed_r0.99": {"iterations": (3.7, 0.6), "cost_obs": (0.59, 0.06),
                               "cost_model": (0.03, 0.01), "combined": (0.08, 0.02)},
        "shadow": {"iterations": (6.5, 0.7), "cost_obs": (0.498, 0.002),
                   "cost_model": (0.03, 0.01), "combined": (0.08, 0.02)},
        "w4dvar_bg": {"iterations": (55.0, 29.0), "cost_obs": (0.017, 0.002),
                      "cost_model": (0.014, 0.003), "combined": (0.028, 0.005)},
        "w4dvar_obs": {"iterations": (49.0, 20.0), "cost_obs": (0.017, 0.002),
                       "cost_model": (0.011, 0.002), "combined": (0.023, 0.003)},
    },
}

# Reference long-run distances per unobserved scalar (N = 1e5 scale).
REFERENCE_LONGRUN = {"shadow": 16.5, "baseline": 18.8, "w4dvar": 22.7}


# ---------------------------------------------------------------------------
# delimited output

_SUMMARY_HEADER = ("method,replicates,failures,iterations_mean,iterations_std,"
                   "cost_obs_mean,cost_obs_std,cost_model_mean,cost_model_std,"
                   "combined_mean,combined_std")


def write_summary_csv(summary: EnsembleSummary, path) -> None:
    """One row per method; cost columns carry the normalized values."""
    with open(path, "w") as fh:
        fh.write(_SUMMARY_HEADER + "\n")
        for row in summary.rows:
            cells = [row.method, str(row.replicates), str(row.failures)]
            for col in (row.iterations, row.cost_obs, row.cost_model, row.combined):
                cells.extend([_fmt(col[0]), _fmt(col[1])])
            fh.write(",".join(cells) + "\n")


def write_replicates_csv(replicates, path) -> None:
    """Raw (unnormalized) per-replicate costs, one row per method run."""
    with open(path, "w") as fh:
        fh.write("replicate,seed,input_digest,method,iterations,"
                 "cost_obs,cost_model,termination\n")
        for i, rep in enumerate(sorted(replicates, key=lambda r: r.seed), start=1):
            for name, res in rep.methods.items():
                fh.write(f"{i},{rep.seed},{rep.input_digest},{name},"
                         f"{res.iterations},{_fmt(res.cost_obs)},"
                         f"{_fmt(res.cost_model)},{res.termination}\n")
            for name, msg in rep.errors.items():
                fh.write(f"{i},{rep.seed},{rep.input_digest},{name},,,"
                         f",failed: {msg.split(chr(10))[0]}\n")


def write_histogram_csv(hist: HistogramData, path) -> None:
    with open(path, "w") as fh:
        fh.write("bin_left,bin_right,count,density\n")
        density = hist.density
        for i in range(hist.counts.size):
            fh.write(f"{_fmt(hist.edges[i])},{_fmt(hist.edges[i + 1])},"
                     f"{int(hist.counts[i])},{_fmt(density[i])}\n")


def write_moments_csv(hists: dict, path) -> None:
    """Sample moments of each histogram; keys are (method, kind) pairs."""
    with open(path, "w") as fh:
        fh.write("method,kind,n,mean,variance,skew\n")
        for (method, kind), h in hists.items():
            fh.write(f"{method},{kind},{h.n},{_fmt(h.mean)},"
                     f"{_fmt(h.variance)},{_fmt(h.skew)}\n")


def json_line(record: dict) -> str:
    """Render one trace record as a JSON object, floats at 17 digits."""
    parts = []
    for key, value in record.items():
        if value is None:
            text = "null"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, int):
            text = str(value)
        elif isinstance(value, float):
            text = _fmt(value)
        else:
            text = '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'
        parts.append(f'"{key}": {text}')
    return "{" + ", ".join(parts) + "}"


def write_trace_jsonl(result: AssimilationResult, path) -> None:
    """One JSON object per applied update, floats printed at 17 digits."""
    with open(path, "w") as fh:
        for record in result.trace:
            fh.write(json_line(record) + "\n")


def ensemble_report(cfg: ExperimentConfig, summary: EnsembleSummary,
                    replicates, out_dir, bins: int = 61, lo: float = -6.0,
                    hi: float = 6.0) -> list:
    """Write the full delimited bundle for an ensemble; returns the paths.

    Produces summary.csv, replicates.csv, pooled histogram_<method>_<kind>.csv
    with moments.csv, and trace_<method>_<replicate>.jsonl per method run.
    """
    out = _ensure_dir(out_dir)
    paths = []

    def emit(name, writer, *args):
        p = os.path.join(out, name)
        writer(*args, p)
        paths.append(p)

    emit("summary.csv", write_summary_csv, summary)
    emit("replicates.csv", write_replicates_csv, replicates)
    hists = ensemble_histograms(cfg, replicates, bins, lo, hi)
    for (method, kind), h in hists.items():
        emit(f"histogram_{method}_{kind}.csv", write_histogram_csv, h)
    if hists:
        emit("moments.csv", write_moments_csv, hists)
    for i, rep in enumerate(sorted(replicates, key=lambda r: r.seed), start=1):
        for name, res in rep.methods.items():
            emit(f"trace_{name}_{i}.jsonl", write_trace_jsonl, res)
    return paths


def longrun_report(result: LongRunResult, out_dir) -> list:
    """Write longrun.csv plus per-method unobserved-value histograms."""
    out = _ensure_dir(out_dir)
    paths = [os.path.join(out, "longrun.csv")]
    with open(paths[0], "w") as fh:
        fh.write("method,distance,unobserved_std\n")
        names = sorted(set(result.distances) | set(result.unobserved_std))
        for name in names:
            d = result.distances.get(name)
            s = result.unobserved_std.get(name)
            fh.write(f"{name},{'' if d is None else _fmt(d)},"
                     f"{'' if s is None else _fmt(s)}\n")
    for name, h in result.histograms.items():
        p = os.path.join(out, f"histogram_{name}_unobserved.csv")
        write_histogram_csv(h, p)
        paths.append(p)
    return paths


def _ensure_dir(out_dir) -> str:
    out = str(out_dir)
    os.makedirs(out, exist_ok=True)
    return out
