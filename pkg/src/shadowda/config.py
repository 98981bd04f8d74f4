"""Experiment configuration files.

The format is a flat list of ``key = value`` lines for the experiment itself
followed by one ``[method.<name>]`` section per assimilation method.  Blank
lines are ignored and ``#`` starts a comment (full-line or trailing).
Component indices are 1-based in files and converted at this boundary; all
other values carry the units stated in the serialized comments.

Parsing and serialization are exact inverses on the parsed value:
``parse_config(serialize_config(cfg)) == cfg``.
"""

from __future__ import annotations

from .errors import ConfigError
from .harness import ExperimentConfig, MethodSpec

__all__ = ["parse_config", "serialize_config", "load_config", "save_config"]


def _parse_int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None


def _parse_float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None


def _parse_components(raw: str, where: str) -> tuple:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{where}: expected a comma-separated component list")
    comps = tuple(_parse_int(p, where) for p in parts)
    if any(c < 1 for c in comps):
        raise ConfigError(f"{where}: components are numbered from 1")
    return tuple(c - 1 for c in comps)


_EXPERIMENT_KEYS = {
    "model": str,
    "n_steps": _parse_int,
    "obs_components": _parse_components,
    "obs_stride": _parse_int,
    "obs_noise_variance": _parse_float,
    "sigma_m": _parse_float,
    "replicates": _parse_int,
    "base_seed": _parse_int,
    "clim_steps": _parse_int,
    "clim_chains": _parse_int,
    "spinup_time": _parse_float,
}

_REQUIRED_KEYS = ("model", "n_steps", "obs_components", "obs_stride",
                  "obs_noise_variance")

_METHOD_KEYS = {
    "kind": str,
    "rho": _parse_float,
    "r": _parse_float,
    "alpha": _parse_float,
    "init": str,
    "max_iterations": _parse_int,
}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse configuration text; errors carry ``source:line`` locations."""
    experiment: dict = {}
    methods: list = []
    current: dict | None = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        where = f"{source}:{lineno}"
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: unterminated section header {line!r}")
            section = line[1:-1].strip()
            if not section.startswith("method.") or len(section) <= len("method."):
                raise ConfigError(f"{where}: unknown section [{section}]; only "
                                  f"[method.<name>] sections are allowed")
            current = {"name": section[len("method."):], "where": where}
            methods.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{where}: empty key")
        if current is None:
            if key not in _EXPERIMENT_KEYS:
                raise ConfigError(f"{where}: unknown experiment key {key!r}")
            if key in experiment:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            convert = _EXPERIMENT_KEYS[key]
            experiment[key] = raw if convert is str else convert(raw, where)
        else:
            if key not in _METHOD_KEYS:
                raise ConfigError(f"{where}: unknown method key {key!r}")
            if key in current:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            convert = _METHOD_KEYS[key]
            current[key] = raw if convert is str else convert(raw, where)
    missing = [k for k in _REQUIRED_KEYS if k not in experiment]
    if missing:
        raise ConfigError(f"{source}: missing required keys: {', '.join(missing)}")
    if not methods:
        raise ConfigError(f"{source}: at least one [method.<name>] section is required")
    specs = []
    for entry in methods:
        where = entry.pop("where")
        if "kind" not in entry:
            raise ConfigError(f"{where}: method section needs a 'kind' key")
        try:
            specs.append(MethodSpec(**entry))
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    try:
        return ExperimentConfig(methods=tuple(specs), **experiment)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, source=str(path))


def _num(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render a config back to text (inverse of :func:`parse_config`)."""
    lines = [
        "# model registry name",
        f"model = {cfg.model}",
        "# assimilation window length, in model steps",
        f"n_steps = {cfg.n_steps}",
        "# observed components, numbered from 1",
        "obs_components = " + ",".join(str(c + 1) for c in cfg.obs_components),
        "# model steps between observations",
        f"obs_stride = {cfg.obs_stride}",
        "# variance of each observed scalar",
        f"obs_noise_variance = {_num(cfg.obs_noise_variance)}",
    ]
    if cfg.sigma_m is not None:
        lines += ["# model noise intensity (standard deviation per unit sqrt time)",
                  f"sigma_m = {_num(cfg.sigma_m)}"]
    lines += [
        "# ensemble size and first replicate seed",
        f"replicates = {cfg.replicates}",
        f"base_seed = {cfg.base_seed}",
    ]
    if cfg.clim_steps is not None:
        lines += ["# climatology run length (model steps) and chain count",
                  f"clim_steps = {cfg.clim_steps}",
                  f"clim_chains = {cfg.clim_chains}"]
    elif cfg.clim_chains != 1:
        lines += [f"clim_chains = {cfg.clim_chains}"]
    lines += ["# spin-up discarded before sampling, in model time units",
              f"spinup_time = {_num(cfg.spinup_time)}"]
    for ms in cfg.methods:
        lines += ["", f"[method.{ms.name}]", f"kind = {ms.kind}"]
        if ms.kind == "shadow" or ms.rho != 0.8:
            lines.append(f"rho = {_num(ms.rho)}")
        if ms.kind == "shadow" or ms.r != 0.99:
            lines.append(f"r = {_num(ms.r)}")
        if ms.alpha is not None:
            lines.append(f"alpha = {_num(ms.alpha)}")
        if ms.kind == "w4dvar" or ms.init != "observations":
            lines.append(f"init = {ms.init}")
        if ms.max_iterations is not None:
            lines.append(f"max_iterations = {ms.max_iterations}")
    return "\n".join(lines) + "\n"


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(serialize_config(cfg))
