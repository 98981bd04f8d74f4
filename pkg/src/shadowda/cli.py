"""Command-line entry point.

Subcommands:

``truth``
    Generate one truth/observation realization and write both as CSV.
``assimilate``
    Run one method on one realization; writes the analysis trajectory, the
    iteration trace, and mismatch histograms.
``ensemble``
    Run the full replicate ensemble of a configuration and write the
    aggregate report.
``reproduce``
    Run a bundled benchmark (table1 | table2 | table3 | figures | longrun)
    and print the resulting statistics next to their reference values.

Every output directory receives a ``manifest.json`` (written before any
computation starts) and a ``resolved.cfg`` holding the fully resolved
configuration; re-running from that config with the recorded seed reproduces
the delimited outputs bit-exactly.  Exit codes: 0 success, 2 configuration
error, 3 solver failure (with the iteration trace dumped to stderr).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass

from . import __version__
from .config import load_config, save_config
from .errors import ConfigError, SolverError
from .harness import (ExperimentConfig, MethodSpec, REFERENCE_LONGRUN,
                      REFERENCE_TABLES, draw_twin_data, dw_experiment,
                      ensemble_histograms, ensemble_report,
                      experiment_climatology, l63_experiment, l96_experiment,
                      long_run_unobserved, longrun_report,
                      mismatch_histograms, run_ensemble, run_method,
                      summarize, table_experiment, write_histogram_csv,
                      write_moments_csv, write_summary_csv, write_trace_jsonl,
                      json_line)
from .mismatch import cost_model, cost_obs
from .models import make_model
from .obs import complete, obs_to_csv, trajectory_to_csv

__all__ = ["main", "build_parser", "RunManifest"]

_DEFAULT_EXPERIMENTS = {
    "dw": dw_experiment,
    "l63": l63_experiment,
    "l96": l96_experiment,
}

_REPRODUCE_TARGETS = ("table1", "table2", "table3", "figures", "longrun")


@dataclass
class RunManifest:
    """Provenance record written to every output directory.

    Written before any computation; ``elapsed_seconds`` is filled in when the
    command finishes.  ``resolved_config`` names the config file (in the same
    directory) that, together with ``base_seed`` and ``version``, reproduces
    the outputs bit-exactly.
    """

    command: str
    config_path: str | None
    resolved_config: str
    base_seed: int
    version: str
    out_dir: str
    created_utc: str
    elapsed_seconds: float | None = None

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=1)
            fh.write("\n")


def _start_run(args, cfg: ExperimentConfig, seed: int) -> tuple:
    """Create the output directory and write manifest + resolved config."""
    out = args.out
    os.makedirs(out, exist_ok=True)
    save_config(cfg, os.path.join(out, "resolved.cfg"))
    manifest = RunManifest(
        command=args.command,
        config_path=getattr(args, "config", None),
        resolved_config="resolved.cfg",
        base_seed=seed,
        version=__version__,
        out_dir=str(out),
        created_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    )
    manifest_path = os.path.join(out, "manifest.json")
    manifest.write(manifest_path)
    return manifest, manifest_path, time.monotonic()


def _finish_run(manifest: RunManifest, manifest_path: str, started: float) -> None:
    manifest.elapsed_seconds = time.monotonic() - started
    manifest.write(manifest_path)


def _resolve_config(args) -> ExperimentConfig:
    """Config file or bundled model defaults, with CLI flags applied on top."""
    if getattr(args, "config", None) and getattr(args, "model", None):
        raise ConfigError("--model conflicts with --config; "
                          "set the model inside the config file")
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif getattr(args, "model", None):
        name = make_model(args.model).name
        cfg = _DEFAULT_EXPERIMENTS[name]()
    else:
        raise ConfigError("pass --config FILE or --model NAME")
    updates: dict = {}
    if getattr(args, "n", None) is not None:
        if args.n < 1:
            raise ConfigError("--n must be positive")
        updates["n_steps"] = args.n
    if getattr(args, "seed", None) is not None:
        updates["base_seed"] = args.seed
    if getattr(args, "replicates", None) is not None:
        updates["replicates"] = args.replicates
    if getattr(args, "sigma_m", None) is not None:
        updates["sigma_m"] = args.sigma_m
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _select_method(cfg: ExperimentConfig, args) -> MethodSpec:
    """Pick the method named by --method, or build one from a kind name."""
    name = args.method
    spec = None
    for ms in cfg.methods:
        if ms.name == name:
            spec = ms
            break
    if spec is None:
        if name in ("newton", "shadow", "w4dvar"):
            spec = MethodSpec(name, name)
        else:
            known = ", ".join(ms.name for ms in cfg.methods)
            raise ConfigError(f"unknown method {name!r}; configured methods: "
                              f"{known}; kinds: newton, shadow, w4dvar")
    updates: dict = {}
    if args.rho is not None:
        updates["rho"] = args.rho
    if args.r is not None:
        updates["r"] = args.r
    if args.alpha is not None:
        updates["alpha"] = None if args.alpha < 0 else args.alpha
    if args.init is not None:
        updates["init"] = args.init
    if args.max_iter is not None:
        updates["max_iterations"] = args.max_iter
    return dataclasses.replace(spec, **updates) if updates else spec


def cmd_truth(args) -> int:
    cfg = _resolve_config(args)
    seed = cfg.base_seed
    manifest, mpath, started = _start_run(args, cfg, seed)
    _model, truth, obs = draw_twin_data(cfg, seed)
    trajectory_to_csv(truth, os.path.join(args.out, "truth.csv"))
    obs_to_csv(obs, os.path.join(args.out, "observations.csv"))
    _finish_run(manifest, mpath, started)
    print(f"wrote truth.csv and observations.csv to {args.out} "
          f"(N={cfg.n_steps}, M={obs.count}, seed={seed})")
    return 0


def cmd_assimilate(args) -> int:
    cfg = _resolve_config(args)
    spec = _select_method(cfg, args)
    cfg = dataclasses.replace(cfg, methods=(spec,))
    seed = cfg.base_seed
    manifest, mpath, started = _start_run(args, cfg, seed)
    model, truth, obs = draw_twin_data(cfg, seed)
    clim = experiment_climatology(cfg, model)
    completed = complete(obs, clim)
    result = run_method(model, obs, completed, clim, spec)
    trajectory_to_csv(truth, os.path.join(args.out, "truth.csv"))
    obs_to_csv(obs, os.path.join(args.out, "observations.csv"))
    trajectory_to_csv(result.analysis, os.path.join(args.out, "analysis.csv"))
    write_trace_jsonl(result, os.path.join(args.out, f"trace_{spec.name}_1.jsonl"))
    hists = mismatch_histograms(model, obs, result)
    keyed = {(spec.name, kind): h for kind, h in hists.items()}
    for (name, kind), h in keyed.items():
        write_histogram_csv(h, os.path.join(args.out, f"histogram_{name}_{kind}.csv"))
    write_moments_csv(keyed, os.path.join(args.out, "moments.csv"))
    if not args.no_figures:
        from .figures import render_mismatch_figure
        render_mismatch_figure(keyed, os.path.join(args.out,
                                                   f"mismatch_{spec.name}.png"))
    _finish_run(manifest, mpath, started)
    m_count = obs.count
    nm = cfg.n_steps * model.dim
    jo = result.cost_obs / m_count
    jm = result.cost_model / nm
    print(f"{spec.name}: {result.iterations} iterations, "
          f"termination={result.termination}, cost_obs={jo:.6g}, "
          f"cost_model={jm:.6g}")
    print(f"outputs in {args.out}")
    return 0


def _print_summary(summary, reference=None) -> None:
    cols = ("iterations", "cost_obs", "cost_model", "combined")
    head = f"{'method':24s} {'':4s}"
    for c in cols:
        head += f" {c:>20s}"
    print(head)
    for row in summary.rows:
        line = f"{row.method:24s} {'run':4s}"
        for value in (row.iterations, row.cost_obs, row.cost_model, row.combined):
            line += f" {value[0]:12.4f}±{value[1]:<7.4f}"
        print(line)
        ref = (reference or {}).get(row.method)
        if ref:
            line = f"{'':24s} {'ref':4s}"
            for c in cols:
                line += f" {ref[c][0]:12.4f}±{ref[c][1]:<7.4f}"
            print(line)
        if row.failures:
            print(f"{'':24s}      {row.failures} replicate(s) failed")


def _ensemble_command(args, cfg: ExperimentConfig, reference=None) -> None:
    manifest, mpath, started = _start_run(args, cfg, cfg.base_seed)
    summary, replicates = run_ensemble(cfg, jobs=args.jobs)
    ensemble_report(cfg, summary, replicates, args.out)
    if not args.no_figures:
        from .figures import render_mismatch_figure
        hists = ensemble_histograms(cfg, replicates)
        if hists:
            render_mismatch_figure(hists, os.path.join(args.out, "mismatch.png"))
    _finish_run(manifest, mpath, started)
    _print_summary(summary, reference)
    failed = {name: msg for rep in replicates for name, msg in rep.errors.items()}
    if failed:
        for name, msg in sorted(failed.items()):
            print(f"note: {name} failed in some replicates ({msg})")
    print(f"outputs in {args.out}")


def cmd_ensemble(args) -> int:
    cfg = _resolve_config(args)
    _ensemble_command(args, cfg)
    return 0


def _reproduce_table(args, target: str) -> None:
    cfg = table_experiment(target, replicates=args.replicates or 100,
                           base_seed=args.seed if args.seed is not None else 1)
    print(f"{target}: model={cfg.model}, N={cfg.n_steps}, "
          f"replicates={cfg.replicates}")
    _ensemble_command(args, cfg, REFERENCE_TABLES[target])


def _reproduce_longrun(args) -> None:
    base_seed = args.seed if args.seed is not None else 1
    cfg = l96_experiment(replicates=1, base_seed=base_seed)
    methods = tuple(m for m in cfg.methods if m.name in ("shadow", "w4dvar_obs"))
    cfg = dataclasses.replace(cfg, methods=methods)
    n_long = args.n if args.n is not None else 10_000
    manifest, mpath, started = _start_run(args, cfg, base_seed)
    result = long_run_unobserved(cfg, n_long=n_long, seed=base_seed)
    longrun_report(result, args.out)
    if not args.no_figures:
        from .figures import render_unobserved_figure
        render_unobserved_figure(result, os.path.join(args.out, "unobserved.png"))
    _finish_run(manifest, mpath, started)
    print(f"longrun: N={n_long}, seed={base_seed}, "
          f"initial-guess level={result.baseline_level:.4g}")
    print(f"{'method':12s} {'distance':>10s} {'reference':>10s} {'unobs std':>10s}")
    for name in sorted(result.distances):
        ref = REFERENCE_LONGRUN.get("w4dvar" if name.startswith("w4dvar") else name)
        ref_text = f"{ref:10.1f}" if ref is not None else " " * 10
        std = result.unobserved_std.get(name)
        std_text = f"{std:10.3f}" if std is not None else " " * 10
        print(f"{name:12s} {result.distances[name]:10.3f} {ref_text} {std_text}")
    print(f"truth unobserved std: {result.unobserved_std['truth']:.3f}")
    for name, msg in result.errors.items():
        print(f"note: {name} failed ({msg})")
    print(f"outputs in {args.out}")


def _reproduce_figures(args) -> None:
    base_out = args.out
    for target in ("table1", "table2", "table3"):
        sub = argparse.Namespace(**vars(args))
        sub.out = os.path.join(base_out, target)
        print(f"--- {target} ---")
        _reproduce_table(sub, target)


def cmd_reproduce(args) -> int:
    if args.out is None:
        args.out = f"reproduce_{args.target}"
    if args.target == "longrun":
        _reproduce_longrun(args)
    elif args.target == "figures":
        _reproduce_figures(args)
    else:
        _reproduce_table(args, args.target)
    return 0


def _add_common(parser, with_method: bool = False) -> None:
    parser.add_argument("--config", help="experiment config file")
    parser.add_argument("--model", help="bundled model setup (dw, l63, l96)")
    parser.add_argument("--n", type=int, help="override the window length N")
    parser.add_argument("--seed", type=int, help="override the base seed")
    parser.add_argument("--sigma-m", dest="sigma_m", type=float,
                        help="override the model noise intensity")
    parser.add_argument("--out", default="assim_out",
                        help="output directory (default: %(default)s)")
    if with_method:
        parser.add_argument("--method", default="shadow",
                            help="method name from the config, or a kind "
                                 "(newton | shadow | w4dvar)")
        parser.add_argument("--rho", type=float,
                            help="step budget fraction for shadowing")
        parser.add_argument("--r", type=float,
                            help="stopping threshold on the normalized data mismatch")
        parser.add_argument("--alpha", type=float,
                            help="fixed regularization weight; negative "
                                 "re-enables the adaptive search")
        parser.add_argument("--init", choices=("observations", "background"),
                            help="variational initialization")
        parser.add_argument("--max-iter", dest="max_iter", type=int,
                            help="iteration cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="assimilate",
        description="Trajectory assimilation twin experiments: generate "
                    "synthetic data, run solvers, reproduce benchmarks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_truth = sub.add_parser("truth", help="generate a truth/observation pair")
    _add_common(p_truth)
    p_truth.set_defaults(func=cmd_truth)

    p_assim = sub.add_parser("assimilate", help="run one method on one realization")
    _add_common(p_assim, with_method=True)
    p_assim.add_argument("--no-figures", action="store_true",
                         help="skip figure rendering")
    p_assim.set_defaults(func=cmd_assimilate)

    p_ens = sub.add_parser("ensemble", help="run a replicate ensemble")
    _add_common(p_ens)
    p_ens.add_argument("--replicates", type=int, help="override the ensemble size")
    p_ens.add_argument("--jobs", type=int, default=1,
                       help="worker processes (default: %(default)s)")
    p_ens.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    p_ens.set_defaults(func=cmd_ensemble)

    p_rep = sub.add_parser("reproduce", help="run a bundled benchmark")
    p_rep.add_argument("target", choices=_REPRODUCE_TARGETS)
    p_rep.add_argument("--replicates", type=int,
                       help="ensemble size (default 100)")
    p_rep.add_argument("--n", type=int,
                       help="trajectory length for the longrun target")
    p_rep.add_argument("--seed", type=int, help="base seed (default 1)")
    p_rep.add_argument("--jobs", type=int, default=1,
                       help="worker processes (default: %(default)s)")
    p_rep.add_argument("--out", default=None,
                       help="output directory (default: reproduce_<target>)")
    p_rep.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    p_rep.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        for record in getattr(exc, "trace", None) or []:
            print(json_line(record), file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
