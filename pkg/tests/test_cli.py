"""Command-line interface, exercised through real subprocesses."""

import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from shadowda.config import load_config, save_config
from shadowda.harness import ExperimentConfig, MethodSpec
from shadowda.obs import trajectory_from_csv


def run_cli(*argv):
    return subprocess.run([sys.executable, "-m", "shadowda.cli", *argv],
                          capture_output=True, text=True)


def file_hash(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestErrors:
    def test_unknown_model_lists_registry(self):
        proc = run_cli("truth", "--model", "lorenz40", "--out", "/tmp/x")
        assert proc.returncode == 2
        assert "config error" in proc.stderr
        assert "dw, l63, l96" in proc.stderr

    def test_requires_config_or_model(self):
        proc = run_cli("truth", "--out", "/tmp/x")
        assert proc.returncode == 2
        assert "--config FILE or --model NAME" in proc.stderr

    def test_model_conflicts_with_config(self, tmp_path):
        cfg_path = tmp_path / "a.cfg"
        cfg_path.write_text("model = dw\n")
        proc = run_cli("truth", "--config", str(cfg_path), "--model", "dw",
                       "--out", str(tmp_path / "out"))
        assert proc.returncode == 2
        assert "conflicts" in proc.stderr

    def test_broken_config_reports_location(self, tmp_path):
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("model = dw\nn_steps = soon\n")
        proc = run_cli("truth", "--config", str(cfg_path),
                       "--out", str(tmp_path / "out"))
        assert proc.returncode == 2
        assert "bad.cfg:2" in proc.stderr

    def test_solver_failure_exits_3_with_trace(self, tmp_path):
        proc = run_cli("assimilate", "--model", "dw", "--n", "2000",
                       "--seed", "1", "--method", "newton",
                       "--out", str(tmp_path / "out"), "--no-figures")
        assert proc.returncode == 3
        assert "solver error: FactorizationError" in proc.stderr
        records = [json.loads(line) for line in proc.stderr.splitlines()
                   if line.startswith("{")]
        assert records
        assert records[0]["iteration"] == 1
        # the manifest was written before the solver ran
        assert (tmp_path / "out" / "manifest.json").exists()


class TestTruth:
    def test_deterministic_outputs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            proc = run_cli("truth", "--model", "dw", "--n", "300",
                           "--out", str(out))
            assert proc.returncode == 0, proc.stderr
            assert "wrote truth.csv" in proc.stdout
        assert file_hash(a / "truth.csv") == file_hash(b / "truth.csv")
        assert (file_hash(a / "observations.csv")
                == file_hash(b / "observations.csv"))
        truth = trajectory_from_csv(a / "truth.csv")
        assert truth.shape == (301, 1)

    def test_seed_changes_the_draw(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("truth", "--model", "dw", "--n", "300", "--out", str(a))
        run_cli("truth", "--model", "dw", "--n", "300", "--seed", "2",
                "--out", str(b))
        assert file_hash(a / "truth.csv") != file_hash(b / "truth.csv")


class TestAssimilate:
    def test_full_output_bundle(self, tmp_path):
        out = tmp_path / "run"
        proc = run_cli("assimilate", "--model", "dw", "--n", "200",
                       "--method", "shadow", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert "termination=data_mismatch_bound" in proc.stdout
        for name in ("manifest.json", "resolved.cfg", "truth.csv",
                     "observations.csv", "analysis.csv",
                     "trace_shadow_1.jsonl", "histogram_shadow_data.csv",
                     "histogram_shadow_model.csv", "moments.csv",
                     "mismatch_shadow.png"):
            assert (out / name).exists(), name

        analysis = trajectory_from_csv(out / "analysis.csv")
        assert analysis.shape == (201, 1)
        assert np.all(np.isfinite(analysis))

        with open(out / "trace_shadow_1.jsonl") as fh:
            records = [json.loads(line) for line in fh]
        assert [r["iteration"] for r in records] == list(range(1, len(records) + 1))
        assert all(r["alpha"] >= 1.0 for r in records)

        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "assimilate"
        assert manifest["base_seed"] == 1
        assert manifest["elapsed_seconds"] > 0

        resolved = load_config(out / "resolved.cfg")
        assert resolved.model == "dw"
        assert resolved.n_steps == 200
        assert [m.name for m in resolved.methods] == ["shadow"]

    def test_no_figures_skips_rendering(self, tmp_path):
        out = tmp_path / "run"
        proc = run_cli("assimilate", "--model", "dw", "--n", "200",
                       "--out", str(out), "--no-figures")
        assert proc.returncode == 0, proc.stderr
        assert not list(out.glob("*.png"))

    def test_config_file_input(self, tmp_path):
        cfg = ExperimentConfig(model="dw", n_steps=150, obs_components=(0,),
                               obs_stride=1, obs_noise_variance=0.16,
                               sigma_m=1.0, replicates=1,
                               methods=(MethodSpec("mine", "shadow", r=0.9),))
        cfg_path = tmp_path / "exp.cfg"
        save_config(cfg, cfg_path)
        out = tmp_path / "run"
        proc = run_cli("assimilate", "--config", str(cfg_path),
                       "--method", "mine", "--out", str(out), "--no-figures")
        assert proc.returncode == 0, proc.stderr
        assert (out / "trace_mine_1.jsonl").exists()
        assert load_config(out / "resolved.cfg") == cfg


class TestEnsemble:
    def test_small_ensemble(self, tmp_path):
        out = tmp_path / "ens"
        proc = run_cli("ensemble", "--model", "dw", "--n", "200",
                       "--replicates", "2", "--out", str(out), "--no-figures")
        assert proc.returncode == 0, proc.stderr
        lines = (out / "summary.csv").read_text().strip().splitlines()
        assert lines[0].startswith("method,replicates,failures")
        assert len(lines) == 4  # three bundled methods
        assert (out / "replicates.csv").exists()
        assert (out / "trace_shadow_2.jsonl").exists()
        assert "shadow" in proc.stdout


class TestReproduce:
    def test_table_target(self, tmp_path):
        out = tmp_path / "rep"
        proc = run_cli("reproduce", "table1", "--replicates", "1",
                       "--out", str(out), "--no-figures")
        assert proc.returncode == 0, proc.stderr
        assert "table1: model=dw, N=4000" in proc.stdout
        assert " ref " in proc.stdout or "ref" in proc.stdout
        assert (out / "summary.csv").exists()

    def test_longrun_target(self, tmp_path):
        out = tmp_path / "lr"
        proc = run_cli("reproduce", "longrun", "--n", "300",
                       "--out", str(out), "--no-figures")
        assert proc.returncode == 0, proc.stderr
        assert "initial-guess level=" in proc.stdout
        lines = (out / "longrun.csv").read_text().strip().splitlines()
        assert lines[0] == "method,distance,unobserved_std"
        methods = {line.split(",")[0] for line in lines[1:]}
        assert {"baseline", "shadow", "w4dvar_obs", "truth"} <= methods


class TestVersion:
    def test_version_flag(self):
        proc = run_cli("--version")
        assert proc.returncode == 0
        assert proc.stdout.strip() == "0.1.0"
