"""Twin-experiment driver: replicates, summaries, histograms, reports."""

import json
import os

import numpy as np
import pytest

from shadowda.errors import ConfigError
from shadowda.harness import (REFERENCE_LONGRUN, REFERENCE_TABLES,
                              ExperimentConfig, HistogramData, MethodSpec,
                              draw_twin_data, dw_experiment,
                              ensemble_histograms, ensemble_report,
                              experiment_climatology, histogram_series,
                              json_line, l63_experiment, l96_experiment,
                              long_run_unobserved, longrun_report,
                              mismatch_histograms, run_ensemble,
                              run_replicate, summarize, table_experiment,
                              write_replicates_csv, write_summary_csv)


def small_dw(replicates=3, methods=None, n_steps=300):
    if methods is None:
        methods = (MethodSpec("shadow", "shadow"),
                   MethodSpec("w4dvar", "w4dvar"))
    return ExperimentConfig(model="dw", n_steps=n_steps, obs_components=(0,),
                            obs_stride=1, obs_noise_variance=0.16, sigma_m=1.0,
                            methods=methods, replicates=replicates)


class TestMethodSpec:
    @pytest.mark.parametrize("kwargs", [
        dict(name="x", kind="magic"),
        dict(name="", kind="shadow"),
        dict(name="a b", kind="shadow"),
        dict(name="x", kind="shadow", rho=1.5),
        dict(name="x", kind="shadow", r=0.0),
        dict(name="x", kind="shadow", alpha=-1.0),
        dict(name="x", kind="w4dvar", init="midpoint"),
        dict(name="x", kind="w4dvar", max_iterations=-2),
    ])
    def test_rejects_bad_specs(self, kwargs):
        with pytest.raises(ConfigError):
            MethodSpec(**kwargs)

    def test_kind_listing_in_error(self):
        with pytest.raises(ConfigError, match="newton, shadow, w4dvar"):
            MethodSpec("x", "magic")


class TestExperimentConfig:
    def test_obs_count(self):
        assert dw_experiment().obs_count == 4001
        assert l63_experiment().obs_count == 2001
        assert l96_experiment().obs_count == 303

    @pytest.mark.parametrize("kwargs", [
        dict(n_steps=0),
        dict(obs_components=()),
        dict(obs_components=(2, 1)),
        dict(obs_components=(1, 1)),
        dict(obs_stride=0),
        dict(obs_noise_variance=0.0),
        dict(replicates=0),
        dict(methods=()),
        dict(methods=(MethodSpec("a", "shadow"), MethodSpec("a", "newton"))),
    ])
    def test_rejects_bad_values(self, kwargs):
        base = dict(model="dw", n_steps=10, obs_components=(0,), obs_stride=1,
                    obs_noise_variance=0.16,
                    methods=(MethodSpec("a", "shadow"),))
        base.update(kwargs)
        with pytest.raises(ConfigError):
            ExperimentConfig(**base)

    def test_component_out_of_model_range(self):
        cfg = small_dw()
        bad = ExperimentConfig(model="dw", n_steps=10, obs_components=(0, 1),
                               obs_stride=1, obs_noise_variance=0.16,
                               methods=cfg.methods)
        with pytest.raises(ConfigError, match="out of range"):
            draw_twin_data(bad, 1)

    def test_climatology_requirement(self):
        partial = ExperimentConfig(model="l63", n_steps=10,
                                   obs_components=(0,), obs_stride=1,
                                   obs_noise_variance=0.05,
                                   methods=(MethodSpec("s", "shadow"),))
        with pytest.raises(ConfigError, match="clim_steps is required"):
            experiment_climatology(partial)
        assert experiment_climatology(small_dw()) is None


class TestReplicates:
    def test_same_seed_same_data(self):
        cfg = small_dw()
        _, t1, o1 = draw_twin_data(cfg, 5)
        _, t2, o2 = draw_twin_data(cfg, 5)
        assert np.array_equal(t1, t2)
        assert np.array_equal(o1.values, o2.values)

    def test_digest_independent_of_method_list(self):
        a = run_replicate(small_dw(methods=(MethodSpec("s", "shadow"),)), 3)
        b = run_replicate(small_dw(methods=(MethodSpec("v", "w4dvar"),)), 3)
        assert a.input_digest == b.input_digest

    def test_solver_error_is_recorded_not_raised(self):
        cfg = small_dw(methods=(MethodSpec("newton", "newton"),
                                MethodSpec("shadow", "shadow")),
                       n_steps=2000)
        with np.errstate(over="ignore", invalid="ignore"):
            rep = run_replicate(cfg, 1)
        assert rep.errors["newton"].startswith("FactorizationError")
        assert "newton" not in rep.methods
        assert rep.methods["shadow"].termination == "data_mismatch_bound"

    def test_shadow_terminations(self):
        cfg = small_dw(replicates=4, methods=(MethodSpec("shadow", "shadow"),))
        _, reps = run_ensemble(cfg)
        assert all(r.methods["shadow"].termination == "data_mismatch_bound"
                   for r in reps)


class TestSummaries:
    def test_single_replicate_has_zero_spread(self):
        cfg = small_dw(replicates=1)
        summary, _ = run_ensemble(cfg)
        for row in summary.rows:
            assert row.replicates == 1
            for col in (row.iterations, row.cost_obs, row.cost_model,
                        row.combined):
                assert col[1] == 0.0

    def test_normalizations(self):
        cfg = small_dw(replicates=1)
        summary, reps = run_ensemble(cfg)
        res = reps[0].methods["shadow"]
        row = summary.row("shadow")
        assert row.cost_obs[0] == pytest.approx(res.cost_obs / cfg.obs_count)
        assert row.cost_model[0] == pytest.approx(res.cost_model / (300 * 1))
        assert row.combined[0] == pytest.approx(
            2.0 * (res.cost_obs + res.cost_model) / (cfg.obs_count + 300))

    def test_permutation_invariant(self):
        cfg = small_dw(replicates=4)
        summary, reps = run_ensemble(cfg)
        shuffled = [reps[2], reps[0], reps[3], reps[1]]
        assert summarize(cfg, shuffled) == summary

    def test_failures_column(self):
        # seeds 1-3 break the refinement, seed 4 runs into the iteration cap
        cfg = small_dw(methods=(MethodSpec("newton", "newton"),), n_steps=2000,
                       replicates=4)
        with np.errstate(over="ignore", invalid="ignore"):
            summary, _ = run_ensemble(cfg)
        row = summary.row("newton")
        assert row.failures == 3
        assert row.replicates == 1
        assert summary.row("newton") is row
        with pytest.raises(KeyError):
            summary.row("absent")

    def test_parallel_matches_serial(self):
        cfg = small_dw(replicates=3)
        serial, _ = run_ensemble(cfg, jobs=1)
        parallel, _ = run_ensemble(cfg, jobs=2)
        assert serial == parallel

    def test_deterministic_env_skips_the_pool(self, monkeypatch):
        import shadowda.harness as harness
        monkeypatch.setenv("ASSIM_DETERMINISTIC", "1")

        def boom(*args, **kwargs):
            raise AssertionError("process pool must not be used")

        monkeypatch.setattr(harness, "ProcessPoolExecutor", boom)
        summary, _ = run_ensemble(small_dw(replicates=2), jobs=4)
        assert summary.replicates == 2


class TestHistograms:
    def test_standard_normal_series(self):
        rng = np.random.default_rng(0)
        h = histogram_series(rng.standard_normal(5000))
        assert h.edges.size == 62
        assert h.n == 5000
        assert abs(h.mean) < 0.05
        assert abs(h.variance - 1.0) < 0.05
        assert abs(h.skew) < 0.1

    def test_out_of_range_samples_count(self):
        h = histogram_series([0.0, 100.0, -100.0])
        assert h.n == 3
        assert h.counts.sum() == 1
        # density integrates to the in-range fraction
        assert np.sum(h.density * np.diff(h.edges)) == pytest.approx(1 / 3)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            histogram_series([0.0], lo=1.0, hi=-1.0)
        with pytest.raises(ValueError):
            histogram_series([0.0], bins=0)

    def test_mismatch_histograms_sample_counts(self):
        cfg = small_dw(replicates=1, n_steps=200)
        summary, reps = run_ensemble(cfg)
        model, _, obs = draw_twin_data(cfg, 1)
        hists = mismatch_histograms(model, obs, reps[0].methods["shadow"])
        assert hists["data"].n == 201
        assert hists["model"].n == 200

    def test_ensemble_histograms_pool_replicates(self):
        cfg = small_dw(replicates=3, n_steps=200)
        _, reps = run_ensemble(cfg)
        hists = ensemble_histograms(cfg, reps)
        assert set(hists) == {("shadow", "data"), ("shadow", "model"),
                              ("w4dvar", "data"), ("w4dvar", "model")}
        assert hists[("shadow", "data")].n == 3 * 201
        assert hists[("shadow", "model")].n == 3 * 200


class TestLongRun:
    def test_fully_observed_is_rejected(self):
        with pytest.raises(ConfigError, match="unobserved"):
            long_run_unobserved(small_dw(), n_long=100)

    def test_small_l96_run(self):
        cfg = l96_experiment(methods=(MethodSpec("shadow", "shadow"),))
        res = long_run_unobserved(cfg, n_long=200, seed=7)
        assert set(res.distances) == {"baseline", "shadow"}
        assert set(res.unobserved_std) == {"truth", "shadow"}
        assert set(res.histograms) == {"truth", "shadow"}
        assert res.n_steps == 200 and res.seed == 7
        # the constant background sits at the climatological mean
        assert abs(res.baseline_level - 2.3) < 0.2
        assert all(np.isfinite(v) and v > 0 for v in res.distances.values())
        # 12 unobserved components over 200 steps
        assert res.histograms["shadow"].n == 201 * 12


class TestReferenceData:
    def test_tables_match_builder_methods(self):
        for name in ("table1", "table2", "table3"):
            cfg = table_experiment(name)
            assert set(REFERENCE_TABLES[name]) == {m.name for m in cfg.methods}

    def test_unknown_table(self):
        with pytest.raises(ConfigError, match="table1, table2, table3"):
            table_experiment("table9")

    def test_longrun_reference_keys(self):
        assert set(REFERENCE_LONGRUN) == {"shadow", "baseline", "w4dvar"}


class TestWriters:
    def test_json_line_formats(self):
        line = json_line({"alpha": None, "x": 1.0 / 3.0, "n": 4,
                          "ok": True, "s": 'a"b'})
        rec = json.loads(line)
        assert rec == {"alpha": None, "x": 1 / 3, "n": 4, "ok": True,
                       "s": 'a"b'}
        assert "0.33333333333333331" in line

    def test_summary_csv_layout(self, tmp_path):
        cfg = small_dw(replicates=2, n_steps=200)
        summary, reps = run_ensemble(cfg)
        path = tmp_path / "summary.csv"
        write_summary_csv(summary, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ("method,replicates,failures,iterations_mean,"
                            "iterations_std,cost_obs_mean,cost_obs_std,"
                            "cost_model_mean,cost_model_std,combined_mean,"
                            "combined_std")
        assert len(lines) == 3
        assert lines[1].split(",")[0] == "shadow"

    def test_replicates_csv_records_failures(self, tmp_path):
        cfg = small_dw(methods=(MethodSpec("newton", "newton"),),
                       n_steps=2000, replicates=1)
        with np.errstate(over="ignore", invalid="ignore"):
            _, reps = run_ensemble(cfg)
        path = tmp_path / "replicates.csv"
        write_replicates_csv(reps, path)
        body = path.read_text().strip().splitlines()[1]
        assert "failed: FactorizationError" in body

    def test_ensemble_report_inventory(self, tmp_path):
        cfg = small_dw(replicates=2, n_steps=200)
        summary, reps = run_ensemble(cfg)
        paths = ensemble_report(cfg, summary, reps, tmp_path)
        names = {os.path.basename(p) for p in paths}
        assert "summary.csv" in names
        assert "replicates.csv" in names
        assert "moments.csv" in names
        assert "histogram_shadow_data.csv" in names
        assert "histogram_w4dvar_model.csv" in names
        # traces are numbered from 1 in seed order
        assert "trace_shadow_1.jsonl" in names
        assert "trace_w4dvar_2.jsonl" in names
        assert "trace_shadow_0.jsonl" not in names
        for p in paths:
            assert os.path.exists(p)
        with open(os.path.join(tmp_path, "trace_shadow_1.jsonl")) as fh:
            records = [json.loads(line) for line in fh]
        assert records
        assert records[0]["iteration"] == 1

    def test_longrun_report_inventory(self, tmp_path):
        cfg = l96_experiment(methods=(MethodSpec("shadow", "shadow"),))
        res = long_run_unobserved(cfg, n_long=150, seed=7)
        paths = longrun_report(res, tmp_path)
        names = {os.path.basename(p) for p in paths}
        assert names == {"longrun.csv", "histogram_truth_unobserved.csv",
                         "histogram_shadow_unobserved.csv"}
        lines = (tmp_path / "longrun.csv").read_text().strip().splitlines()
        assert lines[0] == "method,distance,unobserved_std"
        rows = {line.split(",")[0]: line.split(",") for line in lines[1:]}
        assert rows["baseline"][2] == ""     # no std for the constant baseline
        assert rows["truth"][1] == ""        # no distance for the truth
        assert float(rows["shadow"][1]) > 0
