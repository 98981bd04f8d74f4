"""Configuration file parsing, serialization, and diagnostics."""

import pytest

from shadowda.config import (load_config, parse_config, save_config,
                             serialize_config)
from shadowda.errors import ConfigError
from shadowda.harness import (ExperimentConfig, MethodSpec, dw_experiment,
                              l63_experiment, l96_experiment)

MINIMAL = """\
model = dw
n_steps = 400
obs_components = 1
obs_stride = 1
obs_noise_variance = 0.16

[method.shadow]
kind = shadow
"""


class TestParse:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert cfg.model == "dw"
        assert cfg.n_steps == 400
        assert cfg.obs_components == (0,)
        assert cfg.obs_stride == 1
        assert cfg.obs_noise_variance == 0.16
        # unspecified keys fall back to the dataclass defaults
        assert cfg.replicates == 100
        assert cfg.base_seed == 1
        assert cfg.sigma_m is None
        assert cfg.methods == (MethodSpec("shadow", "shadow"),)

    def test_components_are_one_based_in_files(self):
        text = MINIMAL.replace("model = dw", "model = l96")
        text = text.replace("obs_components = 1", "obs_components = 1, 6, 11")
        assert parse_config(text).obs_components == (0, 5, 10)

    def test_comments_and_blank_lines(self):
        text = ("# leading comment\n\nmodel = dw  # trailing\n"
                "n_steps = 10\nobs_components = 1\nobs_stride = 1\n"
                "obs_noise_variance = 0.16\n\n"
                "[method.a]  # section comment\nkind = newton\n")
        cfg = parse_config(text)
        assert cfg.model == "dw"
        assert cfg.methods[0].kind == "newton"

    def test_method_keys(self):
        text = MINIMAL + ("\n[method.var]\nkind = w4dvar\ninit = background\n"
                          "max_iterations = 7\n")
        cfg = parse_config(text)
        var = cfg.methods[1]
        assert var.name == "var"
        assert var.kind == "w4dvar"
        assert var.init == "background"
        assert var.max_iterations == 7


class TestDiagnostics:
    def expect(self, text, message, source="test.cfg"):
        with pytest.raises(ConfigError, match=message):
            parse_config(text, source=source)

    def test_unknown_experiment_key(self):
        self.expect("window = 4\n" + MINIMAL,
                    r"test\.cfg:1: unknown experiment key 'window'")

    def test_unknown_method_key(self):
        self.expect(MINIMAL + "shade = 1\n",
                    r"test\.cfg:9: unknown method key")

    def test_duplicate_key(self):
        self.expect("model = dw\nmodel = l63\n",
                    r"test\.cfg:2: duplicate key 'model'")

    def test_missing_required_keys(self):
        self.expect("model = dw\n\n[method.a]\nkind = shadow\n",
                    r"missing required keys: n_steps, obs_components")

    def test_no_method_sections(self):
        self.expect(MINIMAL.split("[")[0],
                    r"at least one \[method\.<name>\] section")

    def test_bad_section(self):
        self.expect(MINIMAL + "[output]\n", r"unknown section")
        self.expect(MINIMAL + "[method.x\n", r"unterminated section")

    def test_missing_equals(self):
        self.expect("model dw\n", r"test\.cfg:1: expected 'key = value'")

    def test_bad_number(self):
        self.expect(MINIMAL.replace("n_steps = 400", "n_steps = many"),
                    r"test\.cfg:2: expected an integer, got 'many'")

    def test_zero_based_component_rejected(self):
        self.expect(MINIMAL.replace("obs_components = 1", "obs_components = 0"),
                    r"components are numbered from 1")

    def test_method_needs_kind(self):
        self.expect(MINIMAL + "\n[method.b]\nrho = 0.5\n",
                    r"method section needs a 'kind' key")

    def test_invalid_method_value_carries_location(self):
        self.expect(MINIMAL + "\n[method.b]\nkind = lights\n",
                    r"test\.cfg:10: unknown method kind")

    def test_invalid_experiment_value(self):
        self.expect(MINIMAL.replace("obs_stride = 1", "obs_stride = 0"),
                    r"obs_stride must be >= 1")


class TestRoundTrip:
    @pytest.mark.parametrize("builder", [dw_experiment, l63_experiment,
                                         l96_experiment])
    def test_reference_experiments(self, builder):
        cfg = builder()
        assert parse_config(serialize_config(cfg)) == cfg

    def test_off_default_method_options(self):
        cfg = ExperimentConfig(
            model="l63", n_steps=50, obs_components=(0, 2), obs_stride=5,
            obs_noise_variance=0.3, sigma_m=2.5, replicates=3, base_seed=9,
            clim_steps=1000, clim_chains=4, spinup_time=1.5,
            methods=(
                MethodSpec("a", "shadow", rho=0.5, r=0.9, alpha=8.0,
                           max_iterations=12),
                MethodSpec("b", "w4dvar", init="background", max_iterations=7),
                MethodSpec("c", "newton"),
                MethodSpec("d", "w4dvar", rho=0.3),
            ))
        assert parse_config(serialize_config(cfg)) == cfg

    def test_serialized_components_are_one_based(self):
        text = serialize_config(l96_experiment())
        assert "obs_components = 1,6,11" in text

    def test_file_round_trip(self, tmp_path):
        cfg = dw_experiment()
        path = tmp_path / "exp.cfg"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(tmp_path / "absent.cfg")

    def test_load_reports_path_in_errors(self, tmp_path):
        path = tmp_path / "broken.cfg"
        path.write_text("model = dw\nn_steps = many\n")
        with pytest.raises(ConfigError, match=r"broken\.cfg:2"):
            load_config(path)
