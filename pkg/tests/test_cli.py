import json

import pytest

from kpilab import cli


class TestParse:
    def test_defaults(self, monkeypatch):
        monkeypatch.delenv(cli.OUTPUT_ENV, raising=False)
        cfg = cli.parse_config(["moments"])
        assert cfg.eps == 0.1 and cfg.omega == [1.0, -1.0]
        assert cfg.output == "kpilab-output"
        assert cfg.exponents == 0.1

    def test_alpha_beta_pair(self):
        cfg = cli.parse_config(["moments", "--beta", "1.2"])
        assert cfg.exponents == (0.6, 1.2)

    def test_setup_defaults_depend_on_experiment(self):
        scaling = cli.parse_config(["gronwall"]).setup
        conserving = cli.parse_config(["conserve"]).setup
        assert scaling.points_per_wavelength == 4.0 and scaling.dt_cap == float("inf")
        assert conserving.points_per_wavelength == 8.0 and conserving.dt_cap == 1e-3
        explicit = cli.parse_config(["gronwall", "--dt-cap", "0.01", "--points-per-wavelength", "6"]).setup
        assert (explicit.dt_cap, explicit.points_per_wavelength) == (0.01, 6.0)

    def test_env_var_sets_output(self, monkeypatch, tmp_path):
        monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
        assert cli.parse_config(["moments"]).output == str(tmp_path)
        assert cli.parse_config(["moments", "-o", "elsewhere"]).output == "elsewhere"


class TestConfigFile:
    def test_flags_override_file(self, tmp_path):
        f = tmp_path / "run.cfg"
        f.write_text("# comment\neps = 0.2\nlambda = 8, 16, 32, 64\nc-factor = 5\n")
        cfg = cli.parse_config(["moments", "--config", str(f), "--eps", "0.15"])
        assert cfg.eps == 0.15
        assert cfg.lambdas == [8.0, 16.0, 32.0, 64.0]
        assert cfg.c_factor == 5

    def test_unknown_key_is_usage_error(self, tmp_path, capsys):
        f = tmp_path / "run.cfg"
        f.write_text("nonsense = 1\n")
        assert cli.main(["moments", "--config", str(f)]) == cli.EXIT_USAGE


class TestExitCodes:
    def test_unknown_experiment(self, capsys):
        assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
        assert "unknown experiment" in capsys.readouterr().err

    def test_bad_flag(self, capsys):
        assert cli.main(["moments", "--no-such-flag"]) == cli.EXIT_USAGE

    def test_alpha_constraint(self, capsys):
        assert cli.main(["moments", "--alpha", "0.4", "--beta", "1.0"]) == cli.EXIT_CONSTRAINT
        assert "1/2<α" in capsys.readouterr().err

    def test_omega_constraint(self, capsys):
        assert cli.main(["moments", "--omega", "2,-1"]) == cli.EXIT_CONSTRAINT

    def test_lambda_constraint(self, capsys):
        assert cli.main(["moments", "--lambda", "0.5"]) == cli.EXIT_CONSTRAINT


class TestDispatch:
    def test_moments_run_writes_results(self, tmp_path, capsys):
        out = tmp_path / "m"
        assert cli.main(["moments", "--lambda", "2,4", "-o", str(out)]) == cli.EXIT_OK
        data = json.loads((out / "manifest.json").read_text())
        assert data["config"]["experiment"] == "moments"
        assert "-> pass" in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        for name in ("a", "b"):
            cli.main(["moments", "--lambda", "2,4", "-o", str(tmp_path / name)])
        csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
        assert csvs
        for c in csvs:
            assert (tmp_path / "a" / c).read_bytes() == (tmp_path / "b" / c).read_bytes()

    def test_failing_verdict_exit_code(self, tmp_path, capsys):
        # the plane-wave orbit check fails at the default time
        assert cli.main(["linear", "-o", str(tmp_path)]) == cli.EXIT_FAIL
