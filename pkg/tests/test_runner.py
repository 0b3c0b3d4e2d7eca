import json
import textwrap

import numpy as np
import pytest

from diffnet import cli, runner
from diffnet.errors import ConfigError

BASE_CONFIG = textwrap.dedent(
    """
    # tiny experiment used across runner tests
    topology.kind = cycle
    topology.K = 4
    problem.family = ls
    problem.M = 2
    problem.seed = 5
    problem.noise_samples = 100000
    methods = diffusion exact_diffusion
    mu = 0.01
    iterations = 300
    runs = 3
    seed = 42
    """
)


def make_config(text=BASE_CONFIG, **overrides):
    raw = runner.parse_config_text(text)
    raw.update({k: str(v) for k, v in overrides.items()})
    lines = [f"{k} = {v}" for k, v in raw.items()]
    joined = "\n".join(lines)
    return runner.config_from_mapping(raw, raw_text=joined)


class TestConfigParsing:
    def test_round_trip(self):
        cfg = make_config()
        assert cfg.topology_kind == "cycle"
        assert cfg.K == 4
        assert cfg.methods == ["diffusion", "exact_diffusion"]
        assert cfg.mus == {"diffusion": 0.01, "exact_diffusion": 0.01}

    def test_missing_key_named(self):
        raw = runner.parse_config_text(BASE_CONFIG)
        del raw["iterations"]
        with pytest.raises(ConfigError, match="iterations"):
            runner.config_from_mapping(raw)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="topology.knid"):
            make_config(**{"topology.knid": "cycle"})

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            runner.parse_config_text("a.b = 1\na.b = 2\nmethods = diffusion")

    def test_unknown_method_rejected(self):
        with pytest.raises(ConfigError, match="newton"):
            make_config(methods="newton")

    def test_per_method_step_size(self):
        cfg = make_config(**{"method.exact_diffusion.mu": "0.02"})
        assert cfg.mus["diffusion"] == 0.01
        assert cfg.mus["exact_diffusion"] == 0.02

    def test_missing_step_size(self):
        raw = runner.parse_config_text(BASE_CONFIG)
        del raw["mu"]
        with pytest.raises(ConfigError, match="diffusion"):
            runner.config_from_mapping(raw)


class TestExecute:
    def test_deterministic_output_bytes(self, tmp_path):
        cfg = make_config()
        runner.execute(cfg, output_prefix=str(tmp_path / "a"))
        runner.execute(cfg, output_prefix=str(tmp_path / "b"))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        ja = json.loads((tmp_path / "a.json").read_text())
        jb = json.loads((tmp_path / "b.json").read_text())
        assert ja == jb

    def test_methods_paired_on_identical_streams(self, tmp_path):
        # running a method alone must reproduce its trajectory from the
        # two-method experiment: streams depend only on (seed, run index)
        both = runner.execute(make_config())
        solo = runner.execute(make_config(methods="exact_diffusion"))
        assert np.array_equal(
            both.trajectories["exact_diffusion"].values,
            solo.trajectories["exact_diffusion"].values,
        )

    def test_exact_diffusion_forms_agree_in_execute(self):
        res = runner.execute(make_config(methods="exact_diffusion exact_diffusion_pd"))
        a = res.trajectories["exact_diffusion"].values
        b = res.trajectories["exact_diffusion_pd"].values
        assert np.abs(a - b).max() <= 1e-9

    def test_divergence_isolated_per_method(self):
        cfg = make_config(**{"method.exact_diffusion.mu": "50.0"})
        res = runner.execute(cfg)
        assert "exact_diffusion" in res.failures
        assert "diffusion" in res.trajectories
        assert "error" in res.summary["methods"]["exact_diffusion"]

    def test_summary_contents(self, tmp_path):
        res = runner.execute(make_config(), output_prefix=str(tmp_path / "s"))
        summary = json.loads((tmp_path / "s.json").read_text())
        for key in ("config_digest", "lambda", "gap", "nu", "delta", "b_sq",
                    "sigma_sq", "msd_theory_db", "regime", "methods"):
            assert key in summary
        for m in ("diffusion", "exact_diffusion"):
            assert "steady_state_db" in summary["methods"][m]
            assert "stderr_db" in summary["methods"][m]
        assert summary["lambda"] == res.comb.lam

    def test_parallel_matches_serial(self, tmp_path, monkeypatch):
        cfg = make_config(runs=4)
        runner.execute(cfg, output_prefix=str(tmp_path / "serial"))
        monkeypatch.setenv(runner.PARALLELISM_ENV, "2")
        runner.execute(cfg, output_prefix=str(tmp_path / "par"))
        assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "par.csv").read_bytes()

    def test_theory_can_be_disabled(self):
        res = runner.execute(make_config(emit_theory="false"))
        assert res.report is None
        assert res.summary["msd_theory_db"] is None

    def test_sparse_grid_regime_label(self):
        # the regime prediction depends on the instance and topology only,
        # so a token simulation length suffices to check the label
        text = textwrap.dedent(
            """
            topology.kind = grid
            topology.K = 100
            problem.family = ls
            problem.M = 10
            problem.seed = 5
            problem.noise_samples = 100000
            methods = diffusion exact_diffusion
            mu = 0.005
            iterations = 10
            runs = 2
            seed = 1
            """
        )
        res = runner.execute(make_config(text))
        assert res.summary["regime"] == "exact_diffusion"


class TestSweep:
    def test_mu_sweep_writes_points(self, tmp_path):
        cfg = make_config()
        results = runner.sweep(cfg, "mu", ["0.005", "0.01"], output_prefix=str(tmp_path / "sw"))
        assert len(results) == 2
        assert (tmp_path / "sw_mu_0.005.csv").exists()
        assert (tmp_path / "sw_mu_0.01.csv").exists()
        payload = json.loads((tmp_path / "sw_sweep.json").read_text())
        assert payload["vary"] == "mu"
        assert len(payload["points"]) == 2
        assert results[0].config.mus["diffusion"] == 0.005

    def test_k_sweep_rebuilds_problem(self, tmp_path):
        cfg = make_config()
        results = runner.sweep(cfg, "K", ["4", "6"], output_prefix=str(tmp_path / "swk"))
        assert results[0].problem.K == 4
        assert results[1].problem.K == 6

    def test_bad_axis(self):
        with pytest.raises(ConfigError):
            runner.sweep(make_config(), "rho", ["0.1"])


class TestCli:
    def write_config(self, tmp_path, **overrides):
        cfg_path = tmp_path / "exp.cfg"
        raw = runner.parse_config_text(BASE_CONFIG)
        raw.update({k: str(v) for k, v in overrides.items()})
        cfg_path.write_text("\n".join(f"{k} = {v}" for k, v in raw.items()) + "\n")
        return cfg_path

    def test_run_roundtrip(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path)
        code = cli.main(["run", str(cfg_path), "--output", str(tmp_path / "out")])
        assert code == 0
        assert (tmp_path / "out.csv").exists()
        assert (tmp_path / "out.json").exists()
        assert "steady-state" in capsys.readouterr().out

    def test_run_without_output_is_usage_error(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path)
        assert cli.main(["run", str(cfg_path)]) == 1

    def test_run_missing_key_is_usage_error(self, tmp_path, capsys):
        cfg_path = tmp_path / "broken.cfg"
        cfg_path.write_text("topology.kind = cycle\n")
        assert cli.main(["run", str(cfg_path), "--output", str(tmp_path / "x")]) == 1
        assert "error" in capsys.readouterr().err

    def test_run_divergence_exit_code(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path, mu="50.0")
        assert cli.main(["run", str(cfg_path), "--output", str(tmp_path / "d")]) == 2

    def test_unknown_flag_exit_code(self, capsys):
        with pytest.raises(SystemExit) as info:
            cli.main(["topology", "--kind", "cycle", "--K", "8", "--frobnicate"])
        assert info.value.code == 1

    def test_topology_report_and_gap_scaling(self, capsys):
        assert cli.main(["topology", "--kind", "cycle", "--K", "20"]) == 0
        out20 = capsys.readouterr().out
        assert cli.main(["topology", "--kind", "cycle", "--K", "40"]) == 0
        out40 = capsys.readouterr().out

        def grab(out, key):
            for line in out.splitlines():
                if line.startswith(key + " ="):
                    return float(line.split("=")[1])
            raise AssertionError(f"{key} not found in {out!r}")

        gap20, gap40 = grab(out20, "gap"), grab(out40, "gap")
        assert 3.6 <= gap20 / gap40 <= 4.4
        assert grab(out20, "K") == 20

    def test_topology_csv_matrix(self, capsys):
        assert cli.main(["topology", "--kind", "complete", "--K", "3", "--csv"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        matrix = np.array([[float(x) for x in row.split(",")] for row in lines[-3:]])
        assert np.allclose(matrix, 1.0 / 3.0)

    def test_theory_json(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path)
        assert cli.main(["theory", str(cfg_path), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert "msd_theory_db" in payload
        assert payload["regime"] in ("diffusion", "exact_diffusion", "similar")

    def test_sweep_cli(self, tmp_path, capsys):
        cfg_path = self.write_config(tmp_path)
        code = cli.main([
            "sweep", str(cfg_path), "--vary", "mu", "--values", "0.005", "0.01",
            "--output", str(tmp_path / "sweep"),
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "0.005" in out and "0.01" in out
