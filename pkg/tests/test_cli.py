"""Config parsing, subcommand outputs, exit codes, and byte determinism."""

import csv
import subprocess
import sys

import numpy as np
import pytest

from riskql.cli import ExperimentConfig, load_config, main, parse_config
from riskql.errors import ConfigError


def read_schema_csv(path):
    """(schema_line, header, rows) from one of our annotated CSVs."""
    text = path.read_bytes().decode("utf-8")
    lines = text.split("\r\n")
    body = [row for row in csv.reader(lines[1:]) if row]
    return lines[0], body[0], body[1:]


def write_config(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


FAST = """
eval_episodes = 50
diag_episodes = 60
qdt_episodes = 100
"""


class TestParseConfig:
    def test_full_round_trip(self):
        text = """
        # benchmark override
        seed = 7
        r1 = 0.18          # drift of the first asset
        normalize_q = true
        policies = baseline, oracle
        sweep_offsets = -0.1, 0.0, 0.1
        init_mode = optimal
        """
        values = parse_config(text)
        assert values == {
            "seed": 7,
            "r1": 0.18,
            "normalize_q": True,
            "policies": ("baseline", "oracle"),
            "sweep_offsets": (-0.1, 0.0, 0.1),
            "init_mode": "optimal",
        }

    def test_unknown_key_reports_line_number(self):
        with pytest.raises(ConfigError, match="line 2: unknown key 'learning_rate'"):
            parse_config("seed = 1\nlearning_rate = 0.5\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="line 3: duplicate key 'seed'"):
            parse_config("seed = 1\n\nseed = 2\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="line 1: expected 'key = value'"):
            parse_config("just some words\n")

    def test_bad_value_reports_key(self):
        with pytest.raises(ConfigError, match="bad value for 'episodes'"):
            parse_config("episodes = soon\n")
        with pytest.raises(ConfigError, match="bad value for 'normalize_q'"):
            parse_config("normalize_q = maybe\n")

    def test_comments_and_blanks_ignored(self):
        assert parse_config("\n   \n# seed = 9\n") == {}


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg == ExperimentConfig()

    def test_seed_override_wins(self, tmp_path):
        path = write_config(tmp_path, "seed = 3\n")
        assert load_config(path).seed == 3
        assert load_config(path, seed_override=11).seed == 11

    def test_missing_file_is_a_config_error(self):
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config("/nonexistent/exp.cfg")

    @pytest.mark.parametrize(
        "line",
        [
            "sigma1 = 0.0",
            "episodes = 0",
            "tau = -0.1",
            "lr_theta = -1.0",
            "init_mode = warm",
            "init_relative = 1.5",
            "policies = baseline, bogus",
            "sweep_params = theta_Px, theta_Pzz",
            "defect = q_flip",
            "utility = quadratic",
        ],
    )
    def test_validation_rejects(self, tmp_path, line):
        path = write_config(tmp_path, line + "\n")
        with pytest.raises(ConfigError):
            load_config(path)


class TestOracleCommand:
    def test_printed_constants_round_to_reported_values(self, tmp_path):
        assert main(["--out", str(tmp_path), "oracle"]) == 0
        schema, header, rows = read_schema_csv(tmp_path / "oracle_params.csv")
        assert schema == "# riskql-csv oracle-params v1"
        assert header == ["name", "value"]
        values = {name: float(v) for name, v in rows}
        rounded = {k: round(v, 4) for k, v in values.items()}
        assert rounded["Px"] == 0.1910
        assert rounded["Pxx"] == 0.0030
        assert rounded["Pnl"] == 0.2049
        assert rounded["psi_a0"] == 0.5902
        assert rounded["psi_a1"] == -4.0984
        assert rounded["psi_sv"] == 0.0244
        assert rounded["psi_c1e"] == -0.2189
        assert rounded["psi_c2e"] == -0.0220
        assert values["theta_Px"] == values["Px"]

    def test_table_layout(self, tmp_path):
        main(["--out", str(tmp_path), "oracle"])
        schema, header, rows = read_schema_csv(tmp_path / "oracle_table.csv")
        assert schema == "# riskql-csv oracle-table v1"
        assert header == ["t", "x", "a_star", "j_star", "q_at_a_minus_half", "q_at_a_plus_half"]
        assert len(rows) == 20
        for row in rows:
            assert float(row[4]) < 0.0 and float(row[5]) < 0.0

    def test_equal_drifts_zero_out_pnl(self, tmp_path):
        cfg = write_config(tmp_path, "r1 = 0.2\nr2 = 0.2\n")
        main(["--config", cfg, "--out", str(tmp_path), "oracle"])
        _, _, rows = read_schema_csv(tmp_path / "oracle_params.csv")
        values = {name: float(v) for name, v in rows}
        assert values["Pnl"] == 0.0
        assert values["psi_a1"] == 0.0

    def test_rerun_is_byte_identical_and_atomic(self, tmp_path):
        out = tmp_path / "a"
        main(["--out", str(out), "oracle"])
        first = (out / "oracle_params.csv").read_bytes()
        assert first.splitlines(keepends=True)[0].endswith(b"\r\n")
        # clobber, rerun, and expect the original bytes back with no temp file
        (out / "oracle_params.csv").write_text("sentinel")
        assert main(["--out", str(out), "oracle"]) == 0
        assert (out / "oracle_params.csv").read_bytes() == first
        assert list(out.glob("*.tmp")) == []


class TestTrainCommand:
    def test_zero_learning_rates_pin_the_optimum(self, tmp_path):
        cfg = write_config(
            tmp_path,
            FAST + "num_steps = 50\nlr_theta = 0.0\nlr_psi = 0.0\ninit_mode = optimal\nepisodes = 5\n",
        )
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out", str(out), "train"]) == 0
        schema, header, rows = read_schema_csv(out / "trained_params.csv")
        assert schema == "# riskql-csv trained-params v1"
        assert header == ["name", "value", "optimal", "rel_error"]
        assert len(rows) == 8
        for row in rows:
            assert float(row[3]) == 0.0
            assert row[1] == row[2]

    def test_log_layout_and_seed_determinism(self, tmp_path):
        cfg = write_config(tmp_path, FAST + "num_steps = 50\nepisodes = 12\n")
        out1, out2, out3 = tmp_path / "r1", tmp_path / "r2", tmp_path / "r3"
        main(["--config", cfg, "--out", str(out1), "train"])
        main(["--config", cfg, "--out", str(out2), "train"])
        main(["--config", cfg, "--seed", "5", "--out", str(out3), "train"])
        b1 = (out1 / "training_log.csv").read_bytes()
        assert b1 == (out2 / "training_log.csv").read_bytes()
        assert b1 != (out3 / "training_log.csv").read_bytes()
        schema, header, rows = read_schema_csv(out1 / "training_log.csv")
        assert schema == "# riskql-csv training-log v1"
        assert header[:2] == ["episode", "theta_Px"]
        assert header[-3:] == ["delta_norm_theta", "delta_norm_psi", "terminal_payoff"]
        assert len(rows) == 12
        assert [int(r[0]) for r in rows] == list(range(12))

    def test_divergent_run_exits_three(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, FAST + "num_steps = 50\nepisodes = 20\nlr_theta = 1e9\ninit_mode = optimal\n"
        )
        assert main(["--config", cfg, "--out", str(tmp_path), "train"]) == 3
        assert "numeric divergence" in capsys.readouterr().err


class TestEvaluateCommand:
    def test_summary_identity_and_curves(self, tmp_path):
        cfg = write_config(tmp_path, FAST + "num_steps = 50\npolicies = baseline, oracle\n")
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out", str(out), "evaluate"]) == 0

        schema, header, rows = read_schema_csv(out / "evaluation_summary.csv")
        assert schema == "# riskql-csv evaluation-summary v1"
        assert header == [
            "policy", "mean_return", "std_return", "mv_objective", "episodes", "mv_identity_error",
        ]
        assert [r[0] for r in rows] == ["baseline", "oracle"]
        for row in rows:
            assert int(row[4]) == 50
            assert abs(float(row[5])) <= 1e-12

        schema, header, curves = read_schema_csv(out / "evaluation_curves.csv")
        assert schema == "# riskql-csv evaluation-curves v1"
        assert header == [
            "time", "baseline_mean_return", "baseline_mv", "oracle_mean_return", "oracle_mv",
        ]
        assert len(curves) == 51
        assert float(curves[0][0]) == 0.0 and float(curves[-1][0]) == 1.0
        # the last curve sample is the summary row
        base = rows[0]
        assert float(curves[-1][1]) == pytest.approx(float(base[1]), abs=1e-12)
        assert float(curves[-1][2]) == pytest.approx(float(base[3]), abs=1e-12)

    def test_baseline_mean_matches_closed_form_chain(self, tmp_path):
        cfg = write_config(
            tmp_path, "num_steps = 200\neval_episodes = 4000\npolicies = baseline\n"
        )
        out = tmp_path / "out"
        main(["--config", cfg, "--out", str(out), "evaluate"])
        _, _, rows = read_schema_csv(out / "evaluation_summary.csv")
        mean, std = float(rows[0][1]), float(rows[0][2])
        dt = 1.0 / 200
        mu = 0.5 * 0.15 + 0.5 * 0.25
        s2 = 0.25 * 0.1**2 + 0.25 * 0.12**2
        exact = (1 + mu * dt) ** 200
        assert mean + 1.0 == pytest.approx(exact, abs=4 * std / np.sqrt(4000))


class TestSweepCommand:
    def test_relative_offsets_recorded(self, tmp_path):
        cfg = write_config(
            tmp_path,
            FAST
            + "num_steps = 50\nsweep_episodes = 40\n"
            + "sweep_params = psi_a0\nsweep_offsets = -0.1, 0.0, 0.1\n",
        )
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out", str(out), "sweep"]) == 0
        schema, header, rows = read_schema_csv(out / "sweep.csv")
        assert schema == "# riskql-csv sweep v1"
        assert header == ["parameter", "offset", "mean_update", "stderr"]
        assert [(r[0], float(r[1])) for r in rows] == [
            ("psi_a0", -0.1), ("psi_a0", 0.0), ("psi_a0", 0.1),
        ]
        assert all(float(r[3]) > 0 for r in rows)

    def test_all_expands_to_every_parameter(self, tmp_path):
        cfg = write_config(
            tmp_path, FAST + "num_steps = 50\nsweep_offsets = 0.0\nsweep_episodes = 10\n"
        )
        out = tmp_path / "out"
        main(["--config", cfg, "--out", str(out), "sweep"])
        _, _, rows = read_schema_csv(out / "sweep.csv")
        assert [r[0] for r in rows] == [
            "theta_Px", "theta_Pxx", "theta_Pnl",
            "psi_a0", "psi_a1", "psi_sv", "psi_c1e", "psi_c2e",
        ]


class TestDiagnoseCommand:
    def test_clean_pair_passes_and_writes_csv(self, tmp_path, capsys):
        cfg = write_config(tmp_path, FAST + "num_steps = 200\n")
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out", str(out), "--assert", "diagnose"]) == 0
        assert "checks passed" in capsys.readouterr().out
        schema, header, rows = read_schema_csv(out / "diagnostics.csv")
        assert schema == "# riskql-csv diagnostics v1"
        assert header == ["test", "estimate", "stderr", "z", "threshold", "passed"]
        assert all(r[5] == "True" for r in rows)
        names = [r[0] for r in rows]
        assert "hjb_max_residual" in names
        assert "martingale_gibbs_one" in names
        assert "qdt_expansion_gap" in names

    def test_planted_defect_fails_under_assert(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path, FAST + "num_steps = 200\ndefect = q_shift\ndefect_size = 0.1\n"
        )
        out = tmp_path / "out"
        assert main(["--config", cfg, "--out", str(out), "--assert", "diagnose"]) == 4
        assert "checks failed" in capsys.readouterr().out
        _, _, rows = read_schema_csv(out / "diagnostics.csv")
        failed = {r[0] for r in rows if r[5] == "False"}
        assert "generator_max_residual" in failed
        assert any(name.startswith("martingale_") for name in failed)

    def test_defect_without_assert_still_exits_zero(self, tmp_path):
        cfg = write_config(
            tmp_path, FAST + "num_steps = 200\ndefect = c1_scale\ndefect_size = 1.05\n"
        )
        assert main(["--config", cfg, "--out", str(tmp_path), "diagnose"]) == 0


class TestOceCommand:
    def test_cvar_enumeration(self, tmp_path, capsys):
        samples = tmp_path / "w.txt"
        samples.write_text("1\n2\n3\n4\n")
        cfg = write_config(
            tmp_path, f"utility = cvar\nutility_beta = 0.5\nsamples = {samples}\n"
        )
        assert main(["--config", cfg, "oce"]) == 0
        out = capsys.readouterr().out
        assert "oce 1.5" in out
        assert "eta_star 2" in out

    def test_missing_samples_key(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "utility = cvar\n")
        assert main(["--config", cfg, "oce"]) == 2
        assert "samples" in capsys.readouterr().err

    def test_unreadable_samples_file(self, tmp_path):
        cfg = write_config(tmp_path, "samples = /nonexistent/w.txt\n")
        assert main(["--config", cfg, "oce"]) == 2


class TestMainPlumbing:
    def test_unknown_config_file_exits_two(self, tmp_path, capsys):
        assert main(["--config", "/nonexistent.cfg", "--out", str(tmp_path), "oracle"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_thread_count_exits_two(self, tmp_path):
        assert main(["--threads", "0", "--out", str(tmp_path), "oracle"]) == 2

    def test_console_script_smoke(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "riskql.cli", "--out", str(tmp_path), "oracle"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "oracle_params.csv" in proc.stdout
        assert (tmp_path / "oracle_table.csv").exists()
