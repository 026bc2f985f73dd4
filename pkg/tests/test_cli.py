"""Command-line behavior: resolution, artifacts, exit codes, determinism."""

import json

import pytest
from click.testing import CliRunner

from statqec.cli import main
from statqec.codes import build_repetition_code, code_to_json

HEADER = "p_bf,p_m,L,t_f,trials,failures,rate,err_low,err_high,decoder,seed"


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args])


class TestMemory:
    def test_writes_csv_and_figure(self, runner, tmp_path):
        out = tmp_path / "mem.csv"
        r = invoke(runner, "memory", "--L", 5, "--p-bf", 0.05, "--p-bf", 0.2,
                   "--t-f", 2, "--trials", 50, "--seed", 7, "--out", out)
        assert r.exit_code == 0, r.output
        lines = out.read_text().splitlines()
        assert lines[0] == HEADER
        assert len(lines) == 3
        png = tmp_path / "mem.png"
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_stdout_fallback_and_stderr_logs(self, runner):
        r = invoke(runner, "memory", "--L", 5, "--trials", 20, "--seed", 1)
        assert r.exit_code == 0
        assert r.stdout.startswith(HEADER)
        assert "rate=" in r.stderr
        assert "rate=" not in r.stdout

    def test_no_figure_flag(self, runner, tmp_path):
        out = tmp_path / "mem.csv"
        r = invoke(runner, "memory", "--L", 5, "--p-bf", 0.05, "--p-bf", 0.2,
                   "--trials", 20, "--seed", 1, "--out", out, "--no-figure")
        assert r.exit_code == 0
        assert not (tmp_path / "mem.png").exists()

    def test_json_lines_format(self, runner):
        r = invoke(runner, "memory", "--L", 5, "--trials", 20, "--seed", 1,
                   "--format", "json-lines")
        row = json.loads(r.stdout.splitlines()[0])
        assert row["L"] == 5
        assert row["seed"] == 1
        assert row["trials"] == 20

    def test_rerun_is_byte_identical(self, runner, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            r = invoke(runner, "memory", "--L", 7, "--p-bf", 0.08, "--t-f", 3,
                       "--trials", 150, "--seed", 13, "--out", out,
                       "--no-figure")
            assert r.exit_code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_thread_count_does_not_change_artifact(self, runner, tmp_path):
        outs = []
        for threads in (1, 2, 3):
            out = tmp_path / f"t{threads}.csv"
            r = invoke(runner, "memory", "--L", 7, "--p-bf", 0.08, "--t-f", 3,
                       "--trials", 150, "--seed", 13, "--threads", threads,
                       "--out", out, "--no-figure")
            assert r.exit_code == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1] == outs[2]


class TestConfigResolution:
    def test_flags_beat_config_file(self, runner, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"L": 5, "trials": 30, "seed": 2,
                                   "p_bf": [0.02]}))
        r = invoke(runner, "memory", "--config", cfg, "--trials", 10)
        assert r.exit_code == 0
        row = r.stdout.splitlines()[1].split(",")
        assert row[0] == "0.02"
        assert row[2] == "5"
        assert row[4] == "10"

    def test_config_supplies_seed(self, runner, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"L": 5, "trials": 10, "seed": 2}))
        r = invoke(runner, "memory", "--config", cfg)
        assert r.exit_code == 0

    def test_unknown_config_key_rejected(self, runner, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"nope": 1, "seed": 2}))
        r = invoke(runner, "memory", "--config", cfg)
        assert r.exit_code == 2
        assert "unknown config key" in r.stderr

    def test_config_syntax_error_located(self, runner, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text('{"seed": 2,\n "trials": }')
        r = invoke(runner, "memory", "--config", cfg)
        assert r.exit_code == 2
        assert "line 2" in r.stderr


class TestErrorExits:
    def test_missing_seed(self, runner):
        r = invoke(runner, "memory", "--L", 5, "--trials", 5)
        assert r.exit_code == 2
        assert "--seed is required" in r.stderr

    def test_bad_format(self, runner):
        r = invoke(runner, "memory", "--L", 5, "--trials", 5, "--seed", 1,
                   "--format", "xml")
        assert r.exit_code == 2

    def test_code_file_not_found(self, runner):
        r = invoke(runner, "memory", "--code", "/tmp/does-not-exist.json",
                   "--trials", 5, "--seed", 1)
        assert r.exit_code == 2
        assert "not found" in r.stderr

    def test_malformed_code_file_reports_line(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"n": 3,\n "z_checks": [[0, 1]\n}')
        r = invoke(runner, "memory", "--code", bad, "--trials", 5, "--seed", 1)
        assert r.exit_code == 2
        assert "line" in r.stderr

    def test_code_file_missing_field(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"n": 3, "z_checks": [[0, 1], [1, 2]]}))
        r = invoke(runner, "memory", "--code", bad, "--trials", 5, "--seed", 1)
        assert r.exit_code == 2
        assert "missing field" in r.stderr

    def test_oversized_code_exits_3(self, runner, tmp_path):
        big = tmp_path / "big.json"
        big.write_text(code_to_json(build_repetition_code(30)))
        r = invoke(runner, "bounds", "--code", big, "--p-bf", 0.01, "--t-f", 2)
        assert r.exit_code == 3
        assert "unsupported size" in r.stderr

    def test_t_f_list_rejected_outside_fluxthread(self, runner, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"t_f": [2, 3], "seed": 1, "trials": 5}))
        r = invoke(runner, "memory", "--L", 5, "--config", cfg)
        assert r.exit_code == 2
        assert "single --t-f" in r.stderr


class TestFluxthread:
    def test_runs_without_p_bf(self, runner):
        r = invoke(runner, "fluxthread", "--L", 5, "--p-m", 0.2, "--t-f", 2,
                   "--trials", 30, "--seed", 4)
        assert r.exit_code == 0, r.output
        assert r.stdout.startswith(HEADER)

    def test_rejects_explicit_bitflips(self, runner):
        r = invoke(runner, "fluxthread", "--L", 5, "--p-bf", 0.05, "--p-m", 0.2,
                   "--t-f", 2, "--trials", 5, "--seed", 4)
        assert r.exit_code == 2
        assert "bitflips off" in r.stderr

    def test_explicit_zero_allowed(self, runner):
        r = invoke(runner, "fluxthread", "--L", 5, "--p-bf", 0.0, "--p-m", 0.2,
                   "--t-f", 2, "--trials", 5, "--seed", 4)
        assert r.exit_code == 0


class TestSweep:
    def test_grid_from_config(self, runner, tmp_path):
        cfg = tmp_path / "grid.json"
        cfg.write_text(json.dumps({
            "lengths": [5, 7], "p_bf_values": [0.02, 0.1], "p_m_values": [0.0],
            "t_f": 2, "n_trials": 20, "seed": 3}))
        r = invoke(runner, "sweep", "--config", cfg)
        assert r.exit_code == 0, r.output
        lines = r.stdout.splitlines()
        assert len(lines) == 5
        assert {row.split(",")[2] for row in lines[1:]} == {"5", "7"}

    def test_boundary_mode_writes_sidecar(self, runner, tmp_path):
        cfg = tmp_path / "scan.json"
        cfg.write_text(json.dumps({
            "length": 9, "p_bf_columns": [0.15],
            "p_m_rows": [0.0, 0.1, 0.2, 0.3, 0.4],
            "probe_trials": 40, "report_trials": 80, "bisect_steps": 1,
            "window_rounds": 6, "seed": 11}))
        out = tmp_path / "scan.csv"
        r = invoke(runner, "sweep", "--mode", "boundary", "--config", cfg,
                   "--out", out)
        assert r.exit_code == 0, r.output
        side = json.loads((tmp_path / "scan.boundary.json").read_text())
        assert side["config"]["length"] == 9
        assert len(side["boundary"]) == 1
        assert out.read_text().startswith(HEADER)

    def test_grid_needs_builtin_family(self, runner, tmp_path):
        code = tmp_path / "code.json"
        code.write_text(code_to_json(build_repetition_code(5)))
        r = invoke(runner, "sweep", "--code", code, "--trials", 5, "--seed", 1)
        assert r.exit_code == 2


class TestBounds:
    def test_json_payload(self, runner):
        r = invoke(runner, "bounds", "--code", "repetition", "--L", 5,
                   "--p-bf", 0.01, "--p-m", 0.02, "--t-f", 3)
        assert r.exit_code == 0
        payload = json.loads(r.stdout)
        assert payload["config"]["code"] == "repetition"
        b = payload["bounds"]["0.01"]
        assert set(b) == {"memory_failure", "hardwall_stability",
                          "two_puncture", "single_flux", "double_flux"}
        assert b["memory_failure"]["epsilon"] > 0

    def test_no_seed_needed(self, runner):
        r = invoke(runner, "bounds", "--L", 3, "--p-bf", 0.01, "--t-f", 2)
        assert r.exit_code == 0


class TestVerify:
    def test_all_checks_pass(self, runner):
        r = invoke(runner, "verify")
        assert r.exit_code == 0, r.output
        lines = r.stdout.strip().splitlines()
        assert len(lines) == 6
        assert all(" PASS " in line for line in lines)
        assert "FAIL" not in r.stdout

    def test_table_goes_to_file_too(self, runner, tmp_path):
        out = tmp_path / "verify.txt"
        r = invoke(runner, "verify", "--out", out)
        assert r.exit_code == 0
        assert out.read_text() == r.stdout
