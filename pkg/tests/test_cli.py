"""End-to-end tests of the command-line interface.

Runs the dispatcher in-process (same code path as the console script)
and checks config handling, artifact layout, reproducibility from the
echoed config, and the documented exit codes.
"""

import json
import math

import numpy as np
import pytest

from alfven.cli import (
    CliError,
    SERIES_HEADER,
    parse_and_dispatch,
    read_config_file,
    resolve_config,
)
from alfven.harness import load_csv

FAST_SIM = [
    "--set", "n_points=32", "--set", "box_length=25.132741228718345",
    "--set", "eps=0.2", "--set", "mu=0.5", "--set", "nu=0.25",
    "--set", "m=3", "--set", "dt=0.01", "--set", "t_end=0.2",
    "--set", "seed=11",
]


def run_cli(*argv):
    return parse_and_dispatch(list(argv))


class TestConfigParsing:
    def test_file_with_comments_and_blanks(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# a comment\n\nn_points = 64\n dt = auto \n")
        entries = read_config_file(str(cfg))
        assert entries == {"n_points": ("64", 3), "dt": ("auto", 4)}

    def test_missing_equals_reports_line(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_points = 64\nbogus line\n")
        with pytest.raises(CliError, match=r"run\.cfg:2"):
            read_config_file(str(cfg))

    def test_unknown_key_reports_location_and_alternatives(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("n_pionts = 64\n")
        with pytest.raises(CliError, match=r"run\.cfg:1.*n_pionts.*allowed"):
            resolve_config("simulate", str(cfg), [])

    def test_study_keys_rejected_for_plain_runs(self):
        with pytest.raises(CliError, match="eps_list"):
            resolve_config("simulate", None, ["eps_list=0.5,0.25"])
        values = resolve_config("scaling", None, ["eps_list=0.5,0.25"])
        assert values["eps_list"] == (0.5, 0.25)

    def test_set_overrides_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("eps = 0.5\nseed = 1\n")
        values = resolve_config("simulate", str(cfg), ["eps=0.125"])
        assert values == {"eps": 0.125, "seed": 1}

    def test_typed_values(self):
        values = resolve_config(
            "limit", None,
            ["dt=auto", "snapshot_times=0.0,0.5,1.0", "support_radius=none",
             "dt_list=none", "name=none", "kind=limit-linear"],
        )
        assert values["dt"] == "auto"
        assert values["snapshot_times"] == (0.0, 0.5, 1.0)
        assert values["support_radius"] is None
        assert values["dt_list"] is None
        assert values["name"] is None

    def test_bad_value_names_its_source(self):
        with pytest.raises(CliError, match=r"--set eps=fast.*bad value"):
            resolve_config("simulate", None, ["eps=fast"])

    def test_malformed_set_flag(self):
        with pytest.raises(CliError, match="key=value"):
            resolve_config("simulate", None, ["eps"])


class TestSimulateCommand:
    def test_artifacts_and_exit_code(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = run_cli("simulate", "--out", str(out), *FAST_SIM)
        assert code == 0
        assert {p.name for p in out.iterdir()} == {
            "effective.cfg", "series.csv", "summary.json",
            "state_000.snap", "state_001.snap",
        }
        series = (out / "series.csv").read_text().splitlines()
        assert series[0] == SERIES_HEADER
        assert len(series) == 1 + 21  # t = 0 plus 20 steps of dt = 0.01
        assert all(len(row.split(",")) == 5 for row in series[1:])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["aborted"] is False
        assert summary["energy_residual"] < 1e-6
        assert summary["snapshot_times"] == [0.0, 0.2]
        assert "wrote" in capsys.readouterr().out

    def test_rerun_from_effective_config_reproduces_outputs(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        assert run_cli("simulate", "--out", str(first), *FAST_SIM) == 0
        assert run_cli("simulate", "--out", str(second),
                       "--config", str(first / "effective.cfg")) == 0
        for name in ("series.csv", "state_000.snap", "state_001.snap",
                     "effective.cfg"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_linear_command_runs(self, tmp_path):
        out = tmp_path / "lin"
        code = run_cli("linear", "--out", str(out), *FAST_SIM,
                       "--set", "snapshot_times=0.0,0.1,0.2")
        assert code == 0
        snaps = sorted(p.name for p in out.glob("state_*.snap"))
        assert snaps == ["state_000.snap", "state_001.snap", "state_002.snap"]

    def test_numerical_abort_exits_2(self, tmp_path, capsys):
        out = tmp_path / "blow"
        code = run_cli(
            "simulate", "--out", str(out),
            "--set", "n_points=32", "--set", "box_length=6.283185307179586",
            "--set", "eps=1.0", "--set", "mu=1e-6", "--set", "nu=1e-6",
            "--set", "dt=5.0", "--set", "t_end=50.0",
            "--set", "target_norm=50.0", "--set", "spectrum_width=4.0",
            "--set", "seed=4",
        )
        assert code == 2
        assert "numerical abort" in capsys.readouterr().err
        assert json.loads((out / "summary.json").read_text())["aborted"] is True


STUDY_ARGS = [
    "--set", "n_points=32", "--set", "box_length=25.132741228718345",
    "--set", "mu=0.5", "--set", "nu=0.25", "--set", "dt=0.01",
    "--set", "t_end=0.2", "--set", "seed=11",
    "--set", "eps_list=0.5,0.25",
]


class TestStudyCommands:
    def test_scaling_writes_named_csv(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        assert run_cli("scaling", "--out", str(out), *STUDY_ARGS) == 0
        records = load_csv(out / "stability.csv")
        assert {r.kind for r in records} == {"stability"}
        assert {r.eps for r in records} == {0.5, 0.25}
        assert "records" in capsys.readouterr().out
        assert (out / "effective.cfg").exists()

    def test_study_rerun_from_effective_config(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        assert run_cli("scaling", "--out", str(first), *STUDY_ARGS) == 0
        assert run_cli("scaling", "--out", str(second),
                       "--config", str(first / "effective.cfg")) == 0
        recs_a = load_csv(first / "stability.csv")
        recs_b = load_csv(second / "stability.csv")
        for ra, rb in zip(recs_a, recs_b, strict=True):
            assert (ra.study, ra.kind, ra.eps, ra.observable, ra.value,
                    ra.seed, ra.n_points, ra.box_length, ra.dt) == (
                rb.study, rb.kind, rb.eps, rb.observable, rb.value,
                rb.seed, rb.n_points, rb.box_length, rb.dt)

    def test_custom_name_controls_artifact(self, tmp_path):
        out = tmp_path / "sweep"
        assert run_cli("scaling", "--out", str(out), *STUDY_ARGS,
                       "--set", "name=runA") == 0
        records = load_csv(out / "runA.csv")
        assert {r.study for r in records} == {"runA"}

    def test_limit_requires_explicit_kind(self, tmp_path, capsys):
        out = tmp_path / "lim"
        code = run_cli("limit", "--out", str(out), *STUDY_ARGS)
        assert code == 1
        assert "limit-linear or limit-nonlinear" in capsys.readouterr().err

    def test_conflicting_kind_rejected(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = run_cli("scaling", "--out", str(out), *STUDY_ARGS,
                       "--set", "kind=energy")
        assert code == 1
        assert "conflicting kind" in capsys.readouterr().err

    def test_failed_runs_exit_2(self, tmp_path, capsys):
        out = tmp_path / "kern"
        code = run_cli(
            "kernel", "--out", str(out),
            "--set", "n_points=16", "--set", "box_length=6.283185307179586",
            "--set", "eps_list=0.5,1e-8", "--set", "c_tilde=2.0",
        )
        assert code == 2
        assert "failed runs" in capsys.readouterr().out
        records = load_csv(out / "kernel.csv")
        failed = [r for r in records if r.observable == "failed"]
        assert len(failed) == 1 and math.isnan(failed[0].value)


class TestReportCommand:
    def test_pass_and_fail_verdicts(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        assert run_cli("energy", "--out", str(out), *STUDY_ARGS[:-2],
                       "--set", "eps=0.2") == 0
        code = run_cli("report", "--in", str(out))
        assert code == 0
        assert "pass" in capsys.readouterr().out
        report = json.loads((out / "report.json").read_text())
        assert report["passed"] is True

        # corrupt the table into a failing one: blow up the residual value
        records = load_csv(out / "energy.csv")
        lines = (out / "energy.csv").read_text().splitlines()
        for i, line in enumerate(lines):
            parts = line.split(",")
            if len(parts) == 10 and parts[3] == "energy_residual":
                parts[4] = "9"
                lines[i] = ",".join(parts)
        (out / "energy.csv").write_text("\n".join(lines) + "\n")
        bad = load_csv(out / "energy.csv")
        assert any(r.value > 1 for r in bad if r.observable == "energy_residual")
        code = run_cli("report", "--in", str(out),
                       "--out", str(tmp_path / "r.json"))
        assert code == 3
        assert "FAIL" in capsys.readouterr().out
        assert len(records) == len(bad)

    def test_empty_directory_is_usage_error(self, tmp_path, capsys):
        code = run_cli("report", "--in", str(tmp_path))
        assert code == 1
        assert "no CSV files" in capsys.readouterr().err

    def test_shipped_results_pass(self, tmp_path):
        code = run_cli("report", "--in", "results",
                       "--out", str(tmp_path / "report.json"))
        assert code == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["passed"] is True
        assert set(report["studies"]) == {
            "stability", "error", "limit-linear", "limit-nonlinear"}


class TestUsageErrors:
    def test_no_subcommand(self, capsys):
        assert run_cli() == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_subcommand(self, capsys):
        assert run_cli("frobnicate") == 1

    def test_missing_out_flag(self, capsys):
        assert run_cli("simulate") == 1

    def test_invalid_physical_config(self, tmp_path, capsys):
        code = run_cli("simulate", "--out", str(tmp_path / "x"),
                       "--set", "eps=2.0")
        assert code == 1
        assert "invalid run configuration" in capsys.readouterr().err


def test_console_script_is_wired():
    from importlib.metadata import entry_points

    eps = entry_points(group="console_scripts")
    names = {ep.name: ep.value for ep in eps}
    assert names.get("alfven") == "alfven.cli:main"
