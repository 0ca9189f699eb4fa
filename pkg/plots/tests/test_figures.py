"""Tests for figure rendering and the command-line workflow."""

import json
from pathlib import Path

import pytest

from alfven_plots.__main__ import STUDY_PANELS, run
from alfven_plots.figures import PlotSpec, plot_scaling
from alfven_plots.fitting import read_records

from test_fitting import EPS, write_table

SHIPPED_RESULTS = Path(__file__).resolve().parents[2] / "results"


class TestPlotScaling:
    def test_renders_and_returns_fit(self, tmp_path):
        rows = read_records(write_table(
            tmp_path / "t.csv", [(e, 2.0 * e**1.25) for e in EPS]))
        out = tmp_path / "fig.png"
        fit = plot_scaling(rows, PlotSpec(observable="obs",
                                          reference_exponent=1.0,
                                          title="demo"), out)
        assert fit.slope == pytest.approx(1.25, abs=1e-12)
        assert out.exists() and out.stat().st_size > 0

    def test_no_reference_line(self, tmp_path):
        rows = read_records(write_table(
            tmp_path / "t.csv", [(e, e) for e in EPS]))
        out = tmp_path / "fig.png"
        plot_scaling(rows, PlotSpec(observable="obs"), out)
        assert out.stat().st_size > 0

    def test_missing_observable_raises(self, tmp_path):
        rows = read_records(write_table(
            tmp_path / "t.csv", [(e, e) for e in EPS]))
        with pytest.raises(ValueError, match="'absent'"):
            plot_scaling(rows, PlotSpec(observable="absent"),
                         tmp_path / "fig.png")


def synthetic_results(tmp_path):
    results = tmp_path / "results"
    results.mkdir()
    exponents = {"stability": 0.0, "error": 1.25,
                 "limit-linear": 0.5, "limit-nonlinear": 0.125}
    for study, (observable, _) in STUDY_PANELS.items():
        write_table(results / f"{study}.csv",
                    [(e, 1.5 * e ** exponents[study]) for e in EPS],
                    study=study, kind=study, observable=observable)
    return results


class TestCommandLine:
    def test_renders_all_standard_studies(self, tmp_path, capsys):
        results = synthetic_results(tmp_path)
        out = tmp_path / "figs"
        assert run(["--results", str(results), "--out", str(out)]) == 0
        annotations = json.loads((out / "annotations.json").read_text())
        assert set(annotations) == set(STUDY_PANELS)
        for study, (observable, _) in STUDY_PANELS.items():
            assert (out / f"{study}.png").stat().st_size > 0
            assert annotations[study]["observable"] == observable
        assert annotations["error"]["slope"] == pytest.approx(1.25, abs=1e-12)
        assert "annotations" in capsys.readouterr().out

    def test_verdicts_from_report_json(self, tmp_path):
        results = synthetic_results(tmp_path)
        (results / "report.json").write_text(json.dumps({
            "studies": {name: {"passed": True} for name in STUDY_PANELS}
        }))
        out = tmp_path / "figs"
        assert run(["--results", str(results), "--out", str(out)]) == 0

    def test_study_subset(self, tmp_path):
        results = synthetic_results(tmp_path)
        out = tmp_path / "figs"
        assert run(["--results", str(results), "--out", str(out),
                    "--studies", "error"]) == 0
        assert {p.name for p in out.iterdir()} == {"error.png",
                                                   "annotations.json"}

    def test_missing_csv_is_an_error(self, tmp_path, capsys):
        results = tmp_path / "empty"
        results.mkdir()
        out = tmp_path / "figs"
        assert run(["--results", str(results), "--out", str(out)]) == 1
        assert "cannot read" in capsys.readouterr().err

    def test_unknown_study_rejected(self, tmp_path, capsys):
        results = synthetic_results(tmp_path)
        assert run(["--results", str(results), "--out", str(tmp_path / "f"),
                    "--studies", "mystery"]) == 1
        assert "unknown studies" in capsys.readouterr().err


@pytest.mark.skipif(not SHIPPED_RESULTS.is_dir(),
                    reason="no shipped results directory")
def test_shipped_tables_render(tmp_path):
    out = tmp_path / "figs"
    assert run(["--results", str(SHIPPED_RESULTS), "--out", str(out)]) == 0
    for study in STUDY_PANELS:
        assert (out / f"{study}.png").stat().st_size > 0
