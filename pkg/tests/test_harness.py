"""Tests for the sweep harness: slope fits, CSV persistence, reports.

The study runs here use deliberately tiny grids; the physics-bearing
sweeps live in the acceptance suite.
"""

import json
import math

import numpy as np
import pytest

from alfven.harness import (
    CSV_HEADER,
    FROZEN_BOUNDS,
    StudyConfig,
    StudyRecord,
    bilinear_rhs,
    emit_csv,
    emit_report,
    fit_slope,
    load_csv,
    run_study,
    worker_count,
)
from alfven.solver import SimConfig, simulate


def make_rec(value, *, eps=0.5, observable="obs", study="s", kind="stability",
             dt=0.01, seed=1):
    return StudyRecord(study=study, kind=kind, eps=eps, observable=observable,
                       value=value, seed=seed, n_points=32,
                       box_length=8 * np.pi, dt=dt, wall_ms=1.0)


def power_law_records(exponent, prefactor=1.0, observable="obs",
                      eps_list=(0.5, 0.25, 0.125, 0.0625), **kw):
    return [make_rec(prefactor * e**exponent, eps=e, observable=observable, **kw)
            for e in eps_list]


class TestFitSlope:
    def test_exact_power_law(self):
        recs = power_law_records(1.7, prefactor=3.0)
        fit = fit_slope(recs, "obs")
        assert fit.slope == pytest.approx(1.7, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.n_used == 4
        assert fit.excluded == ()

    def test_constant_series_is_perfect_flat_fit(self):
        recs = [make_rec(2.0, eps=e) for e in (0.5, 0.25, 0.125, 0.0625)]
        fit = fit_slope(recs, "obs")
        assert fit.slope == pytest.approx(0.0, abs=1e-14)
        assert fit.r_squared == 1.0

    def test_below_floor_points_are_excluded_not_fatal(self):
        recs = power_law_records(2.0, eps_list=(0.5, 0.25, 0.125, 0.0625))
        recs.append(make_rec(0.0, eps=0.03125))
        recs.append(make_rec(math.nan, eps=0.015625))
        fit = fit_slope(recs, "obs")
        assert fit.n_used == 4
        assert fit.excluded == (0.03125, 0.015625)
        assert fit.slope == pytest.approx(2.0, abs=1e-12)

    def test_too_few_points_raises(self):
        recs = power_law_records(1.0, eps_list=(0.5, 0.25, 0.125))
        with pytest.raises(ValueError, match="need >= 4"):
            fit_slope(recs, "obs")

    def test_study_filter(self):
        recs = power_law_records(1.0, study="a") + power_law_records(
            3.0, study="b")
        assert fit_slope(recs, "obs", study="a").slope == pytest.approx(1.0)
        assert fit_slope(recs, "obs", study="b").slope == pytest.approx(3.0)

    def test_dt_abscissa(self):
        recs = [make_rec(d**4, observable="dt_error", dt=d, eps=0.5)
                for d in (0.1, 0.05, 0.025, 0.0125)]
        fit = fit_slope(recs, "dt_error", x="dt")
        assert fit.slope == pytest.approx(4.0, abs=1e-12)

    def test_equal_abscissae_rejected(self):
        recs = [make_rec(float(i + 1), eps=0.5) for i in range(4)]
        with pytest.raises(ValueError, match="all abscissae equal"):
            fit_slope(recs, "obs")


def records_equal(a, b, *, ignore_wall=False):
    for ra, rb in zip(a, b, strict=True):
        for name in ("study", "kind", "eps", "observable", "value", "seed",
                     "n_points", "box_length", "dt", "wall_ms"):
            if ignore_wall and name == "wall_ms":
                continue
            va, vb = getattr(ra, name), getattr(rb, name)
            if isinstance(va, float) and math.isnan(va):
                assert math.isnan(vb)
            else:
                assert va == vb, (name, va, vb)
    return True


class TestCsvRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        recs = [
            make_rec(math.pi, eps=2**-7, dt=1 / 3),
            make_rec(1e-300, observable="tiny"),
            make_rec(math.nan, observable="failed"),
            make_rec(6.02214076e23, observable="big", seed=2**31),
        ]
        path = tmp_path / "t.csv"
        emit_csv(recs, path)
        text = path.read_text()
        assert text.splitlines()[0] == CSV_HEADER
        assert records_equal(load_csv(path), recs)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("study,kind\nx,y\n")
        with pytest.raises(ValueError, match="missing header"):
            load_csv(path)

    def test_malformed_row_reported_with_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(CSV_HEADER + "\na,stability,0.5,obs,1.0,1,32,3.0,0.1\n")
        with pytest.raises(ValueError, match="line 2"):
            load_csv(path)

    def test_unparseable_field_reported(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            CSV_HEADER + "\na,stability,0.5,obs,1.0,not_int,32,3.0,0.1,1.0\n")
        with pytest.raises(ValueError, match="line 2"):
            load_csv(path)


class TestWorkerCount:
    def test_default_is_one(self, monkeypatch):
        monkeypatch.delenv("ALFVEN_WORKERS", raising=False)
        assert worker_count() == 1

    def test_explicit_argument(self, monkeypatch):
        monkeypatch.delenv("ALFVEN_WORKERS", raising=False)
        assert worker_count(3) == 3
        assert worker_count(0) == 1

    def test_env_wins_over_argument(self, monkeypatch):
        monkeypatch.setenv("ALFVEN_WORKERS", "5")
        assert worker_count(2) == 5
        monkeypatch.setenv("ALFVEN_WORKERS", "0")
        assert worker_count(2) == 1


class TestStudyConfigValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown study kind"):
            StudyConfig(kind="mystery")

    def test_eps_range(self):
        with pytest.raises(ValueError, match=r"\(0, 1\)"):
            StudyConfig(kind="stability", eps_list=(1.0, 0.5))

    def test_eps_must_decrease(self):
        with pytest.raises(ValueError, match="strictly decreasing"):
            StudyConfig(kind="stability", eps_list=(0.25, 0.5))

    def test_fit_kinds_need_four_points(self):
        with pytest.raises(ValueError, match=">= 4 eps"):
            StudyConfig(kind="error", eps_list=(0.5, 0.25, 0.125))
        # non-fitting kinds are fine with two
        StudyConfig(kind="stability", eps_list=(0.5, 0.25))

    def test_propagator_verify_needs_dt_ladder(self):
        with pytest.raises(ValueError, match="dt_list"):
            StudyConfig(kind="propagator-verify")
        with pytest.raises(ValueError, match="positive decreasing"):
            StudyConfig(kind="propagator-verify",
                        dt_list=(0.0125, 0.025, 0.05, 0.1))

    def test_name_must_be_csv_safe(self):
        with pytest.raises(ValueError, match="CSV-safe"):
            StudyConfig(kind="stability", name="a,b")
        assert StudyConfig(kind="stability", name="runA").label == "runA"
        assert StudyConfig(kind="stability").label == "stability"

    def test_base_dt_checked_when_jobs_build(self):
        study = StudyConfig(kind="propagator-verify",
                            dt_list=(0.1, 0.05, 0.025, 0.0125))
        with pytest.raises(ValueError, match="reference step"):
            run_study(study)


ENERGY_BASE = SimConfig(n_points=32, box_length=8 * np.pi, eps=0.2, mu=0.5,
                        nu=0.25, m=3, dt=2e-3, t_end=0.2, seed=11,
                        spectrum_width=2.0, target_norm=1.0)


class TestRunStudy:
    def test_energy_study_records_and_report(self, tmp_path):
        out = tmp_path / "energy.csv"
        study = StudyConfig(kind="energy", base=ENERGY_BASE,
                            eps_list=(0.2,), out_path=str(out))
        records = run_study(study)
        names = [r.observable for r in records]
        assert names == ["sup_sobolev_m_over_eps", "final_sobolev_m_over_eps",
                         "energy_residual", "div_max"]
        assert records_equal(load_csv(out), records)
        report = emit_report(records)
        assert report["passed"] is True
        assert report["studies"]["energy"]["kind"] == "energy"

    def test_repeat_runs_identical_except_wall(self):
        study = StudyConfig(kind="energy", base=ENERGY_BASE, eps_list=(0.2,))
        a = run_study(study)
        b = run_study(study)
        assert records_equal(a, b, ignore_wall=True)

    def test_thread_pool_preserves_job_order(self, monkeypatch):
        base = SimConfig(n_points=32, box_length=8 * np.pi)
        study = StudyConfig(kind="kernel", base=base, eps_list=(0.5, 0.25))
        monkeypatch.delenv("ALFVEN_WORKERS", raising=False)
        seq = run_study(study, workers=1)
        monkeypatch.setenv("ALFVEN_WORKERS", "2")
        par = run_study(study)
        assert records_equal(seq, par, ignore_wall=True)

    def test_failed_run_becomes_nan_row(self):
        # the finest-region radius outgrows the 16-point grid at tiny eps,
        # so that job raises and must surface as a "failed" row, while the
        # moderate-eps job still returns its observables
        base = SimConfig(n_points=16, box_length=2 * np.pi)
        study = StudyConfig(kind="kernel", base=base, eps_list=(0.5, 1e-8),
                            c_tilde=2.0)
        records = run_study(study)
        by_eps = {}
        for r in records:
            by_eps.setdefault(r.eps, []).append(r.observable)
        assert "kernel_sup_d1" in by_eps[0.5]
        assert by_eps[1e-8] == ["failed"]
        failed = [r for r in records if r.observable == "failed"]
        assert math.isnan(failed[0].value)


class TestEmitReport:
    def test_limit_linear_slope_gate(self):
        recs = power_law_records(0.5, observable="linf_slab",
                                 study="lim", kind="limit-linear")
        rep = emit_report(recs)
        chk = rep["studies"]["lim"]["checks"][0]
        assert chk["type"] == "slope"
        assert chk["reference_exponent"] == 0.5
        assert chk["slope"] == pytest.approx(0.5, abs=1e-12)
        assert rep["passed"] is True
        shallow = power_law_records(0.3, observable="linf_slab",
                                    study="lim", kind="limit-linear")
        assert emit_report(shallow)["passed"] is False

    def test_limit_nonlinear_monotone_and_slope(self):
        recs = power_law_records(0.25, observable="linf_slab",
                                 study="nl", kind="limit-nonlinear")
        rep = emit_report(recs)
        assert rep["passed"] is True
        types = [c["type"] for c in rep["studies"]["nl"]["checks"]]
        assert types == ["monotone-decreasing", "slope"]
        # break the monotone ordering at one eps
        recs[2] = make_rec(recs[1].value * 1.01, eps=recs[2].eps,
                           observable="linf_slab", study="nl",
                           kind="limit-nonlinear")
        rep2 = emit_report(recs)
        assert rep2["passed"] is False
        assert rep2["studies"]["nl"]["checks"][0]["passed"] is False

    def test_stability_ratio_band(self):
        recs = [make_rec(v, eps=e, observable="sup_sobolev_m_over_eps",
                         study="st", kind="stability")
                for e, v in [(0.5, 1.0), (0.25, 2.9)]]
        assert emit_report(recs)["passed"] is True
        recs.append(make_rec(3.5, eps=0.125,
                             observable="sup_sobolev_m_over_eps",
                             study="st", kind="stability"))
        assert emit_report(recs)["passed"] is False

    def test_propagator_verify_checks(self):
        recs = [make_rec(d**4, observable="dt_error", dt=d, eps=0.5,
                         study="pv", kind="propagator-verify")
                for d in (0.1, 0.05, 0.025, 0.0125)]
        recs.append(make_rec(1e-12, observable="off_error", dt=0.1, eps=0.5,
                             study="pv", kind="propagator-verify"))
        rep = emit_report(recs)
        assert rep["passed"] is True
        recs[-1] = make_rec(1e-8, observable="off_error", dt=0.1, eps=0.5,
                            study="pv", kind="propagator-verify")
        assert emit_report(recs)["passed"] is False

    def test_missing_observable_fails_with_flag(self):
        recs = [make_rec(1.0, observable="something_else",
                         study="st", kind="stability")]
        rep = emit_report(recs)
        assert rep["passed"] is False
        assert rep["studies"]["st"]["checks"][0].get("missing") is True

    def test_mixed_kinds_in_one_study_rejected(self):
        recs = [make_rec(1.0, study="x", kind="stability"),
                make_rec(1.0, study="x", kind="energy")]
        with pytest.raises(ValueError, match="mixes kinds"):
            emit_report(recs)

    def test_strict_json_with_nan_values(self, tmp_path):
        recs = [make_rec(math.nan, eps=e,
                         observable="sup_sobolev_m_over_eps",
                         study="st", kind="stability")
                for e in (0.5, 0.25)]
        path = tmp_path / "report.json"
        rep = emit_report(recs, path=path)
        assert rep["passed"] is False
        loaded = json.loads(path.read_text())
        assert loaded == rep
        assert loaded["studies"]["st"]["checks"][0]["ratio"] is None

    def test_idempotent(self):
        recs = power_law_records(0.5, observable="linf_slab",
                                 study="lim", kind="limit-linear")
        assert emit_report(recs) == emit_report(recs)


def test_bilinear_rhs_positive_on_short_run():
    traj = simulate(ENERGY_BASE)
    rhs = bilinear_rhs(traj)
    assert np.isfinite(rhs) and rhs > 0
    # dominated by the squared sup of the Sobolev stream
    assert rhs >= float(np.max(traj.step_sobolev_m)) ** 2


def test_frozen_bounds_are_positive_floats():
    assert set(FROZEN_BOUNDS) == {"bilinear_ratio", "pressure_ratio",
                                  "decay_ratio"}
    assert all(isinstance(v, float) and v > 0 for v in FROZEN_BOUNDS.values())
