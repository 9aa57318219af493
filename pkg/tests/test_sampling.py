import json

import numpy as np
import pytest
import scipy.stats

import nbspatial as nbs
from nbspatial import (
    CrystalKind,
    DomainError,
    ModelParams,
    Regime,
    SamplePlan,
    SubgridSpec,
    TooFewSamplesError,
    bimodality,
    diagnose_crystal,
    mle_discrepancy_map,
    run_plan,
    seed_random,
)
from nbspatial.sampling import (
    desk_plan,
    evenly_spaced_windows,
    paper_scale_plan,
    write_report_json,
    write_summary_csv,
)

TINY_PLAN = SamplePlan((SubgridSpec(4, 4, 4, 4), SubgridSpec(20, 20, 4, 4)), 1500, 80)


class TestSamplePlan:
    def test_overlapping_windows_rejected(self):
        plan = SamplePlan((SubgridSpec(0, 0, 4, 4), SubgridSpec(2, 2, 4, 4)), 10, 10)
        with pytest.raises(DomainError):
            plan.validate_for(16, 16)

    def test_disjoint_windows_accepted(self):
        TINY_PLAN.validate_for(32, 32)

    def test_window_must_fit_lattice(self):
        plan = SamplePlan((SubgridSpec(0, 0, 20, 20),), 10, 10)
        with pytest.raises(DomainError):
            plan.validate_for(16, 16)

    def test_empty_plan_rejected(self):
        with pytest.raises(DomainError):
            SamplePlan((), 10, 10)

    def test_evenly_spaced_windows_are_disjoint(self):
        for count in (2, 3, 4):
            windows = evenly_spaced_windows(64, 64, count, 16, 16)
            SamplePlan(windows, 1, 1).validate_for(64, 64)

    def test_desk_and_paper_plans(self):
        desk = desk_plan()
        desk.validate_for(64, 64)
        assert desk.relax_iterates == 200_000
        assert desk.accumulate_iterates == 3000
        paper = paper_scale_plan()
        paper.validate_for(768, 512)
        assert paper.relax_iterates == 1_000_000
        assert paper.accumulate_iterates == 6000
        assert all(w.rows == w.cols == 32 for w in paper.windows)
        assert len(paper.windows) == 3


class TestBimodality:
    def test_against_moment_formula_oracle(self, rng):
        vals = rng.normal(3.0, 1.0, 60)
        n = len(vals)
        skew = scipy.stats.skew(vals)
        kurt = scipy.stats.kurtosis(vals)  # excess, biased: matches plain moments
        expected = (skew**2 + 1) / (kurt + 3 * (n - 1) ** 2 / ((n - 2) * (n - 3)))
        assert bimodality(vals) == pytest.approx(expected, rel=1e-12)

    def test_unimodal_cluster_below_threshold(self, rng):
        assert bimodality(rng.normal(0.0, 0.01, 100)) < 5.0 / 9.0

    def test_two_clusters_above_threshold(self, rng):
        vals = np.concatenate([rng.normal(-1.0, 0.05, 50), rng.normal(1.0, 0.05, 50)])
        assert bimodality(vals) > 5.0 / 9.0

    def test_zero_variance_returns_zero(self):
        assert bimodality([2.5, 2.5, 2.5, 2.5, 2.5]) == 0.0

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            bimodality([1.0, 2.0, 3.0])

    def test_permutation_invariant_exactly(self, rng):
        vals = rng.uniform(-2, 5, 31)
        base = bimodality(vals)
        for _ in range(5):
            assert bimodality(rng.permutation(vals)) == base

    def test_bounded_to_unit_interval(self, rng):
        for _ in range(20):
            vals = rng.standard_normal(rng.integers(5, 40))
            assert 0.0 < bimodality(vals) < 1.0


class TestRunPlan:
    def test_zero_accumulate_rejected(self, chaotic_params):
        plan = SamplePlan((SubgridSpec(0, 0, 4, 4),), 10, 0)
        with pytest.raises(DomainError):
            run_plan(chaotic_params, 32, 32, plan, 0)

    def test_small_run_produces_report(self):
        params = ModelParams(2.0, 0.6, 0.8)
        report = run_plan(params, 32, 32, TINY_PLAN, rng_seed=5)
        assert len(report.per_window) == 2
        assert all(s is not None for s in report.per_window)
        assert report.mle_spread >= 0.0
        assert report.regime in set(Regime)
        assert not report.failures
        assert report.bimodality_coefficient is None  # fewer than 4 windows

    def test_window_independence_serial_vs_threaded(self):
        params = ModelParams(2.0, 0.6, 0.8)
        serial = run_plan(params, 32, 32, TINY_PLAN, rng_seed=5, n_threads=1)
        threaded = run_plan(params, 32, 32, TINY_PLAN, rng_seed=5, n_threads=2)
        for a, b in zip(serial.per_window, threaded.per_window):
            assert np.array_equal(a.exponents, b.exponents)

    def test_determinism(self):
        params = ModelParams(2.0, 0.6, 0.8)
        a = run_plan(params, 32, 32, TINY_PLAN, rng_seed=5)
        b = run_plan(params, 32, 32, TINY_PLAN, rng_seed=5)
        for sa, sb in zip(a.per_window, b.per_window):
            assert np.array_equal(sa.exponents, sb.exponents)

    def test_regime_classified_from_mle_signs(self):
        params = ModelParams(2.0, 0.05, 0.99)
        plan = SamplePlan((SubgridSpec(2, 2, 6, 6),), 3000, 150)
        report = run_plan(params, 24, 24, plan, rng_seed=0)
        assert report.regime is Regime.ALL_NEGATIVE
        assert all(m < 0 for m in report.mles)


class TestDiscrepancyMap:
    def test_empty_grid_rejected(self):
        with pytest.raises(DomainError):
            mle_discrepancy_map([], 2.0, 32, 32, TINY_PLAN)

    def test_rows_returned_per_point(self):
        table = mle_discrepancy_map([(0.6, 0.8), (0.5, 0.7)], 2.0, 32, 32,
                                    TINY_PLAN, base_seed=3)
        assert len(table) == 2
        for mu_x, mu_y, spread in table:
            assert spread is None or spread >= 0.0

    def test_point_failure_recorded_not_fatal(self):
        # mu = 0 decouples the lattice; the unstable local map blows up and
        # the point must be reported as missing while the scan continues
        plan = SamplePlan((SubgridSpec(4, 4, 4, 4),), 3000, 50)
        table = mle_discrepancy_map([(0.0, 0.0), (0.6, 0.8)], 2.0, 32, 32,
                                    plan, base_seed=0)
        assert table[0][2] is None
        assert table[1][2] is not None


class TestDiagnoseCrystal:
    def test_homogeneous_lattice_is_fixed(self, chaotic_params):
        state = seed_random(16, 16, chaotic_params, amplitude=0.0, rng_seed=0)
        diag = diagnose_crystal(state, chaotic_params, probe_iterates=50)
        assert diag.kind is CrystalKind.FIXED_LATTICE
        assert diag.period1_fraction == 1.0

    def test_chaotic_bulk_is_none(self, chaotic_params):
        state = seed_random(32, 32, chaotic_params, amplitude=0.05, rng_seed=1)
        state = nbs.relax(state, chaotic_params, 5000)
        diag = diagnose_crystal(state, chaotic_params, probe_iterates=50)
        assert diag.kind is CrystalKind.NONE
        assert diag.period1_fraction < 1.0

    def test_probe_iterates_validated(self, chaotic_params):
        state = seed_random(16, 16, chaotic_params, rng_seed=0)
        with pytest.raises(DomainError):
            diagnose_crystal(state, chaotic_params, probe_iterates=0)


class TestReportExports:
    def test_json_round_trip_fields(self, tmp_path):
        params = ModelParams(2.0, 0.6, 0.8)
        report = run_plan(params, 32, 32, TINY_PLAN, rng_seed=5)
        path = tmp_path / "report.json"
        write_report_json(path, report)
        payload = json.loads(path.read_text())
        assert payload["lambda"] == 2.0
        assert payload["rng_seed"] == 5
        assert len(payload["windows"]) == 2
        assert payload["regime"] == report.regime.value
        assert payload["windows"][0]["exponents"] == [
            float(v) for v in report.per_window[0].exponents
        ]

    def test_summary_csv(self, tmp_path):
        params = ModelParams(2.0, 0.6, 0.8)
        report = run_plan(params, 32, 32, TINY_PLAN, rng_seed=5)
        path = tmp_path / "summary.csv"
        write_summary_csv(path, [report])
        lines = path.read_text().splitlines()
        assert lines[0] == "mu_x,mu_y,mle_max,mle_min,mle_spread,prop_pos_mean,regime"
        cells = lines[1].split(",")
        assert float(cells[0]) == 0.6
        assert float(cells[4]) == report.mle_spread
