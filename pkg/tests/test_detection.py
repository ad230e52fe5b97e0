import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbuffer.detection import (
    ClickSet,
    DetectorModel,
    Histogram,
    click_probability,
    count_triggered,
    expected_counts,
    histogram,
    merge_clicksets,
    sample_clicks,
)
from qbuffer.errors import InputDomainError

QUIET = DetectorModel(efficiency=0.9, dark_rate_hz=0.0, dead_time_s=50e-9,
                      jitter_sigma_s=0.0)


class TestClickProbability:
    def test_vacuum_without_darks(self):
        assert click_probability(0.0, QUIET, 1e-7) == 0.0

    def test_reference_point(self):
        # Oracle: direct evaluation of 1 - exp(-mu * eff).
        p = click_probability(0.1, QUIET, 0.0)
        assert p == pytest.approx(1.0 - math.exp(-0.09), rel=1e-12)
        assert p == pytest.approx(0.086069, abs=1e-6)

    def test_saturation(self):
        assert click_probability(1e6, QUIET, 0.0) == pytest.approx(1.0)

    def test_dark_contribution_combines(self):
        det = DetectorModel(efficiency=0.9, dark_rate_hz=100.0)
        p = click_probability(0.1, det, 1e-4)
        ps = 1 - math.exp(-0.09)
        pd = 1 - math.exp(-100.0 * 1e-4)
        assert p == pytest.approx(1 - (1 - ps) * (1 - pd), rel=1e-12)

    @given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
    def test_monotone_in_mu(self, mu1, mu2):
        lo, hi = sorted((mu1, mu2))
        assert click_probability(lo, QUIET, 0.0) <= \
            click_probability(hi, QUIET, 0.0)

    def test_domain(self):
        with pytest.raises(InputDomainError):
            click_probability(-0.1, QUIET, 0.0)
        with pytest.raises(InputDomainError):
            click_probability(0.1, QUIET, -1.0)


class TestExpectedCounts:
    def test_zero_reps(self):
        out = expected_counts([(0.0, 0.1)], QUIET, 0)
        assert out.tolist() == [0.0]

    def test_reference_point(self):
        out = expected_counts([(0.0, 0.1)], QUIET, 100_000)
        assert out[0] == pytest.approx(
            100_000 * (1 - math.exp(-0.09)), rel=1e-12)
        assert out[0] == pytest.approx(8606.9, abs=0.1)

    def test_small_mu_ratio_is_linear(self):
        mu = 1e-4
        out = expected_counts([(0.0, mu), (1.0, 0.5 * mu)], QUIET, 1,
                              window=0.0)
        # Saturation correction is O(mu * eff / 2) ~ 5e-5 here.
        assert out[1] / out[0] == pytest.approx(0.5, rel=2e-4)


class TestSampleClicks:
    def test_seed_determinism(self):
        pulses = [(k * 1e-3, 0.2) for k in range(500)]
        det = DetectorModel()
        a = sample_clicks(pulses, det, 0.5, seed=99)
        b = sample_clicks(pulses, det, 0.5, seed=99)
        np.testing.assert_array_equal(a.times, b.times)
        np.testing.assert_array_equal(a.detector_ids, b.detector_ids)

    def test_dead_detector_sees_nothing(self):
        det = DetectorModel(efficiency=0.0, dark_rate_hz=0.0)
        cs = sample_clicks([(0.0, 10.0)], det, 1.0, seed=1)
        assert len(cs) == 0

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_binomial_agreement_at_1e6(self, seed):
        n = 1_000_000
        pulses = (np.arange(n) * 1e-3, np.full(n, 0.1))
        cs = sample_clicks(pulses, QUIET, n * 1e-3, seed=seed)
        p = 1 - math.exp(-0.09)
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(len(cs) - n * p) < 5 * sigma

    def test_dead_time_enforced(self):
        det = DetectorModel(efficiency=0.0, dark_rate_hz=20_000.0,
                            dead_time_s=1e-4, jitter_sigma_s=0.0)
        cs = sample_clicks([], det, 1.0, seed=5)
        assert len(cs) > 0
        assert np.diff(cs.times).min() >= 1e-4

    def test_jitter_statistics(self):
        det = DetectorModel(efficiency=1.0, dark_rate_hz=0.0,
                            dead_time_s=0.0, jitter_sigma_s=50e-12)
        n = 20_000
        pulses = (np.arange(n) * 1e-6 + 1e-7, np.full(n, 50.0))
        cs = sample_clicks(pulses, det, n * 1e-6, seed=8)
        offsets = cs.times - (np.round((cs.times - 1e-7) / 1e-6) * 1e-6
                              + 1e-7)
        assert np.std(offsets) == pytest.approx(50e-12, rel=0.1)

    def test_acquisition_must_cover_pulses(self):
        with pytest.raises(InputDomainError):
            sample_clicks([(2.0, 0.1)], QUIET, 1.0, seed=1)

    def test_detector_id_tagging(self):
        det = DetectorModel(efficiency=1.0, dark_rate_hz=0.0)
        cs = sample_clicks([(0.0, 50.0)], det, 1e-3, seed=1, detector_id=3)
        assert cs.detector_ids.tolist() == [3]


class TestHistogram:
    def test_boundary_lands_left_closed(self):
        cs = ClickSet(np.array([0.75]), np.array([0]), 1.0)
        h = histogram(cs, 0.0, 0.25, 8)
        assert h.counts.tolist() == [0, 0, 0, 1, 0, 0, 0, 0]

    def test_empty_clicks(self):
        cs = ClickSet(np.array([]), np.array([]), 1.0)
        h = histogram(cs, 0.0, 0.1, 4)
        assert h.counts.tolist() == [0, 0, 0, 0]
        assert h.overflow == 0

    @given(st.integers(0, 2 ** 32 - 1))
    def test_conservation(self, seed):
        rng = np.random.default_rng(seed)
        times = np.sort(rng.uniform(-0.5, 1.5, 200))
        cs = ClickSet(times, np.zeros(200, dtype=int), 1.5)
        h = histogram(cs, 0.0, 0.1, 10)
        assert h.total == 200

    def test_retrieval_peak_spacing_in_bins(self):
        # Clicks one storage period apart with 100 ns bins land 58 or 59
        # bins apart (period / bin = 58.76).
        period = 5.876065101010647e-06
        times = np.arange(8) * period + 1e-6
        cs = ClickSet(times, np.zeros(8, dtype=int), 1.0)
        h = histogram(cs, 0.0, 100e-9, 600)
        nz = np.nonzero(h.counts)[0]
        assert set(np.diff(nz).tolist()) <= {58, 59}

    def test_negative_counts_rejected(self):
        with pytest.raises(InputDomainError):
            Histogram(0.0, 0.1, np.array([1, -1]))

    def test_csv_export(self, tmp_path):
        cs = ClickSet(np.array([0.05, 0.15, 0.15]), np.zeros(3, dtype=int),
                      1.0)
        h = histogram(cs, 0.0, 0.1, 2)
        path = tmp_path / "h.csv"
        h.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "bin_start_s,counts"
        assert lines[1] == "0.0,1"
        assert lines[2] == "0.1,2"


class TestClickSetPlumbing:
    def test_merge_sorts_by_time(self):
        a = ClickSet(np.array([0.1, 0.3]), np.array([0, 0]), 1.0)
        b = ClickSet(np.array([0.2]), np.array([1]), 1.0)
        m = merge_clicksets(a, b)
        assert m.times.tolist() == [0.1, 0.2, 0.3]
        assert m.detector_ids.tolist() == [0, 1, 0]

    def test_csv_export(self, tmp_path):
        cs = ClickSet(np.array([0.25]), np.array([1]), 1.0)
        path = tmp_path / "c.csv"
        cs.write_csv(path)
        assert path.read_text() == "time_s,detector_id\n0.25,1\n"

    def test_count_triggered_dedupes_triggers(self):
        # Two clicks inside the same trigger gate count once.
        cs = ClickSet(np.array([1e-5, 1.00001e-5, 1e-3 + 1e-5]),
                      np.zeros(3, dtype=int), 1.0)
        assert count_triggered(cs, 1e-3, 1e-5, 1e-6) == 2

    def test_detector_model_domain(self):
        with pytest.raises(InputDomainError):
            DetectorModel(efficiency=1.2)
        with pytest.raises(InputDomainError):
            DetectorModel(dark_rate_hz=-1.0)
