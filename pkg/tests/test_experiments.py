import math

import numpy as np
import pytest

from qbuffer.components import BufferTopology, db_to_transmission
from qbuffer.detection import DetectorModel, expected_counts
from qbuffer.engine import storage_period
from qbuffer.errors import CalibrationError, InputDomainError, ScheduleError
from qbuffer.experiments import (
    ExperimentConfig,
    apply_calibration,
    average_visibility_by_eta,
    calibrate,
    default_hwp_grid,
    fit_decay,
    linearized_counts,
    run_hwp_sweep,
    run_retrieval_sweep,
    visibility,
    visibility_from_curve,
)

DET = DetectorModel()
QUIET = DetectorModel(dark_rate_hz=0.0, jitter_sigma_s=0.0)
PAPER_TARGETS = {1: 0.955, 3: 0.953, 5: 0.835}


def analytic_config(**kwargs):
    defaults = dict(preset="test", eta_list=(1, 3, 5), mode="analytic")
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


class TestVisibility:
    def test_equal_counts(self):
        assert visibility(123.0, 123.0) == 0.0

    def test_perfect_contrast(self):
        assert visibility(42.0, 0.0) == 1.0

    def test_reference_value(self):
        # Oracle: direct evaluation of the ratio.
        v = visibility(1000.0, 23.03)
        assert v == pytest.approx((1000.0 - 23.03) / (1000.0 + 23.03),
                                  rel=1e-12)
        assert v == pytest.approx(0.955, abs=5e-4)

    def test_undefined_for_zeros(self):
        with pytest.raises(InputDomainError):
            visibility(0.0, 0.0)

    def test_ordering_enforced(self):
        with pytest.raises(InputDomainError):
            visibility(1.0, 2.0)

    def test_scale_invariance(self):
        angles = default_hwp_grid()
        base = 500.0 * (1 + 0.8 * np.cos(4 * np.asarray(angles))) / 2
        v1 = visibility_from_curve(angles, base)
        v2 = visibility_from_curve(angles, 37.0 * base)
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_raw_extrema_below_fit_threshold(self):
        angles = (0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8,
                  math.pi / 2)
        counts = (100.0, 50.0, 10.0, 50.0, 100.0)
        assert visibility_from_curve(angles, counts) == pytest.approx(
            visibility(100.0, 10.0), rel=1e-12)


class TestLinearizedCounts:
    def test_inverts_saturation_and_darks(self):
        n = 100_000
        window = 1e-7
        mu_eff = 0.083
        p = 1 - math.exp(-(mu_eff + DET.dark_rate_hz * window))
        lin = linearized_counts([n * p], n, DET, window)
        assert lin[0] == pytest.approx(n * mu_eff, rel=1e-12)


class TestFitDecay:
    def test_synthetic_geometric(self):
        # Oracle: counts generated from the decay law itself.
        counts = [(eta, 1000.0 * 10 ** (-0.15 * (eta - 1)))
                  for eta in (1, 2, 3)]
        fit = fit_decay(counts)
        assert fit.loss_db_per_cycle == pytest.approx(1.5, abs=1e-9)
        assert fit.residual_db < 1e-9

    def test_constant_counts(self):
        fit = fit_decay([(1, 500.0), (2, 500.0), (3, 500.0)])
        assert fit.loss_db_per_cycle == pytest.approx(0.0, abs=1e-12)

    def test_needs_two_positive_peaks(self):
        with pytest.raises(InputDomainError):
            fit_decay([(1, 100.0), (2, 0.0)])

    def test_nonpositive_points_dropped(self):
        fit = fit_decay([(1, 1000.0), (2, 0.0), (3, 10.0)])
        assert fit.n_points == 2


class TestRetrievalSweep:
    def test_eight_peaks_with_period_spacing(self):
        topo = BufferTopology()
        cfg = ExperimentConfig(preset="t", mode="analytic")
        sweep = run_retrieval_sweep(cfg, topo, DET)
        assert len(sweep.rows) == 8
        dt = storage_period(topo)
        exits = [r.exit_time_s for r in sweep.rows]
        for k, (a, b) in enumerate(zip(exits, exits[1:])):
            assert abs(b - a - dt) < 1e-9
        assert sweep.span_s == pytest.approx(8 * dt, rel=1e-12)
        assert [r.retrieval_time_s for r in sweep.rows] == pytest.approx(
            [eta * dt for eta in range(1, 9)])

    def test_linear_counts_follow_cycle_loss_exactly(self):
        topo = BufferTopology()
        cfg = ExperimentConfig(preset="t", mode="analytic")
        sweep = run_retrieval_sweep(cfg, topo, DET)
        r = db_to_transmission(topo.cycle_loss_db())
        lin = [row.expected_counts_linear for row in sweep.rows]
        for a, b in zip(lin, lin[1:]):
            assert b / a == pytest.approx(r, rel=1e-12)
        fit = fit_decay([(row.eta, row.expected_counts_linear)
                         for row in sweep.rows])
        assert fit.loss_db_per_cycle == pytest.approx(
            topo.cycle_loss_db(), abs=1e-9)

    def test_configured_loss_of_1p5_db(self):
        topo = BufferTopology(modulator_loss_db=1.26)
        assert topo.cycle_loss_db() == pytest.approx(1.5, rel=1e-12)
        cfg = ExperimentConfig(preset="t", eta_list=(1, 2, 3),
                               mode="analytic")
        sweep = run_retrieval_sweep(cfg, topo, DET)
        lin = [row.expected_counts_linear for row in sweep.rows]
        assert lin[1] / lin[0] == pytest.approx(10 ** (-0.15), rel=1e-12)
        assert lin[1] / lin[0] == pytest.approx(0.70795, abs=1e-5)

    def test_direct_pass_reduces_to_expected_counts(self):
        topo = BufferTopology()
        cfg = ExperimentConfig(preset="t", eta_list=(1,), mode="analytic")
        sweep = run_retrieval_sweep(cfg, topo, DET)
        mu_direct = 0.1 * db_to_transmission(topo.direct_pass_loss_db())
        oracle = expected_counts([(0.0, mu_direct)], DET, cfg.n_triggers,
                                 window=cfg.count_window_s)[0]
        assert sweep.rows[0].expected_counts == pytest.approx(oracle,
                                                              rel=1e-12)

    def test_unsafe_drive_aborts_with_diagnostics(self):
        topo = BufferTopology()
        cfg = ExperimentConfig(preset="t", eta_list=(2,), mode="analytic",
                               drive_width_s=1.2e-6)
        with pytest.raises(ScheduleError) as err:
            run_retrieval_sweep(cfg, topo, DET)
        assert any(v.code == "unintended-readout"
                   for v in err.value.violations)

    def test_monte_carlo_counts_near_expectation(self):
        topo = BufferTopology()
        cfg = ExperimentConfig(preset="t", n_triggers=20_000, seed=17)
        sweep = run_retrieval_sweep(cfg, topo, DET)
        for row in sweep.rows:
            p = row.expected_counts / cfg.n_triggers
            sigma = math.sqrt(cfg.n_triggers * p * (1 - p))
            assert abs(row.sampled_counts - row.expected_counts) < 5 * sigma
        assert sweep.histogram is not None
        assert sweep.histogram.total >= sum(
            r.sampled_counts for r in sweep.rows)


class TestHwpSweep:
    def test_needs_angle_coverage(self):
        topo = BufferTopology()
        with pytest.raises(InputDomainError):
            cfg = analytic_config(hwp_angles=(0.0, 0.2, 0.4, 0.6))
            run_hwp_sweep(cfg, topo, QUIET)
        with pytest.raises(InputDomainError):
            cfg = analytic_config(hwp_angles=(0.0, math.pi / 2))
            run_hwp_sweep(cfg, topo, QUIET)

    def test_ideal_system_reaches_unit_visibility(self):
        topo = BufferTopology()
        results = run_hwp_sweep(analytic_config(), topo, QUIET)
        assert len(results) == 6  # three settings, two bases
        for r in results:
            assert r.visibility == pytest.approx(1.0, abs=1e-9)

    def test_ideal_curves_are_malus_shaped(self):
        topo = BufferTopology()
        (r,) = run_hwp_sweep(analytic_config(eta_list=(1,),
                                             basis="computational"),
                             topo, QUIET)
        for angle, n0, n1 in r.curve:
            assert n0 == pytest.approx(math.cos(2 * angle) ** 2, abs=1e-9)
            assert n1 == pytest.approx(math.sin(2 * angle) ** 2, abs=1e-9)

    def test_port_curves_complementary(self):
        topo = BufferTopology()
        results = run_hwp_sweep(analytic_config(), topo, QUIET)
        for r in results:
            for _, n0, n1 in r.curve:
                assert n0 + n1 == pytest.approx(1.0, abs=1e-9)

    def test_basis_symmetry_with_depolarization(self):
        topo = BufferTopology(prep_error_depol=0.05, depol_per_cycle=0.02)
        results = run_hwp_sweep(analytic_config(), topo, QUIET)
        by_eta = {}
        for r in results:
            by_eta.setdefault(r.eta, {})[r.basis] = r.visibility
        for eta, pair in by_eta.items():
            assert pair["computational"] == pytest.approx(
                pair["logical"], abs=1e-12)

    def test_visibility_equals_net_bloch_shrink(self):
        topo = BufferTopology(prep_error_depol=0.045,
                              depol_per_cycle=0.03)
        results = run_hwp_sweep(analytic_config(basis="computational"),
                                topo, QUIET)
        for r in results:
            expected = 0.955 * 0.97 ** (r.eta - 1)
            assert r.visibility == pytest.approx(expected, rel=1e-9)

    def test_average_by_eta(self):
        topo = BufferTopology()
        results = run_hwp_sweep(analytic_config(eta_list=(1, 3)), topo,
                                QUIET)
        avg = average_visibility_by_eta(results)
        assert set(avg) == {1, 3}
        assert avg[1] == pytest.approx(1.0, abs=1e-9)


class TestCalibration:
    def test_perfect_targets_need_no_depolarization(self):
        topo = BufferTopology()
        cfg = analytic_config()
        cal = calibrate({1: 1.0, 3: 1.0, 5: 1.0}, topo, cfg, QUIET)
        assert cal.prep_error_depol == pytest.approx(0.0, abs=1e-12)
        assert all(p == pytest.approx(0.0, abs=1e-12)
                   for p in cal.depol_per_cycle)

    def test_table_mode_reproduces_reference_targets(self):
        topo = BufferTopology()
        cfg = analytic_config()
        cal = calibrate(PAPER_TARGETS, topo, cfg, DET, mode="table")
        results = run_hwp_sweep(cfg, apply_calibration(topo, cal), DET)
        avg = average_visibility_by_eta(results)
        for eta, target in PAPER_TARGETS.items():
            assert avg[eta] == pytest.approx(target, rel=1e-6)

    def test_table_residuals_are_tiny(self):
        topo = BufferTopology()
        cal = calibrate(PAPER_TARGETS, topo, analytic_config(), DET)
        assert all(abs(r) < 1e-9 for r in cal.residuals.values())

    def test_physical_mode_recovers_constant_rate(self):
        # Forward-generate self-consistent targets from a known constant
        # per-cycle probability, then invert them.
        p_true = 1.0 - (0.835 / 0.955) ** 0.25
        topo = BufferTopology(prep_error_depol=0.045,
                              depol_per_cycle=p_true)
        cfg = analytic_config()
        results = run_hwp_sweep(cfg, topo, QUIET)
        targets = average_visibility_by_eta(results)
        cal = calibrate(targets, BufferTopology(), cfg, QUIET,
                        mode="physical")
        assert cal.depol_per_cycle[0] == pytest.approx(p_true, abs=1e-9)
        assert cal.prep_error_depol == pytest.approx(0.045, abs=1e-9)
        assert all(abs(r) < 1e-9 for r in cal.residuals.values())

    def test_physical_mode_reports_residuals_for_reference_targets(self):
        topo = BufferTopology()
        cal = calibrate(PAPER_TARGETS, topo, analytic_config(), DET,
                        mode="physical")
        # The flat-then-steep sequence cannot fit one exponential: the
        # middle target must miss.
        assert abs(cal.residuals[3]) > 0.01

    def test_growing_targets_are_infeasible(self):
        topo = BufferTopology()
        with pytest.raises(CalibrationError):
            calibrate({1: 0.90, 3: 0.99}, topo, analytic_config(), DET,
                      mode="table")

    def test_eta_one_anchor_required(self):
        with pytest.raises(CalibrationError):
            calibrate({3: 0.9}, BufferTopology(), analytic_config(), DET)

    def test_targets_domain(self):
        with pytest.raises(CalibrationError):
            calibrate({1: 0.0}, BufferTopology(), analytic_config(), DET)


class TestMonteCarloInsets:
    def test_calibrated_sweep_within_two_points(self):
        topo = BufferTopology()
        cfg_cal = analytic_config()
        cal = calibrate(PAPER_TARGETS, topo, cfg_cal, DET)
        topo_cal = apply_calibration(topo, cal)
        cfg = ExperimentConfig(preset="t", eta_list=(1, 3, 5),
                               mode="monte-carlo", n_triggers=20_000,
                               seed=5)
        results = run_hwp_sweep(cfg, topo_cal, DET)
        avg = average_visibility_by_eta(results)
        for eta, target in PAPER_TARGETS.items():
            assert avg[eta] == pytest.approx(target, abs=0.03)

    def test_sampled_counts_within_five_sigma(self):
        topo = BufferTopology()
        cfg = ExperimentConfig(preset="t", eta_list=(1,), n_triggers=10_000,
                               seed=11)
        results = run_hwp_sweep(cfg, topo, DET)
        for r in results:
            for port in (0, 1):
                for exp, got in zip(r.expected[port], r.counts[port]):
                    p = exp / cfg.n_triggers
                    sigma = math.sqrt(cfg.n_triggers * p * (1 - p))
                    assert abs(got - exp) <= 5 * sigma + 1e-9
