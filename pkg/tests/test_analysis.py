import math

import numpy as np
import pytest

from analysis import (CaptureStats, CurveRole, LyapunovReport, Regime, SplitMix64, SymmetryCase, area_estimate,
                      capture_experiment, capture_set_fraction, capture_steps, fractal_scan, log_psi_integral,
                      lyapunov_curve, regime_classify, symmetry_check, uniform_contraction_solve)
from cohomology import critical_b
from errors import InvalidParameterError, NumericalFailureError
from forcing import TrigPoly, parse_forcing
from maps import GOLDEN_OMEGA, MapParams, SystemKind


class TestSplitMix64:
    def test_reference_output(self):
        assert SplitMix64(0).next_u64() == 0xE220A8397B1DCDAF

    def test_uniform_range_and_repeatability(self):
        first = [SplitMix64(42).uniform() for _ in range(1)]
        rng = SplitMix64(42)
        draws = [rng.uniform() for _ in range(1000)]
        assert draws[0] == first[0]
        assert all(0.0 <= d < 1.0 for d in draws)


class TestLyapunov:
    def test_repelling_curve_exponent(self, f4_half):
        report = lyapunov_curve(f4_half, CurveRole.REPELLING, steps=10_000)
        assert report.value == pytest.approx(math.log(3.0), abs=1e-6)
        assert report.flat_fraction == 0.0

    def test_repelling_needs_b_below_critical(self, f4_params):
        with pytest.raises(InvalidParameterError):
            lyapunov_curve(f4_params, CurveRole.REPELLING)

    def test_attractor_at_critical_is_minus_infinity(self, f4_params):
        report = lyapunov_curve(f4_params, CurveRole.ATTRACTING, steps=20_000)
        assert report.neg_infinity
        assert report.flat_fraction > 0.1

    def test_smooth_map_is_finite(self):
        report = lyapunov_curve(MapParams(SystemKind.SMOOTH_PD, 1.5, 0.1), steps=5000)
        assert math.isfinite(report.value)
        assert report.flat_fraction == 0.0

    def test_uniform_contraction_exponent(self):
        report = lyapunov_curve(MapParams(SystemKind.SADDLE_NODE, 0.5, 0.3), CurveRole.ATTRACTING, steps=20_000)
        assert math.isfinite(report.value), "a contracting map never visits a flat branch"
        assert report.value <= math.log(0.5) + 1e-12, f"exponent {report.value} above log 0.5"

    def test_report_consistency(self):
        with pytest.raises(NumericalFailureError):
            LyapunovReport(-0.5, 0.2, 100, 0, CurveRole.ATTRACTING)
        with pytest.raises(NumericalFailureError):
            LyapunovReport(-math.inf, 0.0, 100, 0, CurveRole.ATTRACTING)

    def test_bad_lengths(self, f4_half):
        with pytest.raises(InvalidParameterError):
            lyapunov_curve(f4_half, steps=0)


class TestCapture:
    def test_flat_start_is_captured_immediately(self, f4_params):
        steps = capture_steps(f4_params, np.array([-1.0]), np.array([0.0]), 10)
        assert steps.tolist() == [0]

    @pytest.mark.slow
    def test_almost_all_captured_at_critical(self, f4_params):
        stats = capture_experiment(f4_params, trials=1000, max_iters=10_000, seed=1)
        assert stats.fraction >= 0.99, f"captured {stats.captured} of {stats.trials} at b*"
        assert sum(stats.iteration_histogram.values()) == stats.captured

    def test_almost_all_captured_below_critical(self, f4_half):
        stats = capture_experiment(f4_half, trials=1000, max_iters=10_000, seed=1)
        assert stats.fraction >= 0.99, f"captured {stats.captured} of {stats.trials} at b*/2"

    def test_thread_count_does_not_matter(self, f4_params):
        one = capture_experiment(f4_params, trials=1000, max_iters=2000, seed=5, workers=1)
        four = capture_experiment(f4_params, trials=1000, max_iters=2000, seed=5, workers=4)
        assert one == four

    @pytest.mark.slow
    def test_subcritical_pitchfork_orientation(self, default_g):
        b_star = critical_b(SystemKind.PITCHFORK_SUB, 2.0, GOLDEN_OMEGA, default_g).b_star
        stats = capture_experiment(MapParams(SystemKind.PITCHFORK_SUB, 2.0, b_star), trials=1000, seed=2)
        assert stats.fraction >= 0.99, f"captured {stats.captured} of {stats.trials}"

    def test_orbit_started_on_repeller_escapes_late(self, f4_half):
        from curves import CurveEvaluator, eval_mu
        mu0 = eval_mu(CurveEvaluator(f4_half), 1.0)
        steps = capture_steps(f4_half, np.array([mu0]), np.array([1.0]), 200)
        assert steps[0] == -1 or steps[0] >= 20

    def test_stats_validation(self):
        with pytest.raises(NumericalFailureError):
            CaptureStats(trials=2, captured=3, iteration_histogram={1: 3}, max_iters=5, seed=0)

    def test_needs_expanding_map(self):
        with pytest.raises(InvalidParameterError):
            capture_experiment(MapParams(SystemKind.SADDLE_NODE, 0.5, 0.1), trials=10)


class TestAreaAndDensity:
    def test_area_positive_at_critical(self, f4_params):
        assert area_estimate(f4_params, 40, 4096) >= 0.05

    def test_capture_set_has_positive_measure(self, f4_params):
        assert capture_set_fraction(f4_params, 10, 4096) > 0.0

    @pytest.mark.slow
    def test_log_psi_integral(self, f4_params):
        coarse = log_psi_integral(f4_params, 5, grid_size=2 ** 14)
        fine = log_psi_integral(f4_params, 5, grid_size=2 ** 15)
        assert fine <= 0.05
        assert abs(fine - coarse) <= 1e-2

    def test_log_psi_integral_needs_critical(self, f4_half):
        with pytest.raises(InvalidParameterError):
            log_psi_integral(f4_half, 2, grid_size=1024)


class TestRegimes:
    def test_period_doubling_inventory(self, f4_critical):
        b_star = f4_critical.b_star
        g = parse_forcing('default')
        before = regime_classify(SystemKind.PERIOD_DOUBLING, -3.0, 0.5 * b_star, GOLDEN_OMEGA, g)
        at = regime_classify(SystemKind.PERIOD_DOUBLING, -3.0, b_star, GOLDEN_OMEGA, g)
        after = regime_classify(SystemKind.PERIOD_DOUBLING, -3.0, 1.5 * b_star, GOLDEN_OMEGA, g)
        assert before.regime is Regime.BEFORE and 'two-periodic' in before.expected_curves
        assert at.regime is Regime.AT
        assert after.regime is Regime.AFTER

    @pytest.mark.parametrize('kind,a', [(SystemKind.PITCHFORK_SUPER, 2.0), (SystemKind.PITCHFORK_SUB, 2.0),
                                        (SystemKind.SADDLE_NODE, 2.0)])
    def test_after_critical(self, kind, a, default_g):
        b_star = critical_b(kind, a, GOLDEN_OMEGA, default_g).b_star
        report = regime_classify(kind, a, 2 * b_star, GOLDEN_OMEGA, default_g)
        assert report.regime is Regime.AFTER
        if kind is SystemKind.SADDLE_NODE:
            assert report.expected_curves.startswith('no continuous')

    def test_contracting_rejected(self, default_g):
        with pytest.raises(InvalidParameterError):
            regime_classify(SystemKind.SADDLE_NODE, 0.5, 0.1, GOLDEN_OMEGA, default_g)


class TestUniformContraction:
    def test_seed_independent(self):
        params = MapParams(SystemKind.SADDLE_NODE, 0.5, 0.3)
        first = uniform_contraction_solve(params, grid_size=256, seed_curve=0.0)
        second = uniform_contraction_solve(params, grid_size=256, seed_curve=10.0)
        assert np.max(np.abs(first.values - second.values)) <= 2e-10

    def test_sweeps_contract(self):
        params = MapParams(SystemKind.SADDLE_NODE, 0.5, 0.3)
        changes = uniform_contraction_solve(params, grid_size=256, seed_curve=10.0).meta['sweep_changes']
        for before, after in zip(changes, changes[1:]):
            if before > 1e-12:
                assert after <= 0.501 * before

    def test_trig_seed(self):
        params = MapParams(SystemKind.PERIOD_DOUBLING, -0.5, 0.2)
        sample = uniform_contraction_solve(params, grid_size=128, seed_curve=TrigPoly.constant(1.0))
        assert sample.meta['sweeps'] >= 1

    def test_rejects_expanding(self, f4_half):
        with pytest.raises(InvalidParameterError):
            uniform_contraction_solve(f4_half)


class TestSymmetry:
    def test_antisymmetric_forcing(self, sin_g):
        report = symmetry_check(MapParams(SystemKind.PITCHFORK_SUPER, 2.0, 0.5, g=sin_g))
        assert report.case is SymmetryCase.ANTISYMMETRIC
        assert report.passed

    def test_nonnegative_forcing(self, default_g):
        report = symmetry_check(MapParams(SystemKind.PITCHFORK_SUPER, 2.0, 0.1, g=default_g))
        assert report.case is SymmetryCase.NONNEGATIVE
        assert report.passed

    def test_other_forcing(self):
        report = symmetry_check(MapParams(SystemKind.PITCHFORK_SUPER, 2.0, 0.1, g=parse_forcing('cos:0.1,1')))
        assert report.case is SymmetryCase.NOT_APPLICABLE
        assert report.passed is None


@pytest.mark.slow
def test_fractal_scan_lipschitz_grows(f4_critical, default_g):
    params = MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.0)
    b_values = [r * f4_critical.b_star for r in (0.5, 0.9, 0.99, 0.999)]
    frame = fractal_scan(params, b_values, interval=(0.0, 2 * math.pi), n_converge=200)
    assert list(frame['b_rel']) == pytest.approx([0.5, 0.9, 0.99, 0.999])
    assert frame['L_estimate'].iloc[-1] > frame['L_estimate'].iloc[0]
    assert frame['L_refined'].is_monotonic_increasing
    assert frame['L_refined'].iloc[-1] >= 40 * frame['L_refined'].iloc[0]
    assert (frame['monotone_violations'] == 0).all()
    assert frame['in_region'].all()


# growth of L_refined from 0.5·b* to 0.999·b* on [qπ/4, (q+1)π/4); eighths with no dip below b* grow like b
EIGHTH_GROWTH_FLOORS = [55.0, 1.9, 25.0, 1.9, 1.9, 1.9, 8.0, 11.0]


@pytest.mark.slow
@pytest.mark.parametrize('q', range(8))
def test_fractal_scan_per_eighth(q, f4_critical, default_g):
    params = MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.0)
    b_values = [r * f4_critical.b_star for r in (0.5, 0.9, 0.99, 0.999)]
    interval = (q * math.pi / 4, (q + 1) * math.pi / 4)
    frame = fractal_scan(params, b_values, interval=interval, n_converge=200)
    refined = frame['L_refined'].to_numpy()
    assert np.all(np.diff(refined) > 0), f"eighth {q}: refined Lipschitz estimates not increasing: {refined}"
    growth = refined[-1] / refined[0]
    assert growth >= EIGHTH_GROWTH_FLOORS[q], f"eighth {q}: growth {growth:.3f} below {EIGHTH_GROWTH_FLOORS[q]}"
    assert (frame['monotone_violations'] == 0).all()
    assert frame['in_region'].all()


def test_fractal_scan_needs_nonnegative_forcing(sin_g):
    with pytest.raises(InvalidParameterError):
        fractal_scan(MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.0, g=sin_g), [0.1, 0.2])
