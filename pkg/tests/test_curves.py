import math

import numpy as np
import pytest

import curves
from cohomology import critical_b, exact_critical_b
from curves import (CurveEvaluator, CurveSample, Envelope, SeedCurve, cauchy_tail, convergence_report,
                    converged_curve, envelope_eval, eval_lambda_n, eval_mu, eval_phi_image, eval_phi_n, eval_psi_n,
                    fill_distance, fractalization_ratio, in_invariant_region, lambda_scale, lambda_step,
                    lipschitz_estimate, refined_lipschitz, sample_curve, seed_value, zero_count)
from errors import InvalidParameterError
from forcing import uniform_grid
from maps import GOLDEN_OMEGA, MapParams, SystemKind, step, step2


class TestEvaluator:
    def test_unforced_period_doubling(self):
        ev = CurveEvaluator(MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.0), 10)
        theta = uniform_grid(64)
        np.testing.assert_array_equal(eval_phi_n(ev, theta), np.ones(64))
        np.testing.assert_array_equal(eval_mu(ev, theta), np.zeros(64))

    def test_negative_n(self, f4_params):
        with pytest.raises(InvalidParameterError):
            CurveEvaluator(f4_params, -1)

    def test_lower_seed_only_for_pitchfork(self, f4_params):
        with pytest.raises(InvalidParameterError):
            CurveEvaluator(f4_params, 0, seed=SeedCurve.GAMMA)

    def test_no_repeller_when_contracting(self):
        ev = CurveEvaluator(MapParams(SystemKind.SADDLE_NODE, 0.5, 0.3), 3)
        assert ev.mu is None
        with pytest.raises(InvalidParameterError):
            eval_lambda_n(ev, 0.0)

    def test_unknown_curve(self, f4_params):
        with pytest.raises(InvalidParameterError):
            CurveEvaluator(f4_params).curve('psi')

    def test_phi_n_is_pushed_forward_seed(self, f4_half):
        ev = CurveEvaluator(f4_half, 2)
        theta = np.array([0.4, 1.9, 4.2])
        x = np.asarray(seed_value(f4_half, SeedCurve.PHI, theta - 4 * GOLDEN_OMEGA))
        t = theta - 4 * GOLDEN_OMEGA
        for _ in range(2):
            x, t = step2(f4_half, x, t)
        np.testing.assert_allclose(eval_phi_n(ev, theta), x, atol=1e-12)

    def test_partner_curve_only_for_period_doubling(self):
        ev = CurveEvaluator(MapParams(SystemKind.SADDLE_NODE, 2.0, 0.1), 2)
        with pytest.raises(InvalidParameterError):
            eval_phi_image(ev, 0.0)

    def test_partner_curve_composes_to_next_curve(self, f4_half):
        ev = CurveEvaluator(f4_half, 4)
        theta = np.random.default_rng(17).uniform(0, 2 * math.pi, 256)
        partner, theta1 = step(f4_half, eval_phi_n(ev, theta), theta)
        np.testing.assert_allclose(partner, eval_phi_image(ev, theta1), atol=1e-10,
                                   err_msg="one map step does not land on the partner curve")
        following, theta2 = step(f4_half, partner, theta1)
        np.testing.assert_allclose(following, eval_phi_n(ev.with_n(5), theta2), atol=1e-10,
                                   err_msg="two map steps do not land on phi_{n+1}")

    def test_region_between_mu_and_seed_is_invariant(self, f4_params):
        ev = CurveEvaluator(f4_params, 0)
        rng = np.random.default_rng(23)
        theta = rng.uniform(0, 2 * math.pi, 10_000)
        mu = np.asarray(eval_mu(ev, theta))
        top = np.asarray(seed_value(f4_params, SeedCurve.PHI, theta))
        x = mu + rng.uniform(0, 1, theta.size) * (top - mu)
        x2, theta2 = step2(f4_params, x, theta)
        inside = np.asarray(in_invariant_region(ev, x2, theta2, tol=1e-12))
        assert inside.all(), f"{int((~inside).sum())} of {theta.size} points left the region after one step"


class TestGapSequence:
    def test_nonnegative_and_decreasing_at_critical(self, f4_params):
        theta = uniform_grid(4096)
        previous = None
        for n in range(0, 21):
            lam = np.asarray(eval_lambda_n(CurveEvaluator(f4_params, n), theta))
            assert lam.min() >= -1e-10, f'lambda_{n} negative'
            if previous is not None:
                assert np.max(lam - previous) <= 1e-10, f'lambda_{n} increased'
            previous = lam

    def test_lambda_zero_mean(self, f4_params):
        lam0 = np.asarray(eval_lambda_n(CurveEvaluator(f4_params, 0), uniform_grid(4096)))
        assert lam0.mean() == pytest.approx(0.629, abs=5e-3)

    def test_linear_step_is_exact(self, f4_half):
        step = lambda_step(CurveEvaluator(f4_half, 3), uniform_grid(512))
        np.testing.assert_array_equal(step.advanced[step.linear], 9.0 * step.current[step.linear])

    def test_psi_bounds_and_monotone(self, f4_params):
        rng = np.random.default_rng(3)
        theta = rng.uniform(0, 2 * math.pi, 1024)
        previous = None
        for n in range(0, 11):
            ev = CurveEvaluator(f4_params, n)
            psi = np.asarray(eval_psi_n(ev, theta, scale=lambda_scale(ev)))
            assert np.all(psi >= 0)
            assert np.all(psi <= 9.0 + 1e-9)
            if previous is not None:
                assert np.all(previous <= psi + 1e-9)
            previous = psi

    @pytest.mark.parametrize('n', [0, 3, 7])
    def test_predicted_zeros_period_doubling(self, f4_params, n):
        report = zero_count(CurveEvaluator(f4_params, n))
        assert report.count == n + 1
        expected = np.mod(report.predicted[0] + 2 * GOLDEN_OMEGA * np.arange(n + 1), 2 * math.pi)
        np.testing.assert_allclose(report.predicted, expected, atol=1e-9)
        assert report.floor > 0

    @pytest.mark.parametrize('n', [0, 3])
    def test_predicted_zeros_pitchfork(self, default_g, n):
        b_star = critical_b(SystemKind.PITCHFORK_SUPER, 2.0, GOLDEN_OMEGA, default_g).b_star
        report = zero_count(CurveEvaluator(MapParams(SystemKind.PITCHFORK_SUPER, 2.0, b_star), n))
        assert report.count == n + 1

    def test_pitchfork_with_sine_forcing_has_n_plus_one_zeros(self, sin_g):
        crit = critical_b(SystemKind.PITCHFORK_SUPER, 2.0, GOLDEN_OMEGA, sin_g)
        params = MapParams(SystemKind.PITCHFORK_SUPER, 2.0, crit.b_star, g=sin_g)
        report = zero_count(CurveEvaluator.for_pair(params, 5, crit.colliding))
        assert report.count == 6, f"expected 6 zeros of lambda_5, found {report.count}"
        expected = np.mod(report.predicted[0] + GOLDEN_OMEGA * np.arange(6), 2 * math.pi)
        np.testing.assert_allclose(report.predicted, expected, atol=1e-9, err_msg="zeros are not spaced by ω")

    def test_zero_count_needs_critical_value(self, f4_half):
        with pytest.raises(InvalidParameterError):
            zero_count(CurveEvaluator(f4_half, 1))


class TestSampling:
    def test_workers_do_not_change_values(self, f4_half):
        ev = CurveEvaluator(f4_half, 5)
        one = sample_curve(ev, 1024, workers=1)
        four = sample_curve(ev, 1024, workers=4)
        np.testing.assert_array_equal(one.values, four.values)
        assert one.meta['label'] == 'phi_n'

    def test_grid_refinement_shares_nodes(self, f4_half):
        ev = CurveEvaluator(f4_half, 5)
        coarse = sample_curve(ev, 512)
        fine = sample_curve(ev, 1024)
        np.testing.assert_allclose(fine.values[::2], coarse.values, atol=1e-15)

    def test_rejects_non_finite(self):
        values = np.zeros(16)
        values[3] = np.nan
        with pytest.raises(InvalidParameterError):
            CurveSample(16, values)

    def test_frame_columns(self, f4_half):
        frame = sample_curve(CurveEvaluator(f4_half, 1), 32).to_frame()
        assert list(frame.columns) == ['theta', 'value']
        assert frame['theta'].is_monotonic_increasing

    def test_lipschitz_of_sine(self):
        sample = sample_curve(np.sin, 4096, label='sin')
        assert lipschitz_estimate(sample) == pytest.approx(1.0, abs=1e-3)
        assert lipschitz_estimate(sample, (0.0, 0.5)) == pytest.approx(1.0, abs=1e-3)
        assert lipschitz_estimate(sample, (1.5, 1.7)) < 0.1
        assert fractalization_ratio(sample) == pytest.approx(1.0, abs=1e-3)

    def test_lipschitz_bad_interval(self):
        sample = sample_curve(np.sin, 64)
        with pytest.raises(InvalidParameterError):
            lipschitz_estimate(sample, (1.0, 0.5))

    def test_invariant_region_holds_iterates(self, f4_half):
        ev = CurveEvaluator(f4_half, 20)
        sample = sample_curve(ev, 2048)
        assert np.all(in_invariant_region(ev, sample.values, sample.thetas, tol=1e-9))

    def test_envelope_bounds_first_curve(self, f4_half):
        ev = CurveEvaluator(f4_half, 0)
        theta = uniform_grid(256)
        down = np.asarray(envelope_eval(ev, 6, theta, Envelope.DOWN))
        up = np.asarray(envelope_eval(ev, 6, theta, Envelope.UP))
        phi0 = np.asarray(eval_phi_n(ev, theta))
        assert np.all(down <= phi0)
        assert np.all(up >= phi0)

    @pytest.mark.parametrize('fixture', ['f4_half', 'f4_params'])
    def test_envelope_is_last_curve_when_monotone(self, fixture, request):
        params = request.getfixturevalue(fixture)
        ev = CurveEvaluator(params, 0)
        theta = uniform_grid(512)
        down = np.asarray(envelope_eval(ev, 8, theta, Envelope.DOWN))
        np.testing.assert_array_equal(down, eval_phi_n(ev.with_n(8), theta),
                                      err_msg="decreasing sequence: the down envelope must be phi_m itself")
        up = np.asarray(envelope_eval(ev, 8, theta, Envelope.UP))
        np.testing.assert_allclose(up, eval_phi_n(ev, theta), atol=1e-12,
                                   err_msg="decreasing sequence: the up envelope must be phi_0")

    def test_refined_lipschitz_never_below_grid_estimate(self, f4_half):
        ev = CurveEvaluator(f4_half, 3)
        interval = (0.0, math.pi / 4)
        grid_only = lipschitz_estimate(sample_curve(ev, 1024), interval)
        refined = refined_lipschitz(ev, interval, grid_size=1024)
        assert refined >= grid_only * (1 - 1e-9), f"refined {refined} below grid estimate {grid_only}"


class TestConvergence:
    def test_uniform_before_critical(self, f4_critical):
        ev = CurveEvaluator(MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.9 * f4_critical.b_star))
        report = convergence_report(ev, 80)
        assert report.cauchy_uniform
        assert report.orbit_gaps is None

    def test_not_uniform_at_critical(self, f4_params):
        report = convergence_report(CurveEvaluator(f4_params), 80)
        assert not report.cauchy_uniform
        assert report.orbit_gaps is not None
        assert np.all(report.sup_gaps >= report.grid_gaps)

    def test_converged_curve_advances(self, f4_critical):
        ev = CurveEvaluator(MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.9 * f4_critical.b_star))
        ev_n, report = converged_curve(ev, 80)
        assert ev_n.n == report.converged_at + 1

    def test_tail_must_be_monotone(self):
        assert cauchy_tail(np.array([1e-3, 1e-9, 5e-9, 1e-10, 8e-9]), 1e-8) is None, \
            "gaps below tol that rise again are not a Cauchy tail"
        assert cauchy_tail(np.array([1e-3, 1e-9, 5e-10, 5e-10, 0.0]), 1e-8) == 1

    def test_rising_gaps_are_not_uniform(self, f4_critical, monkeypatch):
        ev = CurveEvaluator(MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.9 * f4_critical.b_star))
        rising = np.tile([1e-9, 5e-9], 40)
        monkeypatch.setattr(curves, 'at_critical', lambda b, b_star, tolerance='critical_snap': True)
        monkeypatch.setattr(curves, '_orbit_gaps', lambda ev, n_max, exact: rising[:n_max])
        report = convergence_report(ev, 80, tol=1e-8)
        assert not report.cauchy_uniform, "oscillating gaps below tol were reported as uniform convergence"
        assert report.converged_at is None

    def test_contraction_ratio_in_uniform_mode(self):
        ev = CurveEvaluator(MapParams(SystemKind.SADDLE_NODE, 0.5, 0.3))
        report = convergence_report(ev, 80)
        gaps = report.sup_gaps
        measurable = gaps[:-1] > 1e-8
        ratios = gaps[1:][measurable] / gaps[:-1][measurable]
        assert ratios.size > 10
        assert ratios.max() <= 0.5 + 1e-6, f"gap ratio {ratios.max()} exceeds the contraction factor 0.5"
        assert report.cauchy_uniform

    def test_n_max_too_small(self, f4_params):
        with pytest.raises(InvalidParameterError):
            convergence_report(CurveEvaluator(f4_params), 1)


def test_fill_distance_of_zero_orbit():
    assert fill_distance(0.0, 2 * GOLDEN_OMEGA, 20_000) < 1e-3


def test_fill_distance_needs_points():
    with pytest.raises(InvalidParameterError):
        fill_distance(0.0, 1.0, 1)


@pytest.mark.slow
def test_lipschitz_blows_up_on_every_eighth_at_critical(f4_params, default_g):
    exact = exact_critical_b(SystemKind.PERIOD_DOUBLING, -3.0, GOLDEN_OMEGA, default_g)
    for q in range(8):
        interval = (q * math.pi / 4, (q + 1) * math.pi / 4)
        first = refined_lipschitz(CurveEvaluator(f4_params, 0), interval, exact=exact)
        late = refined_lipschitz(CurveEvaluator(f4_params, 40), interval, exact=exact)
        assert late > 100 * first, \
            f"[{interval[0]:.4f}, {interval[1]:.4f}): L(phi_40) = {late:.4g}, L(phi_0) = {first:.4g}"
