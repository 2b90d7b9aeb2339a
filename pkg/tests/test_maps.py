import math

import mpmath
import numpy as np
import pytest

from errors import InvalidParameterError
from forcing import default_forcing, parse_forcing, uniform_grid
from maps import (GOLDEN_OMEGA, Branch, ContractionMode, MapParams, SystemKind, breakpoints, classify_branch,
                  forcing_term, h_eval, h_prime, h_value, is_flat, rotate, scalar_map, step, step2, step_mp)

PIECEWISE = [
    (SystemKind.PITCHFORK_SUPER, 2.0),
    (SystemKind.PITCHFORK_SUB, 2.0),
    (SystemKind.SADDLE_NODE, 2.0),
    (SystemKind.PERIOD_DOUBLING, -3.0),
]


class TestMapParams:
    @pytest.mark.parametrize('a', [0.0, 1.0, -1.0])
    def test_excluded_slopes(self, a):
        with pytest.raises(InvalidParameterError):
            MapParams(SystemKind.SADDLE_NODE, a)

    def test_slope_sign_per_kind(self):
        with pytest.raises(InvalidParameterError):
            MapParams(SystemKind.PERIOD_DOUBLING, 3.0)
        with pytest.raises(InvalidParameterError):
            MapParams(SystemKind.PITCHFORK_SUPER, -2.0)

    def test_rational_rotation_rejected(self):
        with pytest.raises(InvalidParameterError):
            MapParams(SystemKind.SADDLE_NODE, 2.0, omega=2 * math.pi / 3)

    def test_kind_from_string(self):
        assert MapParams('saddle-node', 2.0).kind is SystemKind.SADDLE_NODE
        with pytest.raises(InvalidParameterError):
            MapParams('no-such-map', 2.0)

    def test_non_finite(self):
        with pytest.raises(InvalidParameterError):
            MapParams(SystemKind.SADDLE_NODE, 2.0, b=float('inf'))

    def test_negative_b_normalized(self):
        params = MapParams(SystemKind.PERIOD_DOUBLING, -3.0, -0.2)
        assert params.b == 0.2
        assert params.forcing_negated
        theta = uniform_grid(64)
        expected = 0.2 * np.asarray(default_forcing()(theta))
        np.testing.assert_allclose(forcing_term(params, theta), expected, atol=1e-15)

    def test_negative_b_kept_for_saddle_node(self):
        params = MapParams(SystemKind.SADDLE_NODE, 2.0, -0.2)
        assert params.b == -0.2
        assert not params.forcing_negated

    def test_mode(self):
        assert MapParams(SystemKind.SADDLE_NODE, 2.0).mode is ContractionMode.NONUNIFORM
        assert MapParams(SystemKind.SADDLE_NODE, 0.5).mode is ContractionMode.UNIFORM

    def test_describe_uses_round_trip_digits(self):
        info = MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.1).describe()
        assert float(info['omega']) == GOLDEN_OMEGA
        assert info['kind'] == 'period-doubling'


class TestBranches:
    def test_period_doubling_values(self):
        params = MapParams(SystemKind.PERIOD_DOUBLING, -3.0)
        assert h_value(params, 0.0) == 0.0
        assert h_value(params, -1.0) == 1.0
        assert h_value(params, 0.5) == -1.5

    def test_pitchfork_super_values(self):
        params = MapParams(SystemKind.PITCHFORK_SUPER, 2.0)
        assert h_value(params, 1.0) == pytest.approx(math.pi / 2)
        assert h_value(params, 0.5) == 1.0
        assert h_value(params, -1.0) == pytest.approx(-math.pi / 2)

    def test_pitchfork_sub_plateau(self):
        params = MapParams(SystemKind.PITCHFORK_SUB, 2.0)
        assert h_value(params, 0.5) == 0.0
        assert h_value(params, 2.0) == 2.0
        assert h_value(params, -2.0) == -2.0
        assert classify_branch(params, 0.5) is Branch.PLATEAU

    def test_classify(self):
        params = MapParams(SystemKind.PITCHFORK_SUPER, 2.0)
        assert classify_branch(params, 0.0) is Branch.LINEAR
        assert classify_branch(params, 2.0) is Branch.CONST_UPPER
        assert classify_branch(params, -2.0) is Branch.CONST_LOWER
        assert h_eval(params, 2.0).branch is Branch.CONST_UPPER

    @pytest.mark.parametrize('kind,a', PIECEWISE)
    def test_continuous_at_breakpoints(self, kind, a):
        params = MapParams(kind, a)
        eps = 1e-9
        for x in breakpoints(params):
            jump = abs(h_value(params, x + eps) - h_value(params, x - eps))
            assert jump <= 2 * abs(a) * eps + 1e-12

    @pytest.mark.parametrize('kind,a', PIECEWISE)
    def test_derivative_follows_branch(self, kind, a):
        params = MapParams(kind, a)
        x = np.linspace(-4, 4, 801)
        expected = np.where(is_flat(params, x), 0.0, a)
        np.testing.assert_array_equal(h_prime(params, x), expected)

    @pytest.mark.parametrize('kind,a', PIECEWISE)
    def test_monotone_in_x(self, kind, a):
        params = MapParams(kind, a)
        values = np.asarray(h_value(params, np.linspace(-4, 4, 8001)))
        steps = np.sign(a) * np.diff(values)
        assert steps.min() >= 0.0, f"{kind.value}: h not monotone with the sign of a = {a}"

    @pytest.mark.parametrize('kind,a', PIECEWISE + [(SystemKind.SMOOTH_PD, 1.5)])
    def test_scalar_map_agrees(self, kind, a):
        params = MapParams(kind, a)
        h, dh = scalar_map(params)
        x = np.linspace(-3, 3, 601)
        np.testing.assert_allclose([h(v) for v in x], h_value(params, x), rtol=1e-14, atol=1e-15)
        np.testing.assert_allclose([dh(v) for v in x], h_prime(params, x), rtol=1e-15)


class TestSkewProduct:
    def test_rotate_stays_on_circle(self):
        theta = rotate(np.array([0.0, 6.0, 2 * math.pi - 1e-17]), GOLDEN_OMEGA)
        assert np.all((theta >= 0) & (theta < 2 * math.pi))

    @pytest.mark.slow
    def test_rotation_keeps_phase_over_a_million_steps(self):
        start = np.array([0.0, 1.0, 3.5, 6.2])
        theta = start.copy()
        checkpoints = range(100_000, 1_000_001, 100_000)
        for k in range(1, 1_000_001):
            theta = rotate(theta, GOLDEN_OMEGA)
            if k in checkpoints:
                with mpmath.workdps(40):
                    exact = [float(mpmath.fmod(mpmath.mpf(t0) + k * mpmath.mpf(GOLDEN_OMEGA), 2 * mpmath.pi))
                             for t0 in start]
                drift = np.abs(theta - np.array(exact))
                drift = np.minimum(drift, 2 * math.pi - drift)
                assert drift.max() <= 1e-9, f"rotation drifted by {drift.max():.3e} after {k} steps"

    def test_step2_is_two_steps(self):
        params = MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.3)
        x, theta = np.linspace(-1, 1, 11), uniform_grid(11)
        once = step(params, *step(params, x, theta))
        twice = step2(params, x, theta)
        np.testing.assert_array_equal(once[0], twice[0])
        np.testing.assert_array_equal(once[1], twice[1])

    def test_forcing_sign(self):
        g = parse_forcing('cos:1')
        assert forcing_term(MapParams(SystemKind.SADDLE_NODE, 2.0, 0.5, g=g), 0.0) == 0.5
        assert forcing_term(MapParams(SystemKind.PERIOD_DOUBLING, -3.0, 0.5, g=g), 0.0) == -0.5

    @pytest.mark.parametrize('kind,a', PIECEWISE)
    def test_high_precision_step_matches(self, kind, a):
        params = MapParams(kind, a, 0.2)
        for x, theta in [(0.1, 0.3), (-0.9, 2.0), (1.7, 5.5)]:
            value, _ = step(params, x, theta)
            with mpmath.workdps(40):
                exact, _ = step_mp(params, mpmath.mpf(x), mpmath.mpf(theta), mpmath.mpf(params.b))
            assert float(exact) == pytest.approx(float(value), abs=1e-14)
