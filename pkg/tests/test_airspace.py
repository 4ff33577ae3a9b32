import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skyfeel import airspace as air
from skyfeel import oracles
from skyfeel.errors import GeometryError

ENV = air.Environment()
RADIO = air.RadioParams()


def scene_with(targets, H=100.0, server=(0, 0, 0), theta0=70.0):
    return air.Scene(air.Position(*server), [air.Position(*t) for t in targets], H, ENV, RADIO, theta0)


def mp_los(theta, psi=11.95, zeta=0.14):
    mp.mp.dps = 40
    return float(1 / (1 + mp.mpf(psi) * mp.e ** (-mp.mpf(zeta) * (mp.mpf(theta) - mp.mpf(psi)))))


class TestElevation:
    def test_overhead(self):
        assert air.elevation_angle_deg(air.Position(0, 0, 100), air.Position(0, 0, 0)) == pytest.approx(90)

    def test_forty_five(self):
        got = air.elevation_angle_deg(air.Position(100, 0, 100), air.Position(0, 0, 0))
        assert got == pytest.approx(math.degrees(math.asin(100 / math.sqrt(20000))), abs=1e-12)

    def test_level(self):
        assert air.elevation_angle_deg(air.Position(50, 0, 30), air.Position(0, 0, 30)) == 0.0

    def test_coincident_rejected(self):
        with pytest.raises(GeometryError):
            air.elevation_angle_deg(air.Position(1, 2, 3), air.Position(1, 2, 3))


class TestLosProbability:
    @pytest.mark.parametrize("theta", [11.95, 70.0, 90.0, 0.0, 33.3])
    def test_against_high_precision(self, theta):
        assert air.los_probability(theta, ENV) == pytest.approx(mp_los(theta), rel=1e-13)

    def test_midpoint(self):
        assert air.los_probability(11.95, ENV) == pytest.approx(1 / 12.95, rel=1e-14)

    def test_table_values(self):
        assert air.los_probability(70, ENV) == pytest.approx(0.99648, abs=5e-6)
        assert air.los_probability(90, ENV) == pytest.approx(0.99979, abs=5e-6)

    def test_strictly_increasing(self):
        th = np.arange(0.0, 90.01, 1.0)
        assert np.all(np.diff(air.los_probability(th, ENV)) > 0)

    @pytest.mark.parametrize("theta", [-1.0, 90.5])
    def test_out_of_range(self, theta):
        with pytest.raises(ValueError):
            air.los_probability(theta, ENV)


class TestThetaFromQs:
    def test_midpoint(self):
        assert air.theta_from_qs(1 / 12.95, ENV) == pytest.approx(11.95, abs=1e-10)

    def test_half(self):
        assert air.theta_from_qs(0.5, ENV) == pytest.approx(11.95 + math.log(11.95) / 0.14, abs=1e-10)
        assert air.theta_from_qs(0.5, ENV) == pytest.approx(29.67, abs=0.01)

    def test_table_value(self):
        assert air.theta_from_qs(0.99648, ENV) == pytest.approx(70.0, abs=0.02)

    def test_round_trip(self):
        th = np.linspace(1, 89, 500)
        back = air.theta_from_qs(air.los_probability(th, ENV), ENV)
        assert np.max(np.abs(back - th)) < 1e-8

    @pytest.mark.parametrize("q", [0.0, 1.0, 1.2])
    def test_rejects(self, q):
        with pytest.raises(ValueError):
            air.theta_from_qs(q, ENV)


class TestGainAndRate:
    def test_gain_at_200m(self):
        # hand evaluation: K0 = 4 pi fc / c, eta1 = 10^0.3, overhead link
        sc = scene_with([(10, 0, 0)], H=200)
        k0 = 4 * math.pi * 60e9 / 3e8
        want = (k0 * 200) ** -2 / 10 ** 0.3
        got = air.channel_gain(air.Position(0, 0, 200), sc)
        q_c = air.los_probability(90, ENV)
        exact = (k0 * 200) ** -2 / (10 ** 0.3 * q_c + 10 ** 2.3 * (1 - q_c))
        assert got == pytest.approx(exact, rel=1e-12)
        assert want == pytest.approx(1.98e-12, rel=0.01)
        # q_c is not exactly 1 at 90 deg, so the gain sits a little below the limit
        assert got < want

    def test_equal_excess_losses_ignore_q(self):
        r = air.RadioParams(excess_los_linear=5.0, excess_nlos_linear=5.0)
        sc = air.Scene(air.Position(0, 0, 0), [air.Position(1, 0, 0)], 100, ENV, r)
        for u in (air.Position(0, 50, 100), air.Position(300, 0, 100)):
            d = math.dist((0, 0, 0), u.as_array())
            k0 = 4 * math.pi * 60e9 / 3e8
            assert air.channel_gain(u, sc) == pytest.approx((k0 * d) ** -2 / 5.0, rel=1e-12)

    def test_rotation_invariance(self):
        sc = scene_with([(10, 0, 0)])
        u = np.array([120.0, -40.0, 100.0])
        for a in np.linspace(0, 2 * np.pi, 7):
            R = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
            v = R @ u
            assert air.channel_gain(air.Position(*v), sc) == pytest.approx(
                air.channel_gain(air.Position(*u), sc), rel=1e-12)

    def test_rate_example(self):
        c = 0.1 * 1.98e-12 / 3.981e-21
        assert air.shannon_rate(0.75e6, c) == pytest.approx(0.75e6 * math.log2(1 + c / 0.75e6), rel=1e-14)
        assert air.shannon_rate(0.75e6, c) == pytest.approx(4.6e6, rel=0.02)

    def test_rate_doubling_concave(self):
        c = 5e7
        r1, r2 = air.shannon_rate(1e6, c), air.shannon_rate(2e6, c)
        assert r1 < r2 < 2 * r1

    def test_rate_vanishes_with_gain(self):
        assert air.shannon_rate(1e6, 1e-30) < 1e-20

    @settings(max_examples=60, deadline=None)
    @given(st.floats(1e3, 1e7), st.floats(1e3, 1e7), st.floats(1e4, 1e9))
    def test_concavity(self, b1, b2, c):
        mid = air.shannon_rate(0.5 * (b1 + b2), c)
        assert mid >= 0.5 * (air.shannon_rate(b1, c) + air.shannon_rate(b2, c)) * (1 - 1e-14)

    @pytest.mark.parametrize("s", [1e-9, 1e-4, 0.1, 0.5, 0.9, 0.999, 1 - 1e-9])
    def test_inverse_matches_bisection(self, s):
        c = 3e7
        rate = s * air.rate_ceiling(c)
        b = air.bandwidth_for_rate(rate, c)
        assert air.shannon_rate(b, c) == pytest.approx(rate, rel=1e-12)
        # dB/B ~ (dr/r)/(1-s) near the ceiling, so widen the tolerance there
        tol = max(1e-9, 1e-15 / (1 - s))
        assert b == pytest.approx(oracles.bisect_bandwidth_for_rate(rate, c), rel=tol)

    def test_inverse_beyond_ceiling(self):
        assert math.isinf(air.bandwidth_for_rate(air.rate_ceiling(1e6) * 1.01, 1e6))

    def test_rate_rejects_zero_bandwidth(self):
        sc = scene_with([(10, 0, 0)])
        with pytest.raises(ValueError):
            air.uplink_rate(air.Position(0, 0, 100), 0.0, sc)


class TestOptimalPosition:
    def test_overhead(self):
        sc = scene_with([(100, 0, 0)])
        u = air.optimal_position(air.max_sensing_probability(ENV), sc.targets[0], sc)
        assert (u.x, u.y, u.z) == pytest.approx((100, 0, 100))

    def test_seventy_degrees(self):
        sc = scene_with([(100, 0, 0)])
        q = air.los_probability(70.0, ENV)
        u = air.optimal_position(q, sc.targets[0], sc)
        assert u.x == pytest.approx(100 - 100 / math.tan(math.radians(70)), abs=1e-9)
        assert u.x == pytest.approx(63.60, abs=0.01)
        assert u.y == pytest.approx(0, abs=1e-12)
        assert air.elevation_angle_deg(u, sc.targets[0]) == pytest.approx(70, abs=1e-9)

    def test_rotation_equivariance(self):
        t = np.array([180.0, 60.0, 0.0])
        q = 0.998
        base = air.optimal_position(q, air.Position(*t), scene_with([tuple(t)])).as_array()
        for a in (0.4, 2.0, 4.5):
            R = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
            tr = R @ t
            got = air.optimal_position(q, air.Position(*tr), scene_with([tuple(tr)])).as_array()
            np.testing.assert_allclose(got, R @ base, atol=1e-9)

    @pytest.mark.parametrize("q", [0.9970, 0.9985, 0.9995])
    @pytest.mark.parametrize("target", [(150, 0, 0), (-120, 220, 0), (40, -260, 0)])
    def test_beats_circle_grid(self, q, target):
        sc = scene_with([target], H=300)
        u = air.optimal_position(q, sc.targets[0], sc)
        r_star = air.uplink_rate(u, 1e6, sc)
        pos, rates = oracles.circle_grid_rates(q, sc.targets[0], sc, 1e6)
        assert r_star >= rates.max() * (1 - 1e-9)
        # grid points sit on the same elevation circle
        np.testing.assert_allclose(air.sensing_angles(pos[:5], scene_with([target] * 5, H=300)),
                                   air.theta_from_qs(q, ENV), atol=1e-9)


class TestRateGivenQs:
    def test_strictly_decreasing(self):
        sc = scene_with([(500, 0, 0)], H=100, theta0=1.0)
        qs = np.round(np.arange(0.30, 0.9901, 0.01), 10)
        r = [air.rate_given_qs(q, 1e6, sc.targets[0], sc) for q in qs]
        assert np.all(np.diff(r) < 0)

    def test_overhead_is_slowest(self):
        sc = scene_with([(300, 0, 0)], H=100)
        qs = [0.9, 0.99, air.max_sensing_probability(ENV)]
        r = [air.rate_given_qs(q, 1e6, sc.targets[0], sc) for q in qs]
        assert r[-1] == min(r)

    def test_outside_domain(self):
        sc = scene_with([(50, 0, 0)], H=300)
        with pytest.raises(GeometryError):
            air.rate_given_qs(0.5, 1e6, sc.targets[0], sc)


def test_scene_validation():
    with pytest.raises(GeometryError):
        scene_with([(0, 0, 150)], H=100)
    with pytest.raises(ValueError):
        scene_with([(1, 0, 0)], theta0=90)
    with pytest.raises(GeometryError):
        air.Position(0, 0, -1)
