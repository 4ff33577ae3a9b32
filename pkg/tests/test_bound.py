import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skyfeel import oracles
from skyfeel.bound import (
    LearningConstants,
    bias_floor,
    bound_state,
    contraction_A,
    g_general,
    g_max,
    g_uniform_bound,
    gap_target,
    n_min,
    phi,
)
from skyfeel.errors import InfeasibleError
from skyfeel.weights import participation_weights, uniform_closed_forms


def consts(**kw):
    base = dict(eta=0.03, L=2.0, mu=1.0, sigma2=0.5, lambda2=0.001, lambda0=1.0, epsilon=0.05)
    base.update(kw)
    return LearningConstants(**base)


def test_contraction():
    c = consts(L=2.0, mu=2.0, eta=1 / 16)
    assert contraction_A(c) == pytest.approx(0.9375, abs=1e-15)
    assert contraction_A(consts(eta=1e-9)) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        contraction_A(consts(eta=1 / 8))


def test_g_collapse_without_heterogeneity():
    c = consts(lambda2=0.0, sigma2=(0.5, 1.0, 2.0))
    delta = np.array([4.0, 8.0, 16.0])
    noise = np.sum(np.array([0.5, 1.0, 2.0]) / delta)
    want = c.eta / 3 * noise + 2 * c.L * c.eta ** 2 / 9 * noise
    assert g_uniform_bound(c, delta, 1.0, 1.0) == pytest.approx(want, rel=1e-14)


def test_g_doubling_batches():
    c = consts(sigma2=1.0, lambda2=0.01)
    d = np.full(4, 8.0)
    g1, g2 = g_uniform_bound(c, d, 0.9), g_uniform_bound(c, 2 * d, 0.9)
    s1, s2 = bound_state(c, d, 0.9), bound_state(c, 2 * d, 0.9)
    assert g2 < g1
    assert s1.J == pytest.approx(s2.J)
    assert g1 - s1.J == pytest.approx(2 * (g2 - s2.J), rel=1e-12)


def test_third_term_ratio():
    c = consts(sigma2=0.0, lambda2=0.01)
    K = 8

    def third(q):
        _, beta_b, _, _ = uniform_closed_forms(K, q, q)
        g = g_uniform_bound(c, np.ones(K), q, q)
        return g - c.eta / K * K * 0.01 - c.L * c.eta ** 2 * beta_b * K * 0.02

    assert third(0.5) / third(1.0) == pytest.approx(64.0, rel=1e-10)


def test_g_general_spread():
    c = consts(sigma2=0.0, lambda2=0.04)
    q = np.array([0.5, 1.0])
    pw = participation_weights(q)
    first = c.eta * np.sum(pw.alpha ** 2) * 2 * 0.04
    second = c.L * c.eta ** 2 * np.sum(pw.beta * 2 * 0.04)
    # each UAV carries (q_k - qbar)^2 + qbar^2 = 0.0625 + 0.5625
    third = 2 * c.L * c.eta ** 2 * pw.gamma_bound * 2 * (0.0625 + 0.5625) * 0.04
    assert g_general(pw, c, [1, 1], q) == pytest.approx(first + second + third, rel=1e-14)
    # no heterogeneity: only the noise terms survive
    c0 = consts(sigma2=1.0, lambda2=0.0)
    pw = participation_weights([0.7, 0.7, 0.7])
    want = c0.eta * np.sum(pw.alpha ** 2) * 3 / 4 + c0.L * c0.eta ** 2 * np.sum(pw.beta / 4)
    assert g_general(pw, c0, [4, 4, 4], [0.7] * 3) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("K", range(2, 9))
def test_general_below_uniform_bound(K):
    c = consts(sigma2=0.7, lambda2=0.02)
    for q in (0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
        for d in (1, 16, 64):
            delta = np.full(K, float(d))
            assert g_general(None, c, delta, np.full(K, q)) <= g_uniform_bound(c, delta, q, q) * (1 + 1e-12)


def test_phi_values():
    assert phi(0, 0.9, 0.01, 1.0) == 1.0
    assert phi(10_000, 0.9, 0.01, 1.0) == pytest.approx(0.1, rel=1e-12)
    assert phi(20, 0.9375, 0.01, 1.0) == pytest.approx(oracles.geometric_phi(20, 0.9375, 0.01, 1.0), abs=1e-12)
    n = np.arange(50)
    v = phi(n, 0.95, 0.003, 2.0)
    np.testing.assert_allclose(v[1:], 0.95 * v[:-1] + 0.003, rtol=1e-13)
    with pytest.raises(ValueError):
        phi(-1, 0.9, 0.1, 1.0)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 400), st.floats(0.5, 0.999), st.floats(0, 1), st.floats(0, 10))
def test_phi_matches_unrolled(n, A, G, lam):
    assert phi(n, A, G, lam) == pytest.approx(oracles.geometric_phi(n, A, G, lam), rel=1e-9, abs=1e-12)


def test_bias_floor():
    c = consts()
    A = contraction_A(c)
    assert bias_floor(A, 1e-4) == pytest.approx(1e-4 / (c.mu * c.eta * (1 - 4 * c.L * c.eta)))
    assert bias_floor(A, 1e-9) > 0


def test_n_min():
    n = n_min(0.05, 0.9, 1.0, 0.001)
    assert n == math.ceil(math.log(0.004 / 0.099) / math.log(0.9)) == 31
    assert phi(31, 0.9, 0.001, 1.0) <= 0.05 < phi(30, 0.9, 0.001, 1.0)
    assert n_min(1.0, 0.9, 1.0, 0.001) == 0
    with pytest.raises(InfeasibleError) as e:
        n_min(0.005, 0.9, 1.0, 0.001)
    assert e.value.constraint == "epsilon_floor"
    with pytest.raises(InfeasibleError) as e:
        n_min(0.004, 0.9, 0.005, 0.001)
    assert e.value.constraint == "lambda_floor"


def test_gap_target_consistent():
    c = consts()
    A = contraction_A(c)
    for n in (50, 200, 800):
        g = gap_target(c, A, n)
        assert phi(n, A, g, c.lambda0) == pytest.approx(c.epsilon, rel=1e-10)


def test_monotone_in_delta_and_q():
    c = consts(sigma2=(0.5, 0.3, 0.8, 0.1), lambda2=(0.001, 0.01, 0.0, 0.002))
    A = contraction_A(c)
    n = np.arange(0, 300, 7)
    base = np.array([8.0, 16.0, 4.0, 32.0])
    for k in range(4):
        d = base.copy()
        d[k] *= 3
        assert np.all(phi(n, A, g_uniform_bound(c, d, 0.8), 1.0) <= phi(n, A, g_uniform_bound(c, base, 0.8), 1.0))
    prev = None
    for q in np.linspace(0.3, 1.0, 30):
        cur = phi(n, A, g_uniform_bound(c, base, q), 1.0)
        if prev is not None:
            assert np.all(cur <= prev)
        prev = cur


def test_g_max_is_full_participation():
    c = consts()
    assert g_max(c, 8, 256) == pytest.approx(g_uniform_bound(c, np.full(8, 256.0), 1.0, 1.0))


def test_constants_validation():
    with pytest.raises(ValueError):
        consts(mu=3.0)
    with pytest.raises(ValueError):
        consts(sigma2=-1)
    with pytest.raises(ValueError):
        consts(sigma2=(1, 2)).per_uav(3)
    s, l = consts().per_uav(3)
    assert s.shape == l.shape == (3,)
    with pytest.raises(ValueError):
        g_uniform_bound(consts(), [0.5, 2], 0.9)
