import numpy as np
import pytest

from skyfeel import feelsim
from skyfeel.bound import contraction_A, g_general, phi
from skyfeel.weights import enumerate_alpha


def two_point_task(sigma2=0.0):
    return feelsim.SyntheticTask.from_arrays(np.repeat(np.eye(3)[None], 2, axis=0),
                                             [[1, 0, 0], [-1, 0, 0]], sigma2)


class TestTask:
    def test_hand_constants(self):
        t = two_point_task()
        np.testing.assert_allclose(t.w_star, 0, atol=1e-15)
        assert t.f_star == pytest.approx(0.5)
        np.testing.assert_allclose(t.lambda2, [1.0, 1.0])
        assert t.lambda0 == 0.0
        assert t.L == t.mu == 1.0
        assert t.gap(np.array([0.0, 2.0, 0.0])) == pytest.approx(2.0)
        # F - F* agrees with the averaged local losses
        w = np.array([0.3, -0.2, 0.5])
        assert t.local_losses(w).mean() - t.f_star == pytest.approx(t.gap(w), rel=1e-14)

    def test_homogeneous(self):
        t = feelsim.make_task(5, 4, 0.0, 1.0, seed=2)
        np.testing.assert_allclose(t.lambda2, 0.0, atol=1e-24)

    def test_same_seed_same_task(self):
        a, b = feelsim.make_task(4, 6, 0.3, 0.5, seed=9), feelsim.make_task(4, 6, 0.3, 0.5, seed=9)
        np.testing.assert_array_equal(a.centers, b.centers)
        np.testing.assert_array_equal(a.hessians, b.hessians)

    def test_curvature_range(self):
        t = feelsim.make_task(3, 7, 0.1, 1.0, seed=1, mu=0.5, L=3.0)
        assert t.mu == pytest.approx(0.5) and t.L == pytest.approx(3.0)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            feelsim.SyntheticTask.from_arrays([[[1.0, 0], [0, -1.0]]], [[0, 0]], 0.0)


class TestRound:
    def test_full_participation_is_gradient_descent(self):
        t = feelsim.make_task(4, 5, 0.5, 0.0, seed=4)
        plan = feelsim.synthetic_plan(4, 8, 1.0)
        w = np.ones(5)
        w1, timing, _ = feelsim.run_round(w, t, plan, np.random.default_rng(0), 0.1)
        np.testing.assert_allclose(w1, w - 0.1 * t.local_grads(w).mean(axis=0), rtol=1e-14)
        assert timing.participated.all()

    def test_single_participant(self):
        t = two_point_task()
        plan = feelsim.synthetic_plan(2, 4, 1.0)
        w = np.array([0.5, 0.5, 0.0])
        w1, timing, _ = feelsim.run_round(w, t, plan, np.random.default_rng(0), 0.2, q=[0.0, 1.0])
        np.testing.assert_allclose(w1, w - 0.2 * t.local_grads(w)[1])
        np.testing.assert_array_equal(timing.participated, [False, True])
        assert timing.compute_s[0] == 0 and timing.upload_s[0] == 0

    def test_empty_round_count_mode(self):
        t = two_point_task()
        plan = feelsim.synthetic_plan(2, 4, 1.0)
        w = np.array([0.5, 0.5, 0.0])
        w1, timing, _ = feelsim.run_round(w, t, plan, np.random.default_rng(0), 0.2, q=[0.0, 0.0])
        np.testing.assert_array_equal(w1, w)
        assert timing.round_latency_s == pytest.approx(2.0)

    def test_empty_round_skip_mode_charges_sensing(self):
        t = two_point_task()
        plan = feelsim.synthetic_plan(2, 4, 0.05)
        rng = np.random.default_rng(3)
        _, timing, _ = feelsim.run_round(np.zeros(3), t, plan, rng, 0.1, empty_round="skip")
        assert timing.participated.any()
        assert timing.sense_s.max() >= 2.0

    def test_aggregate_expectation(self):
        # E[aggregate] = sum_k alpha_k grad F_k, conditioned on a non-empty round
        t = feelsim.make_task(3, 2, 1.0, 0.0, seed=5)
        q = np.array([0.3, 0.6, 0.9])
        plan = feelsim.synthetic_plan(3, 4, 0.5)
        w = np.array([0.2, -0.4])
        rng = np.random.default_rng(8)
        g = t.local_grads(w)
        steps = []
        for _ in range(100_000):
            w1, timing, _ = feelsim.run_round(w, t, plan, rng, 1.0, q=q)
            if timing.participated.any():
                steps.append(w - w1)
        steps = np.array(steps)
        mean, se = steps.mean(axis=0), steps.std(axis=0, ddof=1) / np.sqrt(len(steps))
        want = enumerate_alpha(q) @ g
        assert np.all(np.abs(mean - want) <= 3 * se)


class TestTraining:
    def test_noise_free_matches_closed_form(self):
        t = feelsim.make_task(4, 6, 0.4, 0.0, seed=6)
        plan = feelsim.synthetic_plan(4, 8, 1.0)
        eta, n = 0.2, 60
        tr = feelsim.run_training(t, plan, n, 1, seed=0, eta=eta)[0]
        ev, V = np.linalg.eigh(t.h_mean)
        e0 = V.T @ (t.w0 - t.w_star)
        want = [0.5 * np.sum(ev * ((1 - eta * ev) ** k * e0) ** 2) for k in range(n + 1)]
        np.testing.assert_allclose(tr.gap, want, rtol=1e-10, atol=1e-15)

    def test_replications_and_rerun(self):
        t = feelsim.make_task(3, 4, 0.2, 1.0, seed=1)
        plan = feelsim.synthetic_plan(3, 4, 0.7)
        a = feelsim.run_training(t, plan, 30, 2, seed=5, eta=0.05)
        b = feelsim.run_training(t, plan, 30, 2, seed=5, eta=0.05)
        assert not np.array_equal(a[0].gap, a[1].gap)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.gap, y.gap)
            np.testing.assert_array_equal(x.round_latency_s, y.round_latency_s)

    def test_independent_of_blocking_and_threads(self):
        t = feelsim.make_task(3, 4, 0.2, 1.0, seed=1)
        plan = feelsim.synthetic_plan(3, 4, 0.7)
        a = feelsim.run_training(t, plan, 25, 7, seed=2, eta=0.05, block=50)
        b = feelsim.run_training(t, plan, 25, 7, seed=2, eta=0.05, block=2, threads=3)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.gap, y.gap)
            np.testing.assert_array_equal(x.participants, y.participants)

    def test_block_matches_single_round_path(self):
        t = feelsim.make_task(3, 4, 0.2, 1.0, seed=1)
        plan = feelsim.synthetic_plan(3, 4, 0.6)
        tr = feelsim.run_training(t, plan, 15, 1, seed=4, eta=0.05)[0]
        rng = np.random.default_rng(np.random.SeedSequence(4).spawn(1)[0])
        w, grads, gaps = t.w0.copy(), None, [t.gap(t.w0)]
        for _ in range(15):
            w, _, grads = feelsim.run_round(w, t, plan, rng, 0.05, grads=grads)
            gaps.append(t.gap(w))
        np.testing.assert_allclose(tr.gap, gaps, rtol=1e-12)

    def test_general_bound_dominates(self):
        t = feelsim.make_task(4, 6, 0.02, 1.0, seed=3)
        q, delta, eta = np.array([0.6, 0.7, 0.8, 0.9]), 16, 0.1
        plan = feelsim.synthetic_plan(4, delta, 0.8)
        traces = feelsim.run_training(t, plan, 300, 200, seed=9, eta=eta, q=q)
        mean, se = feelsim.mean_gap(traces)
        c = t.constants(eta, 1.0)
        G = g_general(None, c, np.full(4, delta), q)
        bound = phi(np.arange(301), contraction_A(c), G, c.lambda0)
        assert np.all(mean + 1.645 * se <= bound * (1 + 1e-12))

    def test_lower_probability_is_slower(self):
        t = feelsim.make_task(8, 6, 0.3, 0.5, seed=2)
        lo = feelsim.run_training(t, feelsim.synthetic_plan(8, 16, 0.3), 150, 100, seed=1, eta=0.1)
        hi = feelsim.run_training(t, feelsim.synthetic_plan(8, 16, 0.9), 150, 100, seed=1, eta=0.1)
        m_lo, s_lo = feelsim.mean_gap(lo)
        m_hi, s_hi = feelsim.mean_gap(hi)
        diff, se = m_lo[1:] - m_hi[1:], np.hypot(s_lo[1:], s_hi[1:])
        assert np.all(diff > -2 * se)
        assert np.mean(diff > 0) > 0.95

    def test_bias_floor_positive(self):
        t = feelsim.make_task(8, 6, 0.3, 1.0, seed=2)
        tr = feelsim.run_training(t, feelsim.synthetic_plan(8, 8, 0.7), 400, 50, seed=3, eta=0.1)
        mean, _ = feelsim.mean_gap(tr)
        plateau = mean[-100:].mean()
        assert plateau > 1e-4
        c = t.constants(0.1, 1.0)
        from skyfeel.bound import bound_state
        assert plateau <= bound_state(c, np.full(8, 8.0), 0.7).bias_floor

    def test_trace_rows(self):
        t = two_point_task(0.1)
        tr = feelsim.run_training(t, feelsim.synthetic_plan(2, 4, 0.5), 3, 1, seed=0, eta=0.1)[0]
        rows = list(tr.rows())
        assert len(rows) == 4 and rows[0][:2] == (0, 0)
        assert rows[-1][5] == pytest.approx(sum(r[4] for r in rows))

    def test_validation(self):
        t = two_point_task()
        with pytest.raises(ValueError):
            feelsim.run_training(t, feelsim.synthetic_plan(3, 4, 0.5), 3, 1, 0, 0.1)
        with pytest.raises(ValueError):
            feelsim.run_training(t, feelsim.synthetic_plan(2, 4, 0.5), 0, 1, 0, 0.1)


class TestEstimation:
    def test_noise_free(self):
        t = feelsim.make_task(3, 4, 0.5, 0.0, seed=1)
        s2, l2, L, mu = feelsim.estimate_constants(t, t.w_star, 8, 200, np.random.default_rng(0))
        np.testing.assert_allclose(s2, 0.0, atol=1e-20)
        np.testing.assert_allclose(l2, t.lambda2, rtol=1e-10)

    def test_homogeneous_identity(self):
        t = feelsim.SyntheticTask.from_arrays(np.repeat(np.eye(4)[None], 3, axis=0), np.zeros((3, 4)), 1.0)
        s2, l2, L, mu = feelsim.estimate_constants(t, t.w_star, 8, 4000, np.random.default_rng(0))
        assert L == pytest.approx(1.0) and mu == pytest.approx(1.0)
        assert np.all(l2 < 1e-3)
        np.testing.assert_allclose(s2, 1.0, rtol=0.1)

    def test_needs_draws(self):
        with pytest.raises(ValueError):
            feelsim.estimate_constants(two_point_task(), np.zeros(3), 4, 10, np.random.default_rng(0))
