"""Oracle checks behind ``skyfeel verify`` and the acceptance tests.

Each check returns a :class:`CheckResult`; ``run_all`` collects them.
The checks compare production code paths against the naive references
in :mod:`skyfeel.oracles` or against closed forms.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import airspace as air
from . import feelsim, oracles, sensing
from .bbpo import SolverSettings, run_bbpo, solve_bandwidth
from .bound import LearningConstants, bound_state, contraction_A, g_uniform_bound, phi
from .config import load_config
from .latency import ComputeParams
from .weights import enumerate_alpha, enumerate_beta, m22_coefficient_uniform, uniform_closed_forms


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    metrics: dict = field(default_factory=dict)

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name:<24} {self.seconds:7.2f}s  {self.detail}"


def _timed(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*a, **kw):
            t0 = time.perf_counter()
            try:
                passed, detail, metrics = fn(*a, **kw)
            except Exception as e:  # a crashing check is a failing check
                passed, detail, metrics = False, f"{type(e).__name__}: {e}", {}
            return CheckResult(name, bool(passed), detail, time.perf_counter() - t0, metrics)
        return wrapper
    return deco


@functools.lru_cache(maxsize=1)
def default_plan():
    """BBPO on the default eight-UAV scene (cached: two checks share it)."""
    cfg = load_config()
    return cfg, run_bbpo(cfg.scene, cfg.consts, cfg.compute, cfg.settings)


# ---------------------------------------------------------------- weights

@_timed("weight-identities")
def weight_identities(profiles=50, seed=0):
    rng = np.random.default_rng(seed)
    worst_sum = worst_uni = 0.0
    for K in range(1, 9):
        for _ in range(profiles):
            q = rng.uniform(0.05, 1.0, K)
            worst_sum = max(worst_sum, abs(enumerate_alpha(q).sum() - 1.0))
        for qs in np.linspace(0.1, 1.0, 10):
            worst_uni = max(worst_uni, float(np.max(np.abs(enumerate_alpha(np.full(K, qs)) - 1.0 / K))))
    ok = worst_sum <= 1e-12 and worst_uni <= 1e-12
    return ok, f"max|sum alpha - 1|={worst_sum:.1e}, max|alpha - 1/K|={worst_uni:.1e}", {
        "sum_err": worst_sum, "uniform_err": worst_uni}


@_timed("closed-form-bounds")
def closed_form_bounds():
    slack_beta = slack_gamma = math.inf
    for K in range(2, 9):
        for q in np.round(np.arange(0.3, 1.0001, 0.1), 10):
            _, beta_b, gamma_b, _ = uniform_closed_forms(K, q)
            beta = enumerate_beta(np.full(K, q))
            slack_beta = min(slack_beta, float(np.min(beta_b - beta)))
            slack_gamma = min(slack_gamma, gamma_b - m22_coefficient_uniform(K, q))
    eq = abs(m22_coefficient_uniform(2, 1.0) - uniform_closed_forms(2, 1.0)[2])
    ok = slack_beta >= -1e-15 and slack_gamma >= -1e-15 and eq <= 1e-12
    return ok, f"min beta slack={slack_beta:.2e}, min gamma slack={slack_gamma:.2e}, K=2,q=1 gap={eq:.1e}", {
        "beta_slack": slack_beta, "gamma_slack": slack_gamma, "equality_gap": eq}


# ---------------------------------------------------------------- bound vs simulation

def domination_setup():
    task = feelsim.make_task(8, 10, heterogeneity=0.02, noise=1.0, seed=3)
    eta, q, delta = 0.1, 0.8, 16
    plan = feelsim.synthetic_plan(8, delta, q)
    return task, plan, eta, q, delta


@_timed("bound-domination")
def bound_domination(rounds=500, replications=200, seed=11, threads=1):
    task, plan, eta, q, delta = domination_setup()
    c = task.constants(eta, epsilon=1.0)
    st = bound_state(c, np.full(task.K, delta), q, q)
    traces = feelsim.run_training(task, plan, rounds, replications, seed, eta, threads=threads)
    mean, se = feelsim.mean_gap(traces)
    n = np.arange(rounds + 1)
    bound = phi(n, st.A, st.G, c.lambda0)
    upper = mean + 1.645 * se
    # round 0 is deterministic and equals the bound exactly
    ok_all = bool(np.all(upper <= bound * (1 + 1e-12)))
    plateau = float(mean[-100:].mean())
    ok_floor = plateau <= st.bias_floor
    worst = float(np.max(upper / bound))
    return ok_all and ok_floor, (
        f"max (mean+1.645se)/Phi={worst:.3f}, plateau={plateau:.2e} <= floor {st.bias_floor:.2e}"), {
        "worst_ratio": worst, "plateau": plateau, "floor": st.bias_floor}


# ---------------------------------------------------------------- optimizer

@_timed("latency-equalization")
def latency_equalization():
    cfg, plan = default_plan()
    lat = np.asarray(plan.per_uav_latency_s)
    spread = float(lat.max() / lat.min())
    limit = 1 + 10 * cfg.settings.tol_tmax_s
    return spread <= limit, f"max/min latency={spread:.9f} (limit {limit})", {"spread": spread}


def _small_scene(K, seed):
    rng = np.random.default_rng(seed)
    targets = [air.Position(*rng.uniform(-250, 250, 2), 0.0) for _ in range(K)]
    return air.Scene(air.Position(0, 0, 0), targets, 300.0, air.Environment(), air.RadioParams(), 70.0)


def toy_single_uav():
    scene = air.Scene(air.Position(0, 0, 0), [air.Position(150, 0, 0)], 300.0,
                      air.Environment(), air.RadioParams(), 70.0)
    consts = LearningConstants(0.03, 2.0, 1.0, 0.5, 0.0, 1.0, 0.05)
    return scene, consts


@_timed("solver-oracles")
def solver_oracles(cases=3, seed=0):
    cp = ComputeParams()
    settings = SolverSettings()
    rng = np.random.default_rng(seed)
    split_err = 0.0
    for K in (2, 3):
        for i in range(cases):
            scene = _small_scene(K, seed * 100 + 10 * K + i)
            q = float(rng.uniform(air.los_probability(70.0, scene.env), 0.999))
            delta = rng.integers(4, 64, K).astype(float)
            pos = air.positions_for_qs(q, scene)
            _, T = solve_bandwidth(delta, pos, q, scene, cp, settings)
            _, T_grid = oracles.grid_bandwidth(delta, pos, q, scene, cp)
            split_err = max(split_err, abs(T - T_grid) / T_grid)
    scene, consts = toy_single_uav()
    plan = run_bbpo(scene, consts, cp, SolverSettings(sweep="exhaustive", n_max=2000))
    best = oracles.exhaustive_single_uav(scene, consts, cp, n_max=2000)
    bbpo_err = (plan.objective_s - best[0]) / best[0]
    # closed-form hover point against a grid on the same elevation circle
    pos_ok = True
    for q in (0.9970, 0.9985, 0.9995):
        for t in scene.targets + _small_scene(2, 5).targets:
            u = air.optimal_position(q, t, scene)
            r_star = air.uplink_rate(u, 1e6, scene)
            _, rates = oracles.circle_grid_rates(q, t, scene, 1e6)
            pos_ok &= bool(r_star >= rates.max() * (1 - 1e-12))
    ok = split_err <= 1e-3 and bbpo_err <= 1e-2 and pos_ok
    return ok, (f"bandwidth split vs grid {split_err:.2e}, BBPO vs exhaustive {bbpo_err:+.2e}, "
                f"closed-form position {'best' if pos_ok else 'beaten'}"), {
        "split_err": split_err, "bbpo_err": bbpo_err, "position_ok": pos_ok}


# ---------------------------------------------------------------- monotonicity

@_timed("monotonicity")
def monotonicity():
    # low hover altitude and a distant target keep every q on the valid side of the server
    scene = air.Scene(air.Position(0, 0, 0), [air.Position(500, 0, 0)], 100.0,
                      air.Environment(), air.RadioParams(), 1.0)
    t = scene.targets[0]
    qs = np.round(np.arange(0.30, 0.9901, 0.01), 10)
    r = np.array([air.rate_given_qs(q, 1e6, t, scene) for q in qs])
    rate_ok = bool(np.all(np.diff(r) < 0))
    c = LearningConstants(0.03, 2.0, 1.0, (0.5, 0.3, 0.8, 0.1), (0.001, 0.01, 0.0, 0.002), 1.0, 0.05)
    A = contraction_A(c)
    base = np.array([8.0, 16.0, 4.0, 32.0])
    n = np.arange(0, 301, 10)
    delta_ok = True
    for k in range(4):
        prev = phi(n, A, g_uniform_bound(c, base, 0.8), c.lambda0)
        for step in (1, 2, 8, 64):
            d = base.copy()
            d[k] += step
            cur = phi(n, A, g_uniform_bound(c, d, 0.8), c.lambda0)
            delta_ok &= bool(np.all(cur <= prev + 1e-15))
            prev = cur
    q_grid = np.linspace(0.3, 1.0, 71)
    curves = np.array([phi(n, A, g_uniform_bound(c, base, q), c.lambda0) for q in q_grid])
    q_ok = bool(np.all(np.diff(curves, axis=0) <= 1e-15))
    th = np.arange(0.0, 90.01, 1.0)
    los_ok = bool(np.all(np.diff(air.los_probability(th, scene.env)) > 0))
    ok = rate_ok and delta_ok and q_ok and los_ok
    return ok, f"rate-vs-q {rate_ok}, Phi-vs-delta {delta_ok}, Phi-vs-q {q_ok}, LoS-vs-angle {los_ok}", {}


# ---------------------------------------------------------------- sensing

@_timed("sensing-trend")
def sensing_trend(seed=0, frames=8, threads=1):
    angles = list(range(30, 91, 10))
    sweep = sensing.elevation_sweep(sensing.human_track, angles, seed=seed, frames=frames,
                                    threads=threads)
    rho = sensing.trend(sweep)
    p = [s[1] for s in sweep]
    worst_at = angles[int(np.argmin(p))]
    ok = rho >= 0.9 and worst_at == 30
    shown = ", ".join(f"{a}:{v:.1f}" for a, v in zip(angles, p))
    return ok, f"Spearman={rho:.3f}, worst at {worst_at} deg ({shown})", {"spearman": rho}


def ridge_bin(velocity, waveform=sensing.SensingWaveform(), W=16, Q=8, range_m=300.0):
    track = sensing.ScattererTrack(range_m, 0.0, velocity, 1.0, 0.0, 0.0, 0.0)
    frame = sensing.spectrogram(track, waveform, 0.0, W=W, Q=Q, window="hann")
    return int(np.argmax(frame.data.mean(axis=1)))


@_timed("doppler-ridge")
def doppler_ridge(velocities=(0.5, 1.0, 2.0), W=16):
    wf = sensing.SensingWaveform()
    errs = []
    for v in velocities:
        got, want = ridge_bin(v, wf, W), sensing.doppler_bin(v, wf, W)
        d = (got - want) % W
        errs.append(min(d, W - d))
    ok = max(errs) <= 1
    return ok, "bin errors " + ", ".join(f"v={v}:{e}" for v, e in zip(velocities, errs)), {"errors": errs}


# ---------------------------------------------------------------- magnitude, reproducibility

@_timed("magnitude-anchor")
def magnitude_anchor():
    cfg, plan = default_plan()
    ok = 10.0 <= plan.t_max_s <= 100.0
    return ok, (f"T_max={plan.t_max_s:.2f} s, N={plan.n_rounds}, "
                f"batch {min(plan.delta)}..{max(plan.delta)}"), {"t_max_s": plan.t_max_s}


@_timed("reproducibility")
def reproducibility(seed=7):
    from .cli import sweep_csv, trace_csv

    task, plan, eta, _, _ = domination_setup()
    runs = [trace_csv(feelsim.run_training(task, plan, 60, 24, seed, eta, threads=t, block=5),
                      {"seed": seed}) for t in (1, 1, 4)]
    angles = [30, 60, 90]
    sweeps = [sweep_csv(sensing.elevation_sweep(sensing.human_track, angles, seed=seed, frames=3,
                                                threads=t), {"seed": seed}) for t in (1, 1, 3)]
    ok = len(set(runs)) == 1 and len(set(sweeps)) == 1
    return ok, f"trace CSV identical: {len(set(runs)) == 1}, sweep CSV identical: {len(set(sweeps)) == 1}", {}


CHECKS = (weight_identities, closed_form_bounds, bound_domination, latency_equalization,
          solver_oracles, monotonicity, sensing_trend, doppler_ridge, magnitude_anchor,
          reproducibility)


def run_all(threads=1):
    out = []
    for chk in CHECKS:
        kw = {"threads": threads} if chk in (bound_domination, sensing_trend) else {}
        out.append(chk(**kw))
    return out
