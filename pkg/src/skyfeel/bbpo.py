"""Alternating bandwidth / batch-size / position optimization (BBPO).

For each candidate round count n the three subproblems are solved in turn
until the per-round latency T_max stops moving, then n*T_max is minimized
over n.

* bandwidth: with batches and positions fixed, T_max is the smallest
  latency for which the per-UAV bandwidths needed to meet it fit in B_c.
* batch size: every UAV's expected latency is set equal to T_max, which
  makes each batch size an affine function of T_max; the gap constraint
  then pins T_max down.
* position: the smallest sensing probability meeting the gap constraint
  and the elevation floor, with each UAV at the closest point to the
  server on its constant-elevation circle.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from . import airspace as air
from .bound import (LearningConstants, contraction_A, g_max, g_uniform_bound, gap_target,
                    n_min as _n_min, phi)
from .errors import InfeasibleError
from .latency import ComputeParams, expected_round_latency_k

log = logging.getLogger(__name__)

_HUGE = 1e300


@dataclass(frozen=True)
class SolverSettings:
    tol_tmax_s: float = 1e-6
    tol_root: float = 1e-9
    n_max: int = 1000
    delta_max: float = 256.0
    max_iter: int = 200
    max_alternations: int = 100
    delta_init: float = 32.0
    sweep: str = "geometric"
    sweep_ratio: float = 1.05
    position_mode: str = "exact"
    # extra start on the elevation-floor circle (see _starts)
    multi_start: bool = True
    order: tuple = ("bandwidth", "batch", "position")
    threads: int = 1

    def __post_init__(self):
        for name in ("tol_tmax_s", "tol_root", "n_max", "delta_max", "max_iter",
                     "max_alternations", "delta_init", "threads"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sweep not in ("exhaustive", "geometric"):
            raise ValueError("sweep must be 'exhaustive' or 'geometric'")
        if self.sweep_ratio <= 1:
            raise ValueError("sweep_ratio must exceed 1")
        if self.position_mode not in ("exact", "closed-form"):
            raise ValueError("position_mode must be 'exact' or 'closed-form'")
        object.__setattr__(self, "order", tuple(self.order))
        if sorted(self.order) != ["bandwidth", "batch", "position"]:
            raise ValueError("order must be a permutation of bandwidth, batch, position")


@dataclass
class ResourcePlan:
    delta: list
    bandwidth: list
    positions: list
    q_s: float
    t_max_s: float
    n_rounds: int
    objective_s: float
    rates_bps: list
    per_uav_latency_s: list
    theta_s_deg: list
    compute: dict
    preset: str = "bbpo"
    relaxed_delta: list = field(default_factory=list)
    history_s: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.delta)

    def compute_params(self) -> ComputeParams:
        return ComputeParams(**self.compute)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResourcePlan":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown plan fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class _State:
    delta: np.ndarray
    bandwidth: np.ndarray
    positions: np.ndarray
    q: float
    t_max: float = math.inf


@dataclass(frozen=True)
class _Problem:
    scene: air.Scene
    consts: LearningConstants
    cp: ComputeParams
    settings: SolverSettings
    ideal: bool = False
    fixed_positions: np.ndarray | None = None
    fixed_bandwidth: np.ndarray | None = None
    fixed_delta: np.ndarray | None = None

    @property
    def K(self):
        return self.scene.K

    @cached_property
    def q_floor(self):
        return air.los_probability(self.scene.theta0_deg, self.scene.env)

    @cached_property
    def q_top(self):
        return air.max_sensing_probability(self.scene.env)

    @cached_property
    def q_min(self):
        """Reference probability inside chi; fixed by the elevation floor."""
        return 1.0 if self.ideal else self.q_floor


# ---------------------------------------------------------------- helpers

def per_uav_latency(delta, q_s, rates, cp: ComputeParams) -> np.ndarray:
    return np.asarray(expected_round_latency_k(delta, q_s, rates, cp), dtype=float)


def _rates(positions, bandwidth, scene):
    c = air.snr_coefficients(positions, scene)
    return air.shannon_rate(bandwidth, c)


def _gap_lhs(prob: _Problem, delta, q):
    return g_uniform_bound(prob.consts, delta, q, prob.q_min, prob.K)


# ---------------------------------------------------------------- bandwidth

def solve_bandwidth(delta, positions, q_s, scene: air.Scene, cp: ComputeParams,
                    settings: SolverSettings = SolverSettings()):
    """Bandwidth split minimizing the slowest UAV's expected latency.

    Returns (bandwidth array, T_max).  The outer search is a bracketed root
    find on sum_k B_k(T) = B_c; the inner inversion B_k(T) uses the closed
    Lambert-W form in :func:`airspace.bandwidth_for_rate`.
    """
    delta = np.asarray(delta, dtype=float)
    c = air.snr_coefficients(positions, scene)
    Bc = scene.radio.total_bandwidth_hz
    K = delta.size
    a = delta * (cp.unit_sense_time_s + q_s * cp.seconds_per_sample)
    b = q_s * cp.payload_bits
    if b == 0:
        return np.full(K, Bc / K), float(a.max())

    def needed(T):
        slack = T - a
        if np.any(slack <= 0):
            return np.full(K, np.inf)
        return air.bandwidth_for_rate(b / slack, c)

    def f(T):
        return min(float(np.sum(needed(T))), _HUGE) - Bc

    t_lo = float(np.max(a + b * math.log(2.0) / c))
    eq = air.shannon_rate(Bc / K, c)
    t_hi = float(np.max(a + b / eq))
    if K == 1:
        return np.array([Bc]), t_hi
    if f(t_hi) > 0:
        # rounding at an exact equal-split optimum; widen slightly
        t_hi *= 1 + 1e-12
    T = brentq(f, t_lo, t_hi, xtol=1e-14 * t_hi, rtol=max(settings.tol_root * 1e-3, 1e-15),
               maxiter=settings.max_iter)
    B = needed(T)
    B *= Bc / B.sum()
    rates = air.shannon_rate(B, c)
    return B, float(np.max(a + b / rates))


# ---------------------------------------------------------------- batch size

def delta_of_t(T, rates, q_s, cp: ComputeParams):
    """Batch sizes that make every UAV's expected latency exactly T."""
    rates = np.asarray(rates, dtype=float)
    return (T - q_s * cp.payload_bits / rates) / (cp.unit_sense_time_s + q_s * cp.seconds_per_sample)


def _solve_batch(prob: _Problem, rates, q, n):
    c, cp = prob.consts, prob.cp
    A = contraction_A(c)
    target = gap_target(c, A, n)
    t_comm = q * cp.payload_bits / np.asarray(rates, dtype=float)
    slope = cp.unit_sense_time_s + q * cp.seconds_per_sample
    t_floor = float(t_comm.max() + slope)

    def deltas(T):
        # the floor UAV lands on 1 up to rounding
        return np.maximum(delta_of_t(T, rates, q, cp), 1.0)

    def lhs(T):
        return _gap_lhs(prob, deltas(T), q)

    if lhs(t_floor) <= target:
        return deltas(t_floor), t_floor
    J = _gap_lhs(prob, np.full(prob.K, 1e300), q)
    if J >= target:
        raise InfeasibleError("gap target unreachable at this round count for any batch size",
                              "gap", n=n, floor=J, target=target)
    t_hi = t_floor + slope
    for _ in range(prob.settings.max_iter):
        if lhs(t_hi) <= target:
            break
        t_hi = t_floor + 2 * (t_hi - t_floor)
    else:
        raise InfeasibleError("batch size search did not bracket the gap target", "gap", n=n)
    T = brentq(lambda t: lhs(t) - target, t_floor, t_hi,
               xtol=1e-14 * t_hi, rtol=max(prob.settings.tol_root * 1e-3, 1e-15),
               maxiter=prob.settings.max_iter)
    # nudge upward so the returned batches satisfy the constraint, not just approach it
    while lhs(T) > target:
        T = math.nextafter(T, math.inf) + 1e-12 * T
    return deltas(T), float(T)


def solve_batchsize(positions, bandwidth, q_s, n_rounds, consts: LearningConstants,
                    scene: air.Scene, cp: ComputeParams,
                    settings: SolverSettings = SolverSettings(), ideal=False):
    """Relaxed batch sizes and T_max with the gap constraint binding at n rounds."""
    prob = _Problem(scene, consts, cp, settings, ideal=ideal)
    rates = _rates(positions, np.asarray(bandwidth, dtype=float), scene)
    return _solve_batch(prob, rates, q_s, n_rounds)


# ---------------------------------------------------------------- position

def _q_closed_form(prob: _Problem, delta, target):
    c = prob.consts
    K = prob.K
    s2, l2 = c.per_uav(K)
    noise = s2 / np.asarray(delta, dtype=float)
    chi = 1.0 - (1.0 - prob.q_min) ** K
    num = 2 * c.L * c.eta ** 2 / (K * K * chi) * np.sum(noise + 2 * l2)
    den = (target - c.eta / K * np.sum(noise + l2)
           - 4 * c.L * c.eta ** 2 / (K * prob.q_min ** (K - 2)) * np.sum(l2))
    if den <= 0:
        raise InfeasibleError("gap-derived probability bound has a non-positive denominator",
                              "gap", denominator=float(den))
    return float(num / den)


def _min_q(prob: _Problem, delta, n):
    """Smallest uniform sensing probability meeting the gap and elevation floors."""
    A = contraction_A(prob.consts)
    target = gap_target(prob.consts, A, n)
    lo, hi = prob.q_floor, prob.q_top
    if prob.settings.position_mode == "closed-form":
        q = max(_q_closed_form(prob, delta, target), lo)
    else:
        def excess(q):
            return _gap_lhs(prob, delta, q) - target
        if excess(lo) <= 0:
            q = lo
        elif excess(hi) > 0:
            q = math.inf
        else:
            q = brentq(excess, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=prob.settings.max_iter)
            while excess(q) > 0 and q < hi:
                q = min(math.nextafter(q, 2.0), hi)
    if q > hi:
        raise InfeasibleError("required sensing probability exceeds what hovering overhead gives",
                              "sensing_probability", required=q, achievable=hi, n=n)
    return q


def solve_position(delta, bandwidth, n_rounds, consts: LearningConstants, scene: air.Scene,
                   cp: ComputeParams, settings: SolverSettings = SolverSettings()):
    """Returns (q_s, positions, T_max)."""
    prob = _Problem(scene, consts, cp, settings)
    q = _min_q(prob, delta, n_rounds)
    pos = air.positions_for_qs(q, scene)
    rates = _rates(pos, np.asarray(bandwidth, dtype=float), scene)
    return q, pos, float(per_uav_latency(delta, q, rates, cp).max())


# ---------------------------------------------------------------- outer loop

def _latency_max(prob, st: _State, q_lat):
    rates = _rates(st.positions, st.bandwidth, prob.scene)
    return float(per_uav_latency(st.delta, q_lat, rates, prob.cp).max())


def _q_latency(prob, st):
    return 1.0 if prob.ideal else st.q


def _step(prob: _Problem, st: _State, which: str, n: int):
    ql = _q_latency(prob, st)
    if which == "bandwidth":
        if prob.fixed_bandwidth is None:
            st.bandwidth, st.t_max = solve_bandwidth(st.delta, st.positions, ql, prob.scene,
                                                     prob.cp, prob.settings)
        else:
            st.t_max = _latency_max(prob, st, ql)
    elif which == "batch":
        if prob.fixed_delta is None:
            rates = _rates(st.positions, st.bandwidth, prob.scene)
            st.delta, st.t_max = _solve_batch(prob, rates, ql, n)
        else:
            _check_gap(prob, st.delta, ql, n)
            st.t_max = _latency_max(prob, st, ql)
    else:
        if prob.fixed_positions is None:
            if prob.ideal:
                q_geo = prob.q_floor
                _check_gap(prob, st.delta, 1.0, n)
            else:
                q_geo = st.q = _min_q(prob, st.delta, n)
            st.positions = air.positions_for_qs(q_geo, prob.scene)
        else:
            _check_gap(prob, st.delta, ql, n)
        st.t_max = _latency_max(prob, st, _q_latency(prob, st))


def _check_gap(prob, delta, q, n):
    A = contraction_A(prob.consts)
    target = gap_target(prob.consts, A, n)
    g = _gap_lhs(prob, delta, q)
    if g > target * (1 + 1e-12):
        raise InfeasibleError("fixed decision variables miss the gap target at this round count",
                              "gap", n=n, G=g, target=target)


def _starts(prob: _Problem):
    K = prob.K
    delta0 = (prob.fixed_delta if prob.fixed_delta is not None
              else np.full(K, prob.settings.delta_init))
    bw0 = (prob.fixed_bandwidth if prob.fixed_bandwidth is not None
           else np.full(K, prob.scene.radio.total_bandwidth_hz / K))
    if prob.fixed_positions is not None:
        q_k = air.los_probability(air.sensing_angles(prob.fixed_positions, prob.scene), prob.scene.env)
        yield _State(delta0.copy(), bw0.copy(), prob.fixed_positions.copy(), float(np.mean(q_k)))
        return
    over = np.array([[v.x, v.y, prob.scene.uav_altitude_m] for v in prob.scene.targets])
    yield _State(delta0.copy(), bw0.copy(), over, prob.q_top)
    if prob.settings.multi_start and not prob.ideal:
        # after the batch step the gap binds, so the position step cannot lower q
        # below its starting value; a start on the elevation-floor circle covers that side
        yield _State(delta0.copy(), bw0.copy(), air.positions_for_qs(prob.q_floor, prob.scene),
                     prob.q_floor)


def _alternate(prob: _Problem, st: _State, n: int):
    history = []
    tau = prob.settings.tol_tmax_s
    # T_max of the starting point, so a huge tau stops after one pass
    prev = _latency_max(prob, st, _q_latency(prob, st))
    for _ in range(prob.settings.max_alternations):
        for which in prob.settings.order:
            _step(prob, st, which, n)
        t = st.t_max
        if history and t > history[-1] * (1 + 1e-8) + 1e-12:
            log.warning("T_max rose from %.12g to %.12g at n=%d", history[-1], t, n)
        history.append(t)
        if abs(t - prev) <= tau:
            break
        prev = t
    return history


def _finalize(prob: _Problem, st: _State, n: int, history):
    relaxed = st.delta.copy()
    if prob.fixed_delta is None:
        st.delta = np.maximum(np.ceil(st.delta - 1e-9), 1.0)
    ql = _q_latency(prob, st)
    if prob.fixed_bandwidth is None:
        st.bandwidth, _ = solve_bandwidth(st.delta, st.positions, ql, prob.scene, prob.cp,
                                          prob.settings)
    rates = _rates(st.positions, st.bandwidth, prob.scene)
    lat = per_uav_latency(st.delta, ql, rates, prob.cp)
    t = float(lat.max())
    theta = air.sensing_angles(st.positions, prob.scene)
    return ResourcePlan(
        delta=[int(d) for d in st.delta],
        bandwidth=st.bandwidth.tolist(),
        positions=st.positions.tolist(),
        q_s=float(ql),
        t_max_s=t,
        n_rounds=int(n),
        objective_s=n * t,
        rates_bps=rates.tolist(),
        per_uav_latency_s=lat.tolist(),
        theta_s_deg=theta.tolist(),
        compute=asdict(prob.cp),
        relaxed_delta=relaxed.tolist(),
        history_s=list(history),
    )


def solve_at_n(prob: _Problem, n: int) -> ResourcePlan:
    best, err = None, None
    for st in _starts(prob):
        try:
            history = _alternate(prob, st, n)
            plan = _finalize(prob, st, n, history)
        except InfeasibleError as e:
            err = e
            continue
        if best is None or plan.objective_s < best.objective_s:
            best = plan
    if best is None:
        raise err
    return best


def _candidates(lo, hi, settings):
    if settings.sweep == "exhaustive":
        return list(range(lo, hi + 1))
    out, x = [], float(max(lo, 1))
    while x < hi:
        out.append(int(round(x)))
        x *= settings.sweep_ratio
    out = sorted(set([lo] + out + [hi]))
    return [n for n in out if lo <= n <= hi]


def _evaluate(prob, ns):
    def one(n):
        try:
            return n, solve_at_n(prob, n)
        except InfeasibleError as e:
            return n, e
    if prob.settings.threads > 1 and len(ns) > 1:
        with ThreadPoolExecutor(prob.settings.threads) as ex:
            return dict(ex.map(one, ns))
    return dict(map(one, ns))


def _best(results):
    ok = [(p.objective_s, n) for n, p in results.items() if isinstance(p, ResourcePlan)]
    return min(ok)[1] if ok else None


def round_range(consts: LearningConstants, K: int, settings: SolverSettings):
    A = contraction_A(consts)
    lo = _n_min(consts.epsilon, A, consts.lambda0, g_max(consts, K, settings.delta_max))
    return max(lo, 1), int(settings.n_max)


def run_bbpo(scene: air.Scene, consts: LearningConstants, cp: ComputeParams = ComputeParams(),
             settings: SolverSettings = SolverSettings(), *, ideal=False,
             fixed_positions=None, fixed_bandwidth=None, fixed_delta=None,
             preset="bbpo") -> ResourcePlan:
    """Full alternating optimization with the sweep over the round count."""
    K = scene.K
    consts.per_uav(K)
    fd = None
    if fixed_delta is not None:
        fd = np.broadcast_to(np.asarray(fixed_delta, dtype=float), (K,)).copy()
        if np.any(fd < 1) or np.any(fd != np.round(fd)):
            raise ValueError("fixed batch sizes must be integers >= 1")
    prob = _Problem(
        scene, consts, cp, settings, ideal=ideal,
        fixed_positions=None if fixed_positions is None else np.asarray(fixed_positions, float),
        fixed_bandwidth=None if fixed_bandwidth is None else np.asarray(fixed_bandwidth, float),
        fixed_delta=fd,
    )
    lo, hi = round_range(consts, K, settings)
    if lo > hi:
        raise InfeasibleError("minimum round count exceeds the configured maximum",
                              "rounds", n_min=lo, n_max=hi)
    results = _evaluate(prob, _candidates(lo, hi, settings))
    best = _best(results)
    if settings.sweep == "geometric" and best is not None:
        ns = sorted(results)
        i = ns.index(best)
        window = range(ns[max(i - 1, 0)], ns[min(i + 1, len(ns) - 1)] + 1)
        results.update(_evaluate(prob, [n for n in window if n not in results]))
        best = _best(results)
    if best is None:
        last = results[max(results)]
        raise InfeasibleError(f"no feasible round count in [{lo}, {hi}]: {last}",
                              getattr(last, "constraint", "unknown"), n_min=lo, n_max=hi,
                              **getattr(last, "details", {}))
    plan = results[best]
    plan.preset = preset
    return plan


# ---------------------------------------------------------------- audit

def audit_plan(plan: ResourcePlan, scene: air.Scene, consts: LearningConstants,
               settings: SolverSettings = SolverSettings(), ideal: bool | None = None) -> dict:
    """Re-check a plan against every constraint from scratch."""
    ideal = plan.preset == "bbpo-ideal" if ideal is None else ideal
    cp = plan.compute_params()
    K = scene.K
    delta = np.asarray(plan.delta, dtype=float)
    B = np.asarray(plan.bandwidth, dtype=float)
    pos = np.asarray(plan.positions, dtype=float)
    Bc = scene.radio.total_bandwidth_hz
    theta = air.sensing_angles(pos, scene)
    q_k = air.los_probability(theta, scene.env)
    q_lat = 1.0 if ideal else plan.q_s
    rates = _rates(pos, B, scene)
    lat = per_uav_latency(delta, q_lat, rates, cp)
    q_min = 1.0 if ideal else air.los_probability(scene.theta0_deg, scene.env)
    A = contraction_A(consts)
    G = g_uniform_bound(consts, delta, q_lat, q_min, K)
    gap = phi(plan.n_rounds, A, G, consts.lambda0)
    checks = {
        "uav_count": len(plan.delta) == K,
        "bandwidth_sum": abs(B.sum() - Bc) <= 1e-6 * Bc and bool(np.all(B > 0)),
        "delta_integer": bool(np.all(delta >= 1) and np.all(delta == np.round(delta))),
        "altitude": bool(np.allclose(pos[:, 2], scene.uav_altitude_m)),
        "elevation_floor": bool(np.all(theta >= scene.theta0_deg - 1e-9)),
        "uniform_probability": bool(np.ptp(q_k) <= 1e-8),
        "probability_matches": ideal or abs(float(q_k.mean()) - plan.q_s) <= 1e-8,
        "latency_bound": bool(np.all(lat <= plan.t_max_s * (1 + 1e-9))),
        "gap_target": gap <= consts.epsilon * (1 + 1e-9),
        "objective": math.isclose(plan.objective_s, plan.n_rounds * plan.t_max_s, rel_tol=1e-12),
    }
    return {
        "passed": all(checks.values()),
        "checks": checks,
        "gap_bound": gap,
        "latency_spread": float(lat.max() / lat.min()),
    }
