"""Brute-force reference computations used to cross-check the solvers.

Everything here is deliberately naive: grids, enumeration, sampling and
plain bisection.  None of it is used by the production code paths.
"""

from __future__ import annotations

import math

import numpy as np

from . import airspace as air
from .bound import LearningConstants, contraction_A, g_uniform_bound, phi
from .latency import ComputeParams, expected_round_latency_k


def bisect_bandwidth_for_rate(rate, c, iters=200):
    """Invert B -> B*log2(1+c/B) by bisection on a doubling bracket."""
    if rate * math.log(2) >= c:
        return math.inf
    lo, hi = 0.0, 1.0
    while air.shannon_rate(hi, c) < rate:
        lo, hi = hi, 2 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if air.shannon_rate(mid, c) < rate:
            lo = mid
        else:
            hi = mid
    return hi


def geometric_phi(n, A, G, lambda0):
    """Unrolled recursion: sum_{i<n} G A^i + A^n lambda0."""
    return sum(G * A ** i for i in range(n)) + A ** n * lambda0


def grid_bandwidth(delta, positions, q_s, scene, cp: ComputeParams, points=10_000, zooms=1):
    """Min over a simplex grid of the slowest UAV's expected latency (K <= 3).

    Each zoom pass lays a fresh grid of ``points`` over the +-2 cells
    around the previous best.
    """
    delta = np.asarray(delta, dtype=float)
    K = delta.size
    Bc = scene.radio.total_bandwidth_hz
    c = air.snr_coefficients(positions, scene)
    if K == 1:
        return np.array([Bc]), float(expected_round_latency_k(delta, q_s, air.shannon_rate(Bc, c), cp)[0])
    if K > 3:
        raise ValueError("grid oracle supports K <= 3")
    m = points if K == 2 else int(round(math.sqrt(points)))
    lo, hi = np.zeros(K - 1), np.ones(K - 1)
    best = None
    for _ in range(zooms + 1):
        axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
        free = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        f = np.concatenate([free, 1 - free.sum(axis=1, keepdims=True)], axis=1)
        f = f[np.all(f > 0, axis=1)]
        grids = f * Bc
        lat = expected_round_latency_k(delta[None, :], q_s, air.shannon_rate(grids, c[None, :]), cp)
        worst = lat.max(axis=1)
        i = int(np.argmin(worst))
        best = (grids[i], float(worst[i]))
        step = (hi - lo) / (m - 1)
        lo, hi = np.maximum(f[i, :-1] - 2 * step, 0), np.minimum(f[i, :-1] + 2 * step, 1)
    return best


def circle_grid_rates(q_s, target: air.Position, scene, bandwidth_hz, n=201, span=None):
    """Rates at an n x n grid of horizontal points projected onto the
    constant-elevation circle around ``target``."""
    theta = 90.0 if q_s >= air.max_sensing_probability(scene.env) else air.theta_from_qs(q_s, scene.env)
    rho = air.hover_offset(theta, target, scene)
    span = 2 * rho if span is None else span
    g = np.linspace(-span, span, n)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    r = np.hypot(gx, gy)
    keep = r > 0
    ux, uy = gx[keep] / r[keep], gy[keep] / r[keep]
    pos = np.stack([target.x + rho * ux, target.y + rho * uy,
                    np.full(ux.size, scene.uav_altitude_m)], axis=1)
    c = air.snr_coefficients(pos, scene)
    return pos, air.shannon_rate(bandwidth_hz, c)


def monte_carlo_alpha(q, draws, rng):
    """Sampled mean of the 1/|S| aggregation weight, conditioned on |S| >= 1."""
    q = np.asarray(q, dtype=float)
    acc = np.zeros(q.size)
    acc2 = np.zeros(q.size)
    kept = 0
    chunk = 100_000
    left = draws
    while left > 0:
        m = min(chunk, left)
        member = rng.random((m, q.size)) < q
        size = member.sum(axis=1)
        ok = size > 0
        w = np.where(member[ok], 1.0 / size[ok, None], 0.0)
        acc += w.sum(axis=0)
        acc2 += (w * w).sum(axis=0)
        kept += int(ok.sum())
        left -= m
    mean = acc / kept
    se = np.sqrt(np.maximum(acc2 / kept - mean ** 2, 0) / kept)
    return mean, se


def exhaustive_single_uav(scene, consts: LearningConstants, cp: ComputeParams,
                          deltas=range(1, 65), n_q=200, n_max=10_000):
    """Best (objective, n, delta, q) for K=1 over integer batches and a q grid.

    For each (delta, q) the smallest n meeting the gap target is found in
    closed form and verified; the UAV gets the whole bandwidth.
    """
    if scene.K != 1:
        raise ValueError("single-UAV oracle")
    A = contraction_A(consts)
    q_lo = air.los_probability(scene.theta0_deg, scene.env)
    q_hi = air.max_sensing_probability(scene.env)
    qs = np.linspace(q_lo, q_hi, n_q)
    Bc = scene.radio.total_bandwidth_hz
    best = (math.inf, None, None, None)
    for q in qs:
        u = air.optimal_position(q, scene.targets[0], scene)
        r = air.uplink_rate(u, Bc, scene, scene.radio.power_of(0))
        for d in deltas:
            G = g_uniform_bound(consts, [d], q, q_lo, 1)
            n = _rounds_needed(consts, A, G, n_max)
            if n is None:
                continue
            T = float(expected_round_latency_k(d, q, r, cp))
            if n * T < best[0]:
                best = (n * T, n, d, float(q))
    return best


def _rounds_needed(c, A, G, n_max):
    num = c.epsilon * (1 - A) - G
    den = c.lambda0 * (1 - A) - G
    if num <= 0 or den <= 0:
        return None
    n = max(0, math.ceil(math.log(num / den) / math.log(A)) - 2)
    while n <= n_max and phi(n, A, G, c.lambda0) > c.epsilon:
        n += 1
    return n if n <= n_max else None
