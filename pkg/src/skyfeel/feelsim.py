"""Monte Carlo simulation of sensing-gated federated training.

The learning task is a sum of quadratics with closed-form optimum, so the
optimality gap F(w) - F(w*) is exact every round.  Each round every UAV
senses successfully with probability q_k; successful UAVs compute a noisy
gradient on delta_k fresh samples and the server averages those gradients.

Randomness: each replication owns a ``numpy.random.Generator`` spawned from
one ``SeedSequence``.  Per round a replication draws K uniforms (the
participation indicators) and a K x d standard-normal block (gradient
noise), always in that order and always in full, so results do not depend
on which UAVs participated, on batching of replications, or on threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bbpo import ResourcePlan, SolverSettings, run_bbpo
from .bound import LearningConstants
from .latency import ComputeParams, realized_timing

PRESETS = ("bbpo", "det-uavposition", "eq-bandwidth", "eq-batchsize", "bbpo-ideal")


@dataclass
class SyntheticTask:
    hessians: np.ndarray   # (K, d, d)
    centers: np.ndarray    # (K, d)
    sigma2: np.ndarray     # (K,)
    w0: np.ndarray
    shared_hessian: bool = True

    def __post_init__(self):
        self.hessians = np.asarray(self.hessians, dtype=float)
        self.centers = np.asarray(self.centers, dtype=float)
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), (self.K,)).copy()
        self.w0 = np.asarray(self.w0, dtype=float)
        for h in self.hessians:
            if not np.allclose(h, h.T):
                raise ValueError("local Hessians must be symmetric")
            if np.linalg.eigvalsh(h).min() <= 0:
                raise ValueError("local Hessians must be positive definite")
        self.h_mean = self.hessians.mean(axis=0)
        rhs = np.einsum("kij,kj->i", self.hessians, self.centers) / self.K
        self.w_star = np.linalg.solve(self.h_mean, rhs)
        # F(w) = gap(w) + F*, with F* from the local offsets
        self.f_star = self.local_losses(self.w_star).mean()

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def L(self) -> float:
        return float(np.linalg.eigvalsh(self.h_mean).max())

    @property
    def mu(self) -> float:
        return float(np.linalg.eigvalsh(self.h_mean).min())

    @property
    def lambda2(self) -> np.ndarray:
        """||grad F_k(w*) - grad F(w*)||^2; uniform in w when Hessians are shared."""
        g = self.local_grads(self.w_star)
        return np.sum((g - g.mean(axis=0)) ** 2, axis=1)

    @property
    def lambda0(self) -> float:
        return float(self.gap(self.w0))

    def local_losses(self, w):
        r = w - self.centers
        return 0.5 * np.einsum("ki,kij,kj->k", r, self.hessians, r)

    def local_grads(self, w):
        """Exact local gradients at w; w of shape (d,) or (R, d)."""
        w = np.asarray(w, dtype=float)
        if w.ndim == 1:
            return np.einsum("kij,kj->ki", self.hessians, w[None, :] - self.centers)
        return np.einsum("kij,rkj->rki", self.hessians, w[:, None, :] - self.centers[None])

    def gap(self, w):
        r = np.asarray(w, dtype=float) - self.w_star
        return 0.5 * np.einsum("...i,ij,...j->...", r, self.h_mean, r)

    def constants(self, eta: float, epsilon: float) -> LearningConstants:
        return LearningConstants(eta=eta, L=self.L, mu=self.mu, sigma2=tuple(self.sigma2),
                                 lambda2=tuple(self.lambda2), lambda0=self.lambda0,
                                 epsilon=epsilon)

    @classmethod
    def from_arrays(cls, hessians, centers, sigma2, w0=None):
        hessians = np.asarray(hessians, dtype=float)
        shared = bool(np.allclose(hessians, hessians[0]))
        w0 = np.zeros(np.asarray(centers).shape[1]) if w0 is None else w0
        return cls(hessians, centers, sigma2, w0, shared_hessian=shared)


def make_task(K: int, d: int, heterogeneity: float, noise, seed: int,
              mu: float = 1.0, L: float = 2.0, offset: float = 1.0,
              unequal_hessians: bool = False) -> SyntheticTask:
    """Random quadratic task with eigenvalues spread over [mu, L].

    Local optima are ``offset * e`` plus ``heterogeneity`` times a standard
    normal draw, with e a random unit vector; the model starts at 0.  With
    ``unequal_hessians`` each UAV gets its own rotation, which breaks the
    uniform heterogeneity bound (kept for experimentation only).
    """
    if d < 1 or K < 1:
        raise ValueError("need d >= 1 and K >= 1")
    if heterogeneity < 0:
        raise ValueError("heterogeneity must be non-negative")
    if not 0 < mu <= L:
        raise ValueError("need 0 < mu <= L")
    rng = np.random.default_rng(seed)
    eig = np.linspace(mu, L, d)

    def rotation():
        q, r = np.linalg.qr(rng.standard_normal((d, d)))
        return q * np.sign(np.diag(r))

    if unequal_hessians:
        hs = []
        for _ in range(K):
            q = rotation()
            hs.append(q @ np.diag(eig) @ q.T)
        hs = np.array(hs)
    else:
        q = rotation()
        hs = np.repeat((q @ np.diag(eig) @ q.T)[None], K, axis=0)
    base = rng.standard_normal(d)
    base *= offset / np.linalg.norm(base)
    centers = base + heterogeneity * rng.standard_normal((K, d))
    sigma = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    return SyntheticTask(hs, centers, sigma ** 2, np.zeros(d), shared_hessian=not unequal_hessians)


def synthetic_plan(K: int, delta, q_s: float, rate_bps=1e7, cp: ComputeParams = ComputeParams(),
                   preset="manual") -> ResourcePlan:
    """Plan stub for simulations that do not go through the optimizer."""
    delta = np.broadcast_to(np.asarray(delta), (K,)).astype(int)
    rates = np.broadcast_to(np.asarray(rate_bps, dtype=float), (K,))
    return ResourcePlan(
        delta=delta.tolist(), bandwidth=[0.0] * K, positions=[[0.0, 0.0, 0.0]] * K,
        q_s=float(q_s), t_max_s=math.nan, n_rounds=0, objective_s=math.nan,
        rates_bps=rates.tolist(), per_uav_latency_s=[math.nan] * K, theta_s_deg=[math.nan] * K,
        compute=asdict(cp), preset=preset,
    )


# ---------------------------------------------------------------- one round

def _draw(rng, K, d):
    return rng.random(K), rng.standard_normal((K, d))


def run_round(w, task: SyntheticTask, plan: ResourcePlan, rng, eta: float,
              grads=None, q=None, empty_round="count"):
    """One training round for a single replication.

    Returns (w_next, timing, grads) where ``grads`` holds each UAV's latest
    gradient (non-participants keep their previous one).
    """
    K, d = task.K, task.d
    delta = np.asarray(plan.delta, dtype=float)
    q = np.full(K, plan.q_s) if q is None else np.broadcast_to(np.asarray(q, float), (K,))
    grads = np.zeros((K, d)) if grads is None else grads.copy()
    cp = plan.compute_params()
    extra_sense = 0.0
    while True:
        u, z = _draw(rng, K, d)
        part = u < q
        if part.any() or empty_round == "count" or not q.any():
            break
        extra_sense += float(np.max(delta * cp.unit_sense_time_s))
    noise = z * np.sqrt(task.sigma2 / (delta * d))[:, None]
    fresh = task.local_grads(w) + noise
    grads[part] = fresh[part]
    idx = np.flatnonzero(part)
    if idx.size:
        agg = grads[idx[0]].copy()
        for k in idx[1:]:
            agg += grads[k]
        w = w - eta * agg / idx.size
    timing = realized_timing(delta, part, plan.rates_bps, cp)
    timing.sense_s = timing.sense_s + extra_sense
    return w, timing, grads


# ---------------------------------------------------------------- many rounds

@dataclass
class TrainingTrace:
    replication: int
    seed: tuple
    gap: np.ndarray
    participants: np.ndarray
    round_latency_s: np.ndarray
    cumulative_time_s: np.ndarray = field(init=False)

    def __post_init__(self):
        self.cumulative_time_s = np.cumsum(self.round_latency_s)

    def rows(self):
        for n in range(self.gap.size):
            yield (self.replication, n, float(self.gap[n]), int(self.participants[n]),
                   float(self.round_latency_s[n]), float(self.cumulative_time_s[n]))


def _block(task, plan, rounds, eta, q, gens, empty_round):
    """Simulate several replications in lock-step; each keeps its own stream."""
    R, K, d = len(gens), task.K, task.d
    delta = np.asarray(plan.delta, dtype=float)
    cp = plan.compute_params()
    rates = np.asarray(plan.rates_bps, dtype=float)
    scale = np.sqrt(task.sigma2 / (delta * d))
    sense = delta * cp.unit_sense_time_s
    comp = delta * cp.seconds_per_sample
    with np.errstate(divide="ignore"):
        upl = np.where(rates > 0, cp.payload_bits / rates, np.inf)
    w = np.repeat(task.w0[None], R, axis=0)
    grads = np.zeros((R, K, d))
    gap = np.empty((R, rounds + 1))
    npart = np.zeros((R, rounds + 1), dtype=int)
    lat = np.zeros((R, rounds + 1))
    gap[:, 0] = task.gap(w)
    u = np.empty((R, K))
    z = np.empty((R, K, d))
    for n in range(1, rounds + 1):
        extra = np.zeros(R)
        for r, g in enumerate(gens):
            u[r], z[r] = _draw(g, K, d)
            if empty_round == "skip" and q.any():
                while not (u[r] < q).any():
                    extra[r] += sense.max()
                    u[r], z[r] = _draw(g, K, d)
        part = u < q
        fresh = task.local_grads(w) + z * scale[None, :, None]
        grads = np.where(part[:, :, None], fresh, grads)
        cnt = part.sum(axis=1)
        # fixed ascending-index summation order
        agg = np.zeros((R, d))
        for k in range(K):
            agg += np.where(part[:, k, None], grads[:, k], 0.0)
        step = np.divide(agg, cnt[:, None], out=np.zeros_like(agg), where=cnt[:, None] > 0)
        w = w - eta * step
        gap[:, n] = task.gap(w)
        npart[:, n] = cnt
        per = sense[None] + np.where(part, comp + upl, 0.0)
        lat[:, n] = per.max(axis=1) + extra
    return gap, npart, lat


def run_training(task: SyntheticTask, plan: ResourcePlan, rounds: int, replications: int,
                 seed: int, eta: float, q=None, threads: int = 1, empty_round: str = "count",
                 block: int = 50):
    """Independent replications of ``rounds`` rounds; one trace per replication."""
    if rounds < 1 or replications < 1:
        raise ValueError("rounds and replications must be >= 1")
    if empty_round not in ("count", "skip"):
        raise ValueError("empty_round must be 'count' or 'skip'")
    if len(plan.delta) != task.K:
        raise ValueError("plan and task disagree on the number of UAVs")
    K = task.K
    q = np.full(K, plan.q_s) if q is None else np.broadcast_to(np.asarray(q, float), (K,)).copy()
    root = np.random.SeedSequence(seed)
    children = root.spawn(replications)
    gens = [np.random.default_rng(s) for s in children]
    chunks = [list(range(i, min(i + block, replications))) for i in range(0, replications, block)]

    def work(idx):
        return _block(task, plan, rounds, eta, q, [gens[i] for i in idx], empty_round)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as ex:
            outs = list(ex.map(work, chunks))
    else:
        outs = [work(c) for c in chunks]
    traces = []
    for idx, (gap, npart, lat) in zip(chunks, outs):
        for j, i in enumerate(idx):
            traces.append(TrainingTrace(i, tuple(children[i].spawn_key), gap[j], npart[j], lat[j]))
    return traces


def mean_gap(traces):
    g = np.array([t.gap for t in traces])
    return g.mean(axis=0), g.std(axis=0, ddof=1) / math.sqrt(len(traces)) if len(traces) > 1 else 0.0


# ---------------------------------------------------------------- estimation

def estimate_constants(task: SyntheticTask, w_ref, batch, draws: int, rng, probe: float = 1e-3):
    """Empirical sigma^2, Lambda^2, L and mu.

    Noise variance comes from repeated noisy gradients at ``w_ref``;
    heterogeneity from the averaged local gradients; curvature from
    central differences of the averaged global gradient.
    """
    if draws < 100:
        raise ValueError("need at least 100 draws")
    K, d = task.K, task.d
    w_ref = np.asarray(w_ref, dtype=float)
    batch = np.broadcast_to(np.asarray(batch, dtype=float), (K,))
    scale = np.sqrt(task.sigma2 / (batch * d))
    exact = task.local_grads(w_ref)
    z = rng.standard_normal((draws, K, d)) * scale[None, :, None]
    samples = exact[None] + z
    mean = samples.mean(axis=0)
    sigma2 = batch * np.sum((samples - mean) ** 2, axis=2).sum(axis=0) / (draws - 1)
    lambda2 = np.sum((mean - mean.mean(axis=0)) ** 2, axis=1)
    hess = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = probe
        hess[:, i] = (task.local_grads(w_ref + e).mean(axis=0)
                      - task.local_grads(w_ref - e).mean(axis=0)) / (2 * probe)
    ev = np.linalg.eigvalsh(0.5 * (hess + hess.T))
    return sigma2, lambda2, float(ev.max()), float(ev.min())


# ---------------------------------------------------------------- presets

def baseline_presets(name: str, scene, consts: LearningConstants, cp: ComputeParams = ComputeParams(),
                     settings: SolverSettings = SolverSettings(), batch: int = 64,
                     positions=None) -> ResourcePlan:
    """Optimizer runs with one block of decision variables pinned.

    det-uavposition pins positions (default: overhead of each target),
    eq-bandwidth pins B_k = B_c/K, eq-batchsize pins delta_k = ``batch``,
    bbpo-ideal assumes every UAV always senses successfully.
    """
    K = scene.K
    if name == "bbpo":
        return run_bbpo(scene, consts, cp, settings)
    if name == "det-uavposition":
        if positions is None:
            positions = [[v.x, v.y, scene.uav_altitude_m] for v in scene.targets]
        return run_bbpo(scene, consts, cp, settings, fixed_positions=positions, preset=name)
    if name == "eq-bandwidth":
        return run_bbpo(scene, consts, cp, settings,
                        fixed_bandwidth=np.full(K, scene.radio.total_bandwidth_hz / K), preset=name)
    if name == "eq-batchsize":
        return run_bbpo(scene, consts, cp, settings, fixed_delta=batch, preset=name)
    if name == "bbpo-ideal":
        return run_bbpo(scene, consts, cp, settings, ideal=True, preset=name)
    raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
