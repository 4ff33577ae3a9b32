"""Optimality-gap bound for FEEL with random sensing-driven participation.

The expected gap after n rounds is bounded by

    Phi(n) = G (1 - A^n) / (1 - A) + A^n * lambda0,   A = 1 - mu*eta*(1 - 4*L*eta)

where G collects gradient noise, data heterogeneity and participation
randomness.  ``g_general`` evaluates G with enumerated weights,
``g_uniform_bound`` its relaxation for a common sensing probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleError
from .weights import ParticipationWeights, participation_weights, uniform_closed_forms

# slack for ceil() on N_min when the log ratio lands a hair above an integer
_CEIL_TOL = 1e-9


@dataclass(frozen=True)
class LearningConstants:
    eta: float
    L: float
    mu: float
    sigma2: tuple
    lambda2: tuple
    lambda0: float
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "sigma2", tuple(float(s) for s in np.atleast_1d(self.sigma2)))
        object.__setattr__(self, "lambda2", tuple(float(s) for s in np.atleast_1d(self.lambda2)))
        if not 0 < self.mu <= self.L:
            raise ValueError("need 0 < mu <= L")
        if not self.eta > 0:
            raise ValueError("step size must be positive")
        if min(self.sigma2) < 0 or min(self.lambda2) < 0:
            raise ValueError("variances must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("target gap must be positive")
        if not self.lambda0 >= 0:
            raise ValueError("initial gap must be non-negative")

    def per_uav(self, K: int):
        """sigma2 and lambda2 broadcast to K entries."""
        s, l = np.asarray(self.sigma2), np.asarray(self.lambda2)
        if s.size == 1:
            s = np.full(K, s[0])
        if l.size == 1:
            l = np.full(K, l[0])
        if s.size != K or l.size != K:
            raise ValueError(f"expected 1 or {K} variance entries")
        return s, l

    def with_(self, **kw) -> "LearningConstants":
        return replace(self, **kw)


@dataclass(frozen=True)
class BoundState:
    A: float
    G: float
    J: float = 0.0
    bias_floor: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "bias_floor", self.G / (1.0 - self.A))


def contraction_A(c: LearningConstants) -> float:
    if c.eta >= 1.0 / (4.0 * c.L):
        raise ValueError(f"step size {c.eta} violates eta < 1/(4L) = {1 / (4 * c.L)}")
    return 1.0 - c.mu * c.eta * (1.0 - 4.0 * c.L * c.eta)


def g_uniform_bound(c: LearningConstants, delta, q_s: float, q_min: float | None = None,
                    K: int | None = None) -> float:
    delta = np.asarray(delta, dtype=float)
    K = delta.size if K is None else K
    if np.any(delta < 1):
        raise ValueError("batch sizes must be >= 1")
    s2, l2 = c.per_uav(K)
    _, beta_b, _, chi = uniform_closed_forms(K, q_s, q_min)
    noise = s2 / delta
    L, eta = c.L, c.eta
    return float(
        eta / K * np.sum(noise + l2)
        + L * eta ** 2 * beta_b * np.sum(noise + 2 * l2)
        + 4 * L * eta ** 2 / (K * q_s ** (K - 2)) * np.sum(l2)
    )


def g_general(weights: ParticipationWeights | None, c: LearningConstants, delta, q) -> float:
    """G with enumerated alpha/beta and the cross-term bound.

    ``weights`` may be None, in which case it is enumerated from ``q``.
    """
    q = np.asarray(q, dtype=float)
    delta = np.asarray(delta, dtype=float)
    K = q.size
    if weights is None:
        weights = participation_weights(q)
    s2, l2 = c.per_uav(K)
    noise = s2 / delta
    qbar = q.mean()
    spread = (q - qbar) ** 2 + qbar ** 2
    L, eta = c.L, c.eta
    return float(
        eta * np.sum(weights.alpha ** 2) * np.sum(noise + l2)
        + L * eta ** 2 * np.sum(weights.beta * (noise + 2 * l2))
        + 2 * L * eta ** 2 * weights.gamma_bound * np.sum(spread * l2)
    )


def phi(n, A: float, G: float, lambda0: float):
    """Gap bound after n rounds; vectorized over n."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("round count must be non-negative")
    An = A ** n
    out = G * (1.0 - An) / (1.0 - A) + An * lambda0
    return float(out) if out.ndim == 0 else out


def bias_floor(A: float, G: float) -> float:
    return G / (1.0 - A)


def g_max(c: LearningConstants, K: int, delta_max: float) -> float:
    """Largest-batch, full-participation G used to bound the round count from below."""
    return g_uniform_bound(c, np.full(K, float(delta_max)), 1.0, 1.0, K)


def n_min(epsilon: float, A: float, lambda0: float, G_max: float) -> int:
    """Fewest rounds for which the bound can reach ``epsilon`` at all."""
    if epsilon >= lambda0:
        return 0
    num = epsilon * (1.0 - A) - G_max
    den = lambda0 * (1.0 - A) - G_max
    if den <= 0:
        raise InfeasibleError("initial gap is already at or below the noise floor",
                              "lambda_floor", lambda_term=lambda0 * (1 - A), G_max=G_max)
    if num <= 0:
        raise InfeasibleError("target gap lies below the bias floor even at full participation",
                              "epsilon_floor", epsilon=epsilon, floor=G_max / (1 - A))
    x = math.log(num / den) / math.log(A)
    return max(0, math.ceil(x - _CEIL_TOL))


def gap_target(c: LearningConstants, A: float, n: int) -> float:
    """Largest G for which Phi(n) <= epsilon: (1-A)(eps - lambda A^n)/(1 - A^n)."""
    if n <= 0:
        return math.inf if c.lambda0 <= c.epsilon else -math.inf
    An = A ** n
    return (1.0 - A) * (c.epsilon - c.lambda0 * An) / (1.0 - An)


def bound_state(c: LearningConstants, delta, q_s: float, q_min: float | None = None) -> BoundState:
    delta = np.asarray(delta, dtype=float)
    K = delta.size
    _, l2 = c.per_uav(K)
    q_min = q_s if q_min is None else q_min
    _, beta_b, _, _ = uniform_closed_forms(K, q_s, q_min)
    # heterogeneity-only part of G (independent of batch sizes)
    J = (c.eta / K + 2 * c.L * c.eta ** 2 * beta_b
         + 4 * c.L * c.eta ** 2 / (K * q_s ** (K - 2))) * np.sum(l2)
    return BoundState(A=contraction_A(c), G=g_uniform_bound(c, delta, q_s, q_min, K), J=float(J))
