"""Aggregation weights under random partial participation.

Each UAV joins a round independently with probability q_k.  Conditioned on
at least one participant, the server averages the gradients of the
participating set S.  Enumerating all 2^K patterns gives

    alpha_k = sum_{S containing k} P(S | S nonempty) / |S|
    beta_k  = sum_{S containing k} P(S | S nonempty) / |S|^2

For uniform q the weights have closed forms (alpha_k = 1/K) and bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

MAX_ENUM_K = 20
_BLOCK = 1 << 15


@dataclass(frozen=True)
class ParticipationWeights:
    alpha: np.ndarray
    beta: np.ndarray
    gamma_bound: float
    m22_coeff: float | None = None

    def as_dict(self):
        return {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma_bound": self.gamma_bound,
            "m22_coeff": self.m22_coeff,
        }


def _check_profile(q):
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("profile must be a non-empty 1-D list of probabilities")
    if np.any((q < 0) | (q > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    if np.all(q == 0):
        raise ValueError("conditioning event (some UAV participates) has probability zero")
    if q.size > MAX_ENUM_K:
        raise ValueError(f"enumeration limited to K <= {MAX_ENUM_K}; use uniform closed forms")
    return q


def _enumerate(q, power):
    """sum over nonempty patterns containing k of P(pattern)/|S|^power, unnormalized."""
    K = q.size
    bits = np.arange(K)
    acc = np.zeros(K)
    total = 1 << K
    for start in range(1, total, _BLOCK):
        idx = np.arange(start, min(start + _BLOCK, total))
        member = ((idx[:, None] >> bits) & 1).astype(bool)
        prob = np.prod(np.where(member, q, 1.0 - q), axis=1)
        size = member.sum(axis=1)
        acc += (prob / size.astype(float) ** power) @ member
    return acc


def p_nonempty(q) -> float:
    return 1.0 - float(np.prod(1.0 - np.asarray(q, dtype=float)))


def enumerate_alpha(q) -> np.ndarray:
    q = _check_profile(q)
    return _enumerate(q, 1) / p_nonempty(q)


def enumerate_beta(q) -> np.ndarray:
    q = _check_profile(q)
    return _enumerate(q, 2) / p_nonempty(q)


def chi(K: int, q_min: float) -> float:
    return 1.0 - (1.0 - q_min) ** K


def uniform_closed_forms(K: int, q_s: float, q_min: float | None = None):
    """(alpha, beta_bound, gamma_bound, chi) for a common probability q_s."""
    if not (0 < q_s <= 1):
        raise ValueError("q_s must lie in (0, 1]")
    q_min = q_s if q_min is None else q_min
    if not (0 < q_min <= 1):
        raise ValueError("q_min must lie in (0, 1]")
    c = chi(K, q_min)
    return 1.0 / K, 2.0 / (K * K * c * q_s), 2.0 / (K * q_s ** K), c


def m22_coefficient_uniform(K: int, q_s: float) -> float:
    """Exact uniform-q cross-term coefficient, before relaxing q^l to q^K."""
    if K < 2:
        raise ValueError("cross terms need at least two UAVs")
    if not (0 < q_s <= 1):
        raise ValueError("q_s must lie in (0, 1]")
    num = sum(comb(K, l) * (1 - q_s) ** (K - l) for l in range(2, K + 1))
    den = sum(comb(K, l) * (1 - q_s) ** (K - l) * q_s ** l for l in range(2, K + 1))
    return 2.0 / K * num / den


def participation_weights(q) -> ParticipationWeights:
    """Enumerated alpha/beta plus the cross-term coefficient.

    For non-uniform profiles the cross-term coefficient is bounded with the
    smallest probability, 2/(K q_min^K).
    """
    q = _check_profile(q)
    K = q.size
    uniform = bool(np.all(q == q[0]))
    q_ref = float(q.min())
    if q_ref <= 0:
        raise ValueError("gamma bound needs every q_k > 0")
    m22 = m22_coefficient_uniform(K, float(q[0])) if uniform and K >= 2 else None
    return ParticipationWeights(
        alpha=enumerate_alpha(q),
        beta=enumerate_beta(q),
        gamma_bound=2.0 / (K * q_ref ** K),
        m22_coeff=m22,
    )
