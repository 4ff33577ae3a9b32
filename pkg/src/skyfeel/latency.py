"""Per-UAV sensing, computation and upload times and the per-round latency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# 4,900,677 model parameters at 32 bits each
DEFAULT_PAYLOAD_BITS = 4_900_677 * 32


@dataclass(frozen=True)
class ComputeParams:
    unit_sense_time_s: float = 0.5
    cycles_per_sample: float = 2.5e7
    cpu_hz: float = 5e8
    payload_bits: float = DEFAULT_PAYLOAD_BITS

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def seconds_per_sample(self) -> float:
        return self.cycles_per_sample / self.cpu_hz


@dataclass
class RoundTiming:
    sense_s: np.ndarray
    compute_s: np.ndarray
    upload_s: np.ndarray
    participated: np.ndarray

    @property
    def per_uav_s(self) -> np.ndarray:
        return self.sense_s + self.compute_s + self.upload_s

    @property
    def round_latency_s(self) -> float:
        return round_latency(self.per_uav_s)


def sensing_time(delta, p: ComputeParams):
    d = np.asarray(delta, dtype=float)
    if np.any(d <= 0):
        raise ValueError("batch size must be positive")
    return p.unit_sense_time_s * d


def compute_time(delta, participated, p: ComputeParams):
    return np.where(participated, np.asarray(delta, dtype=float) * p.seconds_per_sample, 0.0)


def upload_time(rate_bps, participated, p: ComputeParams):
    rate = np.asarray(rate_bps, dtype=float)
    part = np.asarray(participated, dtype=bool)
    if np.any(part & (rate <= 0)):
        raise ValueError("participating UAV has a non-positive uplink rate")
    with np.errstate(divide="ignore"):
        return np.where(part, p.payload_bits / np.where(rate > 0, rate, 1.0), 0.0)


def expected_round_latency_k(delta, q_s, rate_bps, p: ComputeParams):
    """T0*delta + q_s*(delta*xi/f_cpu + D0/r), the participation-averaged time."""
    delta = np.asarray(delta, dtype=float)
    return (p.unit_sense_time_s * delta
            + q_s * (delta * p.seconds_per_sample + p.payload_bits / np.asarray(rate_bps, dtype=float)))


def round_latency(per_uav_s) -> float:
    t = np.asarray(per_uav_s, dtype=float)
    if t.size == 0:
        raise ValueError("round latency needs at least one UAV")
    return float(t.max())


def realized_timing(delta, participated, rate_bps, p: ComputeParams) -> RoundTiming:
    part = np.asarray(participated, dtype=bool)
    return RoundTiming(
        sense_s=sensing_time(delta, p),
        compute_s=compute_time(delta, part, p),
        upload_s=upload_time(rate_bps, part, p),
        participated=part,
    )
