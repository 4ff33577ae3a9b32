"""Air-to-ground geometry, LOS probability, channel gain and uplink rate.

All quantities are SI (meters, watts, hertz, seconds).  Angles are degrees.
Rates use log base 2, i.e. bits per second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import lambertw

from .errors import GeometryError

SPEED_OF_LIGHT = 3e8


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise GeometryError(f"non-finite coordinate in {self}")
        if self.z < 0:
            raise GeometryError(f"negative altitude in {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_seq(cls, seq) -> "Position":
        x, y, *rest = seq
        return cls(float(x), float(y), float(rest[0]) if rest else 0.0)


@dataclass(frozen=True)
class Environment:
    """Logistic LOS-model constants (psi is dimensionless, zeta per degree)."""

    psi: float = 11.95
    zeta: float = 0.14

    def __post_init__(self):
        if self.psi <= 0 or self.zeta <= 0:
            raise ValueError("psi and zeta must be positive")


@dataclass(frozen=True)
class RadioParams:
    carrier_hz: float = 60e9
    pathloss_exp: float = 2.0
    excess_los_linear: float = 10 ** 0.3
    excess_nlos_linear: float = 10 ** 2.3
    noise_psd_w_per_hz: float = 10 ** (-174 / 10) * 1e-3
    total_bandwidth_hz: float = 6e6
    # scalar or one entry per UAV
    tx_power_w: float | tuple = 0.1

    def __post_init__(self):
        if not self.excess_nlos_linear >= self.excess_los_linear >= 1.0:
            raise ValueError("need eta2 >= eta1 >= 1 (linear scale)")
        for name in ("carrier_hz", "pathloss_exp", "noise_psd_w_per_hz", "total_bandwidth_hz"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if np.any(np.asarray(self.tx_power_w, dtype=float) <= 0):
            raise ValueError("transmit power must be positive")

    def power_of(self, k: int) -> float:
        p = self.tx_power_w
        return float(p) if np.isscalar(p) else float(p[k])

    def powers(self, K: int) -> np.ndarray:
        p = np.asarray(self.tx_power_w, dtype=float)
        return np.full(K, float(p)) if p.ndim == 0 else p[:K].copy()


@dataclass(frozen=True)
class Scene:
    server: Position
    targets: tuple
    uav_altitude_m: float = 100.0
    env: Environment = field(default_factory=Environment)
    radio: RadioParams = field(default_factory=RadioParams)
    theta0_deg: float = 70.0
    # separate constants for the UAV-server link; None reuses ``env``
    env_comm: Environment | None = None

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if len(self.targets) < 1:
            raise ValueError("scene needs at least one target")
        if not 0 < self.theta0_deg < 90:
            raise ValueError("theta0 must lie in (0, 90) degrees")
        for v in self.targets:
            if self.uav_altitude_m <= v.z:
                raise GeometryError("UAV altitude must exceed every target altitude")
        if self.uav_altitude_m <= self.server.z:
            raise GeometryError("UAV altitude must exceed the server altitude")

    @property
    def K(self) -> int:
        return len(self.targets)

    @property
    def comm_env(self) -> Environment:
        return self.env_comm if self.env_comm is not None else self.env


def _elevation(delta_z, dist):
    return np.degrees(np.arcsin(np.clip(np.abs(delta_z) / dist, 0.0, 1.0)))


def elevation_angle_deg(a: Position, b: Position) -> float:
    """Elevation angle of the segment a-b above the horizontal plane."""
    d = np.linalg.norm(a.as_array() - b.as_array())
    if d == 0:
        raise GeometryError("elevation angle undefined for coincident points")
    return float(_elevation(a.z - b.z, d))


def los_probability(theta_deg, env: Environment):
    """Logistic LOS (or successful-sensing) probability at elevation ``theta_deg``."""
    theta = np.asarray(theta_deg, dtype=float)
    if np.any((theta < 0) | (theta > 90)):
        raise ValueError("elevation angle must lie in [0, 90] degrees")
    q = 1.0 / (1.0 + env.psi * np.exp(-env.zeta * (theta - env.psi)))
    return float(q) if q.ndim == 0 else q


def theta_from_qs(q_s, env: Environment):
    """Inverse of :func:`los_probability` (not clipped to [0, 90])."""
    q = np.asarray(q_s, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("q_s must lie strictly inside (0, 1)")
    theta = -(np.log(1.0 / q - 1.0) - np.log(env.psi)) / env.zeta + env.psi
    return float(theta) if theta.ndim == 0 else theta


def max_sensing_probability(env: Environment) -> float:
    """Probability reached when hovering directly above the target."""
    return los_probability(90.0, env)


def gain_from_geometry(dist, theta_c_deg, scene: Scene):
    """Average air-to-ground gain as a function of distance and elevation only."""
    r = scene.radio
    k0 = 4 * math.pi * r.carrier_hz / SPEED_OF_LIGHT
    q_c = los_probability(theta_c_deg, scene.comm_env)
    excess = r.excess_los_linear * q_c + r.excess_nlos_linear * (1.0 - q_c)
    return (k0 * np.asarray(dist, dtype=float)) ** (-r.pathloss_exp) / excess


def channel_gain(u: Position, scene: Scene) -> float:
    d = np.linalg.norm(u.as_array() - scene.server.as_array())
    if d == 0:
        raise GeometryError("UAV coincides with the server")
    theta_c = _elevation(u.z - scene.server.z, d)
    return float(gain_from_geometry(d, theta_c, scene))


def shannon_rate(bandwidth_hz, snr_coeff):
    """B*log2(1 + c/B) where c = p*h/N0 (in Hz)."""
    b = np.asarray(bandwidth_hz, dtype=float)
    return b * np.log1p(snr_coeff / b) / math.log(2.0)


def rate_ceiling(snr_coeff):
    """Limit of :func:`shannon_rate` as bandwidth grows without bound."""
    return np.asarray(snr_coeff, dtype=float) / math.log(2.0)


def _log1p_over_x(x):
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1 - x / 2 + x * x / 3 - x ** 3 / 4, np.log1p(xs) / xs)


def _log1p_over_x_deriv(x):
    small = x < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, -0.5 + 2 * x / 3 - 0.75 * x * x,
                    (xs / (1 + xs) - np.log1p(xs)) / (xs * xs))


def bandwidth_for_rate(rate_bps, snr_coeff):
    """Smallest bandwidth achieving ``rate_bps``; inf when above the ceiling.

    With x = c/B the condition is log(1+x)/x = s, s = R ln2 / c.  The lower
    Lambert-W branch gives x in closed form; near the ceiling (s -> 1) that
    loses precision, so a series start is used there and both are polished
    by Newton steps on log(1+x)/x.
    """
    rate = np.atleast_1d(np.asarray(rate_bps, dtype=float))
    c = np.broadcast_to(np.asarray(snr_coeff, dtype=float), rate.shape)
    out = np.full(rate.shape, np.inf)
    s = rate * math.log(2.0) / c
    ok = s < 1.0
    zero = ok & (rate <= 0)
    out[zero] = 0.0
    ok &= ~zero
    if np.any(ok):
        sk = s[ok]
        u = 1.0 - sk
        w = lambertw(-sk * np.exp(-sk), k=-1).real
        x = np.where(u > 1e-2, -w / sk - 1.0, 2 * u + 8.0 / 3.0 * u * u)
        for _ in range(3):
            step = (_log1p_over_x(x) - sk) / _log1p_over_x_deriv(x)
            x_new = x - step
            x = np.where(x_new > 0, x_new, x / 2)
        out[ok] = c[ok] / x
    return out if np.ndim(rate_bps) else float(out[0])


def uplink_rate(u: Position, bandwidth_hz: float, scene: Scene, power_w: float | None = None) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    p = scene.radio.power_of(0) if power_w is None else power_w
    c = p * channel_gain(u, scene) / scene.radio.noise_psd_w_per_hz
    return float(shannon_rate(bandwidth_hz, c))


def _horizontal(server: Position, target: Position):
    """Unit horizontal direction from target toward server, and its length."""
    dx, dy = server.x - target.x, server.y - target.y
    dist = math.hypot(dx, dy)
    if dist == 0:
        # target straight above/below the server: tie-break toward +x
        return (1.0, 0.0), 0.0
    return (dx / dist, dy / dist), dist


def hover_offset(theta_s_deg, target: Position, scene: Scene) -> float:
    """Horizontal UAV-target distance at altitude H for sensing angle theta."""
    dz = scene.uav_altitude_m - target.z
    if theta_s_deg >= 90.0:
        return 0.0
    return dz / math.tan(math.radians(theta_s_deg))


def _theta_for(q_s: float, env: Environment) -> float:
    if not 0 < q_s <= 1:
        raise ValueError("q_s must lie in (0, 1]")
    if q_s >= max_sensing_probability(env):
        return 90.0
    return max(theta_from_qs(q_s, env), 0.0)


def optimal_position(q_s: float, target: Position, scene: Scene) -> Position:
    """Rate-maximizing hover point at altitude H with sensing probability ``q_s``.

    The UAV sits on the circle of constant sensing elevation around the
    target, at the point closest to the server.  Probabilities at or above
    the overhead value map to hovering directly above the target.
    """
    theta = _theta_for(q_s, scene.env)
    (ux, uy), _ = _horizontal(scene.server, target)
    rho = hover_offset(theta, target, scene)
    return Position(target.x + rho * ux, target.y + rho * uy, scene.uav_altitude_m)


def hover_domain_ok(q_s: float, target: Position, scene: Scene) -> bool:
    """True when the hover point lies strictly between target and server."""
    theta = _theta_for(q_s, scene.env)
    _, dist = _horizontal(scene.server, target)
    return hover_offset(theta, target, scene) < dist


def rate_given_qs(q_s: float, bandwidth_hz: float, target: Position, scene: Scene,
                  power_w: float | None = None) -> float:
    if not hover_domain_ok(q_s, target, scene):
        raise GeometryError(
            "hover point passes beyond the server; rate is not monotone in q_s there"
        )
    u = optimal_position(q_s, target, scene)
    return uplink_rate(u, bandwidth_hz, scene, power_w)


def snr_coefficients(positions, scene: Scene) -> np.ndarray:
    """p_k*h_k/N0 for an array of UAV positions (shape (K, 3))."""
    pos = np.asarray(positions, dtype=float)
    K = pos.shape[0]
    rel = pos - scene.server.as_array()
    d = np.linalg.norm(rel, axis=1)
    if np.any(d == 0):
        raise GeometryError("UAV coincides with the server")
    theta_c = _elevation(rel[:, 2], d)
    gain = gain_from_geometry(d, theta_c, scene)
    return scene.radio.powers(K) * gain / scene.radio.noise_psd_w_per_hz


def positions_for_qs(q_s: float, scene: Scene) -> np.ndarray:
    return np.array([optimal_position(q_s, v, scene).as_array() for v in scene.targets])


def sensing_angles(positions, scene: Scene) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    tg = np.array([v.as_array() for v in scene.targets])
    rel = pos - tg
    return _elevation(rel[:, 2], np.linalg.norm(rel, axis=1))
