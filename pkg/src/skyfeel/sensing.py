"""FMCW echo synthesis, slow-time STFT and spectrogram quality scoring.

An echo matrix holds fast-time samples (rows, f_s*T_p per chirp) against
chirp index (columns, M per frame).  Targets are point scatterers whose
range is frozen within each chirp and updated chirp to chirp, so radial
motion shows up as a carrier-phase rotation along the columns.  A short
windowed DFT along the columns of every row gives a range-Doppler-time
cube; summing magnitudes over rows gives the micro-Doppler spectrogram.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window
from scipy.stats import spearmanr

SPEED_OF_LIGHT = 3e8
# clutter power (W) putting the 70 deg PSNR near 30 dB for the default
# waveform at 300 m; frozen output of calibrate_noise()
DEFAULT_NOISE_POWER = 1.35e-11


@dataclass(frozen=True)
class SensingWaveform:
    carrier_hz: float = 60e9
    sweep_bandwidth_hz: float = 10e6
    chirp_s: float = 250e-6
    chirps_per_frame: int = 512
    sample_rate_hz: float = 256e3
    tx_power_w: float = 1.0
    antenna_gain: float = 1.0

    def __post_init__(self):
        for name in ("carrier_hz", "sweep_bandwidth_hz", "chirp_s", "sample_rate_hz",
                     "tx_power_w", "antenna_gain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.chirps_per_frame < 2:
            raise ValueError("need at least two chirps per frame")
        n = self.sample_rate_hz * self.chirp_s
        if abs(n - round(n)) > 1e-9 * max(n, 1):
            raise ValueError(f"f_s*T_p = {n} is not an integer")

    @property
    def samples_per_chirp(self) -> int:
        return int(round(self.sample_rate_hz * self.chirp_s))

    @property
    def frame_s(self) -> float:
        return self.chirps_per_frame * self.chirp_s

    @property
    def amplitude_scale(self) -> float:
        return math.sqrt(self.tx_power_w) * self.antenna_gain / math.sqrt(4 * math.pi)


@dataclass(frozen=True)
class ScattererTrack:
    """Point scatterers at range ``base_range_m + offset_m`` that move radially.

    Positive ``velocity_mps`` means approaching.  Each scatterer may also
    oscillate radially with amplitude ``osc_amp_m`` and frequency
    ``osc_freq_hz`` (limb-like micro-motion).
    """

    base_range_m: float
    offset_m: np.ndarray
    velocity_mps: np.ndarray
    rcs: np.ndarray
    osc_amp_m: np.ndarray = None
    osc_freq_hz: np.ndarray = None
    osc_phase: np.ndarray = None

    def __post_init__(self):
        off = np.atleast_1d(np.asarray(self.offset_m, dtype=float))
        n = off.size

        def vec(v, default=0.0):
            v = np.full(n, default) if v is None else np.asarray(v, dtype=float)
            return np.broadcast_to(v, (n,)).copy()

        object.__setattr__(self, "offset_m", off)
        object.__setattr__(self, "velocity_mps", vec(self.velocity_mps))
        object.__setattr__(self, "rcs", vec(self.rcs, 1.0))
        object.__setattr__(self, "osc_amp_m", vec(self.osc_amp_m))
        object.__setattr__(self, "osc_freq_hz", vec(self.osc_freq_hz))
        object.__setattr__(self, "osc_phase", vec(self.osc_phase))
        if n < 1:
            raise ValueError("track needs at least one scatterer")
        if np.any(self.rcs < 0):
            raise ValueError("rcs must be non-negative")

    @property
    def L(self) -> int:
        return self.offset_m.size

    def at_range(self, r: float) -> "ScattererTrack":
        return replace(self, base_range_m=float(r))

    def distances(self, t) -> np.ndarray:
        """Ranges of every scatterer at times ``t``; shape (L, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        d = (self.base_range_m + self.offset_m[:, None] - self.velocity_mps[:, None] * t
             + self.osc_amp_m[:, None]
             * np.sin(2 * np.pi * self.osc_freq_hz[:, None] * t + self.osc_phase[:, None]))
        return d


@dataclass
class SpectrogramFrame:
    data: np.ndarray
    rho: int = 1
    window_len: int = 16
    overlap: int = 8
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.data.shape


def chirp(tau, waveform: SensingWaveform):
    """Complex baseband linear-FM chirp exp(j*pi*(B_s/T_p)*tau^2)."""
    k = waveform.sweep_bandwidth_hz / waveform.chirp_s
    return np.exp(1j * np.pi * k * np.asarray(tau) ** 2)


def synth_echo(track: ScattererTrack, waveform: SensingWaveform, noise_power: float,
               rho: int = 1, seed=None, rng=None) -> np.ndarray:
    """Echo matrix of shape (f_s*T_p, M) for sensing duration ``rho`` (1-based)."""
    if rho < 1:
        raise ValueError("rho is 1-based")
    if noise_power < 0:
        raise ValueError("noise power must be non-negative")
    R, M = waveform.samples_per_chirp, waveform.chirps_per_frame
    t_chirp = (rho - 1) * waveform.frame_s + np.arange(M) * waveform.chirp_s
    d = track.distances(t_chirp)                       # (L, M)
    if np.any(d <= 0):
        raise ValueError("scatterer distance must stay positive")
    fast = np.arange(R) / waveform.sample_rate_hz      # (R,)
    amp = waveform.amplitude_scale * np.sqrt(track.rcs)[:, None] / d ** 2
    phase = np.exp(-1j * 4 * np.pi * waveform.carrier_hz / SPEED_OF_LIGHT * d)
    y = np.zeros((R, M), dtype=complex)
    for l in range(track.L):
        delay = 2 * d[l] / SPEED_OF_LIGHT
        y += (amp[l] * phase[l])[None, :] * chirp(fast[:, None] - delay[None, :], waveform)
    if noise_power > 0:
        rng = np.random.default_rng(seed) if rng is None else rng
        y += math.sqrt(noise_power / 2) * (rng.standard_normal((R, M))
                                           + 1j * rng.standard_normal((R, M)))
    return y


def make_window(kind, W: int) -> np.ndarray:
    if isinstance(kind, np.ndarray):
        return kind.astype(float)
    if kind in ("rect", "rectangular", "boxcar"):
        return np.ones(W)
    return get_window(kind, W, fftbins=True)


def stft_rdt(echo, window, overlap: int) -> np.ndarray:
    """Slow-time STFT of every range row; cube of shape (rows, W, columns).

    Column m covers chirps [m*(W-Q), m*(W-Q)+W).
    """
    echo = np.asarray(echo)
    window = np.asarray(window, dtype=float)
    W = window.size
    M = echo.shape[1]
    if not 0 <= overlap < W:
        raise ValueError("overlap must lie in [0, W)")
    hop = W - overlap
    if W > M or (M - overlap) % hop:
        raise ValueError(f"(M-Q)={M - overlap} is not divisible by (W-Q)={hop}")
    seg = sliding_window_view(echo, W, axis=1)[:, ::hop, :]   # (rows, cols, W)
    spec = np.fft.fft(seg * window, axis=2)
    return np.transpose(spec, (0, 2, 1))


def integrate_spectrogram(cube, rho=1, overlap=None) -> SpectrogramFrame:
    """Non-coherent sum of STFT magnitudes over range rows."""
    cube = np.asarray(cube)
    data = np.abs(cube).sum(axis=0)
    W = cube.shape[1]
    return SpectrogramFrame(data, rho=rho, window_len=W, overlap=-1 if overlap is None else overlap)


def spectrogram(track, waveform, noise_power, rho=1, seed=None, window="hann", W=16, Q=8, rng=None):
    y = synth_echo(track, waveform, noise_power, rho, seed=seed, rng=rng)
    frame = integrate_spectrogram(stft_rdt(y, make_window(window, W), Q), rho, Q)
    return frame


def psnr_db(reference, test) -> float:
    ref = np.asarray(getattr(reference, "data", reference), dtype=float)
    tst = np.asarray(getattr(test, "data", test), dtype=float)
    if ref.shape != tst.shape:
        raise ValueError(f"frame shapes differ: {ref.shape} vs {tst.shape}")
    peak = float(ref.max())
    if peak <= 0:
        raise ValueError("reference frame is identically zero")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(peak * peak / mse)


def doppler_bin(velocity_mps, waveform: SensingWaveform, W: int) -> int:
    """Expected STFT bin of a scatterer approaching at ``velocity_mps``."""
    f_d = 2 * velocity_mps * waveform.carrier_hz / SPEED_OF_LIGHT
    return int(round(f_d * waveform.chirp_s * W)) % W


def human_track(rng, limbs: int = 4) -> ScattererTrack:
    """Torso plus oscillating limbs, all ranges relative to 0."""
    v = rng.uniform(0.3, 1.2)
    offs = np.concatenate([[0.0], rng.uniform(-0.3, 0.3, limbs)])
    amps = np.concatenate([[0.0], rng.uniform(0.05, 0.25, limbs)])
    freqs = np.concatenate([[0.0], rng.uniform(1.5, 3.0, limbs)])
    phases = np.concatenate([[0.0], rng.uniform(0, 2 * np.pi, limbs)])
    rcs = np.concatenate([[1.0], rng.uniform(0.1, 0.4, limbs)])
    return ScattererTrack(0.0, offs, np.full(limbs + 1, v), rcs, amps, freqs, phases)


def _normalized(frame: SpectrogramFrame) -> np.ndarray:
    return frame.data / frame.data.max()


def _sweep_frame(i, seq, track_generator, angles, waveform, noise_power, altitude_m,
                 window, W, Q):
    rng_track, *rng_noise = [np.random.default_rng(s) for s in seq.spawn(2 + len(angles))]
    track = track_generator(rng_track)

    def frame_at(theta, rng):
        d = altitude_m / math.sin(math.radians(theta))
        f = spectrogram(track.at_range(d), waveform, noise_power, window=window, W=W, Q=Q, rng=rng)
        return _normalized(f)

    ref = frame_at(90.0, rng_noise[0])
    return [math.inf if a == 90 else psnr_db(ref, frame_at(a, rng_noise[j + 1]))
            for j, a in enumerate(angles)]


def example_frames(track_generator, angles, waveform: SensingWaveform = SensingWaveform(),
                   noise_power: float = None, seed: int = 0, altitude_m: float = 300.0,
                   window="hann", W=16, Q=8):
    """Unit-peak spectrograms of the first sweep frame, one per angle.

    Uses the same streams as :func:`elevation_sweep`, so the images match
    the frames behind its first PSNR sample.  The 90 deg entry is the
    reference itself.
    """
    noise_power = DEFAULT_NOISE_POWER if noise_power is None else noise_power
    seq = np.random.SeedSequence(seed).spawn(1)[0]
    rng_track, *rng_noise = [np.random.default_rng(s) for s in seq.spawn(2 + len(angles))]
    track = track_generator(rng_track)
    out = {}
    for j, a in enumerate([90.0] + [float(x) for x in angles]):
        if a == 90.0 and j > 0:
            continue
        d = altitude_m / math.sin(math.radians(a))
        f = spectrogram(track.at_range(d), waveform, noise_power, window=window, W=W, Q=Q,
                        rng=rng_noise[j])
        out[a] = _normalized(f)
    return out


def elevation_sweep(track_generator, angles, waveform: SensingWaveform = SensingWaveform(),
                    noise_power: float = None, seed: int = 0, frames: int = 8,
                    altitude_m: float = 300.0, window="hann", W=16, Q=8, threads=1):
    """Mean PSNR per elevation angle against the overhead (90 deg) frame.

    Each frame draws one track, reused at every angle so only the range
    (and hence echo strength) changes, and fresh clutter per angle.  The
    90 deg frame is the reference, so that angle scores +inf.  Frames are
    scaled to unit peak before scoring.
    Returns a list of (angle, mean PSNR dB, frames).
    """
    angles = [float(a) for a in angles]
    if any(not 0 < a <= 90 for a in angles):
        raise ValueError("angles must lie in (0, 90]")
    noise_power = DEFAULT_NOISE_POWER if noise_power is None else noise_power
    seqs = np.random.SeedSequence(seed).spawn(frames)
    args = (track_generator, angles, waveform, noise_power, altitude_m, window, W, Q)
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(lambda i: _sweep_frame(i, seqs[i], *args), range(frames)))
    else:
        rows = [_sweep_frame(i, seqs[i], *args) for i in range(frames)]
    psnr = np.array(rows)
    out = []
    for j, a in enumerate(angles):
        col = psnr[:, j]
        out.append((a, math.inf if np.all(np.isinf(col)) else float(col.mean()), frames))
    return out


def trend(sweep):
    """Spearman rank correlation of PSNR against angle (inf ranks highest)."""
    a = np.array([r[0] for r in sweep])
    p = np.array([r[1] for r in sweep])
    p = np.where(np.isinf(p), np.nanmax(np.where(np.isinf(p), np.nan, p)) + 1e3, p)
    return float(spearmanr(a, p).statistic)


def calibrate_noise(target_db=30.0, angle=70.0, waveform: SensingWaveform = SensingWaveform(),
                    altitude_m=300.0, frames=4, seed=0):
    """Noise power for which the sweep gives ``target_db`` at ``angle``."""
    from scipy.optimize import brentq

    def f(log_p):
        r = elevation_sweep(human_track, [angle], waveform, 10 ** log_p, seed, frames, altitude_m)
        return r[0][1] - target_db

    return 10 ** brentq(f, -16, -4, xtol=1e-4)

