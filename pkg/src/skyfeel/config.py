"""Strict JSON configuration with unit conversion at the boundary.

Every key has a default; unknown keys are rejected with their dotted path.
Keys ending in ``_db``/``_dbm``/``_dbm_per_hz`` are converted to linear SI
values when the objects are built.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import airspace as air
from .bbpo import SolverSettings
from .bound import LearningConstants, contraction_A
from .errors import ConfigError
from .latency import DEFAULT_PAYLOAD_BITS, ComputeParams
from .sensing import DEFAULT_NOISE_POWER, SensingWaveform

NUM, INT, STR, BOOL = "num", "int", "str", "bool"
NUM_OR_LIST, OPT_NUM, POINTS, OPT_POINTS, NUM_LIST, STR_LIST = (
    "num|list", "num?", "points", "points?", "list[num]", "list[str]")

SCHEMA = {
    "scene": {
        "server": ([0.0, 0.0, 0.0], POINTS),
        "targets": (None, OPT_POINTS),
        "num_uavs": (8, INT),
        "area_radius_m": (300.0, NUM),
        "min_target_distance_m": (50.0, NUM),
        "layout_seed": (1, INT),
        "uav_altitude_m": (300.0, NUM),
        "theta0_deg": (70.0, NUM),
    },
    "environment": {
        "psi": (11.95, NUM),
        "zeta": (0.14, NUM),
        "psi_comm": (None, OPT_NUM),
        "zeta_comm": (None, OPT_NUM),
    },
    "radio": {
        "carrier_hz": (60e9, NUM),
        "pathloss_exp": (2.0, NUM),
        "excess_los_db": (3.0, NUM),
        "excess_nlos_db": (23.0, NUM),
        "noise_psd_dbm_per_hz": (-174.0, NUM),
        "total_bandwidth_hz": (6e6, NUM),
        "p_c_dbm": (20.0, NUM_OR_LIST),
    },
    "compute": {
        "unit_sense_time_s": (0.5, NUM),
        "cycles_per_sample": (2.5e7, NUM),
        "cpu_hz": (5e8, NUM),
        "payload_bits": (float(DEFAULT_PAYLOAD_BITS), NUM),
    },
    "learning": {
        "eta": (0.03, NUM),
        "L": (2.0, NUM),
        "mu": (1.0, NUM),
        "sigma2": (0.5, NUM_OR_LIST),
        "lambda2": (0.001, NUM_OR_LIST),
        "lambda0": (1.0, NUM),
        "epsilon": (0.05, NUM),
    },
    "solver": {
        "tol_tmax_s": (1e-6, NUM),
        "tol_root": (1e-9, NUM),
        "n_max": (1000, INT),
        "delta_max": (256.0, NUM),
        "max_iter": (200, INT),
        "max_alternations": (100, INT),
        "delta_init": (32.0, NUM),
        "sweep": ("geometric", STR),
        "sweep_ratio": (1.05, NUM),
        "position_mode": ("exact", STR),
        "multi_start": (True, BOOL),
        "order": (["bandwidth", "batch", "position"], STR_LIST),
    },
    "sensing": {
        "carrier_hz": (60e9, NUM),
        "sweep_bandwidth_hz": (10e6, NUM),
        "chirp_s": (250e-6, NUM),
        "chirps_per_frame": (512, INT),
        "sample_rate_hz": (256e3, NUM),
        "p_s_dbm": (30.0, NUM),
        "antenna_gain": (1.0, NUM),
        "window": ("hann", STR),
        "window_len": (16, INT),
        "overlap": (8, INT),
        "noise_power_w": (DEFAULT_NOISE_POWER, NUM),
        "altitude_m": (300.0, NUM),
        "angles_deg": ([30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0], NUM_LIST),
        "frames": (8, INT),
    },
    "simulation": {
        "dimension": (10, INT),
        "heterogeneity": (0.05, NUM),
        "task_seed": (0, INT),
        "rounds": (500, INT),
        "replications": (200, INT),
        "empty_round": ("count", STR),
    },
}


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check(path, kind, v):
    if kind in (OPT_NUM, OPT_POINTS) and v is None:
        return v
    if kind in (NUM, OPT_NUM):
        if not _is_num(v):
            raise ConfigError(path, f"expected a finite number, got {v!r}")
        return float(v)
    if kind == INT:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(path, f"expected an integer, got {v!r}")
        return v
    if kind == STR:
        if not isinstance(v, str):
            raise ConfigError(path, f"expected a string, got {v!r}")
        return v
    if kind == BOOL:
        if not isinstance(v, bool):
            raise ConfigError(path, f"expected true/false, got {v!r}")
        return v
    if kind == NUM_OR_LIST:
        if _is_num(v):
            return float(v)
        if isinstance(v, list) and v and all(_is_num(x) for x in v):
            return [float(x) for x in v]
        raise ConfigError(path, f"expected a number or non-empty list of numbers, got {v!r}")
    if kind == NUM_LIST:
        if isinstance(v, list) and v and all(_is_num(x) for x in v):
            return [float(x) for x in v]
        raise ConfigError(path, "expected a non-empty list of numbers")
    if kind == STR_LIST:
        if isinstance(v, list) and all(isinstance(x, str) for x in v):
            return list(v)
        raise ConfigError(path, "expected a list of strings")
    if kind in (POINTS, OPT_POINTS):
        pts = [v] if kind == POINTS else v
        if not isinstance(pts, list) or not pts:
            raise ConfigError(path, "expected a list of [x, y] or [x, y, z] points")
        for i, p in enumerate(pts):
            if not (isinstance(p, list) and len(p) in (2, 3) and all(_is_num(x) for x in p)):
                raise ConfigError(f"{path}[{i}]", f"expected [x, y] or [x, y, z], got {p!r}")
        return v
    raise AssertionError(kind)


def merge(doc: dict) -> dict:
    """Validate ``doc`` against the schema and fill in defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be a JSON object")
    out = {}
    for key in doc:
        if key not in SCHEMA:
            raise ConfigError(key, "unknown section")
    for sec, fields in SCHEMA.items():
        given = doc.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(sec, "section must be a JSON object")
        for key in given:
            if key not in fields:
                raise ConfigError(f"{sec}.{key}", "unknown key")
        out[sec] = {}
        for key, (default, kind) in fields.items():
            v = given.get(key, copy.deepcopy(default))
            out[sec][key] = _check(f"{sec}.{key}", kind, v)
    return out


def config_hash(merged: dict) -> str:
    blob = json.dumps(merged, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def random_targets(K, radius, min_dist, seed):
    """Uniform points in a disk around the origin, at least ``min_dist`` out."""
    if min_dist >= radius:
        raise ValueError("min_target_distance_m must be below area_radius_m")
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < K:
        r = radius * math.sqrt(rng.random())
        a = 2 * math.pi * rng.random()
        if r >= min_dist:
            pts.append(air.Position(r * math.cos(a), r * math.sin(a), 0.0))
    return pts


@dataclass
class Config:
    raw: dict
    scene: air.Scene
    consts: LearningConstants
    compute: ComputeParams
    settings: SolverSettings
    waveform: SensingWaveform

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def section(self, name):
        return self.raw[name]


def _wrap(path, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(path, str(e)) from e


def build(merged: dict) -> Config:
    s, e, r = merged["scene"], merged["environment"], merged["radio"]
    env = _wrap("environment", air.Environment, e["psi"], e["zeta"])
    env_c = None
    if e["psi_comm"] is not None or e["zeta_comm"] is not None:
        env_c = _wrap("environment", air.Environment,
                      e["psi_comm"] if e["psi_comm"] is not None else e["psi"],
                      e["zeta_comm"] if e["zeta_comm"] is not None else e["zeta"])
    p = dbm_to_watts(r["p_c_dbm"])
    radio = _wrap("radio", air.RadioParams,
                  carrier_hz=r["carrier_hz"], pathloss_exp=r["pathloss_exp"],
                  excess_los_linear=float(db_to_linear(r["excess_los_db"])),
                  excess_nlos_linear=float(db_to_linear(r["excess_nlos_db"])),
                  noise_psd_w_per_hz=float(dbm_to_watts(r["noise_psd_dbm_per_hz"])),
                  total_bandwidth_hz=r["total_bandwidth_hz"],
                  tx_power_w=float(p) if p.ndim == 0 else tuple(p.tolist()))
    if s["targets"] is None:
        targets = _wrap("scene", random_targets, s["num_uavs"], s["area_radius_m"],
                        s["min_target_distance_m"], s["layout_seed"])
    else:
        targets = [_wrap("scene.targets", air.Position.from_seq, t) for t in s["targets"]]
    if p.ndim == 1 and p.size != len(targets):
        raise ConfigError("radio.p_c_dbm", f"expected {len(targets)} entries, got {p.size}")
    server = _wrap("scene.server", air.Position.from_seq, s["server"])
    scene = _wrap("scene", air.Scene, server, targets, s["uav_altitude_m"], env, radio,
                  s["theta0_deg"], env_c)
    lr = merged["learning"]
    consts = _wrap("learning", LearningConstants, **lr)
    _wrap("learning", consts.per_uav, scene.K)
    _wrap("learning.eta", contraction_A, consts)
    compute = _wrap("compute", ComputeParams, **merged["compute"])
    sv = dict(merged["solver"])
    sv["order"] = tuple(sv["order"])
    settings = _wrap("solver", SolverSettings, **sv)
    sn = merged["sensing"]
    waveform = _wrap("sensing", SensingWaveform, sn["carrier_hz"], sn["sweep_bandwidth_hz"],
                     sn["chirp_s"], sn["chirps_per_frame"], sn["sample_rate_hz"],
                     float(dbm_to_watts(sn["p_s_dbm"])), sn["antenna_gain"])
    M, W, Q = sn["chirps_per_frame"], sn["window_len"], sn["overlap"]
    if not 0 <= Q < W <= M or (M - Q) % (W - Q):
        raise ConfigError("sensing.overlap", f"(M-Q)={M - Q} must be divisible by (W-Q)={W - Q}")
    if merged["simulation"]["empty_round"] not in ("count", "skip"):
        raise ConfigError("simulation.empty_round", "expected 'count' or 'skip'")
    return Config(merged, scene, consts, compute, settings, waveform)


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Parse, validate and build.  ``path=None`` gives the defaults."""
    doc = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(str(path), f"cannot read: {e.strerror}") from e
        try:
            doc = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as e:
            raise ConfigError(str(path), f"parse error at line {e.lineno}: {e.msg}") from e
    if overrides:
        doc = copy.deepcopy(doc)
        for sec, vals in overrides.items():
            doc.setdefault(sec, {}).update(vals)
    return build(merge(doc))
