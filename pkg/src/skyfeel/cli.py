"""Command-line entry point: ``skyfeel <command> [options]``.

Exit status is 0 on success, 1 when the problem is infeasible (a JSON
reason block is printed to stdout) and 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, feelsim, sensing
from . import io as sio
from .bbpo import ResourcePlan, audit_plan
from .bound import bound_state
from .config import load_config
from .errors import ConfigError, InfeasibleError
from .weights import participation_weights, uniform_closed_forms

log = logging.getLogger("skyfeel")

TRACE_HEADER = ["replication", "round", "gap", "participants", "round_latency_s", "cumulative_time_s"]
SWEEP_HEADER = ["angle_deg", "mean_psnr_db", "frames"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def trace_csv(traces, prov) -> str:
    rows = (r for t in traces for r in t.rows())
    return sio.render_csv(TRACE_HEADER, rows, prov)


def sweep_csv(sweep, prov) -> str:
    return sio.render_csv(SWEEP_HEADER, sweep, prov)


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _figure_path(out, suffix=".png"):
    return Path(out).with_suffix(suffix)


def _write(out, text):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_bytes(text.encode())
        log.info("wrote %s", out)


# ---------------------------------------------------------------- commands

def cmd_optimize(args, cfg):
    from .feelsim import baseline_presets
    from .plotting import latency_breakdown

    plan = baseline_presets(args.preset, cfg.scene, cfg.consts, cfg.compute, cfg.settings,
                            batch=args.batch)
    audit = audit_plan(plan, cfg.scene, cfg.consts, cfg.settings)
    doc = {"plan": plan.to_dict(), "audit": audit}
    _write(args.out, sio.render_json(doc, sio.provenance(cfg.hash, preset=args.preset)))
    if args.out not in (None, "-") and not args.no_figure:
        latency_breakdown(plan, _figure_path(args.out))
    return 0


def _load_plan(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(str(path), f"cannot load plan: {e}") from e
    try:
        return ResourcePlan.from_dict(doc.get("plan", doc))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(path), str(e)) from e


def cmd_simulate(args, cfg):
    from .plotting import gap_curve

    plan = _load_plan(args.plan)
    sim = cfg.section("simulation")
    eta = cfg.consts.eta
    sigma = np.sqrt(cfg.consts.per_uav(plan.K)[0])
    task = feelsim.make_task(plan.K, sim["dimension"], sim["heterogeneity"], sigma,
                             sim["task_seed"], mu=cfg.consts.mu, L=cfg.consts.L)
    rounds = args.rounds or sim["rounds"]
    reps = args.reps or sim["replications"]
    traces = feelsim.run_training(task, plan, rounds, reps, args.seed, eta,
                                  threads=args.threads, empty_round=sim["empty_round"])
    prov = sio.provenance(cfg.hash, args.seed, plan_preset=plan.preset)
    _write(args.out, trace_csv(traces, prov))
    if args.out not in (None, "-") and not args.no_figure:
        mean, se = feelsim.mean_gap(traces)
        t = np.mean([tr.cumulative_time_s for tr in traces], axis=0)
        bound = None
        try:
            st = bound_state(task.constants(eta, cfg.consts.epsilon), plan.delta, plan.q_s)
            n = np.arange(rounds + 1)
            bound = st.G * (1 - st.A ** n) / (1 - st.A) + st.A ** n * task.lambda0
        except ValueError as e:
            log.warning("no bound overlay: %s", e)
        gap_curve(t, mean, _figure_path(args.out), se=se, bound=bound)
    return 0


def cmd_weights(args, cfg):
    if args.q:
        pw = participation_weights(args.q)
        doc = {"q": list(args.q), **pw.as_dict()}
    else:
        if args.K is None or args.q_s is None:
            raise UsageError("weights needs either --q or both --K and --q-s")
        a, b, g, c = uniform_closed_forms(args.K, args.q_s)
        doc = {"K": args.K, "q_s": args.q_s, "alpha": a, "beta_bound": b, "gamma_bound": g, "chi": c}
        if args.K <= 20:
            pw = participation_weights(np.full(args.K, args.q_s))
            doc["enumerated"] = pw.as_dict()
    _write(args.out, sio.render_json(doc, sio.provenance(cfg.hash)))
    return 0


def cmd_sense_sweep(args, cfg):
    from .plotting import psnr_curve

    sn = cfg.section("sensing")
    kw = dict(noise_power=sn["noise_power_w"], altitude_m=sn["altitude_m"],
              window=sn["window"], W=sn["window_len"], Q=sn["overlap"])
    sweep = sensing.elevation_sweep(sensing.human_track, sn["angles_deg"], cfg.waveform,
                                    seed=args.seed, frames=sn["frames"], threads=args.threads, **kw)
    _write(args.out, sweep_csv(sweep, sio.provenance(cfg.hash, args.seed)))
    if args.dump:
        d = Path(args.dump)
        d.mkdir(parents=True, exist_ok=True)
        frames = sensing.example_frames(sensing.human_track, sn["angles_deg"], cfg.waveform,
                                        seed=args.seed, **kw)
        for a, m in frames.items():
            sio.write_matrix(d / f"spectrogram_{a:g}deg.bin", m)
    if args.out not in (None, "-") and not args.no_figure:
        psnr_curve(sweep, _figure_path(args.out))
    return 0


def cmd_verify(args, cfg):
    from .verify import run_all

    results = run_all(threads=args.threads)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 0 if not failed else 1


# ---------------------------------------------------------------- parser

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file (defaults if omitted)")
    common.add_argument("--out", help="output file ('-' or omitted: stdout)")
    common.add_argument("--seed", type=_seed, default=0, help="64-bit RNG seed")
    common.add_argument("--threads", type=_positive, default=1, help="worker thread cap")
    common.add_argument("--no-figure", action="store_true", help="skip the PNG next to --out")

    p = _Parser(prog="skyfeel", description="Sensing-aware UAV federated learning planner.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    o = sub.add_parser("optimize", parents=[common], help="solve for a resource plan")
    o.add_argument("--preset", default="bbpo", choices=feelsim.PRESETS)
    o.add_argument("--batch", type=_positive, default=64, help="batch size for eq-batchsize")
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate", parents=[common], help="simulate training under a plan")
    s.add_argument("--plan", required=True)
    s.add_argument("--rounds", type=_positive)
    s.add_argument("--reps", type=_positive)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("weights", parents=[common], help="aggregation weights and bounds")
    w.add_argument("--q", type=float, nargs="+", help="per-UAV sensing probabilities")
    w.add_argument("--K", type=_positive)
    w.add_argument("--q-s", type=float, dest="q_s")
    w.set_defaults(func=cmd_weights)

    e = sub.add_parser("sense-sweep", parents=[common], help="PSNR against elevation angle")
    e.add_argument("--dump", help="directory for raw spectrogram matrices")
    e.set_defaults(func=cmd_sense_sweep)

    v = sub.add_parser("verify", parents=[common], help="run the oracle check suite")
    v.set_defaults(func=cmd_verify)
    return p


def _setup_logging():
    level = os.environ.get("SKYFEEL_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except InfeasibleError as e:
        print(json.dumps({"status": "infeasible", **sio._jsonable(e.as_dict())}, sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())
