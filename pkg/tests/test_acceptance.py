"""End-to-end acceptance checks, one test per criterion.

Each test prints a single PASS/FAIL line (visible with ``pytest -s``
or in the captured output of a failure) and enforces its runtime budget.
"""

import json

import numpy as np
import pytest

from skyfeel import verify
from skyfeel.cli import main
from skyfeel.latency import DEFAULT_PAYLOAD_BITS


def report(r, budget_s):
    print(r.line())
    assert r.passed, r.detail
    assert r.seconds < budget_s, f"{r.name} took {r.seconds:.1f} s (budget {budget_s} s)"
    return r


def test_weight_identities():
    r = report(verify.weight_identities(), 5)
    assert r.metrics["sum_err"] <= 1e-12 and r.metrics["uniform_err"] <= 1e-12


def test_closed_form_bounds():
    r = report(verify.closed_form_bounds(), 5)
    assert r.metrics["equality_gap"] <= 1e-12


def test_bound_domination():
    task, _, eta, _, delta = verify.domination_setup()
    assert task.K == 8 and task.w0.size == 10 and delta == 16
    assert eta < 1 / (4 * task.L)
    r = report(verify.bound_domination(rounds=500, replications=200), 120)
    assert r.metrics["worst_ratio"] <= 1 + 1e-12
    assert r.metrics["plateau"] <= r.metrics["floor"]


def test_latency_equalization():
    verify.default_plan.cache_clear()
    r = report(verify.latency_equalization(), 60)
    assert r.metrics["spread"] <= 1 + 10 * 1e-6


def test_solver_oracles():
    r = report(verify.solver_oracles(), 120)
    assert r.metrics["split_err"] <= 1e-3
    assert r.metrics["bbpo_err"] <= 1e-2
    assert r.metrics["position_ok"]


def test_monotonicity():
    report(verify.monotonicity(), 10)


def test_sensing_trend():
    r = report(verify.sensing_trend(), 60)
    assert r.metrics["spearman"] >= 0.9


def test_doppler_ridge():
    r = report(verify.doppler_ridge(velocities=(0.5, 1.0, 2.0)), 30)
    assert max(r.metrics["errors"]) <= 1


def test_magnitude_anchor():
    cfg, _ = verify.default_plan()
    assert cfg.compute.payload_bits == DEFAULT_PAYLOAD_BITS
    assert DEFAULT_PAYLOAD_BITS == pytest.approx(1.568e8, rel=1e-3)
    r = report(verify.magnitude_anchor(), 60)
    assert 10.0 <= r.metrics["t_max_s"] <= 100.0


def test_reproducibility(tmp_path):
    r = verify.reproducibility()
    # the same guarantee through the command line, file bytes included
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scene": {"targets": [[150, 40], [-200, 90]]}}))
    plan = tmp_path / "plan.json"
    assert main(["optimize", "--config", str(cfg), "--preset", "eq-bandwidth",
                 "--out", str(plan), "--no-figure"]) == 0
    blobs = []
    for i, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"t{i}.csv"
        assert main(["simulate", "--config", str(cfg), "--plan", str(plan), "--rounds", "30",
                     "--reps", "6", "--seed", "7", "--threads", str(threads), "--out", str(out),
                     "--no-figure"]) == 0
        blobs.append(out.read_bytes())
    cli_ok = len(set(blobs)) == 1
    r = verify.CheckResult(r.name, r.passed and cli_ok, r.detail + f", CLI files identical: {cli_ok}",
                           r.seconds, r.metrics)
    report(r, np.inf)
