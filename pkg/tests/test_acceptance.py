"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import io
import os
import subprocess
import sys
import time
from contextlib import redirect_stdout
from fractions import Fraction as F

import numpy as np

from flowvar.cli import main as cli_main
from flowvar.diffusion import correlation, covariance_tables, scv, sigma_D, sigma_E
from flowvar.moments import sigma_arrival_mom, sigma_flow_mom
from flowvar.network import FlowId, all_flows
from flowvar.simulation import check_invariants, run_replication

from conftest import load_small_experiment, random_network
from test_diffusion import SIX_DIAG, sigma_E_golden

PRINTED_13_46 = 5 / 19
SLOPE_54 = 199 / 18


def rel_err(got, want):
    return abs(got - want) / abs(want) if want else abs(got)


def test_1_diagonal_table(six_spec_path, verdict):
    start = time.perf_counter()
    with redirect_stdout(io.StringIO()):
        code = cli_main(["analyze", "--spec", str(six_spec_path)])
    from flowvar.experiment import six_node_network
    net = six_node_network()
    D = sigma_D(net)
    elapsed = time.perf_counter() - start
    worst = 0.0
    for f in all_flows(6):
        want = float(SIX_DIAG.get((f.i, f.j), 0))
        got = D[f.offset(6), f.offset(6)]
        worst = max(worst, rel_err(got, want) if want else abs(got))
    ok = code == 0 and worst <= 1e-9 and elapsed < 1.0
    verdict(1, ok, f"max rel err {worst:.2e} (tol 1e-9), analyze {elapsed:.3f}s (< 1s)")


def test_2_off_diagonals(six, verdict):
    t = covariance_tables(six)
    pairs = {((2, 1), (2, 4)): -0.5, ((4, 5), (5, 4)): SLOPE_54, ((1, 3), (2, 4)): -1 / 3}
    worst = max(rel_err(t.flow_cov(FlowId(*a), FlowId(*b)), v) for (a, b), v in pairs.items())
    f1, f2 = FlowId(1, 3), FlowId(4, 6)
    matrix = t.flow_cov(f1, f2)
    moment = sigma_flow_mom(six, f1, f2)
    routes_agree = rel_err(moment, matrix) <= 1e-9
    ok = worst <= 1e-9 and routes_agree
    verdict(2, ok, f"max rel err {worst:.2e}; sigma(1->3,4->6) matrix {matrix:.10f} moment "
                   f"{moment:.10f} (= 5/9 {rel_err(matrix, 5 / 9):.1e}); printed 5/19 = "
                   f"{PRINTED_13_46:.6f} deviates by {matrix - PRINTED_13_46:+.6f}")


def test_3_sigma_E_and_scv(six, verdict):
    E = sigma_E(six)
    worst = float(np.max(np.abs(E - sigma_E_golden()) / np.abs(sigma_E_golden())))
    c2 = scv(six, E)
    c2_err = float(np.max(np.abs(c2 - [1.89, 0.5, 1.78, 2.53, 2.76, 0.76])))
    equal_56 = all(E[k, 4] == E[k, 5] for k in (0, 1, 2, 5))
    ok = worst <= 1e-9 and c2_err <= 0.005 and equal_56
    verdict(3, ok, f"Sigma_E max rel err {worst:.2e}; c2 max abs err {c2_err:.4f} (tol 0.005); "
                   f"sigma_k5 == sigma_k6 exactly: {equal_56}")


def test_4_correlations(six, verdict):
    t = covariance_tables(six)
    r1 = correlation(t, FlowId(2, 1), FlowId(2, 4))
    r2 = correlation(t, FlowId(4, 5), FlowId(5, 4))
    r3 = correlation(t, FlowId(1, 3), FlowId(2, 4))
    sweep = {}
    for v2 in (0.0, 4.0, 16.0):
        net = six.with_params(v2=[2.0, v2, 0, 0, 0, 0])
        sweep[v2] = correlation(covariance_tables(net), FlowId(1, 3), FlowId(2, 4))
    formula = {v: (v - 4) / np.sqrt((v + 4) * (v + 30)) for v in sweep}
    sweep_err = max(abs(sweep[v] - formula[v]) for v in sweep)
    ok = (abs(r1 + 1 / 3) <= 1e-9 and abs(r2 - 1) <= 1e-9 and abs(r3 + 0.14434) <= 5e-6
          and sweep_err <= 1e-9 and abs(sweep[4.0]) <= 1e-12)
    verdict(4, ok, f"rho = {r1:.9f}, {r2:.9f}, {r3:.7f}; v2 sweep max err {sweep_err:.1e}, "
                   f"rho(v2=4) = {sweep[4.0]:.1e}")


def test_5_route_equivalence(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(20250105)
    worst = 0.0
    for _ in range(200):
        K = int(rng.integers(1, 7))
        net = random_network(rng, K)
        D, E = sigma_D(net), sigma_E(net)
        flows = all_flows(K)
        for a, f1 in enumerate(flows):
            for f2 in flows[a:]:
                want = D[f1.offset(K), f2.offset(K)]
                err = abs(sigma_flow_mom(net, f1, f2) - want) / max(abs(want), 1e-2)
                worst = max(worst, err)
        for j1 in range(1, K + 1):
            for j2 in range(j1, K + 1):
                want = E[j1 - 1, j2 - 1]
                worst = max(worst, abs(sigma_arrival_mom(net, j1, j2) - want) / max(abs(want), 1e-2))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and elapsed < 30
    verdict(5, ok, f"200 networks, max rel discrepancy {worst:.2e} (< 1e-8), {elapsed:.1f}s (< 30s)")


def test_6_zero_service_oracle(six_zero_service, verdict):
    out = six_zero_service
    est = out.var_rate(FlowId(4, 5))
    cov = out.cov_rate(FlowId(2, 1), FlowId(2, 4))
    err = rel_err(est.value, SLOPE_54)
    ok = err <= 0.05 and cov.value + 4 * cov.se < 0 and out.elapsed < 300
    verdict(6, ok, f"Var/t = {est.value:.4f} +- {est.se:.4f} vs {SLOPE_54:.4f} (rel {err:.3f}, "
                   f"tol 0.05); cov(2->1,2->4)/t = {cov.value:.4f} +- {cov.se:.4f}; "
                   f"{out.elapsed:.0f}s, n = {out.n}")


def test_7_des_slope(des_single, des_priority, verdict):
    f = FlowId(5, 4)
    parts = []
    ok = True
    for name, out in (("single-class", des_single), ("priority", des_priority)):
        est = out.var_rate(f)
        err = rel_err(est.value, SLOPE_54)
        ok &= err <= 0.05
        parts.append(f"{name} Var/t = {est.value:.3f} +- {est.se:.3f} (rel {err:.3f}, {out.elapsed:.0f}s)")
    bias_single = des_single.bias(f, SLOPE_54)[-1]
    bias_prio = des_priority.bias(f, SLOPE_54)[-1]
    parts.append(f"bias at t=1000: single {bias_single:.0f}, priority {bias_prio:.0f} "
                 f"(priority >= single: {bias_prio >= bias_single}, logged only)")
    verdict(7, ok, f"target {SLOPE_54:.4f} within 5%, n = {des_single.n}; " + "; ".join(parts))


def test_8_integer_invariants(verdict):
    totals = {}
    for name in ("six_node_single_class.json", "six_node_priority.json"):
        exp = load_small_experiment(name, replications=100)
        for rep in range(100):
            traj = run_replication(exp.net, exp.arrivals, exp.services, exp.config, rep)
            for key, count in check_invariants(traj, exp.net.servers).items():
                totals[key] = totals.get(key, 0) + count
    ok = totals["flow_conservation"] == 0 and totals["routing"] == 0 and not any(totals.values())
    verdict(8, ok, "violations over 2 x 100 replications x 50 grid points: "
                   + ", ".join(f"{k}={v}" for k, v in sorted(totals.items())))


def test_9_thread_determinism(tmp_path, six_spec_path, verdict):
    import json
    from flowvar.experiment import data_path

    doc = json.loads(data_path("six_node_priority.json").read_text())
    doc.update({"network": str(six_spec_path), "grid": {"start": 50, "stop": 200, "step": 50},
                "horizon": 200, "replications": 400})
    exp = tmp_path / "exp.json"
    exp.write_text(json.dumps(doc))
    commands = {
        "analyze": ["analyze", "--spec", str(six_spec_path), "--rho", "1:3,2:4"],
        "moments": ["moments", "--spec", str(six_spec_path), "--flows", "4->5,5->4"],
        "oracle": ["oracle", "--experiment", str(exp), "--seed", "5"],
        "simulate": ["simulate", "--experiment", str(exp), "--seed", "5"],
        "compare": ["compare", "--experiment", str(exp), "--seed", "5", "--tolerance", "10"],
    }
    mismatched = []
    for name, args in commands.items():
        outputs = []
        for threads in ("1", "4"):
            out = tmp_path / f"{name}-{threads}"
            env = dict(os.environ, FLOWVAR_THREADS=threads)
            proc = subprocess.run([sys.executable, "-m", "flowvar.cli", *args, "--out", str(out)],
                                  env=env, capture_output=True, text=True)
            files = {p.name: p.read_bytes() for p in sorted(out.iterdir())} if out.exists() else {}
            outputs.append((proc.returncode, files))
        if outputs[0] != outputs[1] or not outputs[0][1]:
            mismatched.append(name)
    verdict(9, not mismatched, f"{len(commands)} commands, FLOWVAR_THREADS 1 vs 4; "
                               f"byte-identical CSV: {'all' if not mismatched else mismatched}")
