"""Command line front end.

Exit codes: 0 ok, 1 invalid input, 2 internal consistency failure,
3 comparison failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .diffusion import correlation, covariance_tables, scv, UndefinedForZeroRate
from .distributions import DistributionError
from .errors import SimulationError, UnstableRefused
from .experiment import load_experiment
from .moments import route_discrepancy, visit_moments
from .network import FlowId, NetworkError, load_spec, stability_report, validate
from .oracle import run_zero_service_experiment
from .simulation import ConfigError, run_experiment

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL, EXIT_COMPARE = 0, 1, 2, 3
ROUTE_TOL = 1e-8

log = logging.getLogger("flowvar")


class InputError(Exception):
    pass


def _g6(x: float) -> str:
    return f"{x:.6g}"


def _parse_flows(text: str | None) -> list[FlowId] | None:
    if text is None or text == "all":
        return None
    try:
        return [FlowId.parse(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _parse_rho(items: list[str] | None) -> list[tuple[FlowId, FlowId]]:
    """``"1:3,2:4"`` is the pair (1->3, 2->4); pairs may be repeated or ';'-separated."""
    pairs = []
    for item in items or []:
        for chunk in item.split(";"):
            flows = _parse_flows(chunk)
            if not flows or len(flows) != 2:
                raise InputError(f"--rho expects two flows per pair, got {chunk!r}")
            pairs.append((flows[0], flows[1]))
    return pairs


def _check_flows(flows, K):
    for f in flows or []:
        if not (1 <= f.i <= K and 1 <= f.j <= K):
            raise InputError(f"flow {f} is outside the {K}-queue network")


def _matrix_table(M: np.ndarray, row_labels, col_labels) -> str:
    cells = [[""] + list(col_labels)] + [
        [r] + [_g6(x) for x in row] for r, row in zip(row_labels, M)
    ]
    widths = [max(len(row[c]) for row in cells) for c in range(len(cells[0]))]
    return "\n".join("  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in cells)


def _load_network(path):
    if path is None:
        raise InputError("--spec is required")
    return validate(load_spec(path))


def cmd_validate(args) -> int:
    net = _load_network(args.spec)
    report = stability_report(net)
    print(f"valid: K={net.K}")
    print("nu = [" + ", ".join(_g6(x) for x in net.nu) + "]")
    print(report.describe())
    return EXIT_OK


def cmd_analyze(args) -> int:
    net = _load_network(args.spec)
    K = net.K
    pairs = _parse_rho(args.rho)
    for f1, f2 in pairs:
        _check_flows([f1, f2], K)
    tables = covariance_tables(net)
    discrepancy = route_discrepancy(net, tables.SigmaD, tables.SigmaE)

    labels = [str(k) for k in range(1, K + 1)]
    print("throughput nu: [" + ", ".join(_g6(x) for x in net.nu) + "]")
    print("\nflow asymptotic variances sigma^2_{i->j} (rows i, columns j):")
    diag = np.diag(tables.SigmaD).reshape(K, K)
    print(_matrix_table(diag, labels, labels))
    print("\nSigma_E:")
    print(_matrix_table(tables.SigmaE, labels, labels))
    try:
        c2 = scv(net, tables.SigmaE)
        print("\nc^2 = [" + ", ".join(_g6(x) for x in c2) + "]")
    except UndefinedForZeroRate as exc:
        c2 = None
        print(f"\nc^2 undefined: {exc}")
    for f1, f2 in pairs:
        print(f"rho({f1}, {f2}) = {_g6(correlation(tables, f1, f2))}")
    print(f"\nmax relative route discrepancy: {discrepancy:.3g}")

    if args.out:
        out = Path(args.out)
        tables.write_csv(out, net)
        if c2 is not None:
            with open(out / "scv.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["queue", "nu", "sigma2", "scv"])
                for k in range(K):
                    w.writerow([k + 1, f"{net.nu[k]:.10g}", f"{tables.SigmaE[k, k]:.10g}",
                                f"{c2[k]:.10g}"])
        if pairs:
            with open(out / "rho.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["flow1", "flow2", "rho"])
                for f1, f2 in pairs:
                    w.writerow([str(f1), str(f2), f"{correlation(tables, f1, f2):.10g}"])
    if discrepancy >= ROUTE_TOL:
        print("analytic routes disagree", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_moments(args) -> int:
    net = _load_network(args.spec)
    if not args.out:
        raise InputError("--out is required for moments")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vm = visit_moments(net)
    vm.write_csv(out / "moments.csv")
    if args.flows:
        flows = _parse_flows(args.flows)
        _check_flows(flows, net.K)
        try:
            vm.write_cross_csv(out / "cross_moments.csv", flows, force=args.force)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    print(f"wrote moments for K={net.K} to {out}")
    return EXIT_OK


def _experiment(args):
    overrides = {"seed": args.seed, "replications": args.replications}
    if getattr(args, "force", False):
        overrides["force"] = True
    exp = load_experiment(args.experiment, spec_path=args.spec, **overrides)
    flows = _parse_flows(args.flows) if args.flows else list(exp.flows)
    if not flows:
        raise InputError("no flows to report; pass --flows or list them in the experiment")
    _check_flows(flows, exp.net.K)
    return exp, flows


def _run_mode(exp, mode: str):
    if mode == "zero-service":
        return run_zero_service_experiment(exp.net, exp.arrivals, exp.config, check_invariants=True)
    if not exp.services:
        raise InputError("experiment has no 'services'; the DES needs one per queue")
    return run_experiment(exp.net, exp.arrivals, exp.services, exp.config, check_invariants=True)


def _slopes(net, flows):
    tables = covariance_tables(net)
    return {f: tables.flow_var(f) for f in flows}


def _simulate_common(args, mode: str) -> int:
    if args.experiment is None:
        raise InputError("--experiment is required")
    exp, flows = _experiment(args)
    out = _run_mode(exp, mode)
    slopes = _slopes(exp.net, flows)
    bad = {k: v for k, v in out.violations.items() if v}
    t = out.grid[-1]
    print(f"{mode}: {out.n} replications, t = {_g6(t)}, backend {out.backend}")
    for f in flows:
        est = out.var_rate(f)
        print(f"  {f}: Var/t = {_g6(est.value)} (se {_g6(est.se)}), analytic {_g6(slopes[f])}")
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        stem = "zero_service" if mode == "zero-service" else "des"
        out.write_csv(dest / f"{stem}_variance.csv", flows, slopes)
        out.write_queue_csv(dest / f"{stem}_queues.csv")
    if bad:
        print(f"invariant violations: {bad}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _simulate_common(args, "des")


def cmd_oracle(args) -> int:
    return _simulate_common(args, "zero-service")


def _read_results(path: Path) -> dict[str, dict[float, tuple[float, float]]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    need = {"t", "flow", "var_estimate", "var_se"}
    if not rows or not need <= set(rows[0]):
        raise InputError(f"{path}: not a variance CSV (need columns {sorted(need)})")
    table: dict[str, dict[float, tuple[float, float]]] = {}
    for row in rows:
        table.setdefault(row["flow"], {})[float(row["t"])] = (
            float(row["var_estimate"]), float(row["var_se"]))
    return table


def cmd_compare(args) -> int:
    if args.experiment is None:
        raise InputError("--experiment is required")
    exp, flows = _experiment(args)
    grid = [float(t) for t in exp.config.grid]
    slopes = _slopes(exp.net, flows)

    sources = []
    if args.results:
        for path in args.results:
            table = _read_results(Path(path))
            for f in flows:
                if str(f) not in table:
                    raise InputError(f"{path}: flow {f} missing from results")
                if sorted(table[str(f)]) != grid:
                    raise InputError(f"{path}: grid of flow {f} does not match the experiment grid")
            curves = {f: np.array([table[str(f)][t] for t in grid]) for f in flows}
            sources.append((Path(path).stem, curves))
    else:
        out = _run_mode(exp, args.mode)
        curves = {f: np.column_stack([out.flow_var(f), out.flow_var_se(f)]) for f in flows}
        sources.append((args.mode, curves))

    tol = args.tolerance
    rows = []
    failed = False
    t_last = grid[-1]
    for name, curves in sources:
        for f in flows:
            var, se = curves[f][-1]
            rel = abs(var / t_last - slopes[f]) / slopes[f] if slopes[f] else abs(var / t_last)
            ok = rel <= tol
            failed |= not ok
            print(f"{name} {f}: Var/t = {_g6(var / t_last)} vs {_g6(slopes[f])} "
                  f"(rel {rel:.3g}) {'PASS' if ok else 'FAIL'}")
            for t, (v, s) in zip(grid, curves[f]):
                rows.append([name, f"{t:.10g}", str(f), f"{v:.10g}", f"{s:.10g}",
                             f"{slopes[f] * t:.10g}", f"{slopes[f] * t - v:.10g}",
                             ("PASS" if ok else "FAIL") if t == t_last else ""])
    if args.out:
        dest = Path(args.out)
        dest.mkdir(parents=True, exist_ok=True)
        with open(dest / "comparison.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "t", "flow", "var_estimate", "var_se",
                        "analytic_slope_times_t", "bias", "verdict"])
            w.writerows(rows)
    return EXIT_COMPARE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowvar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, experiment=False):
        p.add_argument("--spec", help="network spec JSON")
        p.add_argument("--out", help="output directory for CSV files")
        p.add_argument("--flows", help="comma-separated flows, e.g. 5->4,2->1")
        if experiment:
            p.add_argument("--experiment", help="experiment config JSON")
            p.add_argument("--seed", type=int)
            p.add_argument("--replications", type=int)
            p.add_argument("--force", action="store_true", help="simulate even if a load is >= 1")

    p = sub.add_parser("validate", help="check a network spec")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="covariance matrices by both analytic routes")
    common(p)
    p.add_argument("--rho", action="append", help="flow pair for a correlation, e.g. 1:3,2:4")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("moments", help="export tour moments")
    common(p)
    p.add_argument("--force", action="store_true", help="allow full cross-moment export for K > 8")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("oracle", help="zero-service Monte-Carlo replications")
    common(p, experiment=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="discrete-event replications")
    common(p, experiment=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="empirical variance curves against analytic slopes")
    common(p, experiment=True)
    p.add_argument("--results", action="append", help="variance CSV from simulate/oracle")
    p.add_argument("--mode", choices=["des", "zero-service"], default="des")
    p.add_argument("--tolerance", type=float, default=0.05)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", _backend.BACKEND)
    try:
        return args.func(args)
    except (InputError, NetworkError, ConfigError, DistributionError, UnstableRefused) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SimulationError, ArithmeticError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
