"""Discrete-event simulation of the queueing network and replication harness.

Replications are independent: each draws from its own random substreams
(:mod:`flowvar.rng`) and runs one kernel call. Replications are grouped in
fixed-size chunks, chunks may run on worker threads, and chunk statistics
are merged in chunk order, so output never depends on the thread count.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from ._backend import kernels as default_kernels
from .distributions import Distribution, encode_table, rate_of, renewal_variance_rate
from .errors import UnstableRefused
from .network import FlowId, ValidatedNetwork, stability_report
from .stats import Moments, OracleEstimate, covariance_estimate

log = logging.getLogger(__name__)

CHUNK = 64
REL_TOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    """Run control. Every replication starts empty at t = 0."""

    grid: tuple[float, ...]
    replications: int
    seed: int
    horizon: float | None = None
    max_events: int = 10**9
    max_tour_len: int = 10**7
    force: bool = False

    def __post_init__(self):
        grid = tuple(float(t) for t in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            raise ConfigError("grid must contain at least one time point")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("grid must be strictly increasing")
        if grid[0] <= 0:
            raise ConfigError("grid points must be > 0")
        horizon = grid[-1] if self.horizon is None else float(self.horizon)
        if grid[-1] > horizon:
            raise ConfigError(f"grid extends to {grid[-1]} beyond horizon {horizon}")
        object.__setattr__(self, "horizon", horizon)
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")


def uniform_grid(step: float, stop: float, start: float | None = None) -> tuple[float, ...]:
    start = step if start is None else start
    n = int(round((stop - start) / step)) + 1
    return tuple(start + i * step for i in range(n))


@dataclass(frozen=True)
class Trajectory:
    """Counters of one replication at each grid time (0-based queue axes).

    ``D[g, i, 0]`` counts departures from ``i`` to the outside and
    ``D[g, i, j + 1]`` transitions ``i -> j``.
    """

    grid: np.ndarray
    D: np.ndarray
    A: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    busy: np.ndarray | None = None
    work: np.ndarray | None = None
    elapsed: np.ndarray | None = None
    serving: np.ndarray | None = None
    events: int = 0

    @property
    def E(self) -> np.ndarray:
        """Total arrivals to each queue: exogenous plus internal transitions."""
        return self.A + self.D[:, :, 1:].sum(axis=1)

    def flow(self, f: FlowId) -> np.ndarray:
        return self.D[:, f.i - 1, f.j]


def check_invariants(traj: Trajectory, servers=None) -> dict[str, int]:
    """Count violations of the integer bookkeeping identities at every grid point."""
    D = traj.D
    out = {
        # Q_k = A_k + sum_i D_ik - sum_{j=0..K} D_kj
        "flow_conservation": int(np.count_nonzero(traj.Q != traj.E - D.sum(axis=2))),
        # sum_{j=0..K} Phi_ij(l) = l with l the number of services completed at i
        "routing": int(np.count_nonzero(D.sum(axis=2) != traj.S)),
        "monotone": int(np.count_nonzero(np.diff(D, axis=0) < 0)),
        "negative_queue": int(np.count_nonzero(traj.Q < 0)),
    }
    if traj.busy is not None:
        tol = REL_TOL * np.maximum(1.0, traj.grid)[:, None]
        out["work_conservation"] = int(
            np.count_nonzero(np.abs(traj.busy - traj.work - traj.elapsed) > tol)
            + np.count_nonzero(traj.busy > traj.grid[:, None] + tol)
        )
        if servers is not None:
            idle_with_work = 0
            for s, group in enumerate(servers):
                q_total = traj.Q[:, [q - 1 for q in group.queues]].sum(axis=1)
                idle_with_work += int(np.count_nonzero((traj.serving[:, s] < 0) & (q_total > 0)))
            out["non_idling"] = idle_with_work
    return out


@dataclass
class SimOutput:
    """Aggregated statistics of a replication experiment.

    Variables per grid point are laid out as the flattened ``K x (K+1)`` flow
    counts, then ``E`` (K), then ``Q`` (K).
    """

    mode: str
    K: int
    grid: np.ndarray
    moments: Moments
    final: np.ndarray
    events: int = 0
    violations: dict[str, int] = field(default_factory=dict)
    backend: str = ""

    @property
    def n(self) -> int:
        return self.moments.n

    def _flow_col(self, f: FlowId) -> int:
        return (f.i - 1) * (self.K + 1) + f.j

    def _col(self, block: str, k: int) -> int:
        base = self.K * (self.K + 1) + (0 if block == "E" else self.K)
        return base + k - 1

    def flow_mean(self, f: FlowId) -> np.ndarray:
        return self.moments.mean[:, self._flow_col(f)]

    def flow_var(self, f: FlowId) -> np.ndarray:
        return self.moments.var[:, self._flow_col(f)]

    def flow_var_se(self, f: FlowId) -> np.ndarray:
        return self.moments.var_se[:, self._flow_col(f)]

    def queue_mean(self, k: int) -> np.ndarray:
        return self.moments.mean[:, self._col("Q", k)]

    def queue_second_moment(self, k: int) -> np.ndarray:
        c = self._col("Q", k)
        m = self.moments
        return m.M2[:, c] / m.n + m.mean[:, c] ** 2

    def arrival_mean(self, k: int) -> np.ndarray:
        return self.moments.mean[:, self._col("E", k)]

    def arrival_var(self, k: int) -> np.ndarray:
        return self.moments.var[:, self._col("E", k)]

    def var_rate(self, f: FlowId) -> OracleEstimate:
        """``Var(D_f(t)) / t`` at the last grid point."""
        t = self.grid[-1]
        g = len(self.grid) - 1
        return OracleEstimate(float(self.flow_var(f)[g] / t), float(self.flow_var_se(f)[g] / t), self.n)

    def cov_rate(self, f1: FlowId, f2: FlowId) -> OracleEstimate:
        """``Cov(D_f1(t), D_f2(t)) / t`` at the last grid point."""
        t = self.grid[-1]
        est = covariance_estimate(self.final[:, self._flow_col(f1)], self.final[:, self._flow_col(f2)])
        return OracleEstimate(est.value / t, est.se / t, est.n)

    def bias(self, f: FlowId, sigma2: float) -> np.ndarray:
        return sigma2 * self.grid - self.flow_var(f)

    def variance_rows(self, flows: Sequence[FlowId], slopes: dict | None = None, digits: int = 10):
        fmt = lambda x: f"{x:.{digits}g}"  # noqa: E731
        slopes = slopes or {}
        rows = []
        for g, t in enumerate(self.grid):
            for f in flows:
                var = self.flow_var(f)[g]
                se = self.flow_var_se(f)[g]
                slope = slopes.get(f)
                analytic = "" if slope is None else fmt(slope * t)
                bias = "" if slope is None else fmt(slope * t - var)
                rows.append([self.mode, fmt(t), str(f), fmt(var), fmt(se), analytic, bias])
        return rows

    def write_csv(self, path, flows: Sequence[FlowId], slopes: dict | None = None,
                  digits: int = 10) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "t", "flow", "var_estimate", "var_se", "analytic_slope_times_t", "bias"])
            w.writerows(self.variance_rows(flows, slopes, digits))
        return path

    def write_queue_csv(self, path, digits: int = 10) -> Path:
        """Per-queue diagnostics; ``EQ2_over_t`` tracks the queue-moment growth condition."""
        path = Path(path)
        fmt = lambda x: f"{x:.{digits}g}"  # noqa: E731
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "t", "queue", "mean_Q", "mean_E", "var_E", "EQ2_over_t"])
            for g, t in enumerate(self.grid):
                for k in range(1, self.K + 1):
                    w.writerow([self.mode, fmt(t), k, fmt(self.queue_mean(k)[g]),
                                fmt(self.arrival_mean(k)[g]), fmt(self.arrival_var(k)[g]),
                                fmt(self.queue_second_moment(k)[g] / t)])
        return path


def _flatten(traj: Trajectory) -> np.ndarray:
    G = traj.D.shape[0]
    return np.concatenate([traj.D.reshape(G, -1), traj.E, traj.Q], axis=1)


def _check_distributions(net: ValidatedNetwork, arrivals, services):
    K = net.K
    if len(arrivals) != K:
        raise ConfigError(f"need {K} arrival entries (null for none), got {len(arrivals)}")
    for k, (dist, a, v2) in enumerate(zip(arrivals, net.alpha, net.v2), start=1):
        if a == 0:
            if dist is not None:
                raise ConfigError(f"queue {k} has alpha = 0 but an arrival distribution")
            continue
        if dist is None:
            raise ConfigError(f"queue {k} has alpha = {a} but no arrival distribution")
        if not np.isclose(rate_of(dist), a, rtol=REL_TOL, atol=0):
            raise ConfigError(f"arrivals[{k}] has rate {rate_of(dist):.10g}, network alpha is {a:.10g}")
        if not np.isclose(renewal_variance_rate(dist), v2, rtol=REL_TOL, atol=1e-12):
            raise ConfigError(
                f"arrivals[{k}] has variance rate {renewal_variance_rate(dist):.10g}, "
                f"network v2 is {v2:.10g}"
            )
    if services is not None:
        if len(services) != K:
            raise ConfigError(f"need {K} service distributions, got {len(services)}")
        for k, (dist, mu) in enumerate(zip(services, net.mu), start=1):
            if dist is None:
                raise ConfigError(f"queue {k} has no service distribution")
            if not np.isclose(rate_of(dist), mu, rtol=REL_TOL, atol=0):
                raise ConfigError(f"services[{k}] has rate {rate_of(dist):.10g}, network mu is {mu:.10g}")


@dataclass(frozen=True)
class _Prepared:
    grid: np.ndarray
    arr_kind: np.ndarray
    arr_params: np.ndarray
    svc_kind: np.ndarray
    svc_params: np.ndarray
    route_cum: np.ndarray
    server_of: np.ndarray
    priority: np.ndarray


def _prepare(net: ValidatedNetwork, arrivals, services, config: SimConfig) -> _Prepared:
    K = net.K
    ak, ap = encode_table(list(arrivals))
    sk, sp = encode_table(list(services) if services is not None else [None] * K)
    width = max(len(g.queues) for g in net.servers)
    prio = np.full((len(net.servers), width), -1, dtype=np.int64)
    for s, group in enumerate(net.servers):
        prio[s, :len(group.priority)] = [q - 1 for q in group.priority]
    return _Prepared(
        grid=np.asarray(config.grid, dtype=float),
        arr_kind=ak, arr_params=ap, svc_kind=sk, svc_params=sp,
        route_cum=np.ascontiguousarray(np.cumsum(net.P, axis=1)),
        server_of=np.ascontiguousarray(net.server_of, dtype=np.int64),
        priority=prio,
    )


def check_runnable(net: ValidatedNetwork, force: bool = False) -> None:
    """Preconditions for simulating ``net``: stable loads and no dead queues."""
    report = stability_report(net)
    if not report.all_stable and not force:
        raise UnstableRefused(report.describe().replace("\n", "; "))
    dead = [k + 1 for k in range(net.K) if net.nu[k] <= 0]
    if dead:
        raise ConfigError(f"queues {dead} receive no exogenous or upstream input")


def _des_run(prep: _Prepared, net: ValidatedNetwork, config: SimConfig, rep: int,
             kernels) -> Trajectory:
    K = net.K
    G = len(prep.grid)
    nserv = prep.priority.shape[0]
    arr, svc, rout = rngmod.replication_streams(config.seed, rep, K)
    D = np.zeros((G, K, K + 1), dtype=np.int64)
    A = np.zeros((G, K), dtype=np.int64)
    Q = np.zeros((G, K), dtype=np.int64)
    S = np.zeros((G, K), dtype=np.int64)
    busy = np.zeros((G, nserv))
    work = np.zeros((G, nserv))
    elapsed = np.zeros((G, nserv))
    serving = np.zeros((G, nserv), dtype=np.int64)
    events = kernels.des_replication(
        prep.grid, prep.arr_kind, prep.arr_params, prep.svc_kind, prep.svc_params,
        prep.route_cum, prep.server_of, prep.priority, arr, svc, rout, config.max_events,
        D, A, Q, S, busy, work, elapsed, serving,
    )
    return Trajectory(prep.grid, D, A, Q, S, busy, work, elapsed, serving, int(events))


def run_replication(net: ValidatedNetwork, arrivals: Sequence[Distribution | None],
                    services: Sequence[Distribution], config: SimConfig, rep: int = 0,
                    kernels=None) -> Trajectory:
    """Simulate replication ``rep`` of the network from empty up to the last grid point."""
    _check_distributions(net, arrivals, services)
    check_runnable(net, config.force)
    prep = _prepare(net, arrivals, services, config)
    return _des_run(prep, net, config, rep, kernels or default_kernels)


@dataclass
class _ChunkResult:
    moments: Moments
    final: np.ndarray
    events: int
    violations: dict[str, int]


def _run_chunk(run_one: Callable[[int], Trajectory], reps: range, servers, check: bool) -> _ChunkResult:
    rows = []
    events = 0
    violations: dict[str, int] = {}
    for rep in reps:
        traj = run_one(rep)
        rows.append(_flatten(traj))
        events += traj.events
        if check:
            for key, count in check_invariants(traj, servers).items():
                violations[key] = violations.get(key, 0) + count
    X = np.stack(rows)
    return _ChunkResult(Moments.from_samples(X), X[:, -1, :].copy(), events, violations)


def run_replications(mode: str, net: ValidatedNetwork, config: SimConfig,
                     run_one: Callable[[int], Trajectory], check: bool = False,
                     servers=None, workers: int | None = None, backend: str = "") -> SimOutput:
    """Run ``config.replications`` replications in fixed chunks and merge in order."""
    n = config.replications
    chunks = [range(lo, min(n, lo + CHUNK)) for lo in range(0, n, CHUNK)]
    workers = workers or rngmod.worker_count()
    task = lambda reps: _run_chunk(run_one, reps, servers, check)  # noqa: E731
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, chunks))
    else:
        results = [task(c) for c in chunks]
    G = len(config.grid)
    V = net.K * (net.K + 1) + 2 * net.K
    total = Moments((G, V))
    violations: dict[str, int] = {}
    for res in results:
        total.merge(res.moments)
        for key, count in res.violations.items():
            violations[key] = violations.get(key, 0) + count
    return SimOutput(
        mode=mode, K=net.K, grid=np.asarray(config.grid, dtype=float), moments=total,
        final=np.concatenate([r.final for r in results]),
        events=sum(r.events for r in results), violations=violations, backend=backend,
    )


def run_experiment(net: ValidatedNetwork, arrivals: Sequence[Distribution | None],
                   services: Sequence[Distribution], config: SimConfig,
                   check_invariants: bool = False, kernels=None,
                   workers: int | None = None) -> SimOutput:
    """Independent DES replications; per-grid-point sample moments of every counter."""
    _check_distributions(net, arrivals, services)
    check_runnable(net, config.force)
    kernels = kernels or default_kernels
    prep = _prepare(net, arrivals, services, config)
    out = run_replications(
        "des", net, config, lambda rep: _des_run(prep, net, config, rep, kernels),
        check=check_invariants, servers=net.servers, workers=workers, backend=kernels.NAME,
    )
    q2 = np.array([out.queue_second_moment(k)[-1] / out.grid[-1] for k in range(1, net.K + 1)])
    log.info("E[Q_k(t)^2]/t at t=%g: %s", out.grid[-1], np.array2string(q2, precision=4))
    return out
