"""Zero-service-time Monte-Carlo oracle.

With instantaneous service every exogenous arrival completes its whole
routing tour at its arrival epoch, so flow counts are sums of i.i.d. tour
counts. The flow covariance rates of this construction coincide with those
of the queueing network, which makes it an independent check of both
analytic routes that involves no queueing dynamics at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng as rngmod
from ._backend import kernels as default_kernels
from .distributions import Distribution, encode_table
from .network import FlowId, ValidatedNetwork, all_flows
from .simulation import (
    SimConfig, SimOutput, Trajectory, _check_distributions, run_replications,
)
from .stats import IntegerCoMoments, OracleEstimate

TOUR_CHUNK = 1 << 15
DEFAULT_MAX_TOUR = 10**7


@dataclass(frozen=True)
class Tour:
    """Counts of one job's tour from ``start`` until it leaves (1-based queues).

    ``transitions[i-1, j]`` counts ``i -> j`` moves (column 0 = exits).
    """

    start: int
    transitions: np.ndarray

    @property
    def visits(self) -> np.ndarray:
        v = self.transitions[:, 1:].sum(axis=0)
        v[self.start - 1] += 1
        return v

    def count(self, f: FlowId) -> int:
        return int(self.transitions[f.i - 1, f.j])


def _route_cum(net: ValidatedNetwork) -> np.ndarray:
    return np.ascontiguousarray(np.cumsum(net.P, axis=1))


def sample_tour(net: ValidatedNetwork, k: int, rng: np.random.Generator,
                max_len: int = DEFAULT_MAX_TOUR, kernels=None) -> Tour:
    """Walk the absorbing chain from queue ``k`` until absorption outside."""
    kernels = kernels or default_kernels
    out = np.zeros((1, net.K, net.K + 1), dtype=np.int64)
    kernels.sample_tours(_route_cum(net), k - 1, 1, rng, max_len, out)
    return Tour(k, out[0])


@dataclass
class TourMomentTable:
    """Monte-Carlo estimates of tour-count moments, per start queue."""

    K: int
    n: int
    acc: dict[int, IntegerCoMoments]

    def mean(self, k: int, f: FlowId) -> OracleEstimate:
        means, ses = self.acc[k].mean()
        col = f.offset(self.K)
        return OracleEstimate(float(means[col]), float(ses[col]), self.n)

    def cov(self, k: int, f1: FlowId, f2: FlowId) -> OracleEstimate:
        return self.acc[k].covariance(f1.offset(self.K), f2.offset(self.K))

    def mean_matrix(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """``(K, K)`` means and standard errors of ``N_{i,j|k}``."""
        means, ses = self.acc[k].mean()
        return means.reshape(self.K, self.K), ses.reshape(self.K, self.K)


def tour_moment_estimates(net: ValidatedNetwork, n_tours: int, seed: int,
                          starts: Sequence[int] | None = None,
                          max_len: int = DEFAULT_MAX_TOUR, kernels=None) -> TourMomentTable:
    """Sample ``n_tours`` tours from each start and accumulate exact power sums."""
    kernels = kernels or default_kernels
    K = net.K
    cum = _route_cum(net)
    starts = list(starts) if starts is not None else list(range(1, K + 1))
    acc = {}
    for k in starts:
        moments = IntegerCoMoments(K * K)
        for c, lo in enumerate(range(0, n_tours, TOUR_CHUNK)):
            size = min(TOUR_CHUNK, n_tours - lo)
            out = np.zeros((size, K, K + 1), dtype=np.int64)
            kernels.sample_tours(cum, k - 1, size, rngmod.stream(seed, rngmod.TOURS, k, c),
                                 max_len, out)
            moments.add(out[:, :, 1:].reshape(size, K * K))
        acc[k] = moments
    return TourMomentTable(K=K, n=n_tours, acc=acc)


def zero_service_counts(net: ValidatedNetwork, arrivals: Sequence[Distribution | None],
                        grid: Sequence[float], arrival_rngs, routing_rngs,
                        max_len: int = DEFAULT_MAX_TOUR, kernels=None) -> Trajectory:
    """Instantaneous flow counts ``D(t)`` and arrivals ``A(t)`` at each grid time.

    ``arrival_rngs[k]`` drives the renewal stream into queue ``k + 1`` (ignored
    when it has no arrivals); ``routing_rngs[i]`` drives routing decisions at
    queue ``i + 1``.
    """
    kernels = kernels or default_kernels
    K = net.K
    grid = np.asarray(grid, dtype=float)
    G = len(grid)
    ak, ap = encode_table(list(arrivals))
    D = np.zeros((G, K, K + 1), dtype=np.int64)
    A = np.zeros((G, K), dtype=np.int64)
    kernels.zero_service(grid, ak, ap, _route_cum(net), list(arrival_rngs), list(routing_rngs),
                         max_len, D, A)
    # nothing waits: every routing decision has been made, so S_i = sum_j D_ij
    S = D.sum(axis=2)
    return Trajectory(grid, D, A, np.zeros_like(A), S, events=int(A[-1].sum()))


def run_zero_service_experiment(net: ValidatedNetwork, arrivals: Sequence[Distribution | None],
                                config: SimConfig, check_invariants: bool = False,
                                kernels=None, workers: int | None = None) -> SimOutput:
    """Replicated zero-service counts with the same output schema as the DES."""
    _check_distributions(net, arrivals, None)
    kernels = kernels or default_kernels
    K = net.K

    def run_one(rep: int) -> Trajectory:
        arr, _, rout = rngmod.replication_streams(config.seed, rep, K)
        return zero_service_counts(net, arrivals, config.grid, arr, rout,
                                   config.max_tour_len, kernels)

    return run_replications("zero-service", net, config, run_one, check=check_invariants,
                            workers=workers, backend=kernels.NAME)


def oracle_flow_covariances(out: SimOutput, flows: Sequence[FlowId] | None = None) -> dict:
    """Covariance-rate estimates for every pair among ``flows`` (default: all)."""
    flows = list(flows) if flows is not None else all_flows(out.K)
    return {(f1, f2): out.cov_rate(f1, f2) for a, f1 in enumerate(flows) for f2 in flows[a:]}
