"""Transition-count moments of a job's tour and the closed-form covariances built on them.

A job entering at queue ``k`` walks the substochastic chain ``P`` until it
leaves. ``m_k(i, j)`` is its expected number of ``i -> j`` transitions.
Everything here is computed from first-step equations with linear solves
against the LU of ``I - P`` cached on the network.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .network import FlowId, ValidatedNetwork, all_flows

MAX_FULL_CROSS_K = 8


def visit_mean(net: ValidatedNetwork, f: FlowId) -> np.ndarray:
    """Solve ``(I-P) m = e_{i,i} P_{.,j}``; entry k is ``E[N_{i,j|k}]``."""
    rhs = np.zeros(net.K)
    rhs[f.i - 1] = net.P[f.i - 1, f.j - 1]
    return net.solve(rhs)


@dataclass(frozen=True)
class VisitMoments:
    """First moments of tour counts for every flow and start node.

    ``m[i, j, k]`` (0-based) is ``E[N_{i+1,j+1|k+1}]``; ``njk[k, j]`` is the
    expected number of visits to ``j`` from start ``k``, counting the start.
    """

    net: ValidatedNetwork
    m: np.ndarray
    njk: np.ndarray

    @classmethod
    def compute(cls, net: ValidatedNetwork) -> "VisitMoments":
        N = net.fundamental
        # m_k(i,j) = E[N_{i|k}] p_ij
        m = np.einsum("ki,ij->ijk", N, net.P)
        m.setflags(write=False)
        return cls(net=net, m=m, njk=N)

    def vec(self, f: FlowId) -> np.ndarray:
        return self.m[f.i - 1, f.j - 1]

    def outside(self, i: int) -> np.ndarray:
        """``m(i, 0)``: expected departures from ``i`` to the outside, per start."""
        p_out = 1.0 - self.net.P[i - 1].sum()
        return self.njk[:, i - 1] * p_out

    @cached_property
    def flow_matrix(self) -> np.ndarray:
        """K^2 x K matrix whose row ``(i-1)K + (j-1)`` is ``m(i,j)``."""
        K = self.net.K
        return self.m.reshape(K * K, K)

    def cross_moment(self, f1: FlowId, f2: FlowId) -> tuple[np.ndarray, np.ndarray]:
        """``(E[N_f1 N_f2 | k], Cov(N_f1, N_f2 | k))`` as K-vectors over starts ``k``."""
        m1, m2 = self.vec(f1), self.vec(f2)
        if f1 == f2:
            second = m1 * (1 + 2 * m1[f1.j - 1])
        else:
            second = m1 * m2[f1.j - 1] + m2 * m1[f2.j - 1]
        return second, second - m1 * m2

    def sigma_flow(self, f1: FlowId, f2: FlowId) -> float:
        net = self.net
        alpha, v2 = net.alpha, net.v2
        m1, m2 = self.vec(f1), self.vec(f2)
        if f1 == f2:
            return float((1 + 2 * m1[f1.j - 1]) * (alpha @ m1) + (v2 - alpha) @ (m1 * m1))
        return float(
            m2[f1.j - 1] * (alpha @ m1)
            + m1[f2.j - 1] * (alpha @ m2)
            + (v2 - alpha) @ (m1 * m2)
        )

    def sigma_arrival(self, j1: int, j2: int) -> float:
        net = self.net
        K = net.K
        v2 = net.v2
        # sum_i m_{j1}(i, j2): expected transitions into j2 for a job starting at j1
        into_j2 = self.m[:, j2 - 1, j1 - 1].sum()
        into_j1 = self.m[:, j1 - 1, j2 - 1].sum()
        total = v2[j1 - 1] * into_j2 + v2[j2 - 1] * into_j1
        # exogenous stream covariance Cov(A_j1, A_j2)/t
        if j1 == j2:
            total += v2[j1 - 1]
        for i1 in range(1, K + 1):
            for i2 in range(1, K + 1):
                total += self.sigma_flow(FlowId(i1, j1), FlowId(i2, j2))
        return float(total)

    def sigma_D_matrix(self) -> np.ndarray:
        """All flow covariances at once (vectorised form of :meth:`sigma_flow`)."""
        net = self.net
        K = net.K
        M = self.flow_matrix
        rate = M @ net.alpha                    # alpha' m(f)
        j_of = np.tile(np.arange(K), K)         # destination of each flow row
        cross = M[:, j_of].T * rate[:, None]    # [f1, f2] -> m_{j1}(f2) alpha' m(f1)
        S = cross + cross.T + (M * (net.v2 - net.alpha)) @ M.T
        S[np.diag_indices_from(S)] += rate      # equal-flow branch adds alpha' m(f)
        return S

    def sigma_E_matrix(self, SigmaD: np.ndarray | None = None) -> np.ndarray:
        net = self.net
        K = net.K
        if SigmaD is None:
            SigmaD = self.sigma_D_matrix()
        agg = SigmaD.reshape(K, K, K, K).sum(axis=(0, 2))
        # into[j1, j2] = sum_i m_{j1}(i, j2)
        into = self.m.sum(axis=0).T
        v2 = net.v2
        return agg + v2[:, None] * into + (v2[:, None] * into).T + np.diag(v2)

    def write_csv(self, path: str | Path, digits: int = 10) -> Path:
        """Rows ``(k, i, j, m_k(i,j))``; ``j = 0`` rows are departures to the outside."""
        path = Path(path)
        K = self.net.K
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "i", "j", "m"])
            for k in range(1, K + 1):
                for i in range(1, K + 1):
                    for j in range(0, K + 1):
                        val = self.outside(i)[k - 1] if j == 0 else self.m[i - 1, j - 1, k - 1]
                        w.writerow([k, i, j, f"{val:.{digits}g}"])
        return path

    def write_cross_csv(
        self,
        path: str | Path,
        flows: list[FlowId] | None = None,
        force: bool = False,
        digits: int = 10,
    ) -> Path:
        """Cross moments for every pair among ``flows`` (all K^2 flows if None)."""
        K = self.net.K
        if flows is None:
            if K > MAX_FULL_CROSS_K and not force:
                raise ValueError(
                    f"full cross-moment export is K^4 = {K ** 4} rows per start; "
                    f"refused for K > {MAX_FULL_CROSS_K} without force"
                )
            flows = all_flows(K)
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "flow1", "flow2", "m2", "c"])
            for a, f1 in enumerate(flows):
                for f2 in flows[a:]:
                    second, cov = self.cross_moment(f1, f2)
                    for k in range(K):
                        w.writerow([k + 1, str(f1), str(f2),
                                    f"{second[k]:.{digits}g}", f"{cov[k]:.{digits}g}"])
        return path


def visit_moments(net: ValidatedNetwork) -> VisitMoments:
    cached = net.__dict__.get("_visit_moments")
    if cached is None:
        cached = VisitMoments.compute(net)
        net.__dict__["_visit_moments"] = cached
    return cached


def cross_moment(net: ValidatedNetwork, f1: FlowId, f2: FlowId) -> tuple[np.ndarray, np.ndarray]:
    return visit_moments(net).cross_moment(f1, f2)


def sigma_flow_mom(net: ValidatedNetwork, f1: FlowId, f2: FlowId) -> float:
    """Asymptotic covariance of flows ``f1`` and ``f2`` from tour moments."""
    return visit_moments(net).sigma_flow(f1, f2)


def sigma_arrival_mom(net: ValidatedNetwork, j1: int, j2: int) -> float:
    """Asymptotic covariance of the total arrival streams into ``j1`` and ``j2``."""
    return visit_moments(net).sigma_arrival(j1, j2)


def route_discrepancy(net: ValidatedNetwork, SigmaD: np.ndarray, SigmaE: np.ndarray) -> float:
    """Largest relative difference between the matrix route and the moment route.

    Relative to the largest entry magnitude (floor 1), entry by entry, using
    the scalar moment formulas.
    """
    vm = visit_moments(net)
    K = net.K
    scale = max(1.0, float(np.abs(SigmaD).max()), float(np.abs(SigmaE).max()))
    worst = 0.0
    flows = all_flows(K)
    for a, f1 in enumerate(flows):
        for f2 in flows[a:]:
            d = abs(vm.sigma_flow(f1, f2) - SigmaD[f1.offset(K), f2.offset(K)])
            worst = max(worst, d)
    for j1 in range(1, K + 1):
        for j2 in range(j1, K + 1):
            worst = max(worst, abs(vm.sigma_arrival(j1, j2) - SigmaE[j1 - 1, j2 - 1]))
    return worst / scale
