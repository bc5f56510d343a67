"""Covariance matrices of the flow and arrival diffusion limits (matrix route).

The flow vector stacks the K^2 inter-queue flows ``D_{i,j}`` lexicographically
(``i`` major); flows to the outside are omitted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network import FlowId, ValidatedNetwork, all_flows

SYMMETRY_TOL = 1e-9
# products are accumulated in extended precision and rounded once, so entries
# that are equal in exact arithmetic come out bit-equal
WORK_DTYPE = np.longdouble
REFINE_STEPS = 2


class UndefinedForZeroRate(ValueError):
    def __init__(self, k: int):
        self.k = k
        super().__init__(f"SCV undefined: queue {k} has zero throughput")


class UndefinedForZeroVarianceFlow(ValueError):
    def __init__(self, flow: FlowId):
        self.flow = flow
        super().__init__(f"correlation undefined: flow {flow} has zero asymptotic variance")


@dataclass(frozen=True)
class StructuralMatrices:
    B: np.ndarray       # K x K^2
    Pc: np.ndarray      # K^2 x K
    H: np.ndarray       # K^2 x (K + K^2)
    SigmaP: np.ndarray  # (K + K^2) x (K + K^2)


def routing_covariance(p_row: np.ndarray) -> np.ndarray:
    """Multinomial covariance of one routing decision: ``p_i (delta_ij - p_j)``."""
    return np.diag(p_row) - np.outer(p_row, p_row)


def _refined_solve_t(net: ValidatedNetwork, b: np.ndarray, dtype) -> np.ndarray:
    """``(I-P')^{-1} b`` in ``dtype``: LU solve plus iterative refinement."""
    A = np.eye(net.K, dtype=dtype) - net.P.T.astype(dtype)
    b = np.asarray(b, dtype=dtype)
    x = net.solve(b.astype(float), transpose=True).astype(dtype)
    if dtype is not np.float64:
        for _ in range(REFINE_STEPS):
            r = b - A @ x
            x = x + net.solve(r.astype(float), transpose=True).astype(dtype)
    return x


def build_structural(net: ValidatedNetwork, dtype=np.float64) -> StructuralMatrices:
    K = net.K
    P = net.P.astype(dtype)
    eye = np.eye(K, dtype=dtype)
    nu = _refined_solve_t(net, net.alpha, dtype)
    B = np.kron(np.ones((1, K), dtype=dtype), eye)
    # block k is P' e_{k,k}: only column k of P' (row k of P) survives
    Pc = np.zeros((K * K, K), dtype=dtype)
    for k in range(K):
        Pc[k * K:(k + 1) * K, k] = P[k, :]
    inv_t = _refined_solve_t(net, eye, dtype)  # (I-P')^{-1}, K linear solves
    Pc_inv = Pc @ inv_t
    H = np.hstack([Pc_inv, np.eye(K * K, dtype=dtype) + Pc_inv @ B])
    SigmaP = np.zeros((K + K * K, K + K * K), dtype=dtype)
    SigmaP[:K, :K] = np.diag(net.v2.astype(dtype))
    for k in range(K):
        lo = K + k * K
        SigmaP[lo:lo + K, lo:lo + K] = nu[k] * routing_covariance(P[k])
    return StructuralMatrices(B=B, Pc=Pc, H=H, SigmaP=SigmaP)


def _symmetrize(M: np.ndarray, what: str) -> np.ndarray:
    scale = max(1.0, float(np.abs(M).max()))
    skew = float(np.abs(M - M.T).max())
    if skew > SYMMETRY_TOL * scale:
        raise ArithmeticError(f"{what} asymmetric beyond tolerance ({skew:.3g})")
    return ((M + M.T) / 2).astype(np.float64)


def _congruence(G: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``G S G'`` for the block-diagonal ``Sigma^(P)``, one diagonal block at a time."""
    K = int(round(np.sqrt(S.shape[0] + 0.25) - 0.5))
    out = (G[:, :K] * np.diag(S[:K, :K])) @ G[:, :K].T
    for k in range(K):
        lo = K + k * K
        Gk = G[:, lo:lo + K]
        out += Gk @ S[lo:lo + K, lo:lo + K] @ Gk.T
    return out


def sigma_D(net: ValidatedNetwork, structural: StructuralMatrices | None = None) -> np.ndarray:
    """K^2 x K^2 covariance matrix ``H Sigma^(P) H'`` of the flow diffusion limit."""
    s = structural or build_structural(net, WORK_DTYPE)
    return _symmetrize(_congruence(s.H, s.SigmaP), "Sigma_D")


def sigma_E(net: ValidatedNetwork, structural: StructuralMatrices | None = None) -> np.ndarray:
    """K x K covariance matrix of the per-queue total arrival processes."""
    s = structural or build_structural(net, WORK_DTYPE)
    K = net.K
    G = s.B @ s.H
    G[:, :K] += np.eye(K, dtype=G.dtype)
    return _symmetrize(_congruence(G, s.SigmaP), "Sigma_E")


def scv(net: ValidatedNetwork, SigmaE: np.ndarray | None = None) -> np.ndarray:
    """Squared coefficient of variation of each queue's total arrival stream."""
    if SigmaE is None:
        SigmaE = sigma_E(net)
    nu = net.nu
    for k in range(net.K):
        if nu[k] == 0:
            raise UndefinedForZeroRate(k + 1)
    return np.diag(SigmaE) / nu


@dataclass(frozen=True)
class CovarianceTables:
    SigmaD: np.ndarray
    SigmaE: np.ndarray

    @property
    def K(self) -> int:
        return self.SigmaE.shape[0]

    def flow_cov(self, f1: FlowId, f2: FlowId) -> float:
        K = self.K
        return float(self.SigmaD[f1.offset(K), f2.offset(K)])

    def flow_var(self, f: FlowId) -> float:
        return self.flow_cov(f, f)

    def arrival_cov(self, j1: int, j2: int) -> float:
        return float(self.SigmaE[j1 - 1, j2 - 1])

    def write_csv(self, out_dir: str | Path, net: ValidatedNetwork, digits: int = 10) -> list[Path]:
        """Write ``sigma_D.csv``, ``sigma_E.csv`` and ``flows.csv`` into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        K = self.K
        fmt = lambda x: f"{x:.{digits}g}"  # noqa: E731
        labels = [f"D{f}" for f in all_flows(K)]
        paths = [out_dir / "sigma_D.csv", out_dir / "sigma_E.csv", out_dir / "flows.csv"]
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([""] + labels)
            for label, row in zip(labels, self.SigmaD):
                w.writerow([label] + [fmt(x) for x in row])
        e_labels = [f"E{k}" for k in range(1, K + 1)]
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([""] + e_labels)
            for label, row in zip(e_labels, self.SigmaE):
                w.writerow([label] + [fmt(x) for x in row])
        with open(paths[2], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "nu_ij", "sigma2", "sigma2_over_nu_ij"])
            for f in all_flows(K):
                rate = float(net.nu[f.i - 1] * net.P[f.i - 1, f.j - 1])
                var = self.flow_var(f)
                ratio = fmt(var / rate) if rate > 0 else ""
                w.writerow([f.i, f.j, fmt(rate), fmt(var), ratio])
        return paths


def covariance_tables(net: ValidatedNetwork) -> CovarianceTables:
    s = build_structural(net)
    return CovarianceTables(SigmaD=sigma_D(net, s), SigmaE=sigma_E(net, s))


def correlation(tables: CovarianceTables, f1: FlowId, f2: FlowId) -> float:
    """Asymptotic correlation coefficient of two flows."""
    v1, v2 = tables.flow_var(f1), tables.flow_var(f2)
    for f, v in ((f1, v1), (f2, v2)):
        if v <= 0:
            raise UndefinedForZeroVarianceFlow(f)
    rho = tables.flow_cov(f1, f2) / np.sqrt(v1 * v2)
    return float(np.clip(rho, -1.0, 1.0))
