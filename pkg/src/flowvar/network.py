"""Network specification, validation, throughput and load diagnostics.

All queue indices are 1-based at the API boundary (``FlowId``, JSON files,
server groups) and 0-based in the stored numpy arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve

ROW_SUM_TOL = 1e-12
SPECTRAL_TOL = 1e-12


class NetworkError(ValueError):
    """Base class for invalid network specifications."""


class RowSumExceedsOne(NetworkError):
    def __init__(self, row: int, total: float):
        self.row = row
        super().__init__(f"P row {row} sums to {total:.12g} > 1")


class SpectralRadiusGEOne(NetworkError):
    def __init__(self, detail: str = ""):
        msg = "routing matrix P has spectral radius >= 1 (network is not open)"
        super().__init__(msg + (f": {detail}" if detail else ""))


class NegativeEntry(NetworkError):
    def __init__(self, field_name: str, index: Any, value: float, need: str = ">= 0"):
        self.field = field_name
        self.index = index
        super().__init__(f"{field_name}{index} = {value!r}, must be {need}")


class DimensionMismatch(NetworkError):
    pass


class SpecFileError(NetworkError):
    """Malformed network spec file; message carries line or field location."""


@dataclass(frozen=True, order=True)
class FlowId:
    """Ordered queue pair ``i -> j`` (1-based)."""

    i: int
    j: int

    def index(self, K: int) -> int:
        """1-based position in the lexicographic flow vector."""
        return (self.i - 1) * K + self.j

    def offset(self, K: int) -> int:
        return (self.i - 1) * K + (self.j - 1)

    @classmethod
    def from_index(cls, idx: int, K: int) -> "FlowId":
        i, j = divmod(idx - 1, K)
        return cls(i + 1, j + 1)

    @classmethod
    def parse(cls, text: str) -> "FlowId":
        """Parse ``"i->j"`` or ``"i:j"``."""
        for sep in ("->", ":"):
            if sep in text:
                a, b = text.split(sep, 1)
                try:
                    return cls(int(a), int(b))
                except ValueError:
                    break
        raise ValueError(f"cannot parse flow {text!r}; expected 'i->j'")

    def __str__(self) -> str:
        return f"{self.i}->{self.j}"


def all_flows(K: int) -> list[FlowId]:
    return [FlowId(i, j) for i in range(1, K + 1) for j in range(1, K + 1)]


@dataclass(frozen=True)
class ServerGroup:
    """Queues sharing one server; ``priority`` lists them highest first."""

    queues: tuple[int, ...]
    priority: tuple[int, ...]


@dataclass
class NetworkSpec:
    K: int
    P: Any
    alpha: Any
    v2: Any
    mu: Any
    servers: Sequence[ServerGroup] | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkSpec":
        if not isinstance(doc, dict):
            raise SpecFileError("top level of a network spec must be a JSON object")
        for key in ("K", "P", "alpha", "v2", "mu"):
            if key not in doc:
                raise SpecFileError(f"missing field {key!r}")
        K = doc["K"]
        if not isinstance(K, int) or isinstance(K, bool) or K < 1:
            raise SpecFileError(f"field 'K': expected a positive integer, got {K!r}")
        P = _numeric_matrix(doc["P"], "P")
        vecs = {key: _numeric_vector(doc[key], key) for key in ("alpha", "v2", "mu")}
        servers = None
        if doc.get("servers") is not None:
            servers = _parse_servers(doc["servers"])
        return cls(K=K, P=P, servers=servers, **vecs)

    def to_dict(self) -> dict:
        doc = {
            "K": int(self.K),
            "P": np.asarray(self.P, dtype=float).tolist(),
            "alpha": np.asarray(self.alpha, dtype=float).tolist(),
            "v2": np.asarray(self.v2, dtype=float).tolist(),
            "mu": np.asarray(self.mu, dtype=float).tolist(),
        }
        if self.servers is not None:
            doc["servers"] = [
                {"queues": list(g.queues), "priority": list(g.priority)} for g in self.servers
            ]
        return doc


def _numeric_vector(value, name: str) -> list[float]:
    if not isinstance(value, list):
        raise SpecFileError(f"field {name!r}: expected an array of numbers")
    out = []
    for idx, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise SpecFileError(f"field {name}[{idx + 1}]: expected a number, got {x!r}")
        out.append(float(x))
    return out


def _numeric_matrix(value, name: str) -> list[list[float]]:
    if not isinstance(value, list):
        raise SpecFileError(f"field {name!r}: expected an array of rows")
    rows = []
    for r, row in enumerate(value):
        if not isinstance(row, list):
            raise SpecFileError(f"field {name}[{r + 1}]: expected an array of numbers")
        cells = []
        for c, x in enumerate(row):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise SpecFileError(
                    f"field {name}[{r + 1}][{c + 1}]: expected a number, got {x!r}"
                )
            cells.append(float(x))
        rows.append(cells)
    return rows


def _parse_servers(value) -> list[ServerGroup]:
    if not isinstance(value, list):
        raise SpecFileError("field 'servers': expected an array of server objects")
    groups = []
    for s, item in enumerate(value):
        where = f"servers[{s + 1}]"
        if not isinstance(item, dict) or "queues" not in item:
            raise SpecFileError(f"field {where}: expected an object with 'queues'")
        queues = item["queues"]
        if not isinstance(queues, list) or not all(
            isinstance(q, int) and not isinstance(q, bool) for q in queues
        ):
            raise SpecFileError(f"field {where}.queues: expected an array of queue indices")
        priority = item.get("priority", sorted(queues))
        if not isinstance(priority, list) or not all(
            isinstance(q, int) and not isinstance(q, bool) for q in priority
        ):
            raise SpecFileError(f"field {where}.priority: expected an array of queue indices")
        groups.append(ServerGroup(tuple(queues), tuple(priority)))
    return groups


def load_spec(path: str | Path) -> NetworkSpec:
    """Read a network spec JSON file (no validation beyond shape/typing)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecFileError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return NetworkSpec.from_dict(doc)
    except SpecFileError as exc:
        raise SpecFileError(f"{path}: {exc}") from exc


def spectral_radius_below_one(P: np.ndarray) -> bool:
    """Decide whether the nonnegative matrix ``P`` has spectral radius < 1.

    Power iteration runs on ``|P| + I`` (shifting by I keeps iterates strictly
    positive and makes the Perron root dominant); the Collatz-Wielandt bounds
    ``min (Ax)_i/x_i <= rho(A) <= max (Ax)_i/x_i`` certify the answer. If the
    bounds have not separated from 2 after the iteration cap, repeated
    squaring of ``P`` checks whether the Neumann series converges.
    """
    A = np.abs(np.asarray(P, dtype=float))
    K = A.shape[0]
    shifted = A + np.eye(K)
    cap = int(math.ceil(10 * K * math.log(1.0 / SPECTRAL_TOL)))
    x = np.ones(K)
    for _ in range(cap):
        y = shifted @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi < 2.0:
            return True
        if lo >= 2.0:
            return False
        if hi - lo <= SPECTRAL_TOL * hi:
            break
        x = y / y.max()
    return _neumann_converges(A)


def _neumann_converges(A: np.ndarray, squarings: int = 64) -> bool:
    # rho(A)^(2^m) <= ||A^(2^m)||, so a norm below 1 certifies rho < 1
    M = A.copy()
    for _ in range(squarings):
        norm = np.abs(M).sum(axis=1).max()
        if norm < 1.0:
            return True
        if not np.isfinite(norm):
            return False
        M = M @ M
    return False


class ValidatedNetwork:
    """An immutable, checked network. Create it with :func:`validate`."""

    def __init__(self, P, alpha, v2, mu, servers: tuple[ServerGroup, ...]):
        self.K = P.shape[0]
        for arr in (P, alpha, v2, mu):
            arr.setflags(write=False)
        self.P = P
        self.alpha = alpha
        self.v2 = v2
        self.mu = mu
        self.servers = servers
        self._lu = lu_factor(np.eye(self.K) - P)

    def solve(self, b, transpose: bool = False) -> np.ndarray:
        """Solve ``(I-P) x = b`` (or ``(I-P') x = b``) with the cached LU."""
        return lu_solve(self._lu, np.asarray(b, dtype=float), trans=1 if transpose else 0)

    @cached_property
    def fundamental(self) -> np.ndarray:
        """``(I-P)^{-1}``; entry (k, i) is the expected number of visits to i from k."""
        N = self.solve(np.eye(self.K))
        N.setflags(write=False)
        return N

    @cached_property
    def nu(self) -> np.ndarray:
        nu = self.solve(self.alpha, transpose=True)
        # clip rounding noise; the exact solution is nonnegative
        nu = np.where(np.abs(nu) < 1e-15 * max(1.0, np.abs(nu).max()), 0.0, nu)
        nu.setflags(write=False)
        return nu

    @cached_property
    def server_of(self) -> np.ndarray:
        out = np.empty(self.K, dtype=np.int64)
        for s, group in enumerate(self.servers):
            for q in group.queues:
                out[q - 1] = s
        out.setflags(write=False)
        return out

    def spec(self) -> NetworkSpec:
        return NetworkSpec(
            K=self.K,
            P=self.P.tolist(),
            alpha=self.alpha.tolist(),
            v2=self.v2.tolist(),
            mu=self.mu.tolist(),
            servers=list(self.servers),
        )

    def with_params(self, **changes) -> "ValidatedNetwork":
        """Re-validate a copy with some of P/alpha/v2/mu/servers replaced."""
        spec = self.spec()
        for key, value in changes.items():
            setattr(spec, key, value)
        return validate(spec)

    def __repr__(self) -> str:
        return f"ValidatedNetwork(K={self.K}, servers={len(self.servers)})"


def _as_vector(value, name: str, K: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (K,):
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected ({K},)")
    if not np.all(np.isfinite(arr)):
        raise NetworkError(f"{name} contains non-finite values")
    return arr.copy()


def _check_servers(servers, K: int) -> tuple[ServerGroup, ...]:
    if servers is None:
        return tuple(ServerGroup((k,), (k,)) for k in range(1, K + 1))
    seen: set[int] = set()
    groups = []
    for s, group in enumerate(servers, start=1):
        queues = tuple(int(q) for q in group.queues)
        if not queues:
            raise NetworkError(f"servers[{s}] has no queues")
        for q in queues:
            if not 1 <= q <= K:
                raise DimensionMismatch(f"servers[{s}] names queue {q}, outside 1..{K}")
            if q in seen:
                raise NetworkError(f"queue {q} is assigned to more than one server")
            seen.add(q)
        priority = tuple(int(q) for q in group.priority)
        if sorted(priority) != sorted(queues):
            raise NetworkError(
                f"servers[{s}].priority {list(priority)} is not an ordering of {list(queues)}"
            )
        groups.append(ServerGroup(queues, priority))
    # queues not named in any group get a dedicated server
    for k in range(1, K + 1):
        if k not in seen:
            groups.append(ServerGroup((k,), (k,)))
    return tuple(groups)


def validate(spec: NetworkSpec) -> ValidatedNetwork:
    """Check every invariant of ``spec`` and return a :class:`ValidatedNetwork`.

    Raises
    ------
    DimensionMismatch, NegativeEntry, RowSumExceedsOne, SpectralRadiusGEOne
    """
    K = spec.K
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise DimensionMismatch(f"K must be a positive integer, got {K!r}")
    K = int(K)
    try:
        P = np.array(spec.P, dtype=float)
    except (TypeError, ValueError) as exc:
        raise DimensionMismatch(f"P is not a rectangular numeric matrix: {exc}") from exc
    if P.shape != (K, K):
        raise DimensionMismatch(f"P has shape {P.shape}, expected ({K}, {K})")
    if not np.all(np.isfinite(P)):
        raise NetworkError("P contains non-finite values")
    alpha = _as_vector(spec.alpha, "alpha", K)
    v2 = _as_vector(spec.v2, "v2", K)
    mu = _as_vector(spec.mu, "mu", K)

    for (r, c), x in np.ndenumerate(P):
        if x < 0:
            raise NegativeEntry("P", f"[{r + 1}][{c + 1}]", float(x))
    for r, total in enumerate(P.sum(axis=1)):
        if total > 1.0 + ROW_SUM_TOL:
            raise RowSumExceedsOne(r + 1, float(total))
    for name, arr in (("alpha", alpha), ("v2", v2)):
        for k, x in enumerate(arr):
            if x < 0:
                raise NegativeEntry(name, f"[{k + 1}]", float(x))
    for k, x in enumerate(mu):
        if x <= 0:
            raise NegativeEntry("mu", f"[{k + 1}]", float(x), need="> 0")
    if not np.any(alpha > 0):
        raise NetworkError("alpha must have at least one strictly positive entry")
    if not spectral_radius_below_one(P):
        raise SpectralRadiusGEOne()

    servers = _check_servers(spec.servers, K)
    return ValidatedNetwork(P, alpha, v2, mu, servers)


def throughput(net: ValidatedNetwork) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(nu, nu_flow)`` with ``nu = (I-P')^{-1} alpha`` and ``nu_flow[i, j] = nu_i p_ij``."""
    nu = net.nu
    return nu, nu[:, None] * net.P


@dataclass(frozen=True)
class StabilityReport:
    loads: np.ndarray
    servers: tuple[ServerGroup, ...]
    stable: np.ndarray = field(repr=False)

    @property
    def all_stable(self) -> bool:
        return bool(self.stable.all())

    def describe(self) -> str:
        lines = []
        for group, rho, ok in zip(self.servers, self.loads, self.stable):
            queues = ",".join(str(q) for q in group.queues)
            lines.append(f"server {{{queues}}}: load {rho:.6g} {'ok' if ok else 'UNSTABLE'}")
        return "\n".join(lines)


def stability_report(net: ValidatedNetwork) -> StabilityReport:
    """Per-server loads ``sum_{k in C_s} nu_k / mu_k``; a load >= 1 is flagged, not raised."""
    ratio = net.nu / net.mu
    loads = np.array([sum(ratio[q - 1] for q in g.queues) for g in net.servers])
    return StabilityReport(loads=loads, servers=net.servers, stable=loads < 1.0)
