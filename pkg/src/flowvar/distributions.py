"""Inter-arrival and service time distributions.

Every variate is produced from uniforms ``u`` in [0, 1) by inversion
(``-log1p(-u) / rate`` for an exponential phase), so the compiled and pure
Python kernels consume random streams identically. ``encode`` packs a
distribution into the ``(kind, params)`` row the kernels read.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

KIND_NONE = 0
KIND_EXPONENTIAL = 1
KIND_ERLANG = 2
KIND_HYPEREXPONENTIAL = 3
KIND_DETERMINISTIC = 4

MAX_PHASES = 16
PARAM_WIDTH = 1 + 2 * MAX_PHASES


class DistributionError(ValueError):
    pass


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DistributionError(f"exponential rate must be > 0, got {self.rate}")

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def scv(self) -> float:
        return 1.0

    def encode(self):
        return KIND_EXPONENTIAL, [self.rate]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return -np.log1p(-rng.random(size)) / self.rate


@dataclass(frozen=True)
class Erlang:
    """Sum of ``shape`` i.i.d. exponentials, each with rate ``rate``."""

    shape: int
    rate: float

    def __post_init__(self):
        if not isinstance(self.shape, (int, np.integer)) or self.shape < 1:
            raise DistributionError(f"erlang shape must be a positive integer, got {self.shape}")
        if not self.rate > 0:
            raise DistributionError(f"erlang rate must be > 0, got {self.rate}")

    @classmethod
    def with_mean(cls, shape: int, mean: float) -> "Erlang":
        return cls(shape, shape / mean)

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def scv(self) -> float:
        return 1.0 / self.shape

    def encode(self):
        return KIND_ERLANG, [float(self.shape), self.rate]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random((size, self.shape))
        return (-np.log1p(-u) / self.rate).sum(axis=1)


@dataclass(frozen=True)
class HyperExponential:
    """Mixture of exponentials: phase ``p`` with probability ``weights[p]``."""

    weights: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        r = np.asarray(self.rates, dtype=float)
        if w.shape != r.shape or w.ndim != 1 or len(w) == 0:
            raise DistributionError("hyperexponential weights and rates must be equal-length lists")
        if len(w) > MAX_PHASES:
            raise DistributionError(f"at most {MAX_PHASES} phases supported")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise DistributionError(f"hyperexponential weights must be >= 0 and sum to 1, got {list(w)}")
        if np.any(r <= 0):
            raise DistributionError("hyperexponential rates must be > 0")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "rates", tuple(float(x) for x in r))

    @property
    def mean(self) -> float:
        return sum(w / r for w, r in zip(self.weights, self.rates))

    @property
    def scv(self) -> float:
        second = sum(2 * w / r**2 for w, r in zip(self.weights, self.rates))
        return second / self.mean**2 - 1.0

    def _cumulative(self) -> np.ndarray:
        return np.cumsum(self.weights)

    def encode(self):
        n = len(self.weights)
        return KIND_HYPEREXPONENTIAL, [float(n), *self._cumulative(), *self.rates]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        cum = self._cumulative()
        # (phase, exponential) uniform pairs, drawn in the kernels' order
        u = rng.random((size, 2))
        phase = np.minimum(np.searchsorted(cum, u[:, 0], side="right"), len(cum) - 1)
        return -np.log1p(-u[:, 1]) / np.asarray(self.rates)[phase]


@dataclass(frozen=True)
class Deterministic:
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise DistributionError(f"deterministic value must be > 0, got {self.value}")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def scv(self) -> float:
        return 0.0

    def encode(self):
        return KIND_DETERMINISTIC, [self.value]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value)


Distribution = Union[Exponential, Erlang, HyperExponential, Deterministic]


def rate_of(dist: Distribution) -> float:
    return 1.0 / dist.mean


def renewal_variance_rate(dist: Distribution) -> float:
    """Asymptotic variance per unit time of the renewal counting process."""
    return dist.scv / dist.mean


def from_dict(doc: dict) -> Distribution:
    """Build a distribution from ``{"type": ..., ...}``.

    Recognised forms::

        {"type": "exponential", "rate": r}          or {"type": "exponential", "mean": m}
        {"type": "erlang", "shape": n, "rate": r}   or {..., "mean": m}
        {"type": "hyperexponential", "weights": [...], "rates": [...]}  (or "means")
        {"type": "deterministic", "value": d}
    """
    if not isinstance(doc, dict) or "type" not in doc:
        raise DistributionError(f"distribution must be an object with a 'type', got {doc!r}")
    kind = str(doc["type"]).lower()
    try:
        if kind == "exponential":
            rate = doc["rate"] if "rate" in doc else 1.0 / doc["mean"]
            return Exponential(float(rate))
        if kind == "erlang":
            shape = doc["shape"]
            if isinstance(shape, float) and shape.is_integer():
                shape = int(shape)
            if "rate" in doc:
                return Erlang(shape, float(doc["rate"]))
            return Erlang.with_mean(shape, float(doc["mean"]))
        if kind in ("hyperexponential", "hyperexp"):
            rates = doc["rates"] if "rates" in doc else [1.0 / m for m in doc["means"]]
            return HyperExponential(tuple(doc["weights"]), tuple(rates))
        if kind == "deterministic":
            return Deterministic(float(doc["value"]))
    except KeyError as exc:
        raise DistributionError(f"{kind} distribution missing field {exc.args[0]!r}") from exc
    raise DistributionError(f"unknown distribution type {doc['type']!r}")


def to_dict(dist: Distribution) -> dict:
    if isinstance(dist, Exponential):
        return {"type": "exponential", "rate": dist.rate}
    if isinstance(dist, Erlang):
        return {"type": "erlang", "shape": int(dist.shape), "rate": dist.rate}
    if isinstance(dist, HyperExponential):
        return {"type": "hyperexponential", "weights": list(dist.weights), "rates": list(dist.rates)}
    return {"type": "deterministic", "value": dist.value}


def encode_table(dists: list[Distribution | None]) -> tuple[np.ndarray, np.ndarray]:
    """Pack per-queue distributions (``None`` = no stream) into kernel arrays."""
    kinds = np.zeros(len(dists), dtype=np.int64)
    params = np.zeros((len(dists), PARAM_WIDTH))
    for k, dist in enumerate(dists):
        if dist is None:
            continue
        kind, values = dist.encode()
        kinds[k] = kind
        params[k, :len(values)] = values
    return kinds, params
