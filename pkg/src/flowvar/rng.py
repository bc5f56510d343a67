"""Deterministic random substreams.

Every replication ``r`` owns one PCG64 stream per (role, queue), derived from
the master seed by ``SeedSequence`` spawn keys. Streams can therefore be built
independently in any worker and in any order.
"""

import os

import numpy as np

ARRIVAL = 0
SERVICE = 1
ROUTING = 2
TOURS = 3


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def replication_streams(seed: int, rep: int, K: int) -> tuple[list, list, list]:
    """``(arrival, service, routing)`` generator lists for replication ``rep``."""
    return tuple(
        [stream(seed, rep, role, k) for k in range(K)] for role in (ARRIVAL, SERVICE, ROUTING)
    )


def worker_count() -> int:
    """Thread cap from ``FLOWVAR_THREADS`` (default: CPU count)."""
    raw = os.environ.get("FLOWVAR_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"FLOWVAR_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1
