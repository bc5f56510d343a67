import time

import numpy as np
import pytest

from flowvar.experiment import data_path, six_node_network
from flowvar.network import NetworkSpec, validate


def make_net(P, alpha, v2=None, mu=None, servers=None):
    P = np.asarray(P, dtype=float)
    K = P.shape[0]
    alpha = np.asarray(alpha, dtype=float)
    v2 = alpha.copy() if v2 is None else np.asarray(v2, dtype=float)
    if mu is None:
        nu = np.linalg.solve(np.eye(K) - P.T, alpha)
        mu = 2 * nu + 1
    return validate(NetworkSpec(K=K, P=P, alpha=alpha, v2=v2, mu=mu, servers=servers))


def random_network(rng: np.random.Generator, K: int, max_row: float = 0.9, sparsity: float = 0.4):
    """Random substochastic P (row sums <= max_row), alpha in (0, 5], v2 in [0, 10]."""
    P = rng.random((K, K)) * (rng.random((K, K)) > sparsity)
    rows = P.sum(axis=1, keepdims=True)
    scale = rng.uniform(0, max_row, size=(K, 1))
    P = np.where(rows > 0, P / np.where(rows > 0, rows, 1) * scale, 0.0)
    alpha = rng.uniform(1e-3, 5, size=K)
    v2 = rng.uniform(0, 10, size=K)
    return make_net(P, alpha, v2)


@pytest.fixture(scope="session")
def six():
    return six_node_network()


@pytest.fixture
def tandem():
    return make_net([[0, 1], [0, 0]], [2, 0], [8, 0], [5, 5])


@pytest.fixture(scope="session")
def six_spec_path():
    return data_path("six_node.json")


def load_small_experiment(name, **changes):
    from flowvar.experiment import load_experiment, with_config

    exp = load_experiment(data_path(name))
    return with_config(exp, **changes) if changes else exp


@pytest.fixture(scope="session")
def six_zero_service():
    """Zero-service replications of the six-queue network: 10^4 runs to t = 1000."""
    from flowvar.oracle import run_zero_service_experiment

    exp = load_small_experiment("six_node_single_class.json", replications=10**4, seed=606,
                                grid=(250.0, 500.0, 750.0, 1000.0))
    start = time.perf_counter()
    out = run_zero_service_experiment(exp.net, exp.arrivals, exp.config)
    out.elapsed = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def des_single():
    """Single-class DES at desk scale: 2 x 10^4 replications on the 20..1000 grid."""
    from flowvar.simulation import run_experiment

    exp = load_small_experiment("six_node_single_class.json")
    start = time.perf_counter()
    out = run_experiment(exp.net, exp.arrivals, exp.services, exp.config)
    out.elapsed = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def des_priority():
    """Queues 1 and 2 share a server with priority to queue 1; same scale and seed."""
    from flowvar.simulation import run_experiment

    exp = load_small_experiment("six_node_priority.json")
    start = time.perf_counter()
    out = run_experiment(exp.net, exp.arrivals, exp.services, exp.config)
    out.elapsed = time.perf_counter() - start
    return out


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line, then assert the criterion."""

    def record(number: int, ok: bool, detail: str):
        line = f"acceptance {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
