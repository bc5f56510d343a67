"""The compiled and pure Python kernels must agree bit for bit."""

import numpy as np
import pytest

from flowvar import _backend, _kernels_py
from flowvar.experiment import load_experiment, data_path, with_config
from flowvar.oracle import run_zero_service_experiment, tour_moment_estimates
from flowvar.simulation import SimConfig, run_experiment, run_replication

compiled = _backend.available().get("cython")
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def small(name, reps=3, grid=(5.0, 17.5, 40.0)):
    exp = load_experiment(data_path(name))
    return with_config(exp, grid=grid, horizon=grid[-1], replications=reps)


def test_backend_selection():
    assert _backend.BACKEND in ("cython", "python")
    assert "python" in _backend.available()


@needs_ext
@pytest.mark.parametrize("name", ["six_node_single_class.json", "six_node_priority.json"])
def test_des_bit_identical(name):
    exp = small(name)
    for rep in range(3):
        a = run_replication(exp.net, exp.arrivals, exp.services, exp.config, rep, kernels=compiled)
        b = run_replication(exp.net, exp.arrivals, exp.services, exp.config, rep, kernels=_kernels_py)
        assert a.events == b.events
        for field in ("D", "A", "Q", "S", "busy", "work", "elapsed", "serving"):
            np.testing.assert_array_equal(getattr(a, field), getattr(b, field), err_msg=field)


@needs_ext
def test_zero_service_bit_identical():
    exp = small("six_node_single_class.json", reps=4)
    a = run_zero_service_experiment(exp.net, exp.arrivals, exp.config, kernels=compiled)
    b = run_zero_service_experiment(exp.net, exp.arrivals, exp.config, kernels=_kernels_py)
    np.testing.assert_array_equal(a.final, b.final)
    assert a.backend == "cython" and b.backend == "python"


@needs_ext
def test_tours_bit_identical(six):
    a = tour_moment_estimates(six, 2000, seed=9, kernels=compiled)
    b = tour_moment_estimates(six, 2000, seed=9, kernels=_kernels_py)
    for k in range(1, 7):
        np.testing.assert_array_equal(a.mean_matrix(k)[0], b.mean_matrix(k)[0])


@needs_ext
def test_experiment_aggregates_identical():
    exp = small("six_node_priority.json", reps=5)
    a = run_experiment(exp.net, exp.arrivals, exp.services, exp.config, kernels=compiled)
    b = run_experiment(exp.net, exp.arrivals, exp.services, exp.config, kernels=_kernels_py)
    np.testing.assert_array_equal(a.moments.mean, b.moments.mean)
    np.testing.assert_array_equal(a.moments.var, b.moments.var)
