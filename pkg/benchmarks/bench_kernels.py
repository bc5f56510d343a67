"""Time the compiled kernels against the pure Python fallback.

    python benchmarks/bench_kernels.py [--reps N] [--tours N]

Both backends consume the same random streams, so the outputs are checked for
equality before the timings are reported.
"""

import argparse
import time

import numpy as np

from flowvar import _backend
from flowvar.experiment import data_path, load_experiment, with_config
from flowvar.oracle import run_zero_service_experiment, tour_moment_estimates
from flowvar.simulation import run_experiment


def timed(fn, repeat):
    best = np.inf
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=64, help="DES / zero-service replications")
    parser.add_argument("--tours", type=int, default=200_000, help="tours per start queue")
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled extension not built; only the Python backend is available")
    exp = load_experiment(data_path("six_node_single_class.json"))
    exp = with_config(exp, replications=args.reps)
    prio = with_config(load_experiment(data_path("six_node_priority.json")), replications=args.reps)

    cases = {
        "des single-class": lambda k: run_experiment(
            exp.net, exp.arrivals, exp.services, exp.config, kernels=k, workers=1).final,
        "des priority": lambda k: run_experiment(
            prio.net, prio.arrivals, prio.services, prio.config, kernels=k, workers=1).final,
        "zero-service": lambda k: run_zero_service_experiment(
            exp.net, exp.arrivals, exp.config, kernels=k, workers=1).final,
        "tours": lambda k: tour_moment_estimates(
            exp.net, args.tours, seed=1, starts=[4], kernels=k).acc[4].s11,
    }
    print(f"{'case':<18}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for case, fn in cases.items():
        times, results = {}, {}
        for name, kernels in backends.items():
            times[name], results[name] = timed(lambda: fn(kernels), args.repeat)
        if len(results) > 1:
            assert np.array_equal(results["python"], results["cython"]), f"{case}: backends differ"
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        row = "".join(f"{times[name]:>11.3f}s" for name in backends)
        print(f"{case:<18}{row}{speed:>9.1f}x")


if __name__ == "__main__":
    main()
