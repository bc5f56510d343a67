import numpy as np
import pytest

from flowvar import rng as rngmod
from flowvar.distributions import Deterministic, Exponential, Erlang
from flowvar.errors import TourLengthExceeded
from flowvar.moments import cross_moment, visit_mean, visit_moments
from flowvar.network import FlowId
from flowvar.oracle import (
    oracle_flow_covariances, run_zero_service_experiment, sample_tour, tour_moment_estimates,
    zero_service_counts,
)
from flowvar.simulation import SimConfig, check_invariants

from conftest import make_net, random_network

MILLION = 10**6


def test_tour_without_routing():
    net = make_net(np.zeros((3, 3)), [1, 1, 1])
    tour = sample_tour(net, 2, rngmod.stream(1))
    np.testing.assert_array_equal(tour.visits, [0, 1, 0])
    assert not tour.transitions[:, 1:].any()
    assert tour.transitions[1, 0] == 1


def test_tandem_tour_is_deterministic(tandem):
    for seed in range(5):
        tour = sample_tour(tandem, 1, rngmod.stream(seed))
        np.testing.assert_array_equal(tour.visits, [1, 1])
        assert tour.count(FlowId(1, 2)) == 1
        assert tour.transitions[:, 1:].sum() == 1


def test_tour_length_cap():
    net = make_net([[0.999999]], [1.0])
    with pytest.raises(TourLengthExceeded):
        sample_tour(net, 1, rngmod.stream(0), max_len=10)


def test_six_start_two_mean(six):
    table = tour_moment_estimates(six, MILLION, seed=21, starts=[2])
    est = table.mean(2, FlowId(2, 1))
    want = six.P[1, 0] * six.fundamental[1, 1]
    assert est.within(want, 3)


def test_six_flow_45_from_4(six):
    table = tour_moment_estimates(six, MILLION, seed=22, starts=[4])
    f45, f54 = FlowId(4, 5), FlowId(5, 4)
    assert table.mean(4, f45).within(visit_mean(six, f45)[3], 4)
    _, c = cross_moment(six, f45, f54)
    assert table.cov(4, f45, f54).within(c[3], 3)
    _, c_same = cross_moment(six, f45, f45)
    assert table.cov(4, f45, f45).within(c_same[3], 4)


def test_tandem_tour_moments_exact(tandem):
    table = tour_moment_estimates(tandem, MILLION, seed=3, starts=[1])
    est = table.mean(1, FlowId(1, 2))
    assert est.value == 1.0 and est.se == 0.0
    cov = table.cov(1, FlowId(1, 2), FlowId(1, 2))
    assert cov.value == 0.0 and cov.se == 0.0


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_random_network_tour_moments(seed):
    net = random_network(np.random.default_rng(seed), 4, max_row=0.8)
    table = tour_moment_estimates(net, 200_000, seed=seed)
    vm = visit_moments(net)
    for k in range(1, 5):
        means, ses = table.mean_matrix(k)
        want = vm.m[:, :, k - 1]
        z = np.abs(means - want) / np.where(ses > 0, ses, np.inf)
        assert np.all((z <= 4.5) | ((ses == 0) & (np.abs(means - want) < 1e-12)))


def test_se_shrinks_with_more_tours(six):
    f = FlowId(4, 5)
    a = tour_moment_estimates(six, 100_000, seed=5, starts=[4]).mean(4, f)
    b = tour_moment_estimates(six, 200_000, seed=6, starts=[4]).mean(4, f)
    assert b.se / a.se == pytest.approx(1 / np.sqrt(2), rel=0.2)


def test_unit_vector_topology_has_no_tour_variance():
    P = np.zeros((4, 4))
    P[0, 2] = P[2, 3] = P[1, 3] = 1.0
    net = make_net(P, [1, 1, 1, 1])
    table = tour_moment_estimates(net, 5000, seed=1)
    for k in range(1, 5):
        for f1 in (FlowId(1, 3), FlowId(3, 4), FlowId(2, 4)):
            assert table.cov(k, f1, f1).value == 0.0


def test_deterministic_arrivals_count_tours():
    net = make_net([[0.0]], [1.0], [0.0])
    arr, _, rout = rngmod.replication_streams(0, 0, 1)
    traj = zero_service_counts(net, [Deterministic(1.0)], [10.0], arr, rout)
    assert traj.A[-1, 0] == 10
    assert traj.D[-1, 0, 0] == 10


def test_zero_service_invariants(six):
    from flowvar.experiment import data_path, load_experiment

    exp = load_experiment(data_path("six_node_single_class.json"), replications=20, seed=4)
    arr, _, rout = rngmod.replication_streams(4, 0, 6)
    traj = zero_service_counts(six, exp.arrivals, exp.config.grid, arr, rout)
    assert all(v == 0 for v in check_invariants(traj).values())


def test_tandem_poisson_zero_service():
    net = make_net([[0, 1], [0, 0]], [2, 0], [2, 0], [5, 5])
    cfg = SimConfig(grid=(1000.0,), replications=10**4, seed=77)
    out = run_zero_service_experiment(net, [Exponential(2.0), None], cfg)
    est = out.var_rate(FlowId(1, 2))
    assert est.value == pytest.approx(2.0, rel=0.05)


def test_six_zero_service_sign(six_zero_service):
    est = six_zero_service.cov_rate(FlowId(2, 1), FlowId(2, 4))
    assert est.value + 4 * est.se < 0
    assert est.within(-0.5, 4)


def test_six_zero_service_covariances(six_zero_service, six):
    from flowvar.diffusion import covariance_tables

    t = covariance_tables(six)
    flows = [FlowId(1, 3), FlowId(2, 1), FlowId(4, 5), FlowId(4, 6)]
    for (f1, f2), est in oracle_flow_covariances(six_zero_service, flows).items():
        assert est.within(t.flow_cov(f1, f2), 4.5), (f1, f2, est)


def test_zero_service_rejects_mismatched_arrivals(six):
    cfg = SimConfig(grid=(10.0,), replications=2, seed=1)
    bad = [Exponential(1.0), Erlang.with_mean(2, 0.25), None, None, None, None]
    with pytest.raises(ValueError, match="rate"):
        run_zero_service_experiment(six, bad, cfg)
