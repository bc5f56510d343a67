import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowvar.network import (
    DimensionMismatch, FlowId, NegativeEntry, NetworkSpec, RowSumExceedsOne, ServerGroup,
    SpecFileError, SpectralRadiusGEOne, all_flows, load_spec, spectral_radius_below_one,
    stability_report, throughput, validate,
)

from conftest import make_net, random_network


def spec(**kw):
    base = dict(K=1, P=[[0.0]], alpha=[1.0], v2=[1.0], mu=[2.0])
    base.update(kw)
    return NetworkSpec(**base)


def test_trivial_valid():
    net = validate(spec())
    assert net.K == 1
    assert net.nu.tolist() == [1.0]


def test_six_node_valid_and_throughput(six):
    nu, flows = throughput(six)
    np.testing.assert_allclose(nu, [4, 4, 2, 8, 4, 4], rtol=1e-12)
    np.testing.assert_allclose(flows, nu[:, None] * six.P)
    assert (flows >= 0).all()


def test_closed_loop_rejected():
    with pytest.raises(SpectralRadiusGEOne):
        validate(spec(P=[[1.0]]))


def test_two_cycle_rejected():
    with pytest.raises(SpectralRadiusGEOne):
        validate(NetworkSpec(K=2, P=[[0, 1], [1, 0]], alpha=[1, 0], v2=[1, 0], mu=[5, 5]))


def test_row_sum_error_names_row():
    with pytest.raises(RowSumExceedsOne) as exc:
        validate(NetworkSpec(K=2, P=[[0, 0.5], [0.7, 0.6]], alpha=[1, 1], v2=[1, 1], mu=[9, 9]))
    assert exc.value.row == 2


@pytest.mark.parametrize("field,value", [
    ("alpha", [-1.0]), ("v2", [-0.5]), ("mu", [0.0]), ("P", [[-0.1]]),
])
def test_negative_entries(field, value):
    with pytest.raises(NegativeEntry) as exc:
        validate(spec(**{field: value}))
    assert exc.value.field == field


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        validate(spec(alpha=[1.0, 2.0]))
    with pytest.raises(DimensionMismatch):
        validate(spec(P=[[0.0, 0.0]]))


def test_tandem_throughput():
    net = make_net([[0, 1], [0, 0]], [2, 0])
    np.testing.assert_allclose(throughput(net)[0], [2, 2])


def test_stability_report_dedicated(six):
    rep = stability_report(six)
    assert rep.all_stable
    assert rep.loads[3] == pytest.approx(8 / 8.25)


def test_stability_report_shared(six):
    shared = six.with_params(servers=(ServerGroup((1, 2), (1, 2)),))
    rep = stability_report(shared)
    assert rep.loads[0] == pytest.approx(4 / 8.25 + 4 / 8.25)
    assert len(rep.loads) == 5  # one shared server plus four dedicated ones
    assert rep.all_stable


def test_stability_boundary_flagged():
    rep = stability_report(validate(spec(mu=[1.0])))
    assert not rep.all_stable


def test_bad_priority_rejected():
    with pytest.raises(ValueError):
        validate(NetworkSpec(K=2, P=[[0, 0], [0, 0]], alpha=[1, 1], v2=[1, 1], mu=[3, 3],
                             servers=[ServerGroup((1, 2), (1, 1))]))


def test_flow_index_roundtrip():
    K = 4
    for idx, f in enumerate(all_flows(K), start=1):
        assert f.index(K) == idx == (f.i - 1) * K + f.j
        assert FlowId.from_index(idx, K) == f
        assert FlowId.parse(str(f)) == f
    assert FlowId.parse("2:3") == FlowId(2, 3)


def test_load_spec_reports_location(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"K": 1,\n "P": [[0]]\n "alpha": [1]}')
    with pytest.raises(SpecFileError, match="line 3"):
        load_spec(bad)
    field = tmp_path / "field.json"
    field.write_text(json.dumps({"K": 2, "P": [[0, 0], [0, "x"]], "alpha": [1, 1],
                                 "v2": [1, 1], "mu": [2, 2]}))
    with pytest.raises(SpecFileError, match=r"P\[2\]\[2\]"):
        load_spec(field)


def test_spec_roundtrip(six):
    again = validate(NetworkSpec.from_dict(six.spec().to_dict()))
    np.testing.assert_array_equal(again.P, six.P)
    np.testing.assert_array_equal(again.nu, six.nu)


def test_spectral_matches_eigenvalues():
    rng = np.random.default_rng(5)
    for _ in range(200):
        K = int(rng.integers(1, 7))
        P = rng.random((K, K)) * rng.uniform(0.05, 0.5)
        expected = np.max(np.abs(np.linalg.eigvals(P))) < 1
        if abs(np.max(np.abs(np.linalg.eigvals(P))) - 1) < 1e-6:
            continue
        assert spectral_radius_below_one(P) == expected


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 7))
def test_traffic_fixed_point(seed, K):
    net = random_network(np.random.default_rng(seed), K)
    nu = net.nu
    np.testing.assert_allclose(nu, net.alpha + net.P.T @ nu, rtol=1e-10, atol=1e-12)
    assert (net.fundamental >= np.eye(K) - 1e-12).all()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(1, 6), scale=st.floats(1e-3, 1e3))
def test_validation_is_alpha_scale_invariant(seed, K, scale):
    rng = np.random.default_rng(seed)
    P = rng.random((K, K)) * rng.uniform(0, 0.6)
    alpha = rng.uniform(0, 3, K)
    alpha[0] = 1.0

    def ok(a):
        try:
            validate(NetworkSpec(K=K, P=P, alpha=a, v2=a, mu=np.full(K, 1e6)))
            return True
        except ValueError:
            return False

    assert ok(alpha) == ok(alpha * scale)
