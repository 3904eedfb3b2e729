from dataclasses import replace

import numpy as np
import pytest

from carbonsched.model import (
    ClusterTopology,
    Dist,
    FunctionSpec,
    InstanceState,
    NodeSpec,
    Phase,
    PhaseError,
    reference_topology,
    validate_function,
    validate_topology,
)


def test_reference_topology_is_valid(topology):
    assert validate_topology(topology) == []
    assert len(topology.nodes) == 16
    assert {n.cpu_capacity for n in topology.nodes} == {4000}
    assert topology.management_region.id == "frankfurt"


def test_missing_region_annotation_names_node(topology):
    bad = replace(topology.nodes[0], annotations={})
    topo = replace(topology, nodes=(bad,) + topology.nodes[1:])
    out = validate_topology(topo)
    assert len(out) == 1
    assert bad.id in out[0] and "region" in out[0]


def test_missing_rtt_entry_names_pair(topology):
    rtt = {k: v for k, v in topology.rtt_matrix.items() if "spain" not in k}
    out = validate_topology(replace(topology, rtt_matrix=rtt))
    assert len(out) == 1
    assert "frankfurt" in out[0] and "spain" in out[0]


def test_annotation_mismatch_and_bad_coordinates(topology):
    n = replace(topology.nodes[0], annotations={"region": "france"})
    r = replace(topology.provider_regions[0], latitude=95.0)
    topo = replace(topology, nodes=(n,) + topology.nodes[1:],
                   provider_regions=(r,) + topology.provider_regions[1:])
    out = validate_topology(topo)
    assert any("does not match" in v for v in out)
    assert any("latitude" in v for v in out)


def test_node_outside_provider_regions(topology):
    n = NodeSpec("x", "atlantis", 1000, 1000, {"region": "atlantis"})
    out = validate_topology(replace(topology, nodes=topology.nodes + (n,)))
    assert out == ["node x: region 'atlantis' is not a provider region"]


def test_asymmetric_rtt(topology):
    rtt = dict(topology.rtt_matrix)
    rtt[("spain", "frankfurt")] = 99.0
    out = validate_topology(replace(topology, rtt_matrix=rtt))
    assert any("symmetric" in v for v in out)


def test_rtt_lookup_is_symmetric(topology):
    assert topology.rtt("spain", "frankfurt") == topology.rtt("frankfurt", "spain") == 32.0
    assert topology.rtt("frankfurt", "frankfurt") == 0.0


def test_function_deployability(topology):
    ok = FunctionSpec("f", 500, 512, Dist.constant(10))
    assert validate_function(ok, topology) == []
    too_big = replace(ok, cpu_request=8000, container_concurrency=0)
    out = validate_function(too_big, topology)
    assert any("cpu_request" in v for v in out)
    assert any("container_concurrency" in v for v in out)


def test_phase_machine_order():
    inst = InstanceState("i", "f")
    for t, p in enumerate([Phase.PENDING, Phase.SCHEDULED, Phase.BINDING, Phase.RUNNING, Phase.TERMINATED]):
        inst.advance(p, float(t))
    assert list(inst.phase_timestamps) == list(Phase)


def test_phase_machine_rejects_skips_and_backwards_time():
    inst = InstanceState("i", "f")
    inst.advance(Phase.PENDING, 5.0)
    with pytest.raises(PhaseError):
        inst.advance(Phase.RUNNING, 6.0)
    with pytest.raises(PhaseError):
        inst.advance(Phase.SCHEDULED, 4.0)


def test_pending_may_terminate_directly():
    inst = InstanceState("i", "f")
    inst.advance(Phase.PENDING, 0.0)
    inst.advance(Phase.TERMINATED, 1.0)
    assert inst.phase == Phase.TERMINATED


@pytest.mark.parametrize("d", [Dist.constant(3.0), Dist.exponential(50.0), Dist.lognormal_with_mean(539.0, 0.3)])
def test_dist_sample_mean(d):
    rng = np.random.default_rng(1)
    xs = np.array([d.sample(rng) for _ in range(20000)])
    assert (xs >= 0).all()
    assert xs.mean() == pytest.approx(d.expected, rel=0.03)


def test_dist_round_trip():
    for d in [Dist.constant(2), Dist.exponential(3), Dist.lognormal(1.0, 0.5)]:
        assert Dist.from_dict(d.to_dict()) == d
    assert Dist.from_dict(7) == Dist.constant(7)
    with pytest.raises(ValueError):
        Dist.from_dict({"kind": "weibull"})
