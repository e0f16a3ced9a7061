"""Machine graphs, presets, and route derivation."""

import pytest

from haloflow import (
    ConfigurationError,
    Link,
    NodeKind,
    RankMap,
    Topology,
    TopologyError,
    preset,
)
from haloflow.topology import device, from_spec, host_bridge, nic, parse_node, switch


def crosses_kind(topo, src, dst, kind):
    return any(n.kind == kind for n in topo.route_nodes(src, dst))


class TestNodes:
    def test_parse_round_trip(self):
        for text in ("device:0", "hostbridge:3", "switch:1", "nic:2"):
            assert str(parse_node(text)) == text

    def test_parse_rejects_garbage(self):
        with pytest.raises(TopologyError):
            parse_node("gadget:1")
        with pytest.raises(TopologyError):
            parse_node("device:x")

    def test_helpers_build_kinds(self):
        assert device(2).kind == NodeKind.DEVICE
        assert host_bridge(0).kind == NodeKind.HOST_BRIDGE
        assert switch(0).kind == NodeKind.SWITCH
        assert nic(1).kind == NodeKind.NIC


class TestLink:
    def test_capacity_is_lanes_times_per_direction_bandwidth(self):
        ln = Link(device(0), switch(0), 25e9, 6)
        assert ln.capacity == 150e9

    def test_rejects_nonpositive_figures(self):
        with pytest.raises(TopologyError):
            Link(device(0), device(1), -1.0, 1)
        with pytest.raises(TopologyError):
            Link(device(0), device(1), 25e9, 0)

    def test_rejects_self_link(self):
        with pytest.raises(TopologyError):
            Link(device(0), device(0), 25e9, 1)


class TestPresets:
    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            preset("nosuch")

    def test_single_switch_pair_bandwidth(self):
        topo = preset("dgx2")
        assert topo.n_devices == 16
        assert topo.route_bandwidth(0, 9) == 150e9

    def test_single_switch_aggregate_injection(self):
        topo = preset("dgx2")
        device_links = [
            ln for ln in topo.links if NodeKind.DEVICE in (ln.a.kind, ln.b.kind)
        ]
        assert len(device_links) == 16
        assert sum(ln.capacity for ln in device_links) == 2.4e12

    def test_island_machine_direct_and_bridged_routes(self):
        topo = preset("dgx1v")
        assert topo.n_devices == 8
        assert topo.route_bandwidth(0, 3) == 25e9
        # crossing islands means two host bridges and the CPU interconnect
        names = [str(n) for n in topo.route_nodes(0, 5)]
        assert names == ["device:0", "hostbridge:0", "hostbridge:1", "device:5"]
        assert topo.route_bandwidth(0, 5) == 8e9

    def test_previous_generation_lane_speed(self):
        topo = preset("dgx1p")
        assert topo.route_bandwidth(0, 3) == 20e9

    def test_self_route_uses_memory_engine(self):
        topo = preset("dgx1v")
        assert topo.route(2, 2) == ()
        assert topo.route_bandwidth(2, 2) == 800e9

    def test_route_symmetry_everywhere(self):
        for name in ("dgx1v", "dgx1p", "dgx2"):
            topo = preset(name)
            for i in range(topo.n_devices):
                for j in range(topo.n_devices):
                    fwd = topo.route_nodes(i, j)
                    rev = topo.route_nodes(j, i)
                    assert fwd == tuple(reversed(rev)), (name, i, j)

    def test_two_server_variant_crosses_nics(self):
        topo = preset("dgx1v", servers=2)
        assert topo.n_devices == 16
        assert crosses_kind(topo, 0, 8, NodeKind.NIC)
        assert crosses_kind(topo, 0, 8, NodeKind.SWITCH)
        assert not crosses_kind(topo, 0, 7, NodeKind.NIC)

    def test_flat_cluster_degenerate_point(self):
        topo = preset("fat_tree_edr", nodes=1, devices_per_node=1)
        assert topo.n_devices == 1
        assert topo.links == ()
        assert topo.route(0, 0) == ()

    def test_flat_cluster_cross_node_route(self):
        topo = preset("fat_tree_edr", nodes=4, devices_per_node=2)
        assert topo.n_devices == 8
        assert crosses_kind(topo, 0, 2, NodeKind.NIC)
        assert crosses_kind(topo, 0, 2, NodeKind.SWITCH)
        assert topo.route_bandwidth(0, 2) == 12e9

    def test_no_host_bridge_is_an_error(self):
        with pytest.raises(TopologyError):
            preset("dgx2").nearest_host_bridge(0)

    def test_nearest_host_bridge_per_island(self):
        topo = preset("dgx1v")
        assert str(topo.nearest_host_bridge(0)) == "hostbridge:0"
        assert str(topo.nearest_host_bridge(5)) == "hostbridge:1"


class TestFromSpec:
    def test_preset_with_unit_conversion(self):
        topo = from_spec({"preset": "dgx1v", "nvlink_gbps": 20})
        assert topo.route_bandwidth(0, 3) == 20e9

    def test_inline_graph(self):
        doc = {
            "nodes": ["device:0", "device:1", "switch:0"],
            "links": [
                {"a": "device:0", "b": "switch:0", "gbps_per_dir": 10},
                {"a": "device:1", "b": "switch:0", "gbps_per_dir": 10},
            ],
            "device_mem_bw_gbps": 100,
        }
        topo = from_spec(doc)
        assert topo.route_bandwidth(0, 1) == 10e9
        assert topo.route_bandwidth(0, 0) == 100e9

    def test_inline_explicit_route_must_be_a_walk(self):
        doc = {
            "nodes": ["device:0", "device:1", "device:2"],
            "links": [
                {"a": "device:0", "b": "device:1", "gbps_per_dir": 10},
                {"a": "device:1", "b": "device:2", "gbps_per_dir": 10},
            ],
            "routes": [{"src": 0, "dst": 2, "links": [1]}],
        }
        with pytest.raises(TopologyError):
            from_spec(doc)

    def test_disconnected_pair_is_an_error(self):
        doc = {
            "nodes": ["device:0", "device:1"],
            "links": [],
        }
        with pytest.raises(TopologyError):
            from_spec(doc)


class TestRankMap:
    def test_identity(self):
        rm = RankMap.identity(4)
        assert rm.nranks == 4
        assert [rm.device_of(r) for r in range(4)] == [0, 1, 2, 3]

    def test_shared_device_allowed(self):
        rm = RankMap([0, 0, 1])
        assert rm.device_of(1) == 0

    def test_bounds(self):
        rm = RankMap.identity(2)
        with pytest.raises(ConfigurationError):
            rm.device_of(2)
        with pytest.raises(ConfigurationError):
            RankMap([])
