"""Fluid flow timing: exact single-flow costs, sharing, phases, staging."""

import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from haloflow import (
    Flow,
    RankMap,
    SimConfig,
    SimulationError,
    Staging,
    TimestepScenario,
    TopologyError,
    preset,
    simulate,
    simulate_timestep,
)

ALPHA_INTRA = 1e-6
ALPHA_INTER = 1e-5


@pytest.fixture(scope="module")
def island_topo():
    return preset("dgx1v")


@pytest.fixture(scope="module")
def switch_topo():
    return preset("dgx2")


class TestSingleFlow:
    def test_lone_flow_exact_time(self, island_topo):
        res = simulate(island_topo, RankMap.identity(2), [Flow(0, 0, 1, 10**8)])
        assert res.flow_completion[0] == pytest.approx(ALPHA_INTRA + 1e8 / 25e9, rel=1e-12)

    def test_zero_bytes_costs_latency_only(self, island_topo):
        res = simulate(island_topo, RankMap.identity(2), [Flow(0, 0, 1, 0)])
        assert res.flow_completion[0] == ALPHA_INTRA

    def test_cross_machine_latency(self):
        topo = preset("fat_tree_edr", nodes=2, devices_per_node=1)
        res = simulate(topo, RankMap.identity(2), [Flow(0, 0, 1, 0)])
        assert res.flow_completion[0] == ALPHA_INTER

    def test_same_device_uses_memory_engine(self, island_topo):
        res = simulate(island_topo, RankMap([0, 0]), [Flow(0, 0, 1, 8 * 10**9)])
        assert res.flow_completion[0] == pytest.approx(ALPHA_INTRA + 8e9 / 800e9, rel=1e-12)


class TestSharing:
    def test_two_flows_one_direction_halve_rate(self, island_topo):
        flows = [Flow(0, 0, 1, 10**8), Flow(1, 0, 1, 10**8)]
        res = simulate(island_topo, RankMap.identity(2), flows)
        expect = ALPHA_INTRA + 2 * 1e8 / 25e9
        assert res.flow_completion[0] == pytest.approx(expect, rel=1e-12)
        assert res.flow_completion[1] == pytest.approx(expect, rel=1e-12)

    def test_opposite_directions_do_not_share(self, island_topo):
        flows = [Flow(0, 0, 1, 10**8), Flow(1, 1, 0, 10**8)]
        res = simulate(island_topo, RankMap.identity(2), flows)
        expect = ALPHA_INTRA + 1e8 / 25e9
        assert res.flow_completion[0] == pytest.approx(expect, rel=1e-12)
        assert res.flow_completion[1] == pytest.approx(expect, rel=1e-12)

    def test_short_flow_releases_capacity(self, island_topo):
        # a 1:3 size split: the small flow leaves, the big one speeds up
        flows = [Flow(0, 0, 1, 10**8), Flow(1, 0, 1, 3 * 10**8)]
        res = simulate(island_topo, RankMap.identity(2), flows)
        # both at 12.5e9 for 8 ms, then the big flow's last 2e8 runs alone
        assert res.flow_completion[0] == pytest.approx(ALPHA_INTRA + 8e-3, rel=1e-12)
        assert res.flow_completion[1] == pytest.approx(ALPHA_INTRA + 16e-3, rel=1e-12)

    def test_peak_utilization_accounts_for_sharing(self, island_topo):
        flows = [Flow(0, 0, 1, 10**8), Flow(1, 0, 1, 10**8)]
        res = simulate(island_topo, RankMap.identity(2), flows)
        assert res.link_peak_utilization["device:0->device:1"] == pytest.approx(1.0)


class TestPhases:
    def test_phases_run_back_to_back(self, island_topo):
        flows = [Flow(0, 0, 1, 10**8, phase=0), Flow(1, 0, 1, 10**8, phase=1)]
        res = simulate(island_topo, RankMap.identity(2), flows)
        one = ALPHA_INTRA + 1e8 / 25e9
        assert res.phase_completion == pytest.approx((one, 2 * one), rel=1e-12)
        assert res.makespan == pytest.approx(2 * one, rel=1e-12)

    def test_phase_gap_rejected(self, island_topo):
        with pytest.raises(SimulationError):
            simulate(island_topo, RankMap.identity(2), [Flow(0, 0, 1, 1, phase=1)])

    def test_duplicate_flow_id_rejected(self, island_topo):
        flows = [Flow(0, 0, 1, 1), Flow(0, 1, 0, 1)]
        with pytest.raises(SimulationError):
            simulate(island_topo, RankMap.identity(2), flows)


class TestHostStaging:
    def test_same_bridge_store_and_forward(self, island_topo):
        cfg = SimConfig(staging=Staging.HOST_STAGED)
        res = simulate(island_topo, RankMap.identity(2), [Flow(0, 0, 1, 10**8)], cfg)
        expect = ALPHA_INTRA + 1e8 / 12e9 + 1e8 / 50e9 + 1e8 / 12e9
        assert res.flow_completion[0] == pytest.approx(expect, rel=1e-12)

    def test_cross_bridge_pays_two_copies(self, island_topo):
        cfg = SimConfig(staging=Staging.HOST_STAGED)
        res = simulate(island_topo, RankMap.identity(8), [Flow(0, 0, 5, 10**8)], cfg)
        expect = ALPHA_INTRA + 2 * (1e8 / 12e9) + 2 * (1e8 / 50e9) + 1e8 / 8e9
        assert res.flow_completion[0] == pytest.approx(expect, rel=1e-12)

    def test_host_copies_share_the_engine(self, island_topo):
        cfg = SimConfig(staging=Staging.HOST_STAGED, host_mem_bw=50e9)
        flows = [Flow(0, 0, 1, 10**8), Flow(1, 2, 3, 10**8)]
        res = simulate(island_topo, RankMap.identity(4), flows, cfg)
        # both copies land on hostbridge:0 at once and halve its rate; the
        # PCIe segments are distinct per device
        expect = ALPHA_INTRA + 1e8 / 12e9 + 2 * (1e8 / 50e9) + 1e8 / 12e9
        assert res.flow_completion[0] == pytest.approx(expect, rel=1e-12)
        assert res.flow_completion[1] == pytest.approx(expect, rel=1e-12)

    def test_staging_needs_a_host_bridge(self, switch_topo):
        cfg = SimConfig(staging=Staging.HOST_STAGED)
        with pytest.raises(TopologyError):
            simulate(switch_topo, RankMap.identity(2), [Flow(0, 0, 1, 1)], cfg)


class TestTimestep:
    def test_exchange_starts_after_slowest_compute(self, island_topo):
        scen = TimestepScenario(compute_seconds=(2.0, 1.0, 1.0, 1.0), flows=())
        res = simulate_timestep(island_topo, RankMap.identity(4), scen)
        assert res.makespan == 2.0
        assert res.busy_fraction == pytest.approx((1.0, 0.5, 0.5, 0.5))

    def test_flows_shift_by_compute_wall(self, island_topo):
        scen = TimestepScenario(
            compute_seconds=(0.5, 0.25), flows=(Flow(0, 0, 1, 10**8),)
        )
        res = simulate_timestep(island_topo, RankMap.identity(2), scen)
        assert res.flow_completion[0] == pytest.approx(
            0.5 + ALPHA_INTRA + 1e8 / 25e9, rel=1e-12
        )

    def test_without_barrier_fractions_use_own_end(self, island_topo):
        scen = TimestepScenario(
            compute_seconds=(2.0, 1.0), flows=(), barrier_at_end=False
        )
        res = simulate_timestep(island_topo, RankMap.identity(2), scen)
        assert res.busy_fraction == pytest.approx((1.0, 1.0))


class TestDeterminism:
    def test_repeat_runs_identical(self, island_topo):
        flows = [Flow(i, i % 4, (i + 1 + i // 4) % 4, (i + 1) * 10**6) for i in range(12)]
        base = simulate(island_topo, RankMap.identity(4), flows)
        for _ in range(3):
            again = simulate(island_topo, RankMap.identity(4), flows)
            assert again.flow_completion == base.flow_completion

    @settings(max_examples=40, derandomize=True, deadline=None)
    @given(st.lists(st.integers(0, 2**20), min_size=1, max_size=12), st.randoms())
    def test_order_invariance(self, sizes, rnd):
        topo = preset("dgx1v")
        flows = [
            Flow(i, i % 8, (i + 1 + i % 5) % 8, b) for i, b in enumerate(sizes)
        ]
        base = simulate(topo, RankMap.identity(8), flows).flow_completion
        shuffled = list(flows)
        rnd.shuffle(shuffled)
        again = simulate(topo, RankMap.identity(8), shuffled).flow_completion
        assert again == base

    @settings(max_examples=40, derandomize=True, deadline=None)
    @given(
        st.lists(st.integers(1, 2**18), min_size=1, max_size=10),
        st.sampled_from([2, 4, 8, 1024]),
    )
    def test_scale_invariance_without_latency(self, sizes, k):
        topo = preset("dgx1v")
        cfg = SimConfig(alpha_intra=0.0, alpha_inter=0.0)
        flows = [Flow(i, i % 8, (i + 3) % 8, b) for i, b in enumerate(sizes)]
        scaled = [Flow(i, i % 8, (i + 3) % 8, b * k) for i, b in enumerate(sizes)]
        base = simulate(topo, RankMap.identity(8), flows, cfg).flow_completion
        big = simulate(topo, RankMap.identity(8), scaled, cfg).flow_completion
        for fid, t in base.items():
            assert big[fid] == pytest.approx(t * k, rel=1e-12)


class TestConservation:
    def test_event_intervals_transfer_exact_bytes(self, island_topo):
        random.seed(5)
        flows = [
            Flow(i, random.randrange(8), (random.randrange(7) + 1 + i) % 8, random.randrange(1, 10**7))
            for i in range(20)
        ]
        flows = [f for f in flows if f.src_rank != f.dst_rank]
        res = simulate(island_topo, RankMap.identity(8), flows)
        moved: dict[tuple[int, str], float] = {}
        for ev in res.events:
            key = (ev.flow_id, ev.resource)
            moved[key] = moved.get(key, 0.0) + ev.rate * (ev.t1 - ev.t0)
        by_flow: dict[int, set[str]] = {}
        for (fid, resource), total in moved.items():
            f = next(fl for fl in flows if fl.id == fid)
            assert total == pytest.approx(f.bytes, rel=1e-9, abs=1e-6)
            by_flow.setdefault(fid, set()).add(resource)
        for f in flows:
            assert len(by_flow[f.id]) == len(island_topo.route(f.src_rank, f.dst_rank))
