"""Deterministic flow-level interconnect simulation.

Transfers are modelled as fluid flows instead of packets.  Within one phase
every flow follows a fixed path; each link direction splits its capacity
equally among the flows currently crossing it, and a flow progresses at the
smallest share it gets along its path.  Rates are recomputed only when a
flow (or one leg of a staged flow) completes, which keeps the simulation a
short sequence of exact rational steps: progressive filling rather than a
full max-min fixed point.

A flow's completion time is its per-message latency (``alpha``) plus the
fluid transfer time, so a flow alone on its route finishes at exactly
``alpha + bytes / route_bandwidth``.  Zero-byte flows cost only latency.

Phases run strictly one after the other: phase ``p + 1`` starts at the
instant every flow of phase ``p`` has finished.

Self transfers (both ranks on one device) never touch the network; they
share the device's memory engine at ``device_mem_bw``.  In host-staged
mode a device-to-device transfer is broken into store-and-forward legs:
up to the source host bridge, one host-memory copy per bridge visited,
across to the destination bridge, and down to the device.  Host-memory
copies at one bridge share a ``host_mem_bw`` engine the same way links
share capacity.

Everything is pure float arithmetic over sorted containers, so repeated
runs are byte-identical and reordering the input flow list changes no
completion time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .errors import SimulationError
from .topology import NodeId, NodeKind, RankMap, Topology, device

__all__ = [
    "Flow",
    "Staging",
    "SimConfig",
    "FlowInterval",
    "SimResult",
    "TimestepScenario",
    "simulate",
    "simulate_timestep",
]


@dataclass(frozen=True)
class Flow:
    """One point-to-point transfer of ``bytes`` payload in a given phase."""

    id: int
    src_rank: int
    dst_rank: int
    bytes: int
    phase: int = 0


class Staging(enum.Enum):
    DEVICE_DIRECT = "device_direct"
    HOST_STAGED = "host_staged"


@dataclass(frozen=True)
class SimConfig:
    """Latency and staging knobs for one simulation run.

    ``alpha_intra`` applies to paths that stay inside one server,
    ``alpha_inter`` to paths crossing a NIC.  ``host_mem_bw`` is the
    per-bridge copy-engine bandwidth used by host-staged transfers.
    """

    alpha_intra: float = 1e-6
    alpha_inter: float = 1e-5
    staging: Staging = Staging.DEVICE_DIRECT
    host_mem_bw: float = 50e9
    collect_events: bool = True

    def __post_init__(self):
        if self.alpha_intra < 0 or self.alpha_inter < 0:
            raise SimulationError("latencies must be non-negative")
        if not (self.host_mem_bw > 0) or not math.isfinite(self.host_mem_bw):
            raise SimulationError("host_mem_bw must be positive and finite")


@dataclass(frozen=True)
class FlowInterval:
    """One constant-rate slice of a flow on one resource, for replay checks."""

    t0: float
    t1: float
    flow_id: int
    resource: str
    rate: float


@dataclass
class SimResult:
    flow_completion: dict[int, float]
    phase_completion: list[float]
    makespan: float
    busy_seconds: list[float]
    busy_fraction: list[float]
    link_peak_utilization: dict[str, float]
    events: list[FlowInterval] = field(default_factory=list)


@dataclass(frozen=True)
class TimestepScenario:
    """One application step: per-rank compute followed by a communication phase."""

    compute_seconds: tuple[float, ...]
    flows: tuple[Flow, ...] = ()
    barrier_at_end: bool = True

    def __init__(self, compute_seconds, flows=(), barrier_at_end=True):
        object.__setattr__(self, "compute_seconds", tuple(float(c) for c in compute_seconds))
        object.__setattr__(self, "flows", tuple(flows))
        object.__setattr__(self, "barrier_at_end", bool(barrier_at_end))


# ----------------------------------------------------------------------
# leg compilation

_LATENCY = 0
_FLUID = 1

# resource keys: ("link", index, forward) | ("devmem", device) | ("hostmem", bridge)


@dataclass
class _Leg:
    kind: int
    remaining: float          # seconds for latency legs, bytes for fluid legs
    resources: tuple = ()


class _FlowState:
    __slots__ = ("flow", "legs", "leg_idx", "remaining", "rate", "dt")

    def __init__(self, flow: Flow, legs: list[_Leg]):
        self.flow = flow
        self.legs = legs
        self.leg_idx = 0
        self.remaining = legs[0].remaining if legs else 0.0
        self.rate = 0.0
        self.dt = 0.0

    def current(self) -> _Leg:
        return self.legs[self.leg_idx]


def _resource_name(topo: Topology, key: tuple) -> str:
    if key[0] == "link":
        ln = topo.links[key[1]]
        a, b = (ln.a, ln.b) if key[2] else (ln.b, ln.a)
        return f"{a}->{b}"
    if key[0] == "devmem":
        return f"devmem:device:{key[1]}"
    return f"hostmem:hostbridge:{key[1]}"


def _link_resources(hops) -> tuple:
    return tuple(("link", li, fwd) for li, fwd in hops)


def _crosses_nic(topo: Topology, start: NodeId, hops) -> bool:
    cur = start
    for li, fwd in hops:
        ln = topo.links[li]
        cur = ln.b if fwd else ln.a
        if cur.kind is NodeKind.NIC:
            return True
    return False


def _compile_flow(topo: Topology, rm: RankMap, f: Flow, cfg: SimConfig,
                  caps: dict) -> list[_Leg]:
    if f.bytes < 0:
        raise SimulationError(f"flow {f.id} has negative size")
    src_dev = rm.device_of(f.src_rank)
    dst_dev = rm.device_of(f.dst_rank)
    if not topo.has_device(src_dev) or not topo.has_device(dst_dev):
        raise SimulationError(
            f"flow {f.id} maps to device {src_dev} or {dst_dev} absent from the topology"
        )

    legs: list[_Leg] = []
    inter_node = False
    nbytes = float(f.bytes)

    if src_dev == dst_dev:
        if f.bytes > 0:
            key = ("devmem", src_dev)
            caps.setdefault(key, topo.device_mem_bw)
            legs.append(_Leg(_FLUID, nbytes, (key,)))
    elif cfg.staging is Staging.DEVICE_DIRECT:
        hops = topo.route_hops(src_dev, dst_dev)
        inter_node = _crosses_nic(topo, device(src_dev), hops)
        if f.bytes > 0:
            res = _link_resources(hops)
            for key in res:
                caps.setdefault(key, topo.links[key[1]].capacity)
            legs.append(_Leg(_FLUID, nbytes, res))
    else:
        hb_s = topo.nearest_host_bridge(src_dev)
        hb_d = topo.nearest_host_bridge(dst_dev)
        up = topo.path_hops(device(src_dev), hb_s)
        down = topo.path_hops(hb_d, device(dst_dev))
        across = topo.path_hops(hb_s, hb_d) if hb_s != hb_d else ()
        inter_node = (
            _crosses_nic(topo, device(src_dev), up)
            or _crosses_nic(topo, hb_s, across)
            or _crosses_nic(topo, hb_d, down)
        )
        if f.bytes > 0:
            segments: list[tuple] = [_link_resources(up), (("hostmem", hb_s.index),)]
            if hb_s != hb_d:
                segments.append(_link_resources(across))
                segments.append((("hostmem", hb_d.index),))
            segments.append(_link_resources(down))
            for res in segments:
                if not res:
                    continue
                for key in res:
                    caps.setdefault(
                        key,
                        cfg.host_mem_bw if key[0] == "hostmem" else topo.links[key[1]].capacity,
                    )
                legs.append(_Leg(_FLUID, nbytes, res))

    alpha = cfg.alpha_inter if inter_node else cfg.alpha_intra
    if alpha > 0:
        legs.insert(0, _Leg(_LATENCY, alpha))
    return legs


# ----------------------------------------------------------------------
# event loop


def _run_phase(
    topo: Topology,
    t0: float,
    states: list[_FlowState],
    caps: dict,
    peak: dict[str, float],
    events: list[FlowInterval] | None,
) -> tuple[float, dict[int, float]]:
    """Run one phase to completion; returns (end time, completion per flow id)."""
    done: dict[int, float] = {}
    active: list[_FlowState] = []
    for st in states:
        if st.legs:
            active.append(st)
        else:
            done[st.flow.id] = t0

    t = t0
    while active:
        counts: dict[tuple, int] = {}
        for st in active:
            leg = st.current()
            if leg.kind == _FLUID:
                for key in leg.resources:
                    counts[key] = counts.get(key, 0) + 1

        for st in active:
            leg = st.current()
            if leg.kind == _LATENCY:
                st.rate = 0.0
                st.dt = st.remaining
            else:
                st.rate = min(caps[key] / counts[key] for key in leg.resources)
                st.dt = st.remaining / st.rate

        dt = min(st.dt for st in active)

        # utilization bookkeeping before advancing
        used: dict[tuple, float] = {}
        for st in active:
            leg = st.current()
            if leg.kind == _FLUID:
                for key in leg.resources:
                    used[key] = used.get(key, 0.0) + st.rate
        for key, total in used.items():
            name = _resource_name(topo, key)
            util = total / caps[key]
            if util > peak.get(name, 0.0):
                peak[name] = util
        if events is not None and dt > 0.0:
            for st in active:
                leg = st.current()
                if leg.kind == _FLUID:
                    for key in leg.resources:
                        events.append(
                            FlowInterval(t, t + dt, st.flow.id, _resource_name(topo, key), st.rate)
                        )

        t = t + dt
        still: list[_FlowState] = []
        for st in active:
            if st.dt == dt:
                st.remaining = 0.0
            elif st.current().kind == _LATENCY:
                st.remaining -= dt
            else:
                st.remaining -= st.rate * dt
            if st.remaining <= 0.0:
                st.leg_idx += 1
                if st.leg_idx >= len(st.legs):
                    done[st.flow.id] = t
                    continue
                st.remaining = st.current().remaining
            still.append(st)
        active = still
    return t, done


def _validate_flows(rm: RankMap, flows: Sequence[Flow]) -> list[list[Flow]]:
    """Check ids, ranks and phase numbering; returns flows grouped by phase."""
    ids = set()
    for f in flows:
        if f.id in ids:
            raise SimulationError(f"duplicate flow id {f.id}")
        ids.add(f.id)
        rm.device_of(f.src_rank)
        rm.device_of(f.dst_rank)
        if f.phase < 0:
            raise SimulationError(f"flow {f.id} has negative phase")
    phases = sorted({f.phase for f in flows})
    if phases and phases != list(range(phases[-1] + 1)):
        raise SimulationError(f"phases must form a contiguous 0..k range, got {phases}")
    grouped: list[list[Flow]] = [[] for _ in phases]
    for f in flows:
        grouped[f.phase].append(f)
    for g in grouped:
        g.sort(key=lambda f: f.id)
    return grouped


def simulate(
    topo: Topology,
    rank_map: RankMap | Sequence[int],
    flows: Sequence[Flow],
    cfg: SimConfig | None = None,
) -> SimResult:
    """Run all phases of ``flows`` and return completion times and load stats.

    Busy seconds for a rank count every instant at which the rank has at
    least one of its own flows (as source or destination) still in flight;
    the fraction divides by the makespan.
    """
    cfg = cfg or SimConfig()
    rm = rank_map if isinstance(rank_map, RankMap) else RankMap(rank_map)
    grouped = _validate_flows(rm, flows)

    caps: dict = {}
    peak: dict[str, float] = {}
    events: list[FlowInterval] | None = [] if cfg.collect_events else None
    completion: dict[int, float] = {}
    phase_completion: list[float] = []

    t = 0.0
    rank_busy = [0.0] * rm.nranks
    for phase_flows in grouped:
        states = [_FlowState(f, _compile_flow(topo, rm, f, cfg, caps)) for f in phase_flows]
        t_next, done = _run_phase(topo, t, states, caps, peak, events)
        completion.update(done)
        # one contiguous busy interval per rank per phase: every flow of the
        # phase starts at the phase start, so the union is just the max end.
        ends: dict[int, float] = {}
        for f in phase_flows:
            end = done[f.id]
            for r in (f.src_rank, f.dst_rank):
                if end > ends.get(r, t):
                    ends[r] = end
        for r, end in ends.items():
            rank_busy[r] += end - t
        phase_completion.append(t_next)
        t = t_next

    makespan = t
    fractions = [b / makespan if makespan > 0 else 0.0 for b in rank_busy]
    return SimResult(
        flow_completion=completion,
        phase_completion=phase_completion,
        makespan=makespan,
        busy_seconds=rank_busy,
        busy_fraction=fractions,
        link_peak_utilization=peak,
        events=events if events is not None else [],
    )


def simulate_timestep(
    topo: Topology,
    rank_map: RankMap | Sequence[int],
    scenario: TimestepScenario,
    cfg: SimConfig | None = None,
) -> SimResult:
    """Simulate compute followed by communication for one application step.

    Every rank computes for its own ``compute_seconds`` entry; the
    communication phase starts once the slowest rank has finished (the
    data dependency acts as a barrier in front of the collective).  With
    ``barrier_at_end`` the step ends for everyone at the global makespan
    and busy fractions divide by it; without it each rank's fraction
    divides by its own finish time.
    """
    cfg = cfg or SimConfig()
    rm = rank_map if isinstance(rank_map, RankMap) else RankMap(rank_map)
    compute = scenario.compute_seconds
    if len(compute) != rm.nranks:
        raise SimulationError(
            f"compute_seconds has {len(compute)} entries for {rm.nranks} ranks"
        )
    for c in compute:
        if c < 0 or not math.isfinite(c):
            raise SimulationError("compute seconds must be non-negative and finite")

    t0 = max(compute, default=0.0)
    comm = simulate(topo, rm, scenario.flows, cfg)

    completion = {fid: t0 + tc for fid, tc in comm.flow_completion.items()}
    phase_completion = [t0 + pc for pc in comm.phase_completion]
    events = [
        FlowInterval(iv.t0 + t0, iv.t1 + t0, iv.flow_id, iv.resource, iv.rate)
        for iv in comm.events
    ]
    makespan = t0 + comm.makespan

    busy = [compute[r] + comm.busy_seconds[r] for r in range(rm.nranks)]
    if scenario.barrier_at_end:
        fractions = [b / makespan if makespan > 0 else 0.0 for b in busy]
    else:
        own_end = []
        for r in range(rm.nranks):
            end = compute[r]
            for f in scenario.flows:
                if r in (f.src_rank, f.dst_rank):
                    end = max(end, completion[f.id])
            own_end.append(end)
        fractions = [
            busy[r] / own_end[r] if own_end[r] > 0 else 0.0 for r in range(rm.nranks)
        ]
    return SimResult(
        flow_completion=completion,
        phase_completion=phase_completion,
        makespan=makespan,
        busy_seconds=busy,
        busy_fraction=fractions,
        link_peak_utilization=dict(comm.link_peak_utilization),
        events=events,
    )
