"""Interconnect topology graphs, deterministic routing, and machine presets.

A :class:`Topology` is an undirected multigraph of nodes (devices, host
bridges, switches, NICs) whose edges carry a *per-direction* capacity in
bytes per second.  Vendor datasheets usually quote bidirectional figures;
everything in this module stores half of that, per direction, so a quoted
"50 GB/s" device link becomes a 25e9 capacity each way.

Routes between device pairs are single fixed paths.  They are derived
automatically by shortest-hop search with a deterministic tie-break (the
lexicographically smallest node sequence, lowest link index first) from
the lower-numbered endpoint, and the opposite direction is the exact
reversal, so ``route(i, j)`` and ``route(j, i)`` always mirror each other.

Presets
-------
``dgx1p`` / ``dgx1v``
    Eight devices in two fully connected four-device islands with a single
    interconnect lane per pair (20e9 per direction for the Pascal
    generation, 25e9 for Volta).  Devices in different islands have no
    direct link; traffic between them crosses the host bridges through a
    PCIe + CPU-interconnect path.  An optional ``servers`` count replicates
    the whole box and joins the copies through per-island NICs and one
    non-blocking fabric switch.
``dgx2``
    Sixteen devices, each attached to a single non-blocking switch by six
    25e9 lanes, so any device pair sees 150e9 per direction and the box
    aggregates 16 * 300e9 / 2 = 2.4e12 of total throughput.
``fat_tree_edr``
    ``nodes`` hosts with ``devices_per_node`` devices each.  Devices reach
    their host bridge over PCIe; each host owns one NIC; NICs meet at one
    switch standing in for a full-bisection fat tree.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ConfigurationError, TopologyError

# Default per-direction capacities, bytes/s.  Overridable per preset call.
NVLINK_LANE_PASCAL = 20e9
NVLINK_LANE_VOLTA = 25e9
PCIE_BW = 12e9
CPU_INTERCONNECT_BW = 8e9
IB_EDR_BW = 12e9
DEVICE_MEM_BW_PASCAL = 720e9
DEVICE_MEM_BW_VOLTA = 800e9


class NodeKind(enum.Enum):
    DEVICE = "device"
    HOST_BRIDGE = "hostbridge"
    SWITCH = "switch"
    NIC = "nic"


_KIND_ORDER = {
    NodeKind.DEVICE: 0,
    NodeKind.HOST_BRIDGE: 1,
    NodeKind.SWITCH: 2,
    NodeKind.NIC: 3,
}


@dataclass(frozen=True)
class NodeId:
    kind: NodeKind
    index: int

    def sort_key(self) -> tuple[int, int]:
        return (_KIND_ORDER[self.kind], self.index)

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.index}"


def device(i: int) -> NodeId:
    return NodeId(NodeKind.DEVICE, i)


def host_bridge(i: int) -> NodeId:
    return NodeId(NodeKind.HOST_BRIDGE, i)


def switch(i: int) -> NodeId:
    return NodeId(NodeKind.SWITCH, i)


def nic(i: int) -> NodeId:
    return NodeId(NodeKind.NIC, i)


def parse_node(text: str) -> NodeId:
    """Parse ``"device:0"`` style node names used in scenario documents."""
    try:
        kind_text, index_text = text.split(":")
        kind = NodeKind(kind_text)
        index = int(index_text)
    except (ValueError, KeyError) as exc:
        raise TopologyError(f"malformed node name {text!r}") from exc
    if index < 0:
        raise TopologyError(f"negative node index in {text!r}")
    return NodeId(kind, index)


@dataclass(frozen=True)
class Link:
    """Undirected edge with equal capacity in both directions.

    ``lane_count`` aggregates parallel physical links; the effective
    per-direction capacity is ``bw_per_dir * lane_count``.
    """

    a: NodeId
    b: NodeId
    bw_per_dir: float
    lane_count: int = 1

    def __post_init__(self):
        if self.a == self.b:
            raise TopologyError(f"link endpoints must differ, got {self.a}")
        if not (self.bw_per_dir > 0) or not math.isfinite(self.bw_per_dir):
            raise TopologyError(f"link {self.a}--{self.b} needs positive finite bandwidth")
        if self.lane_count < 1:
            raise TopologyError(f"link {self.a}--{self.b} needs lane_count >= 1")

    @property
    def capacity(self) -> float:
        return self.bw_per_dir * self.lane_count


# A hop is (link index, forward?) where forward means traversal a -> b.
Hop = tuple[int, bool]


class RankMap:
    """Mapping from simulation rank to device index.

    More than one rank may share a device (their traffic then shares that
    device's links and its memory engine).
    """

    def __init__(self, devices: Sequence[int]):
        devs = tuple(int(d) for d in devices)
        if not devs:
            raise ConfigurationError("rank map must place at least one rank")
        if any(d < 0 for d in devs):
            raise ConfigurationError("rank map device indices must be non-negative")
        self._devices = devs

    @classmethod
    def identity(cls, nranks: int) -> "RankMap":
        return cls(range(nranks))

    @property
    def nranks(self) -> int:
        return len(self._devices)

    def device_of(self, rank: int) -> int:
        if not 0 <= rank < len(self._devices):
            raise ConfigurationError(f"rank {rank} outside rank map of size {len(self._devices)}")
        return self._devices[rank]

    def __iter__(self):
        return iter(self._devices)

    def __len__(self) -> int:
        return len(self._devices)

    def __eq__(self, other) -> bool:
        return isinstance(other, RankMap) and self._devices == other._devices

    def __repr__(self) -> str:
        return f"RankMap({list(self._devices)!r})"


class Topology:
    """Immutable interconnect graph with one fixed route per device pair."""

    def __init__(
        self,
        nodes: Iterable[NodeId],
        links: Sequence[Link],
        device_mem_bw: float,
        routes: Mapping[tuple[int, int], Sequence[Hop]] | None = None,
        name: str = "",
    ):
        self.name = name
        self.nodes = frozenset(nodes)
        self.links = tuple(links)
        if not (device_mem_bw > 0) or not math.isfinite(device_mem_bw):
            raise TopologyError("device_mem_bw must be positive and finite")
        self.device_mem_bw = float(device_mem_bw)

        if not self.nodes:
            raise TopologyError("topology needs at least one node")
        for ln in self.links:
            if ln.a not in self.nodes or ln.b not in self.nodes:
                raise TopologyError(f"link {ln.a}--{ln.b} references a node not in the topology")

        self._devices = tuple(sorted((n.index for n in self.nodes if n.kind is NodeKind.DEVICE)))
        if not self._devices:
            raise TopologyError("topology needs at least one device node")

        # adjacency sorted by (neighbour sort key, link index): BFS below then
        # discovers nodes in lexicographic path order, which makes the chosen
        # shortest path deterministic.
        adj: dict[NodeId, list[tuple[NodeId, int, bool]]] = {n: [] for n in self.nodes}
        for li, ln in enumerate(self.links):
            adj[ln.a].append((ln.b, li, True))
            adj[ln.b].append((ln.a, li, False))
        for n in adj:
            adj[n].sort(key=lambda t: (t[0].sort_key(), t[1]))
        self._adj = adj

        if routes is None:
            self._routes = self._derive_routes()
        else:
            self._routes = self._check_routes(routes)
        self._path_cache: dict[tuple[NodeId, NodeId], tuple[Hop, ...] | None] = {}

    # ------------------------------------------------------------------
    # construction helpers

    def _bfs_hops(self, src: NodeId, dst: NodeId) -> tuple[Hop, ...] | None:
        """Lexicographically smallest shortest-hop path, or None if unreachable."""
        if src == dst:
            return ()
        parent: dict[NodeId, tuple[NodeId, int, bool] | None] = {src: None}
        frontier = [src]
        while frontier and dst not in parent:
            nxt: list[NodeId] = []
            for u in frontier:
                for v, li, fwd in self._adj[u]:
                    if v not in parent:
                        parent[v] = (u, li, fwd)
                        nxt.append(v)
            frontier = nxt
        if dst not in parent:
            return None
        hops: list[Hop] = []
        cur = dst
        while parent[cur] is not None:
            u, li, fwd = parent[cur]  # type: ignore[misc]
            hops.append((li, fwd))
            cur = u
        hops.reverse()
        return tuple(hops)

    def _derive_routes(self) -> dict[tuple[int, int], tuple[Hop, ...]]:
        routes: dict[tuple[int, int], tuple[Hop, ...]] = {}
        devs = self._devices
        for ai in range(len(devs)):
            for bi in range(ai + 1, len(devs)):
                i, j = devs[ai], devs[bi]
                hops = self._bfs_hops(device(i), device(j))
                if hops is None:
                    raise TopologyError(f"no path between device:{i} and device:{j}")
                routes[(i, j)] = hops
                routes[(j, i)] = tuple((li, not fwd) for li, fwd in reversed(hops))
        for i in devs:
            routes[(i, i)] = ()
        return routes

    def _check_routes(self, given) -> dict[tuple[int, int], tuple[Hop, ...]]:
        routes = {k: tuple(v) for k, v in given.items()}
        for i in self._devices:
            routes.setdefault((i, i), ())
        for ai, i in enumerate(self._devices):
            for j in self._devices[ai + 1 :]:
                if (i, j) not in routes and (j, i) not in routes:
                    raise TopologyError(f"route missing for device pair ({i}, {j})")
                if (i, j) in routes and (j, i) not in routes:
                    routes[(j, i)] = tuple((li, not f) for li, f in reversed(routes[(i, j)]))
                if (j, i) in routes and (i, j) not in routes:
                    routes[(i, j)] = tuple((li, not f) for li, f in reversed(routes[(j, i)]))
        for (i, j), hops in routes.items():
            self._validate_walk(device(i), device(j), hops)
        return routes

    def _validate_walk(self, src: NodeId, dst: NodeId, hops: Sequence[Hop]) -> None:
        cur = src
        for li, fwd in hops:
            if not 0 <= li < len(self.links):
                raise TopologyError(f"route {src}->{dst} references unknown link {li}")
            ln = self.links[li]
            head, tail = (ln.a, ln.b) if fwd else (ln.b, ln.a)
            if head != cur:
                raise TopologyError(f"route {src}->{dst} is not a connected walk at {cur}")
            cur = tail
        if cur != dst:
            raise TopologyError(f"route {src}->{dst} ends at {cur}")

    # ------------------------------------------------------------------
    # queries

    @property
    def devices(self) -> tuple[int, ...]:
        return self._devices

    @property
    def n_devices(self) -> int:
        return len(self._devices)

    def has_device(self, i: int) -> bool:
        return device(i) in self.nodes

    def route_hops(self, src: int, dst: int) -> tuple[Hop, ...]:
        try:
            return self._routes[(src, dst)]
        except KeyError:
            raise TopologyError(f"no route between device:{src} and device:{dst}") from None

    def route(self, src: int, dst: int) -> tuple[Link, ...]:
        """The links along the fixed path from ``src`` to ``dst`` (empty for src == dst)."""
        return tuple(self.links[li] for li, _ in self.route_hops(src, dst))

    def route_nodes(self, src: int, dst: int) -> tuple[NodeId, ...]:
        """Node sequence visited by route(src, dst), endpoints included."""
        return self._walk_nodes(device(src), self.route_hops(src, dst))

    def _walk_nodes(self, start: NodeId, hops: Sequence[Hop]) -> tuple[NodeId, ...]:
        seq = [start]
        for li, fwd in hops:
            ln = self.links[li]
            seq.append(ln.b if fwd else ln.a)
        return tuple(seq)

    def route_bandwidth(self, src: int, dst: int) -> float:
        """Bottleneck per-direction capacity along route(src, dst).

        For ``src == dst`` the transfer never leaves the device, so this is
        the device memory bandwidth.
        """
        if not self.has_device(src):
            raise TopologyError(f"unknown device {src}")
        if not self.has_device(dst):
            raise TopologyError(f"unknown device {dst}")
        if src == dst:
            return self.device_mem_bw
        hops = self.route_hops(src, dst)
        return min(self.links[li].capacity for li, _ in hops)

    def path_hops(self, a: NodeId, b: NodeId) -> tuple[Hop, ...]:
        """Deterministic shortest-hop path between two arbitrary nodes.

        Used for staged transfers whose segments start or end at non-device
        nodes; unlike device routes these are derived on demand.
        """
        key = (a, b)
        if key not in self._path_cache:
            self._path_cache[key] = self._bfs_hops(a, b)
        hops = self._path_cache[key]
        if hops is None:
            raise TopologyError(f"no path between {a} and {b}")
        return hops

    def nearest_host_bridge(self, dev: int) -> NodeId:
        """Closest host bridge to a device (fewest hops, lowest index on ties)."""
        if not self.has_device(dev):
            raise TopologyError(f"unknown device {dev}")
        seen = {device(dev)}
        frontier = [device(dev)]
        while frontier:
            found = sorted(
                (n for n in frontier if n.kind is NodeKind.HOST_BRIDGE),
                key=NodeId.sort_key,
            )
            if found:
                return found[0]
            nxt = []
            for u in frontier:
                for v, _li, _fwd in self._adj[u]:
                    if v not in seen:
                        seen.add(v)
                        nxt.append(v)
            frontier = nxt
        raise TopologyError(f"device:{dev} has no host bridge on its topology")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Topology)
            and self.nodes == other.nodes
            and self.links == other.links
            and self.device_mem_bw == other.device_mem_bw
            and self._routes == other._routes
        )

    def __repr__(self) -> str:
        return (
            f"Topology(name={self.name!r}, devices={self.n_devices}, "
            f"links={len(self.links)})"
        )


# ----------------------------------------------------------------------
# presets


def _dgx1(
    generation: str,
    servers: int,
    nvlink_bw: float | None,
    pcie_bw: float,
    cpu_bw: float,
    ib_bw: float,
    device_mem_bw: float | None,
) -> Topology:
    if servers < 1:
        raise ConfigurationError("servers must be >= 1")
    if generation == "p":
        lane = NVLINK_LANE_PASCAL if nvlink_bw is None else nvlink_bw
        mem = DEVICE_MEM_BW_PASCAL if device_mem_bw is None else device_mem_bw
    else:
        lane = NVLINK_LANE_VOLTA if nvlink_bw is None else nvlink_bw
        mem = DEVICE_MEM_BW_VOLTA if device_mem_bw is None else device_mem_bw

    nodes: list[NodeId] = []
    links: list[Link] = []
    for s in range(servers):
        dev0 = 8 * s
        hb0 = 2 * s
        devs = [device(dev0 + k) for k in range(8)]
        bridges = [host_bridge(hb0), host_bridge(hb0 + 1)]
        nodes.extend(devs)
        nodes.extend(bridges)
        # two fully connected 4-device islands, one lane per pair
        for island in range(2):
            members = devs[4 * island : 4 * island + 4]
            for x in range(4):
                for y in range(x + 1, 4):
                    links.append(Link(members[x], members[y], lane))
            for d in members:
                links.append(Link(d, bridges[island], pcie_bw))
        links.append(Link(bridges[0], bridges[1], cpu_bw))
        if servers > 1:
            for island in range(2):
                n = nic(hb0 + island)
                nodes.append(n)
                links.append(Link(bridges[island], n, pcie_bw))
    if servers > 1:
        fabric = switch(0)
        nodes.append(fabric)
        for s in range(servers):
            for island in range(2):
                links.append(Link(nic(2 * s + island), fabric, ib_bw))
    name = f"dgx1{generation}" + (f"x{servers}" if servers > 1 else "")
    return Topology(nodes, links, mem, name=name)


def _dgx2(nvlink_bw: float | None, device_mem_bw: float | None) -> Topology:
    lane = NVLINK_LANE_VOLTA if nvlink_bw is None else nvlink_bw
    mem = DEVICE_MEM_BW_VOLTA if device_mem_bw is None else device_mem_bw
    nodes = [device(i) for i in range(16)] + [switch(0)]
    links = [Link(device(i), switch(0), lane, lane_count=6) for i in range(16)]
    return Topology(nodes, links, mem, name="dgx2")


def _fat_tree_edr(
    nodes_count: int,
    devices_per_node: int,
    pcie_bw: float,
    ib_bw: float,
    device_mem_bw: float | None,
) -> Topology:
    if nodes_count < 1 or devices_per_node < 1:
        raise ConfigurationError("fat_tree_edr needs nodes >= 1 and devices_per_node >= 1")
    mem = DEVICE_MEM_BW_VOLTA if device_mem_bw is None else device_mem_bw
    nodes: list[NodeId] = []
    links: list[Link] = []
    multi_node = nodes_count > 1
    need_bridge = multi_node or devices_per_node > 1
    for h in range(nodes_count):
        devs = [device(h * devices_per_node + k) for k in range(devices_per_node)]
        nodes.extend(devs)
        if need_bridge:
            hb = host_bridge(h)
            nodes.append(hb)
            for d in devs:
                links.append(Link(d, hb, pcie_bw))
            if multi_node:
                n = nic(h)
                nodes.append(n)
                links.append(Link(hb, n, pcie_bw))
    if multi_node:
        fabric = switch(0)
        nodes.append(fabric)
        for h in range(nodes_count):
            links.append(Link(nic(h), fabric, ib_bw))
    return Topology(nodes, links, mem, name=f"fat_tree_edr_{nodes_count}x{devices_per_node}")


def preset(
    name: str,
    *,
    servers: int = 1,
    nodes: int = 1,
    devices_per_node: int = 1,
    nvlink_bw: float | None = None,
    pcie_bw: float = PCIE_BW,
    cpu_interconnect_bw: float = CPU_INTERCONNECT_BW,
    ib_bw: float = IB_EDR_BW,
    device_mem_bw: float | None = None,
) -> Topology:
    """Build a named machine preset.

    ``servers`` applies to the dgx1 generations, ``nodes``/``devices_per_node``
    to ``fat_tree_edr``.  Bandwidth arguments override the per-direction
    defaults; ``None`` keeps the generation default.
    """
    key = name.strip().lower().replace("-", "_")
    if key == "dgx1p":
        return _dgx1("p", servers, nvlink_bw, pcie_bw, cpu_interconnect_bw, ib_bw, device_mem_bw)
    if key == "dgx1v":
        return _dgx1("v", servers, nvlink_bw, pcie_bw, cpu_interconnect_bw, ib_bw, device_mem_bw)
    if key == "dgx2":
        if servers != 1:
            raise ConfigurationError("dgx2 preset is a single box; servers must be 1")
        return _dgx2(nvlink_bw, device_mem_bw)
    if key == "fat_tree_edr":
        return _fat_tree_edr(nodes, devices_per_node, pcie_bw, ib_bw, device_mem_bw)
    raise ConfigurationError(
        f"unknown preset {name!r}; expected one of dgx1p, dgx1v, dgx2, fat_tree_edr"
    )


def route_bandwidth(t: Topology, src: int, dst: int) -> float:
    """Module-level convenience alias for :meth:`Topology.route_bandwidth`."""
    return t.route_bandwidth(src, dst)


def from_spec(doc: Mapping) -> Topology:
    """Build a topology from its scenario-document form.

    Either ``{"preset": name, ...params}`` or an inline graph::

        {"nodes": ["device:0", ...],
         "links": [{"a": "device:0", "b": "switch:0", "gbps_per_dir": 25, "lanes": 6}, ...],
         "device_mem_bw_gbps": 800,
         "routes": [{"src": 0, "dst": 1, "links": [0, 2]}, ...]}   # optional

    Inline bandwidth figures are given in GB/s per direction.  When
    ``routes`` is omitted they are derived by shortest-hop search.
    """
    if "preset" in doc:
        kwargs = {}
        for src_key, dst_key, conv in (
            ("servers", "servers", int),
            ("nodes", "nodes", int),
            ("devices_per_node", "devices_per_node", int),
            ("nvlink_gbps", "nvlink_bw", lambda v: float(v) * 1e9),
            ("pcie_gbps", "pcie_bw", lambda v: float(v) * 1e9),
            ("cpu_interconnect_gbps", "cpu_interconnect_bw", lambda v: float(v) * 1e9),
            ("ib_gbps", "ib_bw", lambda v: float(v) * 1e9),
            ("device_mem_bw_gbps", "device_mem_bw", lambda v: float(v) * 1e9),
        ):
            if src_key in doc:
                kwargs[dst_key] = conv(doc[src_key])
        return preset(doc["preset"], **kwargs)

    try:
        node_ids = [parse_node(s) for s in doc["nodes"]]
        links = [
            Link(
                parse_node(ld["a"]),
                parse_node(ld["b"]),
                float(ld["gbps_per_dir"]) * 1e9,
                int(ld.get("lanes", 1)),
            )
            for ld in doc["links"]
        ]
        mem = float(doc.get("device_mem_bw_gbps", 800.0)) * 1e9
    except (KeyError, TypeError) as exc:
        raise TopologyError(f"malformed inline topology: {exc}") from exc

    routes = None
    if "routes" in doc:
        routes = {}
        for rd in doc["routes"]:
            hops: list[Hop] = []
            cur = device(int(rd["src"]))
            for li in rd["links"]:
                ln = links[int(li)]
                if ln.a == cur:
                    hops.append((int(li), True))
                    cur = ln.b
                elif ln.b == cur:
                    hops.append((int(li), False))
                    cur = ln.a
                else:
                    raise TopologyError(
                        f"route {rd['src']}->{rd['dst']} is not a connected walk"
                    )
            routes[(int(rd["src"]), int(rd["dst"]))] = tuple(hops)
    return Topology(node_ids, links, mem, routes=routes, name=str(doc.get("name", "inline")))
