"""Field storage, packing, the exchange itself, and the stencil driver.

The stencil is an unweighted neighbourhood mean: the next value of an owned
element is the mean of its neighbours' current values, accumulated in
ascending global-index order.  Each step reads a consistent snapshot (old
values) and writes a fresh array, so the update is independent of how
elements are grouped; that is what makes the distributed result
bit-identical to a single-rank run and the three overlap modes
bit-identical to each other.

Overlap modes mirror the two standard ways of hiding the exchange:

``NONE``
    Refresh all ghosts, then update every owned element.
``MASK_ARRAY``
    Update boundary elements (those packed for at least one peer) selected
    by a boolean mask, start the exchange with the freshly computed
    boundary values, update the interior with the mask inverted, finish
    the exchange.
``INDIRECTION_ARRAY``
    Same dance, but boundary/interior membership comes from precomputed
    index lists instead of a mask.

The overlap modes send the *new* boundary values, so they leave ghosts
valid for the next step; ``NONE`` refreshes at the top of each step
instead.  Fields track which state they are in (``ghosts_fresh``) and the
overlap modes re-synchronize stale ghosts before computing, so the modes
can be mixed freely and still agree bit for bit on owned values.

Packing is a single gather per destination: every source element is read
exactly once, and the field's ``reads`` counter advances by exactly the
packed element count so tests can audit that no mode rescans the field.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ..errors import ConfigurationError, ProtocolError, TopologyError
from ..collectives import ScheduleKind
from ..netsim import Flow, SimConfig, Staging, simulate
from ..topology import RankMap, Topology, device
from .grid import GlobalGrid
from .partition import Partition
from .plan import HaloPlan, ensure_plan
from .router import Router

__all__ = [
    "Field",
    "OverlapMode",
    "make_fields",
    "pack",
    "unpack",
    "exchange",
    "stencil_step",
    "run_stencil",
    "gather_global",
    "global_checksum",
    "staged_vs_direct_cost",
]


class OverlapMode(enum.Enum):
    NONE = "none"
    MASK_ARRAY = "mask_array"
    INDIRECTION_ARRAY = "indirection_array"


@dataclass
class Field:
    """One rank's values: owned elements first, then ghost slots.

    ``reads`` counts elements gathered by pack operations; ``ghosts_fresh``
    records whether ghost slots currently mirror the owners' values.
    """

    rank: int
    n_owned: int
    values: np.ndarray
    reads: int = 0
    ghosts_fresh: bool = False

    def owned_view(self) -> np.ndarray:
        return self.values[: self.n_owned]


def make_fields(part: Partition, init: np.ndarray | Callable[[int], float]) -> list[Field]:
    """Per-rank fields initialized from a global array or a gid -> value function."""
    fields = []
    for r in range(part.nranks):
        vals = np.zeros(part.local_size(r), dtype=np.float64)
        owned = part.owned[r]
        if callable(init):
            vals[: len(owned)] = [float(init(int(g))) for g in owned]
        else:
            src = np.asarray(init, dtype=np.float64)
            vals[: len(owned)] = src[owned]
        fields.append(Field(rank=r, n_owned=len(owned), values=vals))
    return fields


# ----------------------------------------------------------------------
# pack / unpack


def _gather(source: np.ndarray, idx: np.ndarray, f: Field) -> np.ndarray:
    f.reads += len(idx)
    return source[idx]


def pack(f: Field, plan: HaloPlan, dest: int) -> np.ndarray:
    """Gather the values destined for ``dest`` into a contiguous buffer.

    Single pass: the read counter advances by exactly the buffer length.
    """
    idx = plan.ranks[f.rank].send_index.get(dest)
    if idx is None:
        return np.empty(0, dtype=np.float64)
    return _gather(f.values, idx, f)


def unpack(f: Field, plan: HaloPlan, src: int, buffer: np.ndarray) -> None:
    """Scatter a received buffer into this rank's ghost slots for ``src``.

    Validates the length first and leaves the field untouched on mismatch.
    The owned region is never written.
    """
    slots = plan.ranks[f.rank].recv_slot.get(src)
    expect = 0 if slots is None else len(slots)
    if len(buffer) != expect:
        raise ProtocolError(
            f"rank {f.rank} got {len(buffer)} values from {src}, expected {expect}"
        )
    if expect:
        f.values[slots] = buffer


# ----------------------------------------------------------------------
# exchange rounds


def _round_targets(schedule: ScheduleKind, rank: int, nranks: int) -> list[list[int]]:
    """Per-round ordered target lists for one rank (self never appears)."""
    p = nranks
    if schedule is ScheduleKind.ROTATED_CONCURRENT:
        return [[(k + rank) % p for k in range(p) if (k + rank) % p != rank]]
    if schedule is ScheduleKind.STAGE_SERIALIZED:
        return [[(rank + k + 1) % p] for k in range(p - 1)]
    if schedule is ScheduleKind.PAIRWISE_XOR:
        if p & (p - 1) != 0:
            raise ConfigurationError(f"pairwise_xor needs a power-of-two rank count, got {p}")
        return [[rank ^ k] for k in range(1, p)]
    if schedule is ScheduleKind.LINEAR_SEQUENTIAL:
        rounds = []
        for i in range(p):
            for j in range(p):
                rounds.append([j] if (i == rank and j != rank) else [])
        return rounds
    raise ConfigurationError(f"unknown schedule kind {schedule!r}")


def _exchange_program(rank: int, source: np.ndarray, target: np.ndarray, f: Field,
                      plan: HaloPlan, schedule: ScheduleKind):
    """Generator: pack from ``source``, run the schedule's rounds, scatter into ``target``."""
    rp = plan.ranks[rank]
    nranks = plan.nranks
    received: set[int] = set()
    for targets in _round_targets(schedule, rank, nranks):
        outbox = {}
        for dst in targets:
            idx = rp.send_index.get(dst)
            if idx is not None:
                outbox[dst] = _gather(source, idx, f)
        inbox = yield outbox
        for src in sorted(inbox):
            slots = rp.recv_slot.get(src)
            buf = inbox[src]
            if slots is None or len(buf) != len(slots):
                raise ProtocolError(
                    f"rank {rank} got {len(buf)} values from {src}, expected "
                    f"{0 if slots is None else len(slots)}"
                )
            if src in received:
                raise ProtocolError(f"rank {rank} received twice from {src}")
            received.add(src)
            target[slots] = buf
    missing = set(rp.recv_slot) - received
    if missing:
        raise ProtocolError(f"rank {rank} never heard from peers {sorted(missing)}")
    return None


def exchange(
    fields: Sequence[Field],
    plan: HaloPlan,
    router: Router,
    schedule: ScheduleKind = ScheduleKind.ROTATED_CONCURRENT,
) -> Sequence[Field]:
    """Refresh every ghost slot with its owner's current value.

    The schedule only fixes the round structure and issue order; all
    schedules move the same data and end in the same state.
    """

    def program(rank: int):
        f = fields[rank]
        yield from _exchange_program(rank, f.values, f.values, f, plan, schedule)
        f.ghosts_fresh = True
        return None

    router.run(program)
    return fields


# ----------------------------------------------------------------------
# stencil

@dataclass
class _DegreeGroup:
    degree: int
    members: np.ndarray      # owned local indices, ascending
    neighbours: np.ndarray   # (len(members), degree) local indices, ascending-global per row


@dataclass
class _RankStencil:
    groups: list[_DegreeGroup]
    boundary_mask: np.ndarray             # bool over owned elements
    boundary_rows: list[np.ndarray]       # per group: rows whose member is boundary
    interior_rows: list[np.ndarray]


def _stencil_ws(grid: GlobalGrid, part: Partition, plan: HaloPlan, rank: int) -> _RankStencil:
    key = ("stencil", id(grid), rank)
    cached = plan._caches.get(key)
    if cached is not None:
        return cached

    owned = part.owned[rank]
    local_of: dict[int, int] = {int(g): i for i, g in enumerate(owned)}
    base = len(owned)
    for slot, (gid, _owner) in enumerate(part.ghosts[rank]):
        local_of[gid] = base + slot

    by_degree: dict[int, tuple[list[int], list[list[int]]]] = {}
    for loc, g in enumerate(owned):
        nbrs = grid.adjacency[int(g)]
        mem, rows = by_degree.setdefault(len(nbrs), ([], []))
        mem.append(loc)
        rows.append([local_of[nb] for nb in nbrs])
    groups = [
        _DegreeGroup(
            degree=d,
            members=np.asarray(mem, dtype=np.int64),
            neighbours=np.asarray(rows, dtype=np.int64).reshape(len(mem), d),
        )
        for d, (mem, rows) in sorted(by_degree.items())
    ]

    boundary_idx = plan.ranks[rank].boundary_locals()
    boundary_mask = np.zeros(len(owned), dtype=bool)
    boundary_mask[boundary_idx] = True
    boundary_rows = [np.flatnonzero(boundary_mask[g.members]) for g in groups]
    interior_rows = [np.flatnonzero(~boundary_mask[g.members]) for g in groups]
    ws = _RankStencil(groups, boundary_mask, boundary_rows, interior_rows)
    plan._caches[key] = ws
    return ws


def _mean_into(groups: list[_DegreeGroup], values: np.ndarray, out: np.ndarray,
               rows_per_group: list[np.ndarray] | None) -> None:
    """out[m] = mean of values[neighbours of m] for the selected members.

    The accumulation is column by column, i.e. per element strictly in
    ascending global order of its neighbours, so the float result for an
    element never depends on which other elements share the batch.
    """
    for gi, grp in enumerate(groups):
        members, nbrs = grp.members, grp.neighbours
        if rows_per_group is not None:
            rows = rows_per_group[gi]
            if len(rows) == 0:
                continue
            members = members[rows]
            nbrs = nbrs[rows]
        acc = values[nbrs[:, 0]].copy()
        for col in range(1, grp.degree):
            acc += values[nbrs[:, col]]
        out[members] = acc / grp.degree


def _rows_from_mask(groups: list[_DegreeGroup], mask: np.ndarray) -> list[np.ndarray]:
    """Row selections derived from a boolean element mask, one array per group."""
    return [np.flatnonzero(mask[g.members]) for g in groups]


def stencil_step(
    fields: Sequence[Field],
    grid: GlobalGrid,
    part: Partition,
    plan: HaloPlan,
    router: Router,
    mode: OverlapMode = OverlapMode.NONE,
    schedule: ScheduleKind = ScheduleKind.ROTATED_CONCURRENT,
) -> Sequence[Field]:
    """Advance every rank's owned values by one neighbourhood-mean step."""

    fresh = {f.ghosts_fresh for f in fields}
    if len(fresh) > 1:
        raise ProtocolError("fields disagree about ghost freshness")
    ghosts_were_fresh = fresh.pop() if fresh else True

    def program(rank: int):
        f = fields[rank]
        ws = _stencil_ws(grid, part, plan, rank)
        if mode is OverlapMode.NONE:
            yield from _exchange_program(rank, f.values, f.values, f, plan, schedule)
            new_owned = np.empty(f.n_owned, dtype=np.float64)
            _mean_into(ws.groups, f.values, new_owned, None)
            f.values[: f.n_owned] = new_owned
            f.ghosts_fresh = False
            return None

        if not ghosts_were_fresh:
            yield from _exchange_program(rank, f.values, f.values, f, plan, schedule)
        new_values = np.empty_like(f.values)
        if mode is OverlapMode.MASK_ARRAY:
            _mean_into(ws.groups, f.values, new_values, _rows_from_mask(ws.groups, ws.boundary_mask))
        else:
            _mean_into(ws.groups, f.values, new_values, ws.boundary_rows)
        yield from _exchange_program(rank, new_values, new_values, f, plan, schedule)
        if mode is OverlapMode.MASK_ARRAY:
            _mean_into(ws.groups, f.values, new_values, _rows_from_mask(ws.groups, ~ws.boundary_mask))
        else:
            _mean_into(ws.groups, f.values, new_values, ws.interior_rows)
        f.values = new_values
        f.ghosts_fresh = True
        return None

    router.run(program)
    return fields


def run_stencil(
    grid: GlobalGrid,
    nranks: int,
    steps: int,
    init: np.ndarray | Callable[[int], float],
    mode: OverlapMode = OverlapMode.NONE,
    router: Router | None = None,
    schedule: ScheduleKind = ScheduleKind.ROTATED_CONCURRENT,
) -> tuple[list[Field], Partition, HaloPlan, list[float]]:
    """Partition, plan, run ``steps`` stencil steps; returns per-step checksums."""
    from .partition import partition_block

    router = router or Router(nranks)
    part = partition_block(grid, nranks)
    plan = ensure_plan(part, router)
    fields = make_fields(part, init)
    checksums = []
    for _ in range(steps):
        stencil_step(fields, grid, part, plan, router, mode, schedule)
        checksums.append(global_checksum(fields, part))
    return fields, part, plan, checksums


def gather_global(fields: Sequence[Field], part: Partition) -> np.ndarray:
    """Owned values of all ranks assembled into global element order."""
    out = np.empty(len(part.owner), dtype=np.float64)
    for r in range(part.nranks):
        out[part.owned[r]] = fields[r].values[: fields[r].n_owned]
    return out


def global_checksum(fields: Sequence[Field], part: Partition) -> float:
    """Sum of all owned values accumulated in global element order.

    Plain left-to-right float accumulation: the fixed order makes the
    checksum reproducible digit for digit across rank counts.
    """
    total = 0.0
    for v in gather_global(fields, part):
        total += float(v)
    return total


# ----------------------------------------------------------------------
# staged vs direct cost


def staged_vs_direct_cost(
    part: Partition,
    plan: HaloPlan,
    bytes_per_element: int,
    topo: Topology,
    rank_map: RankMap | Sequence[int],
    cfg: SimConfig | None = None,
) -> tuple[float, float]:
    """Predicted exchange seconds for host-staged versus device-direct transfers.

    Direct: one single-phase set of flows sized by the plan's per-peer halo
    counts.  Staged: the same flows routed through host memory, plus a
    full-field device-to-host copy before and host-to-device copy after
    (the whole local array moves, not just the halo), each crossing the
    device's host-bridge path.  Ranks copy concurrently, so the copy walls
    are the per-phase maxima.
    """
    cfg = cfg or SimConfig()
    rm = rank_map if isinstance(rank_map, RankMap) else RankMap(rank_map)
    if rm.nranks != part.nranks:
        raise ConfigurationError(
            f"rank map has {rm.nranks} ranks but the partition has {part.nranks}"
        )
    if bytes_per_element <= 0:
        raise ConfigurationError("bytes_per_element must be positive")

    flows = []
    fid = 0
    for r in range(part.nranks):
        for peer, idx in sorted(plan.ranks[r].send_index.items()):
            if len(idx):
                flows.append(Flow(fid, r, peer, int(len(idx)) * bytes_per_element))
                fid += 1

    direct = simulate(topo, rm, flows, replace(cfg, staging=Staging.DEVICE_DIRECT)).makespan
    staged_exchange = simulate(topo, rm, flows, replace(cfg, staging=Staging.HOST_STAGED)).makespan

    copy_wall = 0.0
    for r in range(part.nranks):
        dev = rm.device_of(r)
        hb = topo.nearest_host_bridge(dev)
        hops = topo.path_hops(device(dev), hb)
        if not hops:
            raise TopologyError(f"device {dev} has no path to its host bridge")
        bw = min(topo.links[li].capacity for li, _fwd in hops)
        field_bytes = part.local_size(r) * bytes_per_element
        copy_wall = max(copy_wall, field_bytes / bw)
    staged = copy_wall + staged_exchange + copy_wall
    return staged, direct
