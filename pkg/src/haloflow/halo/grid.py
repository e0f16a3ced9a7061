"""Unstructured grid descriptions and generators.

A :class:`GlobalGrid` is nothing more than an element count and a symmetric
adjacency list.  Three generators cover the test space: a ring, a periodic
quadrilateral mesh, and seeded random planar-ish graphs with bounded degree.
All of them are deterministic functions of their arguments.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from ..errors import ConfigurationError


@dataclass(frozen=True)
class GlobalGrid:
    """``adjacency[i]`` lists the neighbours of element ``i``, ascending.

    Every element must have at least one neighbour (the stencil takes a
    neighbourhood mean, which is undefined for isolated elements) and no
    element is its own neighbour.
    """

    n: int
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n < 1 or len(self.adjacency) != self.n:
            raise ConfigurationError("adjacency must list every element")
        for i, nbrs in enumerate(self.adjacency):
            if not nbrs:
                raise ConfigurationError(f"element {i} has no neighbours")
            if list(nbrs) != sorted(set(nbrs)):
                raise ConfigurationError(f"adjacency of element {i} must be ascending and unique")
            for j in nbrs:
                if not 0 <= j < self.n:
                    raise ConfigurationError(f"element {i} has out-of-range neighbour {j}")
                if j == i:
                    raise ConfigurationError(f"element {i} lists itself as neighbour")

    @property
    def max_degree(self) -> int:
        return max(len(a) for a in self.adjacency)


def _from_sets(n: int, nbrs: list[set[int]]) -> GlobalGrid:
    return GlobalGrid(n, tuple(tuple(sorted(s)) for s in nbrs))


def ring(n: int) -> GlobalGrid:
    """Cycle of ``n`` elements; each neighbours its two cyclic adjacents."""
    if n < 2:
        raise ConfigurationError("ring needs n >= 2")
    nbrs = [{(i - 1) % n, (i + 1) % n} - {i} for i in range(n)]
    return _from_sets(n, nbrs)


def quad_mesh(nx: int, ny: int) -> GlobalGrid:
    """Periodic structured mesh, 4-point stencil, row-major numbering."""
    if nx < 2 or ny < 2:
        raise ConfigurationError("quad_mesh needs nx >= 2 and ny >= 2")
    n = nx * ny
    nbrs: list[set[int]] = []
    for idx in range(n):
        x, y = idx % nx, idx // nx
        cell = {
            ((x - 1) % nx) + y * nx,
            ((x + 1) % nx) + y * nx,
            x + ((y - 1) % ny) * nx,
            x + ((y + 1) % ny) * nx,
        } - {idx}
        nbrs.append(cell)
    return _from_sets(n, nbrs)


def random_grid(n: int, max_degree: int = 8, seed: int = 0) -> GlobalGrid:
    """Connected random graph with geometric flavour and bounded degree.

    Elements get random positions in the unit square; each element first
    attaches to its nearest already-placed element with spare degree (which
    guarantees connectivity), then the shortest remaining candidate edges
    are added while both endpoints stay under ``max_degree``.  Everything
    is driven by one seeded generator, so equal arguments give equal grids.
    """
    if n < 2:
        raise ConfigurationError("random_grid needs n >= 2")
    if max_degree < 2:
        raise ConfigurationError("random_grid needs max_degree >= 2")
    rng = random.Random(seed)
    pos = [(rng.random(), rng.random()) for _ in range(n)]

    def dist2(i: int, j: int) -> float:
        dx = pos[i][0] - pos[j][0]
        dy = pos[i][1] - pos[j][1]
        return dx * dx + dy * dy

    nbrs: list[set[int]] = [set() for _ in range(n)]

    def connect(i: int, j: int) -> None:
        nbrs[i].add(j)
        nbrs[j].add(i)

    # spanning attachment: node i joins its nearest predecessor with room
    for i in range(1, n):
        candidates = [j for j in range(i) if len(nbrs[j]) < max_degree]
        # degree budget: i predecessors hold at most 2*(i-1) edge endpoints,
        # so someone always has room while max_degree >= 2
        j = min(candidates, key=lambda j: (dist2(i, j), j))
        connect(i, j)

    # densify with the shortest remaining edges, degree-capped
    edges = sorted(
        ((dist2(i, j), i, j) for i in range(n) for j in range(i + 1, n) if j not in nbrs[i]),
        key=lambda t: (t[0], t[1], t[2]),
    )
    budget = 2 * n  # extra edges beyond the tree; keeps the graph sparse
    added = 0
    for _d, i, j in edges:
        if added >= budget:
            break
        if len(nbrs[i]) < max_degree and len(nbrs[j]) < max_degree:
            connect(i, j)
            added += 1
    return _from_sets(n, nbrs)
