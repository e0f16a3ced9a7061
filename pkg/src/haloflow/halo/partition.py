"""Grid partitioning and the owned/ghost local index layout.

Each rank's local value array is laid out as its owned elements in
ascending global order followed by one slot per ghost (a remote element
some owned element touches), ghosts sorted by (owner rank, global index).
That layout is what the exchange plan's indices point into.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .grid import GlobalGrid


@dataclass
class Partition:
    """Ownership of grid elements plus the per-rank ghost layout.

    ``owner[g]`` is the owning rank of global element ``g`` (total).
    ``owned[r]`` lists rank r's globals ascending; ``ghosts[r]`` is a tuple
    of ``(global_index, owner_rank)`` sorted by (owner, global).
    """

    nranks: int
    owner: np.ndarray
    owned: tuple[np.ndarray, ...]
    ghosts: tuple[tuple[tuple[int, int], ...], ...]

    def n_owned(self, rank: int) -> int:
        return len(self.owned[rank])

    def n_ghosts(self, rank: int) -> int:
        return len(self.ghosts[rank])

    def local_size(self, rank: int) -> int:
        return self.n_owned(rank) + self.n_ghosts(rank)

    def ghost_globals(self, rank: int) -> tuple[int, ...]:
        return tuple(g for g, _o in self.ghosts[rank])


def _derive_ghosts(grid: GlobalGrid, owner: np.ndarray, owned: list[np.ndarray],
                   nranks: int) -> Partition:
    ghosts: list[tuple[tuple[int, int], ...]] = []
    for r in range(nranks):
        seen: set[int] = set()
        for g in owned[r]:
            for nb in grid.adjacency[g]:
                if owner[nb] != r:
                    seen.add(nb)
        ghosts.append(tuple(sorted(((g, int(owner[g])) for g in seen),
                                   key=lambda t: (t[1], t[0]))))
    return Partition(
        nranks=nranks,
        owner=owner,
        owned=tuple(owned),
        ghosts=tuple(ghosts),
    )


def partition_block(grid: GlobalGrid, nranks: int) -> Partition:
    """Contiguous block partition: rank r owns globals [r*B, (r+1)*B) for B = ceil(N/P).

    Trailing ranks may own fewer (or zero) elements when N is not a
    multiple of P; such ranks still take part in every collective step.
    """
    if nranks < 1:
        raise ConfigurationError("nranks must be >= 1")
    if nranks > grid.n:
        raise ConfigurationError(f"cannot split {grid.n} elements across {nranks} ranks")
    block = -(-grid.n // nranks)
    owner = np.empty(grid.n, dtype=np.int64)
    owned: list[np.ndarray] = []
    for r in range(nranks):
        lo = min(r * block, grid.n)
        hi = min(lo + block, grid.n)
        owner[lo:hi] = r
        owned.append(np.arange(lo, hi, dtype=np.int64))
    return _derive_ghosts(grid, owner, owned, nranks)
