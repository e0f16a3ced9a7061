"""Grid builders and block partitioning."""

import numpy as np
import pytest

from haloflow import ConfigurationError
from haloflow.halo import GlobalGrid, partition_block, quad_mesh, random_grid, ring


class TestGridValidation:
    def test_rows_must_be_sorted_unique_in_range(self):
        with pytest.raises(ConfigurationError):
            GlobalGrid(3, ((1, 2), (0, 0), (0, 1)))
        with pytest.raises(ConfigurationError):
            GlobalGrid(3, ((2, 1), (0,), (0,)))
        with pytest.raises(ConfigurationError):
            GlobalGrid(3, ((3,), (0,), (1,)))

    def test_no_self_neighbours_or_empty_rows(self):
        with pytest.raises(ConfigurationError):
            GlobalGrid(2, ((0,), (0,)))
        with pytest.raises(ConfigurationError):
            GlobalGrid(2, ((1,), ()))


class TestBuilders:
    def test_ring_neighbours(self):
        g = ring(5)
        assert g.adjacency[0] == (1, 4)
        assert g.adjacency[2] == (1, 3)
        assert g.max_degree == 2

    def test_two_element_ring_collapses_duplicates(self):
        g = ring(2)
        assert g.adjacency == ((1,), (0,))

    def test_quad_mesh_periodic_neighbours(self):
        g = quad_mesh(3, 3)
        # element 4 is the centre: all four axis neighbours
        assert g.adjacency[4] == (1, 3, 5, 7)
        # element 0 wraps both ways
        assert g.adjacency[0] == (1, 2, 3, 6)
        assert g.max_degree == 4

    def test_tiny_quad_mesh_deduplicates_wrap(self):
        g = quad_mesh(2, 2)
        assert g.adjacency[0] == (1, 2)
        assert g.max_degree == 2

    def test_size_floors(self):
        with pytest.raises(ConfigurationError):
            ring(1)
        with pytest.raises(ConfigurationError):
            quad_mesh(1, 4)
        with pytest.raises(ConfigurationError):
            random_grid(1, 2, seed=0)
        with pytest.raises(ConfigurationError):
            random_grid(8, 1, seed=0)


class TestRandomGrid:
    def test_deterministic_per_seed(self):
        a = random_grid(40, 5, seed=3)
        b = random_grid(40, 5, seed=3)
        assert a.adjacency == b.adjacency

    def test_seeds_differ(self):
        a = random_grid(40, 5, seed=3)
        b = random_grid(40, 5, seed=4)
        assert a.adjacency != b.adjacency

    @pytest.mark.parametrize("seed", [0, 1, 2, 9, 17])
    def test_connected_within_degree_cap(self, seed):
        g = random_grid(60, 4, seed=seed)
        assert g.max_degree <= 4
        seen = {0}
        frontier = [0]
        while frontier:
            nxt = []
            for i in frontier:
                for j in g.adjacency[i]:
                    if j not in seen:
                        seen.add(j)
                        nxt.append(j)
            frontier = nxt
        assert len(seen) == 60

    def test_symmetry(self):
        g = random_grid(50, 6, seed=11)
        for i, row in enumerate(g.adjacency):
            for j in row:
                assert i in g.adjacency[j]


class TestPartition:
    def test_block_sizes_ceil_then_remainder(self):
        part = partition_block(ring(10), 4)
        assert [part.n_owned(r) for r in range(4)] == [3, 3, 3, 1]
        assert part.owner.tolist() == [0] * 3 + [1] * 3 + [2] * 3 + [3]

    def test_owned_lists_match_owner_array(self):
        part = partition_block(quad_mesh(4, 4), 3)
        for r in range(3):
            assert np.array_equal(np.flatnonzero(part.owner == r), part.owned[r])

    def test_ghosts_sorted_and_foreign(self):
        part = partition_block(quad_mesh(6, 6), 4)
        for r in range(4):
            gl = part.ghosts[r]
            assert gl == tuple(sorted(gl, key=lambda t: (t[1], t[0])))
            assert all(owner != r for _, owner in gl)
            assert all(part.owner[g] == owner for g, owner in gl)

    def test_more_ranks_than_elements_rejected(self):
        with pytest.raises(ConfigurationError):
            partition_block(ring(4), 8)

    def test_trailing_ranks_may_be_empty(self):
        part = partition_block(ring(9), 8)
        assert [part.n_owned(r) for r in range(8)] == [2, 2, 2, 2, 1, 0, 0, 0]

    def test_known_halo_fraction(self):
        part = partition_block(quad_mesh(160, 160), 4)
        ghosts = sum(part.n_ghosts(r) for r in range(4))
        assert ghosts / 25600 == 0.05
