import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajan.core import (
    ComponentSet,
    DisjointSet,
    EdgeList,
    Frame,
    PartitionPlan,
    System,
    Trajectory,
    components_from_edges,
    dsu_components,
    dsu_find,
    dsu_union,
)
from trajan.errors import DataError, UsageError

from oracles import flood_fill_components


class TestTypes:
    def test_frame_validation(self):
        Frame([[0.0, 0.0, 0.0]])
        with pytest.raises(UsageError):
            Frame(np.zeros((0, 3)))
        with pytest.raises(UsageError):
            Frame(np.zeros((3, 2)))
        with pytest.raises(DataError):
            Frame([[np.nan, 0, 0]])

    def test_trajectory_validation(self):
        t = Trajectory(np.zeros((2, 3, 3)), id="t")
        assert t.n_frames == 2 and t.n_atoms == 3
        assert len(t.frames) == 2
        with pytest.raises(UsageError):
            Trajectory(np.zeros((0, 3, 3)))
        with pytest.raises(DataError):
            Trajectory(np.full((1, 1, 3), np.inf))

    def test_system_validation(self):
        s = System([[1, 2, 3], [4, 5, 6]], id="s")
        assert s.n_atoms == 2
        with pytest.raises(DataError):
            System([[np.inf, 0, 0]])

    def test_edgelist_invariants(self):
        e = EdgeList([0, 1], [1, 2], 3)
        assert e.n_edges == 2
        with pytest.raises(UsageError):
            EdgeList([0], [0], 2)  # self-loop
        with pytest.raises(UsageError):
            EdgeList([0, 1], [1, 0], 2)  # duplicate undirected edge
        with pytest.raises(UsageError):
            EdgeList([0], [5], 3)  # out of range

    def test_component_set_dense_ids(self):
        ComponentSet([0, 1, 0])
        with pytest.raises(UsageError):
            ComponentSet([0, 2, 0])  # gap


class TestPartitionPlan:
    def test_basic_shape(self):
        plan = PartitionPlan(128, 16)
        assert plan.blocks == 8
        assert len(plan.tasks) == 64

    def test_single_block(self):
        plan = PartitionPlan(4, 4)
        assert plan.tasks == [(0, 0)]

    def test_non_divisor_rejected(self):
        with pytest.raises(UsageError) as err:
            PartitionPlan(4, 3)
        assert "3" in str(err.value) and "4" in str(err.value)

    @given(st.integers(1, 12), st.integers(1, 12))
    def test_full_coverage(self, blocks, block):
        n = blocks * block
        plan = PartitionPlan(n, block)
        seen = set()
        for i, j in plan.tasks:
            for a in plan.block_range(i):
                for b in plan.block_range(j):
                    assert (a, b) not in seen
                    seen.add((a, b))
        assert len(seen) == n * n


class TestDisjointSet:
    def test_fresh_singletons(self):
        ds = DisjointSet(3)
        assert dsu_find(ds, 2) == 2

    def test_union_postcondition(self):
        ds = DisjointSet(3)
        assert dsu_union(ds, 0, 1) is True
        assert dsu_find(ds, 0) == dsu_find(ds, 1)

    def test_self_union_false(self):
        ds = DisjointSet(2)
        assert dsu_union(ds, 0, 0) is False

    def test_union_twice_false(self):
        ds = DisjointSet(2)
        assert dsu_union(ds, 0, 1) is True
        assert dsu_union(ds, 1, 0) is False

    def test_out_of_range(self):
        ds = DisjointSet(2)
        with pytest.raises(UsageError):
            ds.find(2)
        with pytest.raises(UsageError):
            ds.union(0, -1)

    def test_chain_partition(self):
        # unions (0,1),(1,2),(3,4) -> {0,1,2} and {3,4}
        ds = DisjointSet(5)
        for a, b in [(0, 1), (1, 2), (3, 4)]:
            ds.union(a, b)
        roots = {ds.find(x) for x in (0, 1, 2)}
        assert len(roots) == 1
        assert ds.find(3) == ds.find(4)
        assert ds.find(0) != ds.find(3)

    def test_fresh_components(self):
        assert dsu_components(DisjointSet(4)).n_components == 4

    def test_two_pairs(self):
        ds = DisjointSet(4)
        ds.union(0, 1)
        ds.union(2, 3)
        cs = dsu_components(ds)
        assert cs.assignment.tolist() == [0, 0, 1, 1]

    def test_spanning_tree_single_component(self):
        # random spanning tree of n vertices -> one component (BFS oracle)
        rng = np.random.default_rng(3)
        n = 64
        edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
        ds = DisjointSet(n)
        for a, b in edges:
            ds.union(a, b)
        oracle = flood_fill_components(edges, n)
        assert dsu_components(ds).n_components == max(oracle) + 1 == 1

    def test_random_graph_seed7_matches_flood_fill(self):
        rng = np.random.default_rng(7)
        n, p = 50, 0.05
        edges = [
            (i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p
        ]
        ds = DisjointSet(n)
        for a, b in edges:
            ds.union(a, b)
        cs = dsu_components(ds)
        oracle = flood_fill_components(edges, n)
        assert cs.assignment.tolist() == oracle
        assert cs.n_components == max(oracle) + 1

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(2, 60).flatmap(
            lambda n: st.tuples(
                st.just(n),
                st.lists(
                    st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                    max_size=120,
                ),
            )
        )
    )
    def test_matches_flood_fill_property(self, case):
        n, raw = case
        edges = [(a, b) for a, b in raw if a != b]
        ds = DisjointSet(n)
        for a, b in edges:
            ds.union(a, b)
        assert dsu_components(ds).assignment.tolist() == flood_fill_components(edges, n)

    def test_labeling_deterministic(self):
        edges = [(5, 2), (9, 1), (3, 7), (2, 9)]
        runs = []
        for _ in range(2):
            ds = DisjointSet(10)
            for a, b in edges:
                ds.union(a, b)
            runs.append(dsu_components(ds).assignment.tolist())
        assert runs[0] == runs[1]

    def test_components_from_edges(self):
        e = EdgeList([0, 2], [1, 3], 5)
        cs = components_from_edges(e)
        assert cs.assignment.tolist() == [0, 0, 1, 1, 2]
