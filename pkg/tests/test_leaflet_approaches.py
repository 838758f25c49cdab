"""The four leaflet architectures against ground truth and each other."""

import numpy as np
import pytest

from trajan import io as tio
from trajan.core import System, components_from_edges
from trajan.engine import BACKEND_IN_PROCESS, Engine, EngineConfig
from trajan.errors import ResourceError, UsageError
from trajan.leaflet import (
    edges_pairwise_block,
    leaflet_approach1,
    leaflet_approach2,
    leaflet_approach3,
    leaflet_approach4,
    run_approach,
)

from oracles import flood_fill_components


@pytest.fixture(scope="module")
def pool():
    with Engine(EngineConfig(backend=BACKEND_IN_PROCESS, workers=2)) as eng:
        yield eng


def _two_pair_system():
    # two tight pairs far apart: {0,1} and {2,3}
    pos = np.array(
        [[0, 0, 0], [0.5, 0, 0], [100, 0, 0], [100.5, 0, 0]], dtype=np.float32
    )
    return System(pos, id="two-pairs")


class TestTinySystems:
    @pytest.mark.parametrize("approach", [1, 2, 3, 4])
    def test_two_pair_system(self, pool, approach):
        cs = run_approach(approach, _two_pair_system(), cutoff=1.0, block=2, engine=pool)
        assert cs.n_components == 2
        assert cs.assignment.tolist() == [0, 0, 1, 1]

    @pytest.mark.parametrize("approach", [1, 2, 3, 4])
    def test_tiny_bilayer_ground_truth(self, pool, approach):
        cutoff = 1.5
        spec = tio.BilayerSpec(4, 10.0, 1.0, 0.05, seed=5)
        system, truth = tio.generate_bilayer(spec, cutoff=cutoff)
        cs = run_approach(approach, system, cutoff=cutoff, block=4, engine=pool)
        assert cs == truth


class TestCrossApproachEquivalence:
    def test_seeded_bilayer_all_identical(self, pool):
        cutoff = 1.5
        spec = tio.BilayerSpec(2500, 12.0, 1.0, 0.15, seed=77)
        system, truth = tio.generate_bilayer(spec, cutoff=cutoff)
        results = {
            a: run_approach(a, system, cutoff=cutoff, block=1000, engine=pool)
            for a in (1, 2, 3, 4)
        }
        assert results[1] == results[2] == results[3] == results[4]
        assert results[1] == truth

    def test_matches_serial_reference(self, pool):
        rng = np.random.default_rng(55)
        pos = (rng.random((240, 3)) * 6.0).astype(np.float32)
        system = System(pos, id="random-cloud")
        cutoff = 0.8
        serial = components_from_edges(
            edges_pairwise_block(pos, 0, pos, 0, cutoff, n_vertices=240)
        )
        oracle = flood_fill_components(
            list(edges_pairwise_block(pos, 0, pos, 0, cutoff, n_vertices=240).as_set()),
            240,
        )
        assert serial.assignment.tolist() == oracle
        for a in (1, 2, 3, 4):
            cs = run_approach(a, system, cutoff=cutoff, block=60, engine=pool)
            assert cs == serial, f"approach {a} diverged"

    def test_block_size_invariance(self, pool):
        cutoff = 1.5
        spec = tio.BilayerSpec(360, 10.0, 1.0, 0.1, seed=31)
        system, _ = tio.generate_bilayer(spec, cutoff=cutoff)
        reference = leaflet_approach2(system, cutoff, 720, pool)
        for block in (90, 144, 240):
            for a in (1, 2, 3, 4):
                assert run_approach(a, system, cutoff, block, pool) == reference

    def test_worker_count_invariance(self):
        cutoff = 1.5
        spec = tio.BilayerSpec(200, 10.0, 1.0, 0.1, seed=41)
        system, _ = tio.generate_bilayer(spec, cutoff=cutoff)
        outcomes = []
        for workers in (1, 3):
            with Engine(EngineConfig(backend=BACKEND_IN_PROCESS, workers=workers)) as eng:
                outcomes.append(
                    [run_approach(a, system, cutoff, 100, eng).assignment.tolist()
                     for a in (1, 2, 3, 4)]
                )
        assert outcomes[0] == outcomes[1]

    def test_shared_tree_variant_agrees(self, pool):
        cutoff = 1.5
        spec = tio.BilayerSpec(300, 10.0, 1.0, 0.1, seed=61)
        system, truth = tio.generate_bilayer(spec, cutoff=cutoff)
        per_task_tree = leaflet_approach4(system, cutoff, 200, pool)
        shared = leaflet_approach4(system, cutoff, 200, pool, shared_tree=True)
        assert per_task_tree == shared == truth


class TestShuffleAccounting:
    def test_partial_components_shuffle_less_than_edges(self, pool):
        # dense enough that the edge list dwarfs the merged partials
        cutoff = 2.0
        spec = tio.BilayerSpec(1800, 14.0, 1.0, 0.1, seed=99)
        system, _ = tio.generate_bilayer(spec, cutoff=cutoff)

        leaflet_approach2(system, cutoff, 600, pool)
        bytes2 = pool.records[-1].bytes_shuffled
        leaflet_approach3(system, cutoff, 600, pool)
        bytes3 = pool.records[-1].bytes_shuffled
        edges = edges_pairwise_block(
            system.positions, 0, system.positions, 0, cutoff
        ).n_edges
        assert edges > system.n_atoms
        assert bytes3 <= bytes2

    def test_edge_bytes_account_exactly(self, pool):
        system = _two_pair_system()
        leaflet_approach2(system, 1.0, 2, pool)
        # 2 edges x 8 bytes each
        assert pool.records[-1].bytes_shuffled == 16


class TestErrors:
    def test_bad_cutoff(self, pool):
        with pytest.raises(UsageError):
            leaflet_approach1(_two_pair_system(), 0.0, 2, pool)

    def test_bad_block(self, pool):
        with pytest.raises(UsageError):
            leaflet_approach2(_two_pair_system(), 1.0, 3, pool)

    def test_resource_error_names_approach(self):
        spec = tio.BilayerSpec(512, 10.0, 1.0, 0.1, seed=1)
        system, _ = tio.generate_bilayer(spec)
        cfg = EngineConfig(backend=BACKEND_IN_PROCESS, workers=1, memory_budget=2048)
        with Engine(cfg) as eng:
            with pytest.raises(ResourceError, match="approach-1"):
                leaflet_approach1(system, 1.5, 256, eng)
            with pytest.raises(ResourceError, match="approach-2"):
                leaflet_approach2(system, 1.5, 512, eng)
