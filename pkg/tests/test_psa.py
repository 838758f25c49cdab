import math

import numpy as np
import pytest

from trajan import io as tio
from trajan.core import Trajectory
from trajan.engine import Engine, EngineConfig
from trajan.errors import TaskFailure, UsageError
from trajan.psa import (
    DistanceMatrix,
    d_rms,
    hausdorff_early_break,
    hausdorff_naive,
    partition_2d,
    psa_matrix,
)

from oracles import scalar_d_rms, scalar_hausdorff


def _traj(frames, id=""):
    return Trajectory(np.asarray(frames, dtype=np.float32), id=id)


def _single_atom_traj(xs, id=""):
    return _traj([[[x, 0.0, 0.0]] for x in xs], id=id)


class TestDRms:
    def test_identical_frames_zero(self):
        f = np.random.default_rng(0).random((7, 3)).astype(np.float32)
        assert d_rms(f, f) == 0.0

    def test_pythagorean_single_atom(self):
        assert d_rms([[0, 0, 0]], [[3, 4, 0]]) == 5.0

    def test_two_atom_hand_computed(self):
        a = [[0, 0, 0], [1, 0, 0]]
        b = [[0, 0, 0], [3, 0, 0]]
        # sqrt((0 + 4) / 2) = sqrt(2)
        assert d_rms(a, b) == pytest.approx(math.sqrt(2), rel=1e-15)
        assert d_rms(a, b) == pytest.approx(scalar_d_rms(a, b), rel=1e-15)

    def test_mismatched_atoms(self):
        with pytest.raises(UsageError):
            d_rms([[0, 0, 0]], [[0, 0, 0], [1, 1, 1]])

    def test_against_scalar_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            a = rng.random((9, 3)).astype(np.float32) * 5
            b = rng.random((9, 3)).astype(np.float32) * 5
            assert d_rms(a, b) == pytest.approx(scalar_d_rms(a, b), rel=1e-13)


class TestHausdorff:
    def test_identity(self):
        t = tio.generate_trajectory(4, 6, seed=2)
        assert hausdorff_naive(t, t) == 0.0
        assert hausdorff_early_break(t, t) == 0.0

    def test_directed_asymmetry_example(self):
        # T1 at x = 0, 1; T2 at x = 0, 3: h(T1->T2) = 1, h(T2->T1) = 2
        t1 = _single_atom_traj([0.0, 1.0])
        t2 = _single_atom_traj([0.0, 3.0])
        assert hausdorff_naive(t1, t2) == 2.0
        assert hausdorff_early_break(t1, t2) == 2.0

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            a = _traj(rng.random((5, 4, 3)) * 3)
            b = _traj(rng.random((7, 4, 3)) * 3)
            assert hausdorff_naive(a, b) == hausdorff_naive(b, a)
            assert hausdorff_early_break(a, b) == hausdorff_early_break(b, a)

    def test_mismatched_atoms(self):
        a = tio.generate_trajectory(2, 3, seed=0)
        b = tio.generate_trajectory(2, 4, seed=0)
        with pytest.raises(UsageError):
            hausdorff_naive(a, b)
        with pytest.raises(UsageError):
            hausdorff_early_break(a, b)

    def test_naive_matches_scalar_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(15):
            a = rng.random((4, 5, 3)).astype(np.float32) * 4
            b = rng.random((6, 5, 3)).astype(np.float32) * 4
            expected = scalar_hausdorff(a, b)
            got = hausdorff_naive(_traj(a), _traj(b))
            assert got == pytest.approx(expected, rel=1e-12)

    def test_early_break_bit_identical_to_naive(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            a = _traj(rng.random((rng.integers(1, 9), 6, 3)) * 5)
            b = _traj(rng.random((rng.integers(1, 9), 6, 3)) * 5)
            assert hausdorff_early_break(a, b) == hausdorff_naive(a, b)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            a, b, c = (
                _traj(rng.random((4, 3, 3)) * 2) for _ in range(3)
            )
            hab = hausdorff_naive(a, b)
            hbc = hausdorff_naive(b, c)
            hac = hausdorff_naive(a, c)
            assert hac <= hab + hbc + 1e-9


class TestPartition2d:
    def test_reference_shape(self):
        plan = partition_2d(128, 16)
        assert plan.blocks == 8
        assert len(plan.tasks) == 64

    def test_whole_as_one(self):
        assert len(partition_2d(4, 4).tasks) == 1

    def test_non_divisor(self):
        with pytest.raises(UsageError):
            partition_2d(4, 3)


@pytest.fixture(scope="module")
def local_engine():
    with Engine(EngineConfig(backend="in-process", workers=2)) as eng:
        yield eng


class TestPsaMatrix:
    def test_two_identical_trajectories(self, local_engine):
        t = tio.generate_trajectory(3, 5, seed=8, id="a")
        t2 = Trajectory(t.positions.copy(), id="b")
        m = psa_matrix([t, t2], block=1, engine=local_engine)
        assert m.values.tolist() == [[0.0, 0.0], [0.0, 0.0]]
        assert m.labels == ["a", "b"]

    def test_matches_serial_double_loop(self, local_engine):
        trajs = tio.generate_ensemble(8, 4, 6, seed=3)
        m = psa_matrix(trajs, block=2, engine=local_engine)
        for i in range(8):
            for j in range(8):
                expected = hausdorff_naive(trajs[i], trajs[j])
                assert m.values[i, j] == expected

    def test_block_invariance(self, local_engine):
        trajs = tio.generate_ensemble(4, 3, 5, seed=9)
        mats = [
            psa_matrix(trajs, block=b, engine=local_engine).values
            for b in (1, 2, 4)
        ]
        assert np.array_equal(mats[0], mats[1])
        assert np.array_equal(mats[0], mats[2])

    def test_variant_equality(self, local_engine):
        trajs = tio.generate_ensemble(4, 5, 4, seed=13)
        naive = psa_matrix(trajs, block=2, engine=local_engine, variant="naive")
        eb = psa_matrix(trajs, block=2, engine=local_engine, variant="early-break")
        assert np.array_equal(naive.values, eb.values)

    def test_full_grid_equality(self, local_engine):
        trajs = tio.generate_ensemble(4, 3, 4, seed=15)
        halved = psa_matrix(trajs, block=2, engine=local_engine)
        full = psa_matrix(trajs, block=2, engine=local_engine, full_grid=True)
        assert np.array_equal(halved.values, full.values)

    def test_paths_input(self, local_engine, tmp_path):
        trajs = tio.generate_ensemble(4, 3, 4, seed=21)
        paths = []
        for t in trajs:
            p = tmp_path / f"{t.id}.trjb"
            tio.write_trjb(t, p)
            paths.append(str(p))
        m_mem = psa_matrix(trajs, block=2, engine=local_engine)
        m_path = psa_matrix(paths, block=2, engine=local_engine)
        assert np.array_equal(m_mem.values, m_path.values)
        assert m_path.labels == [t.id for t in trajs]

    def test_shape_mismatch_before_submission(self, local_engine):
        t1 = tio.generate_trajectory(2, 3, seed=0)
        t2 = tio.generate_trajectory(2, 4, seed=0)
        with pytest.raises(UsageError, match="atom count"):
            psa_matrix([t1, t2], block=1, engine=local_engine)

    def test_matrix_validates(self, local_engine):
        trajs = tio.generate_ensemble(4, 4, 3, seed=33)
        m = psa_matrix(trajs, block=4, engine=local_engine)
        m.validate()
        assert np.all(np.diag(m.values) == 0)

    def test_bad_variant(self, local_engine):
        with pytest.raises(UsageError):
            psa_matrix([], block=1, engine=local_engine, variant="quantum")

    def test_task_failure_names_block(self, local_engine, tmp_path):
        trajs = tio.generate_ensemble(2, 2, 3, seed=1)
        paths = []
        for t in trajs:
            p = tmp_path / f"{t.id}.trjb"
            tio.write_trjb(t, p)
            paths.append(str(p))
        # valid header, truncated payload: survives driver-side header
        # validation but fails when the worker loads the block
        good = (tmp_path / "traj-0001.trjb").read_bytes()
        (tmp_path / "traj-0001.trjb").write_bytes(good[:-6])
        with pytest.raises(TaskFailure) as err:
            psa_matrix(paths, block=1, engine=local_engine)
        assert err.value.coords is not None


class TestDistanceMatrixCsv:
    def test_csv_round_numbers(self, tmp_path):
        m = DistanceMatrix(np.array([[0.0, 1.5], [1.5, 0.0]]), labels=["a", "b"])
        path = tmp_path / "m.csv"
        m.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "label,a,b"
        assert lines[1].startswith("a,0.0,1.5")
