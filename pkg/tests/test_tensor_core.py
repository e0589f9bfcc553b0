import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bevx import (
    ShapeError,
    SparseBinaryMatrix,
    ValidationError,
    as_feature,
    hadamard,
    matmul,
    reduce_sum,
    scatter_add,
    spmm,
)
from oracles import matmul_loop


def rel_err(a, b):
    den = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64)).max() / den


class TestAsFeature:
    def test_converts_to_contiguous_float32(self):
        out = as_feature(np.arange(6, dtype=np.float64).reshape(2, 3)[:, ::-1])
        assert out.dtype == np.float32 and out.flags.c_contiguous

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError, match="non-finite"):
            as_feature([1.0, np.nan])
        with pytest.raises(ValidationError):
            as_feature([np.inf])


class TestSparseBinaryMatrix:
    def test_valid_construction(self):
        m = SparseBinaryMatrix(3, 4, [0, 2, 2, 3], [1, 3, 0])
        assert m.shape == (3, 4) and m.nnz == 3
        assert m.density == pytest.approx(3 / 12)
        assert list(m.row(0)) == [1, 3] and list(m.row(1)) == []

    def test_densify_is_binary(self):
        m = SparseBinaryMatrix(2, 3, [0, 1, 3], [2, 0, 1])
        d = m.densify()
        assert set(np.unique(d)) <= {0.0, 1.0}
        assert d.tolist() == [[0, 0, 1], [1, 1, 0]]

    @pytest.mark.parametrize(
        "rows,cols,offsets,indices",
        [
            (2, 3, [0, 1], [0]),  # offsets wrong length
            (2, 3, [1, 1, 2], [0, 1]),  # offsets[0] != 0
            (2, 3, [0, 2, 1], [0, 1]),  # offsets decrease
            (2, 3, [0, 1, 2], [0, 3]),  # column out of range
            (2, 3, [0, 2, 2], [1, 1]),  # duplicate within row
            (2, 3, [0, 2, 2], [2, 1]),  # decreasing within row
            (2, 3, [0, 1, 2], [0]),  # col_indices shorter than nnz
        ],
    )
    def test_invalid_construction(self, rows, cols, offsets, indices):
        with pytest.raises(ValidationError):
            SparseBinaryMatrix(rows, cols, offsets, indices)

    def test_row_boundary_decrease_is_legal(self):
        m = SparseBinaryMatrix(2, 3, [0, 2, 3], [1, 2, 0])
        assert m.densify().tolist() == [[0, 1, 1], [1, 0, 0]]

    def test_from_coo_dedups_and_sorts(self):
        m = SparseBinaryMatrix.from_coo(2, 4, [1, 0, 1, 1], [3, 2, 0, 3])
        assert m.nnz == 3
        assert list(m.row(1)) == [0, 3]

    def test_from_dense_round_trip(self, rng):
        dense = (rng.random((7, 9)) < 0.3).astype(np.float32)
        m = SparseBinaryMatrix.from_dense(dense)
        np.testing.assert_array_equal(m.densify(), dense)

    def test_equality(self):
        a = SparseBinaryMatrix(2, 2, [0, 1, 1], [0])
        b = SparseBinaryMatrix(2, 2, [0, 1, 1], [0])
        c = SparseBinaryMatrix(2, 2, [0, 1, 1], [1])
        assert a == b and a != c

    def test_from_coo_range_checks(self):
        with pytest.raises(ValidationError):
            SparseBinaryMatrix.from_coo(2, 2, [2], [0])
        with pytest.raises(ValidationError):
            SparseBinaryMatrix.from_coo(2, 2, [0], [-1])


class TestMatmul:
    def test_identity(self, rng):
        b = rng.random((3, 5), dtype=np.float32)
        np.testing.assert_array_equal(matmul(np.eye(3, dtype=np.float32), b), b)

    def test_hand_arithmetic(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[0.0], [1.0]])
        assert out.tolist() == [[2.0], [4.0]]

    def test_against_triple_loop(self, rng):
        a = rng.random((7, 5), dtype=np.float32)
        b = rng.random((5, 3), dtype=np.float32)
        assert rel_err(matmul(a, b), matmul_loop(a, b)) <= 1e-6

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 6), st.integers(2, 6), st.integers(2, 6), st.integers(0, 999))
    def test_associative(self, m, k, n, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((m, k), dtype=np.float32)
        b = rng.random((k, n), dtype=np.float32)
        c = rng.random((n, 4), dtype=np.float32)
        assert rel_err(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= 1e-4


class TestSpmm:
    def test_permutation(self, rng):
        perm = np.array([2, 0, 1])
        s = SparseBinaryMatrix.from_coo(3, 3, np.arange(3), perm)
        b = rng.random((3, 4), dtype=np.float32)
        np.testing.assert_array_equal(spmm(s, b), b[perm])

    def test_all_zero(self, rng):
        s = SparseBinaryMatrix(3, 5, np.zeros(4, np.int64), [])
        assert not spmm(s, rng.random((5, 2), dtype=np.float32)).any()

    def test_low_density_matches_densified_matmul(self, rng):
        mask = rng.random((100, 200)) < 0.005
        s = SparseBinaryMatrix.from_dense(mask)
        b = rng.random((200, 8), dtype=np.float32)
        assert rel_err(spmm(s, b), matmul(s.densify(), b)) <= 1e-6

    @settings(max_examples=30, deadline=None)
    @given(
        st.integers(1, 40),
        st.integers(1, 40),
        st.sampled_from([0.001, 0.01, 0.1]),
        st.integers(0, 999),
    )
    def test_matches_densified_matmul(self, m, k, density, seed):
        rng = np.random.default_rng(seed)
        s = SparseBinaryMatrix.from_dense(rng.random((m, k)) < density)
        b = rng.random((k, 3), dtype=np.float32)
        assert rel_err(spmm(s, b), matmul(s.densify(), b)) <= 1e-6

    def test_shape_mismatch(self):
        s = SparseBinaryMatrix(2, 3, [0, 0, 0], [])
        with pytest.raises(ShapeError):
            spmm(s, np.ones((4, 2)))


class TestHadamard:
    def test_ones_and_zeros(self, rng):
        a = rng.random((3, 4), dtype=np.float32)
        np.testing.assert_array_equal(hadamard(a, np.ones_like(a)), a)
        assert not hadamard(a, np.zeros_like(a)).any()

    def test_elementwise_loop(self, rng):
        a = rng.random((4, 5), dtype=np.float32)
        b = rng.random((4, 5), dtype=np.float32)
        out = hadamard(a, b)
        for i in range(4):
            for j in range(5):
                assert out[i, j] == np.float32(a[i, j] * b[i, j])

    def test_commutative(self, rng):
        a = rng.random((6, 2), dtype=np.float32)
        b = rng.random((6, 2), dtype=np.float32)
        np.testing.assert_array_equal(hadamard(a, b), hadamard(b, a))

    def test_broadcast_stretches_unit_axis(self, rng):
        a = rng.random((4, 3, 2), dtype=np.float32)
        b = rng.random((4, 3, 1), dtype=np.float32)
        np.testing.assert_array_equal(hadamard(a, b), a * b)

    def test_output_shape_must_match_a(self):
        with pytest.raises(ShapeError):
            hadamard(np.ones((3, 1)), np.ones((3, 4)))
        with pytest.raises(ShapeError):
            hadamard(np.ones((2, 3)), np.ones((4, 3)))


class TestScatterAdd:
    def test_all_absent(self, rng):
        out = scatter_add(rng.random((5, 2), dtype=np.float32), [-1] * 5, 4)
        assert out.shape == (4, 2) and not out.any()

    def test_identity_permutation(self, rng):
        v = rng.random((6, 3), dtype=np.float32)
        np.testing.assert_array_equal(scatter_add(v, np.arange(6), 6), v)

    def test_sequential_loop_oracle(self, rng):
        v = rng.random((50, 4), dtype=np.float32)
        t = rng.integers(-1, 8, size=50)
        expect = np.zeros((8, 4), dtype=np.float32)
        for i in range(50):
            if t[i] >= 0:
                expect[t[i]] += v[i]
        np.testing.assert_array_equal(scatter_add(v, t, 8), expect)

    def test_target_out_of_range(self, rng):
        with pytest.raises(IndexError):
            scatter_add(rng.random((2, 2), dtype=np.float32), [0, 5], 3)

    def test_scatter_then_gather_permutation_is_identity(self, rng):
        v = rng.random((10, 3), dtype=np.float32)
        perm = rng.permutation(10)
        out = scatter_add(v, perm, 10)
        np.testing.assert_array_equal(out[perm], v)


class TestReduceSum:
    def test_unit_axis_squeezes(self, rng):
        t = rng.random((3, 1, 4), dtype=np.float32)
        np.testing.assert_array_equal(reduce_sum(t, 1), t[:, 0, :])

    def test_ones(self):
        np.testing.assert_array_equal(
            reduce_sum(np.ones((2, 3), dtype=np.float32), 0), [2.0, 2.0, 2.0]
        )

    def test_loop_oracle(self, rng):
        t = rng.random((4, 5, 2), dtype=np.float32)
        out = reduce_sum(t, 1)
        expect = np.zeros((4, 2), dtype=np.float32)
        for j in range(5):
            expect += t[:, j, :]
        assert rel_err(out, expect) <= 1e-6

    def test_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            reduce_sum(np.ones((2, 2)), 2)
