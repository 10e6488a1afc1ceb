from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from scylla.errors import InfeasibleInstanceError, InstanceError
from scylla.model import (
    INF,
    Instance,
    Row,
    SparseMatrix,
    StandardForm,
    Variable,
    cleanup,
    matvec,
    matvec_transpose,
    operator_norm_estimate,
    to_standard_form,
)


def two_var(rows, sense="min", **kw):
    variables = [Variable("x1", 0, 5, False, 1.0), Variable("x2", 0, 5, False, 0.0)]
    return Instance("t", variables, rows, objective_sense=sense, **kw)


def dense_of(sf):
    return sf.A.to_dense()


# --- Instance ---------------------------------------------------------------

def test_validate_rejects_out_of_range_index():
    inst = two_var([Row("r", "G", [(2, 1.0)], 0.0)])
    with pytest.raises(InstanceError):
        inst.validate()


def test_validate_requires_finite_range():
    with pytest.raises(InstanceError):
        two_var([Row("r", "R", [(0, 1.0)], 0.0, None)]).validate()


def test_max_violation_relative_rows_and_integrality():
    inst = Instance("t", [Variable("x", 0, 3, True, 0.0)], [Row("r", "G", [(0, 1.0)], 3.0)])
    assert inst.max_violation([3.0]) == 0.0
    assert inst.max_violation([1.0]) == pytest.approx(2.0 / 4.0)
    assert inst.max_violation([2.5]) == pytest.approx(0.5)


# --- to_standard_form ----------------------------------------------------------

def test_less_equal_row_is_negated():
    sf = to_standard_form(two_var([Row("r", "L", [(0, 1.0), (1, 1.0)], 3.0)]))
    np.testing.assert_array_equal(dense_of(sf), [[-1.0, -1.0]])
    np.testing.assert_array_equal(sf.b, [-3.0])


def test_equality_row_splits_in_two():
    sf = to_standard_form(two_var([Row("r", "E", [(0, 1.0)], 2.0)]))
    np.testing.assert_array_equal(dense_of(sf), [[1.0, 0.0], [-1.0, 0.0]])
    np.testing.assert_array_equal(sf.b, [2.0, -2.0])


def test_ranged_row_gives_both_sides():
    sf = to_standard_form(two_var([Row("r", "R", [(1, 2.0)], -1.0, 3.0)]))
    np.testing.assert_array_equal(dense_of(sf), [[0.0, 2.0], [0.0, -2.0]])
    np.testing.assert_array_equal(sf.b, [-1.0, -2.0])


def test_maximisation_round_trip():
    inst = Instance("t", [Variable("x1", 0, 1, False, 1.0)], [], objective_sense="max")
    sf = to_standard_form(inst)
    np.testing.assert_array_equal(sf.c, [-1.0])
    assert sf.objective_sense_flipped
    assert sf.objective([1.0]) == 1.0
    assert inst.objective_value([1.0]) == 1.0


def test_crossed_bounds_raise():
    inst = Instance("t", [Variable("x", 2, 1, False, 0.0)], [])
    with pytest.raises(InfeasibleInstanceError):
        to_standard_form(inst)


def test_standard_form_only_has_ge_rows_and_maps_back():
    inst = Instance(
        "t",
        [Variable("a", 0, 4, True, 1.0), Variable("b", -1, 1, False, 2.0), Variable("c", 0, INF, True, 0.0)],
        [
            Row("l", "L", [(0, 1.0), (1, 1.0)], 3.0),
            Row("e", "E", [(1, 1.0), (2, 1.0)], 1.0),
            Row("g", "G", [(0, 1.0), (2, -1.0)], -2.0),
            Row("r", "R", [(0, 1.0)], 1.0, 2.0),
        ],
        objective_sense="max",
        objective_constant=3.0,
    )
    sf = to_standard_form(inst)
    assert sf.m == 6
    np.testing.assert_array_equal(sf.integer, [0, 2])
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = np.array([rng.integers(0, 5), rng.uniform(-1, 1), rng.integers(0, 3)], dtype=float)
        # the ">=" rows hold exactly when the original rows do
        ok_sf = bool(np.all(sf.A.matvec(x) >= sf.b - 1e-12))
        assert ok_sf == (inst.max_violation(x) <= 1e-12)
        assert sf.objective(x) == pytest.approx(inst.objective_value(x))
        np.testing.assert_array_equal(sf.to_source_space(x), x)


# --- cleanup ----------------------------------------------------------------------

def test_cleanup_removes_fixed_columns_and_empty_rows():
    inst = Instance(
        "t",
        [Variable("a", 2, 2, False, 3.0), Variable("b", 0, 4, True, 1.0)],
        [Row("r", "G", [(0, 1.0), (1, 1.0)], 3.0), Row("only_a", "G", [(0, 1.0)], 1.0)],
    )
    sf = cleanup(to_standard_form(inst))
    assert sf.n == 1 and sf.m == 1
    np.testing.assert_array_equal(sf.b, [1.0])
    assert sf.objective_constant == 6.0
    np.testing.assert_array_equal(sf.to_source_space([1.0]), [2.0, 1.0])
    assert sf.objective([1.0]) == inst.objective_value([2.0, 1.0])


def test_cleanup_rounds_integer_bounds_inward():
    inst = Instance("t", [Variable("a", 0.5, 3.7, True, 1.0), Variable("b", 0, 1, False, 1.0)],
                    [Row("r", "G", [(0, 1.0), (1, 1.0)], 1.0)])
    sf = cleanup(to_standard_form(inst))
    np.testing.assert_array_equal(sf.lower, [1.0, 0.0])
    np.testing.assert_array_equal(sf.upper, [3.0, 1.0])


def test_cleanup_detects_empty_integer_domain_and_violated_empty_row():
    with pytest.raises(InfeasibleInstanceError):
        cleanup(to_standard_form(Instance("t", [Variable("z", 0.2, 0.8, True, 0.0)], [])))
    inst = Instance("t", [Variable("a", 1, 1, False, 0.0)], [Row("r", "G", [(0, 1.0)], 2.0)])
    with pytest.raises(InfeasibleInstanceError):
        cleanup(to_standard_form(inst))


# --- SparseMatrix -------------------------------------------------------------------

def test_matvec_diagonal():
    A = SparseMatrix.from_dense([[2, 0], [0, 3]])
    np.testing.assert_array_equal(matvec(A, [1, 1]), [2, 3])


def test_matvec_transpose_single_row():
    A = SparseMatrix.from_dense([[1, -1]])
    np.testing.assert_array_equal(matvec_transpose(A, [2]), [2, -2])


def test_matvec_matches_dense_exactly(rng):
    D = rng.standard_normal((5, 4))
    A = SparseMatrix.from_dense(D)
    v = rng.standard_normal(4)
    w = rng.standard_normal(5)
    # same left-to-right summation order as the CSR kernel
    ref = np.array([sum(D[i, j] * v[j] for j in range(4)) for i in range(5)])
    ref_t = np.array([sum(D[i, j] * w[i] for i in range(5)) for j in range(4)])
    np.testing.assert_array_equal(matvec(A, v), ref)
    np.testing.assert_array_equal(matvec_transpose(A, w), ref_t)


def test_matvec_dimension_mismatch():
    A = SparseMatrix.from_dense([[1.0, 2.0]])
    with pytest.raises(ValueError):
        A.matvec([1.0])
    with pytest.raises(ValueError):
        A.rmatvec([1.0, 2.0])


def test_duplicates_summed_and_zeros_dropped():
    A = SparseMatrix([0, 0, 1, 1], [1, 1, 0, 1], [1.0, 2.0, 0.0, 5.0], (2, 2))
    assert A.nnz == 2
    np.testing.assert_array_equal(A.to_dense(), [[0, 3], [0, 5]])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31 - 1))
def test_row_and_column_views_agree(m, n, seed):
    r = np.random.default_rng(seed)
    D = r.standard_normal((m, n)) * (r.random((m, n)) < 0.5)
    A = SparseMatrix.from_dense(D)
    by_row = sorted(A.triplets(by="row"))
    by_col = sorted(A.triplets(by="col"))
    assert by_row == by_col
    assert all(v != 0 for _, _, v in by_row)
    assert len({(i, j) for i, j, _ in by_row}) == len(by_row)
    np.testing.assert_allclose(A.to_dense(), D)
    assert (A.to_scipy() != sp.csr_matrix(D)).nnz == 0


def test_operator_norm_diagonal_and_scalar():
    assert operator_norm_estimate(SparseMatrix.from_dense([[3, 0], [0, 4]])) == pytest.approx(4.0, rel=1e-2)
    assert operator_norm_estimate(SparseMatrix.from_dense([[1.0]])) == 1.0
    assert operator_norm_estimate(SparseMatrix([], [], [], (3, 2))) == 0.0


def test_operator_norm_matches_svd(rng):
    for _ in range(5):
        D = rng.standard_normal((6, 6))
        est = operator_norm_estimate(SparseMatrix.from_dense(D), iters=200)
        assert est == pytest.approx(np.linalg.svd(D, compute_uv=False)[0], rel=1e-2)


def test_standard_form_shape_check():
    with pytest.raises(ValueError):
        StandardForm(np.zeros(2), SparseMatrix.from_dense([[1.0]]), np.zeros(1), np.zeros(2), np.ones(2), [])
