from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_integer_points, random_binary_instance
from scylla.model import SparseMatrix, StandardForm, cleanup, to_standard_form
from scylla.propagate import (
    Domains,
    check_mip_feasible,
    fix_and_propagate,
    fixing_order,
    propagate,
    propagate_row,
    round_half_up,
)


def form(dense, b, lower, upper, integer):
    return StandardForm(np.zeros(len(lower)), SparseMatrix.from_dense(np.atleast_2d(dense)), np.asarray(b, float),
                        np.asarray(lower, float), np.asarray(upper, float), integer)


def assert_caches_consistent(doms):
    for i in range(doms.sf.m):
        ref = doms._row_activity(i)
        assert (doms.max_inf[i], doms.min_inf[i]) == (ref[1], ref[3])
        assert doms.max_fin[i] == pytest.approx(ref[0], abs=1e-9)
        assert doms.min_fin[i] == pytest.approx(ref[2], abs=1e-9)


def test_row_tightens_lower_bound():
    sf = form([[2.0, 1.0]], [4.0], [0, 0], [1, 5], [])
    doms = Domains(sf)
    count, conflict = propagate_row(0, doms, sf)
    assert (count, conflict) == (1, False)
    assert doms.lower[1] == 2.0


def test_redundant_row_does_nothing():
    sf = form([[1.0]], [0.0], [0], [1], [])
    doms = Domains(sf)
    assert propagate_row(0, doms, sf) == (0, False)


def test_conflicting_row():
    sf = form([[1.0]], [3.0], [0], [1], [])
    doms = Domains(sf)
    assert propagate_row(0, doms, sf) == (0, True)
    assert (doms.lower[0], doms.upper[0]) == (0, 1)


def test_integer_bounds_rounded():
    # 2x >= 3 on an integer gives x >= 2
    sf = form([[2.0]], [3.0], [0], [5], [0])
    doms = Domains(sf)
    propagate_row(0, doms, sf)
    assert doms.lower[0] == 2.0


def test_single_infinite_contributor_is_bounded():
    # x + y >= 3 with x <= 1 and y unbounded above: y >= 2
    sf = form([[1.0, 1.0]], [3.0], [0, 0], [1, np.inf], [])
    doms = Domains(sf)
    propagate_row(0, doms, sf)
    assert doms.lower[1] == 2.0


def test_two_infinite_contributors_are_skipped():
    sf = form([[1.0, 1.0]], [3.0], [0, 0], [np.inf, np.inf], [])
    doms = Domains(sf)
    assert propagate_row(0, doms, sf) == (0, False)


def test_rollback_restores_bounds_and_caches():
    rng = np.random.default_rng(2)
    inst = random_binary_instance(rng, 10, 6)
    sf = to_standard_form(inst)
    doms = Domains(sf)
    lo0, up0 = doms.lower.copy(), doms.upper.copy()
    mark = doms.mark()
    doms.set_bounds(0, 1.0, 1.0)
    propagate(doms, sf, sf.A.col(0)[0])
    assert_caches_consistent(doms)
    doms.rollback(mark)
    np.testing.assert_array_equal(doms.lower, lo0)
    np.testing.assert_array_equal(doms.upper, up0)
    assert_caches_consistent(doms)


def test_round_half_up():
    np.testing.assert_array_equal(round_half_up([0.5, 1.5, -0.5, 2.49]), [1, 2, 0, 2])


def test_fix_no_rows_rounds_to_nearest():
    sf = form(np.zeros((0, 2)), [], [0, 0], [1, 1], [0, 1])
    np.testing.assert_array_equal(fix_and_propagate([0.9, 0.2], sf), [1, 0])


def test_fix_trace_with_covering_row():
    sf = form([[1.0, 1.0]], [2.0], [0, 0], [1, 1], [0, 1])
    np.testing.assert_array_equal(fix_and_propagate([0.5, 0.6], sf), [1, 1])


def test_fix_order_least_fractional_first():
    sf = form(np.zeros((0, 3)), [], [0, 0, 0], [1, 1, 1], [0, 1, 2])
    order = fixing_order([0.5, 0.9, 0.7], sf, np.random.default_rng(0))
    np.testing.assert_array_equal(order, [1, 2, 0])


def test_fix_survives_contradiction():
    sf = form([[1.0], [-1.0]], [1.0, 0.0], [0], [1], [0])
    x = fix_and_propagate([0.5], sf)
    assert x[0] in (0.0, 1.0)


def test_continuous_columns_projected():
    # x integer, z continuous: z >= 2 - x forces z up once x is fixed to 0
    sf = form([[1.0, 1.0]], [2.0], [0, 0], [1, 5], [0])
    x = fix_and_propagate([0.2, 0.3], sf)
    np.testing.assert_array_equal(x, [0.0, 2.0])


def test_fix_is_seeded():
    rng = np.random.default_rng(8)
    sf = to_standard_form(random_binary_instance(rng, 12, 8))
    x_frac = np.full(12, 0.5)
    a = fix_and_propagate(x_frac, sf, seed=3, order="random")
    b = fix_and_propagate(x_frac, sf, seed=3, order="random")
    np.testing.assert_array_equal(a, b)


def test_check_mip_feasible_examples():
    sf = form([[1.0, 1.0]], [2.0], [0, 0], [1, 1], [0, 1])
    assert check_mip_feasible([1, 1], sf) == (True, 0.0)
    ok, viol = check_mip_feasible([0.5], form(np.zeros((0, 1)), [], [0], [1], [0]))
    assert not ok and viol == 0.5
    assert check_mip_feasible([0.3], form(np.zeros((0, 1)), [], [0], [1], []))[0]


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_propagation_never_excludes_feasible_points(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 11))
    sf = cleanup(to_standard_form(random_binary_instance(r, n, int(r.integers(1, 8)))))
    feasible = brute_force_integer_points(sf)
    # start from a random partial fixing consistent with some feasible point
    point = feasible[r.integers(len(feasible))]
    doms = Domains(sf)
    fixed = r.random(sf.n) < 0.3
    for j in np.nonzero(fixed)[0]:
        doms.set_bounds(int(j), point[j], point[j])
    assert propagate(doms, sf, range(sf.m), budget=10**6) is None
    assert_caches_consistent(doms)
    inside = np.all((feasible >= doms.lower - 1e-9) & (feasible <= doms.upper + 1e-9), axis=1)
    agrees = np.all(feasible[:, fixed] == point[fixed], axis=1)
    # every feasible point matching the fixings survives propagation
    assert np.all(inside[agrees])
