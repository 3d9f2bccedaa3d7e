import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lplq.blpq import BKpqSpec, canonical_representation
from lplq.config import InvariantError
from lplq.stepfn import (
    NormParams,
    Partition1D,
    StepFunction1D,
    StepFunction2D,
    abs_,
    add,
    equal,
    inf,
    is_base_disjoint,
    is_disjoint,
    mixed_norm,
    n_map,
    r_additivity_defect,
    refine_common,
    refine_many,
    scale,
    sup,
)

from oracles import grid_n, grid_norm, norm_params, partitions, step_functions

P21 = NormParams(2, 1)


def test_params_reject_equal_and_small_exponents():
    with pytest.raises(InvariantError):
        NormParams(2, 2)
    with pytest.raises(InvariantError):
        NormParams(0.5, 2)
    with pytest.raises(InvariantError):
        NormParams(float("inf"), 1)
    assert NormParams(4, 2).r == 2


def test_partition_invariants():
    with pytest.raises(InvariantError):
        Partition1D([0.5, 0.4])
    with pytest.raises(InvariantError):
        Partition1D([1.0, 0.0])
    part = Partition1D([0.25, 0.75])
    assert np.allclose(part.edges, [0, 0.25, 1])
    with pytest.raises(ValueError):
        part.lengths[0] = 0.5


@pytest.mark.parametrize("pq", [(2, 1), (3, 2), (1, 4)])
def test_constant_one_has_unit_norm(pq):
    assert mixed_norm(StepFunction2D.constant(1.0), NormParams(*pq)) == 1.0


def test_worked_norm_examples():
    f = StepFunction2D.indicator(0, 0.5, value=2.0)
    assert mixed_norm(f, P21) == pytest.approx(np.sqrt(2), rel=1e-15)
    g = StepFunction2D.from_grid([0, 1], [0, 0.5, 1], [[1.0, 3.0]])
    assert mixed_norm(g, P21) == pytest.approx(2.0, rel=1e-15)
    assert np.allclose(n_map(g, P21).values, 2.0)


def test_n_map_examples():
    f = StepFunction2D.indicator(0, 1, 0, 0.25)
    assert np.allclose(n_map(f, 2.0).values, 0.5)
    atoms = canonical_representation(BKpqSpec((1, 2), P21)).atoms
    u = n_map(atoms[(1, 0)], P21)
    assert np.allclose(u.values, [0.0, np.sqrt(5) / 2])
    assert u.partition.lengths[1] == pytest.approx(0.8)


def test_lattice_examples():
    left, right = StepFunction2D.indicator(0, 0.5), StepFunction2D.indicator(0.5, 1)
    assert equal(inf(left, right), StepFunction2D.constant(0.0))
    f = StepFunction2D.from_grid([0, 0.3, 1], [0, 0.6, 1], [[1, -2], [0.5, 4]])
    assert equal(sup(f, f), f)
    assert equal(add(f, -f), StepFunction2D.constant(0.0))


def test_disjointness_examples():
    left, right = StepFunction2D.indicator(0, 0.5), StepFunction2D.indicator(0.5, 1)
    assert is_disjoint(left, right) and is_base_disjoint(left, right, P21)
    low, high = StepFunction2D.indicator(0, 1, 0, 0.5), StepFunction2D.indicator(0, 1, 0.5, 1)
    assert is_disjoint(low, high)
    assert not is_base_disjoint(low, high, P21)
    atoms = canonical_representation(BKpqSpec((1, 2), P21)).atoms
    assert is_base_disjoint(atoms[(0, 0)], atoms[(1, 0)], P21)


def test_refine_common_half_third():
    f = StepFunction2D.indicator(0, 0.5)
    g = StepFunction2D.indicator(0, 1 / 3)
    a, b = refine_common(f, g)
    assert a.base is b.base
    assert np.allclose(a.base.edges, [0, 1 / 3, 0.5, 1])


@given(step_functions(), step_functions(), st.lists(st.floats(0, 1), min_size=20, max_size=20))
def test_refine_common_preserves_values(f, g, coords):
    a, b = refine_common(f, g)
    xs, ys = np.array(coords[:10]), np.array(coords[10:])
    # avoid exact breakpoints, where the side convention is arbitrary
    xs, ys = 0.999 * xs + 5e-4, 0.999 * ys + 5e-4
    assert np.array_equal(a(xs, ys), f(xs, ys))
    assert np.array_equal(b(xs, ys), g(xs, ys))


@given(step_functions(), norm_params)
def test_mixed_norm_matches_grid_oracle(f, pq):
    p, q = pq
    assert mixed_norm(f, NormParams(p, q)) == pytest.approx(grid_norm(f, p, q), rel=1e-12, abs=1e-14)


@given(step_functions(), norm_params)
def test_mixed_norm_is_lp_norm_of_n_map(f, pq):
    params = NormParams(*pq)
    u = n_map(f, params)
    assert mixed_norm(f, params) == pytest.approx(u.lp_norm(params.p), rel=1e-12, abs=1e-14)
    xs, n = grid_n(f, params.q)
    mids = 0.5 * (xs[:-1] + xs[1:])
    assert np.allclose(u(mids), n, rtol=1e-12, atol=1e-14)


@given(step_functions(), st.floats(-5, 5), norm_params)
def test_homogeneity(f, c, pq):
    params = NormParams(*pq)
    assert mixed_norm(scale(c, f), params) == pytest.approx(abs(c) * mixed_norm(f, params),
                                                             rel=1e-12, abs=1e-14)


@given(step_functions(), step_functions(), norm_params)
def test_triangle_inequality(f, g, pq):
    params = NormParams(*pq)
    assert mixed_norm(f + g, params) <= mixed_norm(f, params) + mixed_norm(g, params) + 1e-12


def _profiles_on_common_base(us):
    fs = refine_many([StepFunction2D.from_base_profile(u) for u in us])
    return [np.concatenate([fib.values for fib in f.fibers]) for f in fs]


@given(step_functions(), step_functions(positive=True), norm_params)
def test_lattice_norm_monotone(f, g, pq):
    params = NormParams(*pq)
    small = inf(abs_(f), g)  # 0 <= small <= g pointwise
    ns, ng = _profiles_on_common_base([n_map(small, params), n_map(g, params)])
    assert np.all(ns <= ng * (1 + 1e-12) + 1e-300)
    assert mixed_norm(small, params) <= mixed_norm(g, params) + 1e-12


@given(step_functions(), step_functions(), st.floats(0.1, 0.9), norm_params)
def test_q_additivity_for_disjoint_pairs(f, g, cut, pq):
    params = NormParams(*pq)
    a = f * StepFunction2D.indicator(0, 1, 0, cut)
    b = g * StepFunction2D.indicator(0, 1, cut, 1)
    assert is_disjoint(a, b)
    q = params.q
    s, na, nb = _profiles_on_common_base([n_map(a + b, params), n_map(a, params), n_map(b, params)])
    assert np.allclose(s ** q, na ** q + nb ** q, rtol=1e-12, atol=1e-13)


@given(step_functions(), step_functions(), st.floats(0.1, 0.9), norm_params)
def test_p_additivity_for_base_disjoint_pairs(f, g, cut, pq):
    params = NormParams(*pq)
    a = f * StepFunction2D.indicator(0, cut)
    b = g * StepFunction2D.indicator(cut, 1)
    assert is_base_disjoint(a, b, params)
    p = params.p
    assert mixed_norm(a + b, params) ** p == pytest.approx(
        mixed_norm(a, params) ** p + mixed_norm(b, params) ** p, rel=1e-12, abs=1e-13)


@settings(max_examples=100)
@given(partitions(6), st.lists(st.lists(st.booleans(), min_size=4, max_size=4), min_size=6,
                               max_size=6),
       st.lists(st.floats(0.1, 3), min_size=24, max_size=24), st.sampled_from([2.0, 0.5, 3.0]))
def test_r_additivity_iff_disjoint(part, owns, vals, r):
    """r-additivity holds exactly when the profiles are pairwise disjoint."""
    n = len(part)
    us = [StepFunction1D(part, [vals[4 * c + k] if owns[c][k] else 0.0 for c in range(n)])
          for k in range(4)]
    disjoint = all(np.all(us[i].values * us[j].values == 0)
                   for i in range(4) for j in range(i + 1, 4))
    if r_additivity_defect(us, r) < 1e-12:
        assert disjoint
    if disjoint:
        assert r_additivity_defect(us, r) < 1e-12


def test_r_additivity_detects_overlap():
    part = Partition1D([0.5, 0.5])
    us = [StepFunction1D(part, [1.0, 0.0]), StepFunction1D(part, [1.0, 1.0])]
    assert r_additivity_defect(us, 2.0) > 0.1


@given(step_functions())
def test_json_round_trip_is_lossless(f):
    g = StepFunction2D.loads(f.dumps())
    assert np.array_equal(g.base.lengths, f.base.lengths)
    assert all(np.array_equal(a.values, b.values) and np.array_equal(a.partition.lengths,
                                                                     b.partition.lengths)
               for a, b in zip(f.fibers, g.fibers))
    assert set(json.loads(f.dumps())) == {"base", "fibers"}
