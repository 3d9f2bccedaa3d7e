from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lplq.blpq import BKpqSpec, canonical_representation, closed_form_norm
from lplq.config import PreconditionError
from lplq.counterexample import build_counterexample
from lplq.equimeasure import (
    VectorMeasure,
    compare,
    equimeasurable,
    joint_moment,
    moment_functional,
    moment_match_report,
    multi_indices,
    norm_via_moments,
    pushforward,
    rectangle_discrepancy,
)
from lplq.sampling import random_disjoint_indicators, random_one_fixing
from lplq.stepfn import NormParams, StepFunction2D, mixed_norm
from lplq.transport import apply

P21 = NormParams(2, 1)


@pytest.fixture(scope="module")
def r2_bundle():
    return build_counterexample(P21, 512)


def test_pushforward_of_one():
    m = pushforward([StepFunction2D.constant(1.0)], P21)
    assert len(m) == 1 and m.masses[0] == 1.0 and m.points[0, 0] == 1.0


def test_pushforward_of_canonical_atoms():
    atoms = canonical_representation(BKpqSpec((1, 2), P21)).images()
    m = pushforward(atoms, P21)
    s5 = np.sqrt(5)
    assert np.allclose(m.masses, [0.8, 0.2])  # points are sorted lexicographically
    assert np.allclose(m.points, [(0, s5 / 2, s5 / 2), (s5, 0, 0)])


def test_measure_validation():
    with pytest.raises(PreconditionError):
        VectorMeasure([0.5, -0.1], [[0.0], [1.0]])
    with pytest.raises(PreconditionError):
        VectorMeasure([0.7, 0.7], [[0.0], [1.0]])


def test_canonical_merges_points():
    m = VectorMeasure([0.25, 0.25, 0.5], [[1.0], [0.0], [1.0]]).canonical()
    assert np.allclose(m.masses, [0.25, 0.75])
    assert np.allclose(m.points.ravel(), [0.0, 1.0])


def test_exact_measures_compare_without_tolerance():
    a = VectorMeasure([Fraction(1, 3), Fraction(2, 3)], [[Fraction(0)], [Fraction(1)]], exact=True)
    b = VectorMeasure([Fraction(2, 3), Fraction(1, 3)], [[Fraction(1)], [Fraction(0)]], exact=True)
    assert a.same_as(b) and compare(a, b).equal
    c = VectorMeasure([Fraction(1, 3), Fraction(2, 3)], [[Fraction(0)], [Fraction(1, 10**30)]],
                      exact=True)
    assert not compare(a, c).equal


def test_csv_round_trip():
    m = VectorMeasure([0.1, 0.9], [[0.5, 2.0], [1.25, 0.0]])
    back = VectorMeasure.from_csv(m.to_csv())
    assert m.same_as(back)


def test_self_comparison_is_equal(r2_bundle):
    m1, _ = r2_bundle.pushforwards()
    rep = compare(m1, m1)
    assert rep.equal and rep.unmatched_mass == 0.0


def test_compare_dimension_mismatch():
    with pytest.raises(PreconditionError):
        compare(VectorMeasure([1.0], [[0.0]]), VectorMeasure([1.0], [[0.0, 1.0]]))


@settings(max_examples=50)
@given(st.integers(0, 2 ** 32 - 1))
def test_one_fixing_images_are_equimeasurable(seed):
    rng = np.random.default_rng(seed)
    fs = random_disjoint_indicators(rng, 3, cover=bool(rng.integers(2)))
    a = random_one_fixing(rng)
    assert equimeasurable(pushforward(fs, P21), pushforward([apply(a, f) for f in fs], P21))


def test_counterexample_pair_is_not_equimeasurable(r2_bundle):
    m1, m2 = r2_bundle.pushforwards()
    rep = compare(m1, m2)
    assert not rep.equal and rep.unmatched_mass > 0.01
    disc, rect = rectangle_discrepancy(m1, m2)
    assert disc > 0.01 and rect is not None


def test_rectangle_discrepancy_is_lower_bound_of_total_variation():
    rng = np.random.default_rng(0)
    a = VectorMeasure(np.full(20, 0.05), rng.uniform(0, 1, (20, 2)))
    b = VectorMeasure(np.full(20, 0.05), rng.uniform(0, 1, (20, 2)))
    disc, _ = rectangle_discrepancy(a, b, grid=16)
    assert 0 < disc <= compare(a, b).unmatched_mass + 1e-12
    assert rectangle_discrepancy(a, a)[0] == 0.0


def test_moment_functional_exact_binomial():
    m = VectorMeasure([Fraction(1, 2), Fraction(1, 2)], [[Fraction(0)], [Fraction(1)]], exact=True)
    assert moment_functional(m, 1, [2], 2) == Fraction(1, 2) * 1 + Fraction(1, 2) * 9


def test_norm_via_moments_examples():
    f = StepFunction2D.indicator(0, 0.5, value=2.0)
    assert norm_via_moments([f], [1.0], P21) == pytest.approx(mixed_norm(f, P21), rel=1e-15)
    spec = BKpqSpec((1, 2), P21)
    atoms = canonical_representation(spec).images()
    assert norm_via_moments(atoms, [1, 1, 1], P21) == pytest.approx(np.sqrt(5), rel=1e-12)
    assert norm_via_moments(atoms, [1, 1, 1], P21) == pytest.approx(
        closed_form_norm(spec, [1, 1, 1]), rel=1e-12)


@pytest.mark.parametrize("pq", [(2, 1), (3, 2), (2.5, 1), (1, 2)])
def test_norm_via_moments_matches_mixed_norm(pq):
    params = NormParams(*pq)
    rng = np.random.default_rng(17)
    for _ in range(10):
        fs = [f * rng.uniform(0.5, 2) for f in random_disjoint_indicators(rng, 3)]
        c = rng.uniform(0, 3, 3)
        direct = mixed_norm(sum((f * x for f, x in zip(fs[1:], c[1:])), fs[0] * c[0]), params)
        assert norm_via_moments(fs, c, params) == pytest.approx(direct, rel=1e-10)


def test_norm_via_moments_rejects_overlap():
    f = StepFunction2D.constant(1.0)
    with pytest.raises(PreconditionError):
        norm_via_moments([f, f], [1, 1], P21)


def test_multi_indices_count():
    assert sorted(multi_indices(2, 3)) == [(0, 3), (1, 2), (2, 1), (3, 0)]
    assert len(list(multi_indices(3, 4))) == 15


def test_moment_report_self_is_zero(r2_bundle):
    z1, _ = r2_bundle.pushforwards()
    rep = moment_match_report(z1, z1, 2)
    assert rep.first_mismatch_degree is None
    assert all(row["abs_diff"] == 0 for row in rep.rows)


def test_moment_report_counterexample_r2(r2_bundle):
    z1, z2 = r2_bundle.pushforwards(power=1.0)  # q = 1, so these are the N^q profiles
    rep = moment_match_report(z1, z2, 2)
    assert rep.first_mismatch_degree == 3
    assert rep.functional_mismatch < 1e-12
    header = rep.to_csv().splitlines()[0]
    assert header == "kind,label,degree,value1,value2,abs_diff"


def test_moment_report_non_integer_exponent_mismatch(r2_bundle):
    z1, z2 = r2_bundle.pushforwards(power=1.0)
    assert moment_match_report(z1, z2, 2.5).functional_mismatch > 1e-3


def test_joint_moment_of_point_mass():
    m = VectorMeasure([1.0], [[2.0, 3.0]])
    assert joint_moment(m, (2, 1)) == 12.0
