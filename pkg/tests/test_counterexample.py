from fractions import Fraction

import numpy as np
import pytest

from lplq.blpq import verify_blpq_structure
from lplq.config import PreconditionError
from lplq.counterexample import (
    CounterexampleBundle,
    build_counterexample,
    certificate_json,
    certify_isometry,
    certify_non_equimeasurable,
    find_witness,
    hilbert_nullspace,
    joint_moment_difference,
    moment_identities,
    obstruction_report,
    signed_integral,
    step_isometry_gap,
)
from lplq.polynomials import RationalPoly
from lplq.stepfn import NormParams, StepFunction2D, equal, total

from oracles import rational_integral, shifted_legendre_gram_schmidt

P21 = NormParams(2, 1)


@pytest.fixture(scope="module")
def r2():
    return build_counterexample(P21, 1024)


@pytest.fixture(scope="module")
def r3():
    return build_counterexample(NormParams(3, 1), 512)


@pytest.mark.parametrize("r", range(0, 7))
def test_nullspace_matches_gram_schmidt(r):
    g = hilbert_nullspace(r)
    oracle = RationalPoly(tuple(shifted_legendre_gram_schmidt(r + 1))).primitive()
    assert g == oracle
    assert g.degree == r + 1


def test_nullspace_known_values():
    assert hilbert_nullspace(0).coeffs == (-1, 2)
    assert hilbert_nullspace(2).coeffs == (-1, 12, -30, 20)
    with pytest.raises(PreconditionError):
        hilbert_nullspace(-1)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_moment_identities_exact(r):
    g = hilbert_nullspace(r)
    ids = moment_identities(g, r + 1)
    assert all(v == 0 for _, v in ids[:-1])
    assert ids[-1][1] != 0
    # u^(r+1) g has the coefficients of g shifted up by r + 1
    assert ids[-1][1] == rational_integral([0] * (r + 1) + list(g.coeffs))


def test_r2_gap_is_one_over_140(r2):
    cert = certify_non_equimeasurable(r2)
    assert cert.gap_degree == 3
    assert cert.gap_raw == Fraction(1, 140)
    lo, hi = cert.gap
    assert 0 < lo <= hi


def test_abs_integral_enclosure_is_tight(r2):
    lo, hi = r2.G
    assert 0 < hi - lo < Fraction(1, 2 ** 100)
    xs = np.linspace(0, 1, 2_000_001)
    approx = np.trapezoid(np.abs(r2.g(xs)), xs)
    assert float(lo) == pytest.approx(approx, rel=1e-9)


def test_signed_parts_add_up(r3):
    one = RationalPoly((1,))
    pos = signed_integral(r3.g, r3.roots, one, "pos")
    neg = signed_integral(r3.g, r3.roots, one, "neg")
    ab = signed_integral(r3.g, r3.roots, one, "abs")
    # int g = 0, so both halves carry half of int |g|
    assert pos[0] - ab[1] / 2 <= 0 <= pos[1] - ab[0] / 2
    assert neg[0] - ab[1] / 2 <= 0 <= neg[1] - ab[0] / 2


def test_roots_isolated(r2, r3):
    assert len(r2.roots) == 3 and len(r3.roots) == 4
    for b in (r2, r3):
        for lo, hi in b.roots:
            assert 0 < lo < hi < 1 and hi - lo <= Fraction(1, 2 ** 60)
            assert b.g(lo) * b.g(hi) <= 0


def test_build_preconditions():
    with pytest.raises(PreconditionError):
        build_counterexample(NormParams(2.5, 1))
    with pytest.raises(PreconditionError):
        build_counterexample(NormParams(1, 2))
    with pytest.raises(PreconditionError):
        build_counterexample(P21, 1)


def test_step_atoms_are_a_partition_of_one(r2):
    for emb in r2.step_atoms:
        assert equal(total(emb.images), StepFunction2D.constant(1.0), 1e-12)
        assert not verify_blpq_structure(emb, P21).is_blpq


def test_profiles_are_monotone_and_in_range(r2):
    for F in r2.F_bar:
        assert np.all(np.diff(F) > 0) and 0 < F[0] and F[-1] < 1


def test_profile_means_match_density_mean(r2):
    # the cell means of F average to int F = 1 - int u h(u) du
    for F, part in zip(r2.F_bar, ("pos", "neg")):
        x = RationalPoly.x()
        half = x.integrate() / 2
        lo, hi = signed_integral(r2.g, r2.roots, x, part)
        mean_u = half + lo / r2.G[1]
        assert F.mean() == pytest.approx(1 - float(mean_u), abs=1e-9)


def test_reflection_symmetry_for_r2(r2):
    F1, F2 = r2.F_bar
    assert np.allclose(F2, 1 - F1[::-1], atol=1e-12)


@pytest.mark.parametrize("fixture", ["r2", "r3"])
def test_isometry_certificate(fixture, request):
    bundle = request.getfixturevalue(fixture)
    rng = np.random.default_rng(0)
    vs = [(0, 0), (1, 1), (2, 1)] + [tuple(rng.integers(0, 10, 2)) for _ in range(17)]
    cert = certify_isometry(bundle, vs)
    assert cert.passed and len(cert.rows) == 20
    row = cert.rows[1]
    assert row["lhs"][0] <= 1 <= row["lhs"][1]
    assert cert.rows[0]["lhs"] == (0, 0)
    for row in cert.rows:
        lo = max(row["lhs"][0], row["rhs"][0])
        hi = min(row["lhs"][1], row["rhs"][1])
        assert lo <= hi  # the two enclosures overlap


def test_joint_moment_differences(r2):
    for a in range(4):
        for b in range(4 - a):
            d = joint_moment_difference(r2.g, a, b)
            assert (d == 0) == (a + b <= 2)


def test_certificate_json_shape(r2):
    cert = certificate_json(r2)
    assert cert["gap"] == "1/140" and cert["gap_degree"] == 3
    assert [m["lhs"] for m in cert["moment_identities"]] == ["0", "0", "0"]
    assert cert["g"] == ["-1", "12", "-30", "20"]


def test_certificate_r3_gap_degree(r3):
    cert = certificate_json(r3)
    assert cert["gap_degree"] == 4 and Fraction(cert["gap"]) != 0


def test_step_gap_small_for_r2(r2):
    rng = np.random.default_rng(1)
    gaps = [step_isometry_gap(r2, rng.uniform(-2, 2, 2)) for _ in range(20)]
    assert max(gaps) < 1e-4


def test_step_gap_shrinks_for_r3():
    rng = np.random.default_rng(1)
    coeffs = [rng.uniform(0, 2, 2) for _ in range(5)]
    gaps = []
    for n in (128, 256, 512):
        b = build_counterexample(NormParams(3, 1), n)
        gaps.append(max(step_isometry_gap(b, c) for c in coeffs))
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_no_witness_against_itself(r2):
    m1, _ = r2.pushforwards()
    rep = obstruction_report((m1, m1))
    assert not rep.found and "inconclusive" in rep.conclusion


def test_witness_for_r2(r2):
    rep = obstruction_report(r2)
    assert rep.found and rep.witness.eps >= 0.005 and rep.witness.margin > 0


def test_witness_margin_is_conservative(r2):
    m1, m2 = r2.pushforwards()
    small, big = m1, m2
    w = find_witness(small, big, 0.01)
    if w is None:
        small, big = m2, m1
        w = find_witness(small, big, 0.01)
    (a, b), (c, d) = w.rectangle

    def mass(m, lo0, hi0, lo1, hi1):
        z = m.points
        sel = (z[:, 0] >= lo0) & (z[:, 0] < hi0) & (z[:, 1] >= lo1) & (z[:, 1] < hi1)
        return m.masses[sel].sum()

    e = w.eps
    assert mass(big, a, b, c, d) - mass(small, a - e, b + e, c - e, d + e) - e >= w.margin - 1e-12


def test_quantized_bundle_keeps_witness():
    b = build_counterexample(P21, 512)
    q = b.quantized(0.05)
    assert isinstance(q, CounterexampleBundle)
    rep = obstruction_report(q, eps_values=(0.05,))
    assert rep.found


@pytest.mark.parametrize("pq,n", [((2, 1), 256), ((3, 1), 256), ((3, 1), 1024)])
def test_step_layer_moments(pq, n):
    b = build_counterexample(NormParams(*pq), n)
    F1, F2 = b.F_bar
    diffs = [abs(np.mean(F1 ** j) - np.mean(F2 ** j)) for j in range(b.r + 2)]
    assert max(diffs[: b.r + 1]) <= 5 / n
    exact = float(certify_non_equimeasurable(b, grid=8).gap[0])
    assert diffs[-1] >= exact / 2
