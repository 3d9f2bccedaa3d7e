import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lplq.blpq import (
    BKpqSpec,
    Embedding,
    canonical_representation,
    closed_form_norm,
    extract_blpq_atoms,
    grid_vs_closed_form,
    quantize_to_kpq,
    verify_blpq_structure,
)
from lplq.config import PreconditionError
from lplq.counterexample import build_counterexample
from lplq.sampling import random_embedding
from lplq.stepfn import NormParams, StepFunction2D, distance, equal, mixed_norm, total

P21 = NormParams(2, 1)

specs = st.builds(
    lambda blocks, pq: BKpqSpec(tuple(blocks), NormParams(*pq)),
    st.lists(st.integers(1, 4), min_size=1, max_size=4),
    st.sampled_from([(2, 1), (3, 2), (1, 2), (4, 2), (2.5, 1)]),
)


def test_single_block_single_atom_is_one():
    can = canonical_representation(BKpqSpec((1,), P21))
    assert can.eta == 1.0
    assert equal(can.images()[0], StepFunction2D.constant(1.0))


def test_blocks_1_2_worked_example():
    can = canonical_representation(BKpqSpec((1, 2), P21))
    assert can.eta == pytest.approx(np.sqrt(5), rel=1e-15)
    assert np.allclose(can.base_cells, [0.2, 0.8])
    s5 = np.sqrt(5)
    expected = [
        StepFunction2D.indicator(0, 0.2, value=s5),
        StepFunction2D.indicator(0.2, 1, 0, 0.5, value=s5),
        StepFunction2D.indicator(0.2, 1, 0.5, 1, value=s5),
    ]
    for got, want in zip(can.images(), expected):
        assert equal(got, want, 1e-12)


def test_blocks_2_2_p4_q2():
    can = canonical_representation(BKpqSpec((2, 2), NormParams(4, 2)))
    assert can.eta == pytest.approx(8 ** 0.25, rel=1e-15)
    assert np.allclose(can.base_cells, [0.5, 0.5])


@given(specs)
def test_canonical_invariants(spec):
    can = canonical_representation(spec)
    assert abs(can.base_cells.sum() - 1) < 1e-12
    for f in can.images():
        assert mixed_norm(f, spec.params) == pytest.approx(1.0, abs=1e-12)
    assert equal(total(can.images()), StepFunction2D.constant(can.eta))
    assert not Embedding(tuple(can.images()), spec).violations(spec.params, 1e-12)


def test_closed_form_examples():
    spec = BKpqSpec((1, 2), P21)
    assert closed_form_norm(spec, [1, 1, 1]) == pytest.approx(np.sqrt(5), rel=1e-15)
    assert closed_form_norm(spec, [0, 0, 0]) == 0
    for t in range(3):
        e = np.zeros(3)
        e[t] = 1
        assert closed_form_norm(spec, e) == pytest.approx(1.0)
    assert closed_form_norm(spec, [[2.0], [1.0, 1.0]]) == closed_form_norm(spec, [2, 1, 1])


@given(specs, st.integers(0, 2 ** 32 - 1))
def test_closed_form_matches_mixed_norm(spec, seed):
    coeffs = np.random.default_rng(seed).uniform(-2, 2, spec.n_atoms)
    a, b = grid_vs_closed_form(spec, coeffs)
    assert a == pytest.approx(b, rel=1e-10)


def test_spec_json_round_trip():
    spec = BKpqSpec((3, 1, 2), NormParams(3, 1.5))
    d = spec.to_json()
    assert set(d) == {"p", "q", "blocks"}
    assert BKpqSpec.from_json(json.loads(json.dumps(d))) == spec


def test_verify_canonical_recovers_blocks():
    rep = verify_blpq_structure(canonical_representation(BKpqSpec((1, 2), P21)).images(), P21)
    assert rep.is_blpq and rep.blocks == (1, 2)
    assert rep.block_partition == [[0], [1, 2]]


def test_verify_single_lq2_block():
    q = 1.0
    a = StepFunction2D.indicator(0, 1, 0, 0.5, value=2 ** (1 / q))
    b = StepFunction2D.indicator(0, 1, 0.5, 1, value=2 ** (1 / q))
    rep = verify_blpq_structure([a, b], P21)
    assert rep.is_blpq and rep.blocks == (2,)


def test_verify_rejects_counterexample_pair():
    bundle = build_counterexample(P21, 64)
    rep = verify_blpq_structure(bundle.step_atoms[0], P21)
    assert not rep.is_blpq


def test_verify_reports_overlap_without_raising():
    f = StepFunction2D.constant(1.0)
    rep = verify_blpq_structure([f, f], P21)
    assert not rep.is_blpq
    assert any("not disjoint" in v for v in rep.violations)


def test_extract_single_atom():
    ext = extract_blpq_atoms([StepFunction2D.constant(1.0)], P21)
    assert ext.spec.blocks == (1,)
    assert np.allclose(ext.coefficients, [[1.0]])
    assert equal(ext.images()[0], StepFunction2D.constant(1.0), 1e-15)


def test_extract_blocks_1_1_recovers_atoms():
    spec = BKpqSpec((1, 1), P21)
    atoms = canonical_representation(spec).images()
    ext = extract_blpq_atoms(atoms, P21)
    assert ext.spec.blocks == (1, 1)
    for j, f in enumerate(atoms):
        assert equal(ext.reconstruct(j), f, 1e-12)


def test_extract_random_base_simple_pair():
    rng = np.random.default_rng(3)
    cut = rng.uniform(0.2, 0.8, 4)
    xe = np.linspace(0, 1, 5)
    f1 = StepFunction2D(
        StepFunction2D.from_grid(xe, [0, 1], np.ones((4, 1))).base,
        tuple(StepFunction2D.indicator(0, 1, 0, c, value=1.0).fibers[0] for c in cut),
    )
    f2 = StepFunction2D.constant(1.0) - f1
    ext = extract_blpq_atoms([f1, f2], P21)
    assert verify_blpq_structure(ext.images(), P21).is_blpq
    for j, f in enumerate([f1, f2]):
        assert distance(ext.reconstruct(j), f, P21) < 1e-12


def test_extract_requires_constant_sum():
    with pytest.raises(PreconditionError):
        extract_blpq_atoms([StepFunction2D.indicator(0, 0.5)], P21)


@pytest.mark.parametrize("blocks,pq", [((1, 2), (2, 1)), ((2, 3), (3, 2)), ((1, 1, 2), (1, 2))])
def test_extract_after_transport_recovers_block_sizes(blocks, pq):
    params = NormParams(*pq)
    spec = BKpqSpec(blocks, params)
    emb = random_embedding(np.random.default_rng(7), spec)
    from lplq.transport import apply, inverse, unit_to_e
    s = total(emb.images)
    u = unit_to_e(s * (1 / mixed_norm(s, params)), params)
    flat = [apply(inverse(u), f) for f in emb.images]  # sum is now constant
    ext = extract_blpq_atoms(flat, params)
    assert sorted(ext.spec.blocks) == sorted(blocks)


def test_quantize_identity_on_quantized_input():
    atoms = canonical_representation(BKpqSpec((1, 2), P21)).images()
    out = quantize_to_kpq(atoms, P21, 0.5)
    for a, b in zip(atoms, out.images):
        assert equal(a, b)


def test_quantize_counterexample_atoms():
    bundle = build_counterexample(P21, 128)
    pair = bundle.step_atoms[0]
    out = quantize_to_kpq(pair, P21, 0.1)
    for a, b in zip(pair.images, out.images):
        assert distance(a, b, P21) < 0.1
    assert equal(total(out.images), StepFunction2D.constant(1.0), 1e-12)
    extract_blpq_atoms(out.images, P21)


def test_quantize_level_count_nondecreasing():
    bundle = build_counterexample(P21, 256)
    counts = []
    for eps in (0.2, 0.1, 0.05):
        out = quantize_to_kpq(bundle.step_atoms[0], P21, eps)
        counts.append(len(extract_blpq_atoms(out.images, P21).levels))
    assert counts == sorted(counts)
