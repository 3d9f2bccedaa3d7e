"""Random step functions, automorphisms and embeddings for tests and experiments."""
from __future__ import annotations

import numpy as np

from .blpq import BKpqSpec, Embedding, canonical_representation
from .stepfn import NormParams, Partition1D, StepFunction1D, StepFunction2D, mixed_norm
from .transport import (
    LatticeAutomorphism,
    PLMap,
    apply,
    compose,
    fiber_rearrangement,
    interval_exchange,
    unit_to_e,
)


def random_partition(rng: np.random.Generator, n: int) -> Partition1D:
    # bounded ratios keep cells away from the merge tolerance
    c = np.cumsum(rng.uniform(0.2, 1.0, n))
    return Partition1D.from_edges(np.concatenate([[0.0], c[:-1] / c[-1], [1.0]]))


def random_step_function(rng: np.random.Generator, max_base: int = 4, max_fiber: int = 4,
                         low: float = -2.0, high: float = 2.0) -> StepFunction2D:
    base = random_partition(rng, int(rng.integers(1, max_base + 1)))
    fibers = tuple(
        StepFunction1D(random_partition(rng, k), rng.uniform(low, high, k))
        for k in rng.integers(1, max_fiber + 1, len(base))
    )
    return StepFunction2D(base, fibers)


def random_positive_unit(rng: np.random.Generator, params: NormParams, max_base: int = 4,
                         max_fiber: int = 4, spread: float = 5.0) -> StepFunction2D:
    """Strictly positive unit vector with values log-uniform in [1/spread, spread]."""
    f = random_step_function(rng, max_base, max_fiber, 0.0, 1.0)
    f = f.map(lambda v: np.exp(rng.uniform(-np.log(spread), np.log(spread), np.shape(v))))
    return f * (1.0 / mixed_norm(f, params))


def random_permutation(rng: np.random.Generator, k: int) -> list[int]:
    return [int(i) for i in rng.permutation(k)]


def random_interval_exchange(rng: np.random.Generator, k: int = 3) -> LatticeAutomorphism:
    beta = interval_exchange(random_partition(rng, k).lengths, random_permutation(rng, k))
    return LatticeAutomorphism(beta, Partition1D.trivial(), (PLMap.identity(),),
                               StepFunction2D.constant(1.0))


def random_fiber_exchange(rng: np.random.Generator, n_base: int = 2, k: int = 3) -> LatticeAutomorphism:
    part = random_partition(rng, n_base)
    maps = [interval_exchange(random_partition(rng, k).lengths, random_permutation(rng, k))
            for _ in range(n_base)]
    return fiber_rearrangement(part, maps)


def random_one_fixing(rng: np.random.Generator) -> LatticeAutomorphism:
    """Composite of base and fiber exchanges; fixes the constant 1."""
    return compose(random_interval_exchange(rng), compose(random_fiber_exchange(rng),
                                                          random_interval_exchange(rng)))


def random_automorphism(rng: np.random.Generator, params: NormParams) -> LatticeAutomorphism:
    return compose(random_interval_exchange(rng), unit_to_e(random_positive_unit(rng, params), params))


def random_embedding(rng: np.random.Generator, spec: BKpqSpec) -> Embedding:
    """Canonical atoms of ``spec`` moved by a random lattice automorphism."""
    a = random_automorphism(rng, spec.params)
    atoms = canonical_representation(spec).images()
    return Embedding(tuple(apply(a, f) for f in atoms), spec)


def random_disjoint_indicators(rng: np.random.Generator, n: int, grid: tuple = (4, 4),
                               cover: bool = False) -> list[StepFunction2D]:
    """``n`` indicators of disjoint unions of cells of a random grid."""
    nb, nf = grid
    xe = random_partition(rng, nb).edges
    ye = random_partition(rng, nf).edges
    labels = rng.integers(0 if cover else -1, n, (nb, nf))
    labels.flat[rng.permutation(nb * nf)[:n]] = np.arange(n)
    return [StepFunction2D.from_grid(xe, ye, (labels == k).astype(float)) for k in range(n)]
