"""Step functions on the unit square and their L_p(L_q) calculus.

A :class:`StepFunction2D` is constant on every rectangle ``base cell x fiber
cell``; each base cell carries its own fiber partition.  All operations work
on exact interval partitions, so norms are closed-form sums and the lattice
operations never introduce quadrature error.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import InvariantError, tolerances


@dataclass(frozen=True)
class NormParams:
    """Exponents of the mixed norm: ``p`` along the base, ``q`` along fibers."""

    p: float
    q: float

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 1:
                raise InvariantError(f"{name} must be a finite real >= 1, got {v!r}")
        if self.p == self.q:
            raise InvariantError("p and q must differ")

    @property
    def r(self) -> float:
        return self.p / self.q


def merge_edges(*edge_arrays: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Union of breakpoint sets in [0, 1]; points closer than ``tol`` are identified."""
    if tol is None:
        tol = tolerances().edge_merge
    pts = np.sort(np.concatenate([np.asarray(e, dtype=float) for e in edge_arrays] + [[0.0, 1.0]]))
    pts = pts[(pts > tol) & (pts < 1.0 - tol)]
    out = [0.0]
    for x in pts:
        if x - out[-1] > tol:
            out.append(float(x))
    out.append(1.0)
    return np.array(out)


@dataclass(frozen=True, eq=False)
class Partition1D:
    """Ordered positive interval lengths summing to one."""

    lengths: np.ndarray

    def __post_init__(self):
        arr = np.array(self.lengths, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise InvariantError("a partition needs at least one cell")
        if not np.all(arr > 0):
            raise InvariantError("partition cells must have positive length")
        if abs(arr.sum() - 1.0) > tolerances().eps_part:
            raise InvariantError(f"partition lengths sum to {arr.sum()!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "lengths", arr)

    @classmethod
    def trivial(cls) -> "Partition1D":
        return cls(np.ones(1))

    @classmethod
    def uniform(cls, n: int) -> "Partition1D":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def from_edges(cls, edges: Sequence[float]) -> "Partition1D":
        e = np.asarray(edges, dtype=float)
        if e[0] != 0.0 or e[-1] != 1.0:
            raise InvariantError("edges must start at 0 and end at 1")
        part = cls(np.diff(e))
        part.__dict__["edges"] = e.copy()
        return part

    def __len__(self) -> int:
        return self.lengths.size

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.empty(self.lengths.size + 1)
        e[0] = 0.0
        np.cumsum(self.lengths, out=e[1:])
        e[-1] = 1.0
        return e

    @cached_property
    def midpoints(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def locate(self, x):
        """Index of the cell containing ``x`` (right-closed cells, clipped)."""
        idx = np.searchsorted(self.edges, x, side="right") - 1
        return np.clip(idx, 0, self.lengths.size - 1)

    def same_as(self, other: "Partition1D") -> bool:
        return self is other or (
            self.lengths.size == other.lengths.size and np.array_equal(self.edges, other.edges)
        )


@dataclass(frozen=True, eq=False)
class StepFunction1D:
    partition: Partition1D
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.partition),):
            raise InvariantError(
                f"{vals.size} values for a partition with {len(self.partition)} cells"
            )
        if not np.all(np.isfinite(vals)):
            raise InvariantError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, c: float = 1.0) -> "StepFunction1D":
        return cls(Partition1D.trivial(), [c])

    @classmethod
    def from_edges(cls, edges: Sequence[float], values: Sequence[float]) -> "StepFunction1D":
        return cls(Partition1D.from_edges(edges), values)

    def __call__(self, x):
        return self.values[self.partition.locate(x)]

    def on(self, partition: Partition1D) -> "StepFunction1D":
        """Re-express on a finer partition (values read at cell midpoints)."""
        if partition.same_as(self.partition):
            return self
        return StepFunction1D(partition, self.values[self.partition.locate(partition.midpoints)])

    def power_integral(self, s: float) -> float:
        return float(np.dot(self.partition.lengths, np.abs(self.values) ** s))

    def lp_norm(self, p: float) -> float:
        return self.power_integral(p) ** (1.0 / p)

    def normalized(self) -> "StepFunction1D":
        """Merge adjacent cells carrying equal values."""
        v = self.values
        if v.size == 1:
            return self
        keep = np.flatnonzero(v[1:] != v[:-1]) + 1
        if keep.size == v.size - 1:
            return self
        edges = np.concatenate([[0.0], self.partition.edges[keep], [1.0]])
        return StepFunction1D(Partition1D.from_edges(edges), v[np.concatenate([[0], keep])])

    def to_json(self) -> dict:
        return {"lens": self.partition.lengths.tolist(), "vals": self.values.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "StepFunction1D":
        return cls(Partition1D(d["lens"]), d["vals"])


def refine_many_1d(us: Sequence[StepFunction1D]) -> list[StepFunction1D]:
    if all(u.partition.same_as(us[0].partition) for u in us):
        return list(us)
    part = Partition1D.from_edges(merge_edges(*(u.partition.edges for u in us)))
    return [u.on(part) for u in us]


def r_additivity_defect(us: Sequence[StepFunction1D], r: float) -> float:
    """Relative gap in ``||sum u||_r^r = sum ||u||_r^r``; zero for disjoint families."""
    us = refine_many_1d(us)
    total = StepFunction1D(us[0].partition, np.sum([u.values for u in us], axis=0))
    lhs = total.power_integral(r)
    rhs = sum(u.power_integral(r) for u in us)
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


@dataclass(frozen=True, eq=False)
class StepFunction2D:
    """Piecewise constant function on [0,1]^2: one fiber step function per base cell."""

    base: Partition1D
    fibers: tuple

    def __post_init__(self):
        fibers = tuple(self.fibers)
        if len(fibers) != len(self.base):
            raise InvariantError(f"{len(fibers)} fibers for {len(self.base)} base cells")
        object.__setattr__(self, "fibers", fibers)

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, c: float = 1.0) -> "StepFunction2D":
        return cls(Partition1D.trivial(), (StepFunction1D.constant(c),))

    @classmethod
    def from_grid(cls, xedges, yedges, values) -> "StepFunction2D":
        """Tensor grid; ``values[i, j]`` lives on base cell i, fiber cell j."""
        values = np.asarray(values, dtype=float)
        fp = Partition1D.from_edges(yedges)
        return cls(
            Partition1D.from_edges(xedges),
            tuple(StepFunction1D(fp, row) for row in values),
        )

    @classmethod
    def indicator(cls, x0: float, x1: float, y0: float = 0.0, y1: float = 1.0,
                  value: float = 1.0) -> "StepFunction2D":
        """``value`` times the indicator of ``[x0,x1] x [y0,y1]``."""
        xe = merge_edges([x0, x1])
        ye = merge_edges([y0, y1])
        xm = 0.5 * (xe[:-1] + xe[1:])
        ym = 0.5 * (ye[:-1] + ye[1:])
        inside = np.outer((xm > x0) & (xm < x1), (ym > y0) & (ym < y1))
        return cls.from_grid(xe, ye, np.where(inside, value, 0.0))

    @classmethod
    def from_base_profile(cls, u: StepFunction1D) -> "StepFunction2D":
        """Function constant along fibers, equal to ``u`` on the base."""
        return cls(u.partition, tuple(StepFunction1D.constant(v) for v in u.values))

    # -- inspection -------------------------------------------------------
    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        xb, yb = np.broadcast_arrays(x, y)
        idx = self.base.locate(xb)
        out = np.empty(xb.shape)
        for flat, (i, yy) in enumerate(zip(idx.ravel(), yb.ravel())):
            out.flat[flat] = self.fibers[int(i)](yy)
        return out if out.ndim else float(out)

    @property
    def piece_count(self) -> int:
        return sum(len(f.partition) for f in self.fibers)

    def fiber_at(self, x: float) -> StepFunction1D:
        return self.fibers[int(self.base.locate(x))]

    def min_value(self) -> float:
        return min(float(f.values.min()) for f in self.fibers)

    def max_value(self) -> float:
        return max(float(f.values.max()) for f in self.fibers)

    def is_positive(self) -> bool:
        return self.min_value() >= 0.0

    def has_full_support(self) -> bool:
        """Structural full support: no cell carries the value zero."""
        return all(np.all(f.values != 0.0) for f in self.fibers)

    # -- arithmetic -------------------------------------------------------
    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "StepFunction2D":
        return StepFunction2D(
            self.base, tuple(StepFunction1D(f.partition, fn(f.values)) for f in self.fibers)
        )

    def __neg__(self):
        return self.map(np.negative)

    def __abs__(self):
        return self.map(np.abs)

    def __add__(self, other):
        if isinstance(other, StepFunction2D):
            return combine(np.add, self, other)
        return self.map(lambda v: v + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, StepFunction2D):
            return combine(np.subtract, self, other)
        return self.map(lambda v: v - other)

    def __mul__(self, other):
        if isinstance(other, StepFunction2D):
            return combine(np.multiply, self, other)
        return self.map(lambda v: v * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, StepFunction2D):
            return combine(np.divide, self, other)
        return self.map(lambda v: v / other)

    # -- serialization ----------------------------------------------------
    def to_json(self) -> dict:
        return {"base": self.base.lengths.tolist(), "fibers": [f.to_json() for f in self.fibers]}

    @classmethod
    def from_json(cls, d: dict) -> "StepFunction2D":
        return cls(Partition1D(d["base"]), tuple(StepFunction1D.from_json(f) for f in d["fibers"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, s: str) -> "StepFunction2D":
        return cls.from_json(json.loads(s))


# -- refinement -------------------------------------------------------------

def refine_many(fs: Sequence[StepFunction2D]) -> list[StepFunction2D]:
    """Express all functions on one product partition (shared partition objects)."""
    fs = list(fs)
    first = fs[0]
    if all(f.base.same_as(first.base) for f in fs) and all(
        all(a.partition is b.partition for a, b in zip(f.fibers, first.fibers)) for f in fs
    ):
        return fs
    if all(f.base.same_as(first.base) for f in fs):
        base = first.base
        idx = [np.arange(len(base))] * len(fs)
    else:
        base = Partition1D.from_edges(merge_edges(*(f.base.edges for f in fs)))
        idx = [f.base.locate(base.midpoints) for f in fs]
    cache: dict[tuple, list[StepFunction1D]] = {}
    out: list[list[StepFunction1D]] = [[] for _ in fs]
    for c in range(len(base)):
        key = tuple(int(ix[c]) for ix in idx)
        fib = cache.get(key)
        if fib is None:
            parts = [f.fibers[k] for f, k in zip(fs, key)]
            fib = refine_many_1d(parts)
            cache[key] = fib
        for i, piece in enumerate(fib):
            out[i].append(piece)
    return [StepFunction2D(base, tuple(o)) for o in out]


def refine_common(f: StepFunction2D, g: StepFunction2D) -> tuple[StepFunction2D, StepFunction2D]:
    a, b = refine_many([f, g])
    return a, b


def combine(op: Callable, *fs: StepFunction2D) -> StepFunction2D:
    """Apply a pointwise n-ary ``op`` on the common refinement."""
    rs = refine_many(fs)
    base = rs[0].base
    fibers = tuple(
        StepFunction1D(rs[0].fibers[c].partition, op(*(r.fibers[c].values for r in rs)))
        for c in range(len(base))
    )
    return StepFunction2D(base, fibers)


def sup(f: StepFunction2D, g: StepFunction2D) -> StepFunction2D:
    return combine(np.maximum, f, g)


def inf(f: StepFunction2D, g: StepFunction2D) -> StepFunction2D:
    return combine(np.minimum, f, g)


def abs_(f: StepFunction2D) -> StepFunction2D:
    return abs(f)


def scale(c: float, f: StepFunction2D) -> StepFunction2D:
    return f * c


def add(f: StepFunction2D, g: StepFunction2D) -> StepFunction2D:
    return combine(np.add, f, g)


def total(fs: Iterable[StepFunction2D]) -> StepFunction2D:
    fs = list(fs)
    if len(fs) == 1:
        return fs[0]
    return combine(lambda *vs: np.sum(vs, axis=0), *fs)


def normalize(f: StepFunction2D) -> StepFunction2D:
    """Merge equal adjacent fiber cells, then equal adjacent base cells."""
    fibers = [fib.normalized() for fib in f.fibers]
    keep_edges = [0.0]
    merged = [fibers[0]]
    be = f.base.edges
    for c in range(1, len(fibers)):
        prev, cur = merged[-1], fibers[c]
        if np.array_equal(prev.values, cur.values) and np.array_equal(
            prev.partition.edges, cur.partition.edges
        ):
            continue
        keep_edges.append(be[c])
        merged.append(cur)
    if len(merged) == len(fibers):
        base = f.base
    else:
        base = Partition1D.from_edges(np.array(keep_edges + [1.0]))
    return StepFunction2D(base, tuple(merged))


def equal(f: StepFunction2D, g: StepFunction2D, tol: float = 0.0) -> bool:
    """Pointwise equality on the common refinement, up to ``tol`` in values."""
    a, b = refine_common(f, g)
    return all(np.all(np.abs(x.values - y.values) <= tol) for x, y in zip(a.fibers, b.fibers))


def max_abs_difference(f: StepFunction2D, g: StepFunction2D) -> float:
    a, b = refine_common(f, g)
    return max(float(np.max(np.abs(x.values - y.values))) for x, y in zip(a.fibers, b.fibers))


# -- norms --------------------------------------------------------------------

def _q_of(params) -> float:
    return params.q if isinstance(params, NormParams) else float(params)


def n_map(f: StepFunction2D, params: NormParams | float) -> StepFunction1D:
    """Fiber norm ``N[f](x) = ||f(x, .)||_q`` as a step function on the base."""
    q = _q_of(params)
    vals = [fib.power_integral(q) ** (1.0 / q) for fib in f.fibers]
    return StepFunction1D(f.base, vals)


def n_q_map(f: StepFunction2D, params: NormParams | float) -> StepFunction1D:
    """``N[f]^q`` on the base."""
    q = _q_of(params)
    return StepFunction1D(f.base, [fib.power_integral(q) for fib in f.fibers])


def mixed_norm(f: StepFunction2D, params: NormParams) -> float:
    p, q = params.p, params.q
    inner = np.array([fib.power_integral(q) for fib in f.fibers])
    return float(np.dot(f.base.lengths, inner ** (p / q)) ** (1.0 / p))


def distance(f: StepFunction2D, g: StepFunction2D, params: NormParams) -> float:
    return mixed_norm(f - g, params)


def is_disjoint(f: StepFunction2D, g: StepFunction2D, tol: float = 0.0) -> bool:
    a, b = refine_common(f, g)
    return all(
        np.all(np.minimum(np.abs(x.values), np.abs(y.values)) <= tol)
        for x, y in zip(a.fibers, b.fibers)
    )


def is_base_disjoint(f: StepFunction2D, g: StepFunction2D, params: NormParams | float,
                     tol: float = 0.0) -> bool:
    nf, ng = refine_many_1d([n_map(f, params), n_map(g, params)])
    return bool(np.all(np.minimum(nf.values, ng.values) <= tol))


def support_mask(f: StepFunction2D, tol: float = 0.0) -> list[np.ndarray]:
    return [np.abs(fib.values) > tol for fib in f.fibers]


def dumps_many(fs: Sequence[StepFunction2D]) -> str:
    return json.dumps([f.to_json() for f in fs])


def loads_many(s: str) -> list[StepFunction2D]:
    data = json.loads(s)
    if isinstance(data, dict):
        data = data.get("images", [data])
    return [StepFunction2D.from_json(d) for d in data]
