"""Lattice automorphisms of step-function L_p(L_q) built from measure transport.

Every automorphism here has the form

    (T f)(x, y) = m(x, y) * f(beta(x), gamma_x(y))

with ``beta`` a piecewise-linear bijection of the base, ``gamma_x`` a
piecewise-linear bijection of the fiber (constant in ``x`` on the cells of
``fiber_index``) and ``m`` a positive step multiplier.  Because all maps are
piecewise linear and all functions piecewise constant, composition, inversion
and application are exact up to float rounding of breakpoints.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .blpq import BKpqSpec, Embedding, verify_blpq_structure
from .config import InvariantError, PreconditionError, tolerances
from .stepfn import (
    NormParams,
    Partition1D,
    StepFunction1D,
    StepFunction2D,
    combine,
    distance,
    equal,
    merge_edges,
    mixed_norm,
    n_map,
    normalize,
    refine_many,
    total,
)


SNAP_TOL = 1e-6  # largest image seam closed during composition
SLIVER = 1e-14  # domain cells this narrow are rounding artefacts


def _drop_slivers(edges: np.ndarray) -> np.ndarray:
    kept = [0.0]
    for x in edges[1:-1]:
        if x - kept[-1] > SLIVER and 1.0 - x > SLIVER:
            kept.append(float(x))
    kept.append(1.0)
    return np.array(kept)


@dataclass(frozen=True, eq=False)
class PLMap:
    """Piecewise-linear bijection of [0, 1], increasing on each piece.

    Piece ``i`` sends ``[dom[i], dom[i+1]]`` onto ``[lo[i], hi[i]]``; the image
    intervals tile [0, 1] in some order.  Monotone maps (CDFs) and interval
    exchanges are both special cases.
    """

    dom: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        dom = np.array(self.dom, dtype=float)
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        tol = 1e3 * tolerances().edge_merge
        if dom[0] != 0.0 or dom[-1] != 1.0 or np.any(np.diff(dom) <= 0):
            raise InvariantError("domain edges must increase from 0 to 1")
        if lo.shape != (dom.size - 1,) or hi.shape != lo.shape or np.any(hi <= lo):
            raise InvariantError("each piece needs an increasing image interval")
        order = np.argsort(lo)
        if abs(lo[order[0]]) > tol or abs(hi[order[-1]] - 1.0) > tol or np.any(
            np.abs(lo[order[1:]] - hi[order[:-1]]) > tol
        ):
            raise InvariantError("image intervals do not tile [0, 1]")
        for arr in (dom, lo, hi):
            arr.setflags(write=False)
        object.__setattr__(self, "dom", dom)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def identity(cls) -> "PLMap":
        return cls(np.array([0.0, 1.0]), np.array([0.0]), np.array([1.0]))

    @classmethod
    def monotone(cls, xs, ys) -> "PLMap":
        """Increasing bijection through the points ``(xs[i], ys[i])``."""
        ys = np.asarray(ys, dtype=float)
        return cls(xs, ys[:-1], ys[1:])

    def __len__(self):
        return self.lo.size

    @property
    def slopes(self) -> np.ndarray:
        return (self.hi - self.lo) / np.diff(self.dom)

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.lo) > 0))

    def is_identity(self) -> bool:
        return len(self) == 1

    def piece_of(self, x):
        return np.clip(np.searchsorted(self.dom, x, side="right") - 1, 0, self.lo.size - 1)

    def affine(self, i, x):
        d0, d1 = self.dom[i], self.dom[np.asarray(i) + 1]
        return self.lo[i] + (x - d0) * (self.hi[i] - self.lo[i]) / (d1 - d0)

    def __call__(self, x):
        return self.affine(self.piece_of(x), x)

    @cached_property
    def inverse(self) -> "PLMap":
        order = np.argsort(self.lo)
        dom = np.concatenate([self.lo[order], [1.0]])
        dom[0] = 0.0
        inv = PLMap(dom, self.dom[order], self.dom[order + 1])
        inv.__dict__["inverse"] = self
        return inv

    def preimages(self, points) -> np.ndarray:
        """All x with ``self(x)`` in ``points``, restricted to piece interiors."""
        pts = np.asarray(points, dtype=float)
        out = []
        for i in range(self.lo.size):
            inside = pts[(pts > self.lo[i]) & (pts < self.hi[i])]
            if inside.size:
                out.append(self.dom[i] + (inside - self.lo[i]) * (self.dom[i + 1] - self.dom[i])
                           / (self.hi[i] - self.lo[i]))
        return np.concatenate(out) if out else np.empty(0)

    def compose(self, other: "PLMap") -> "PLMap":
        """``x -> self(other(x))``."""
        if other.is_identity():
            return self
        if self.is_identity():
            return other
        # no tolerance merge here: a sliver of the domain may carry a wide image
        edges = np.unique(np.concatenate([other.dom, other.preimages(self.dom)]))
        edges = _drop_slivers(edges)
        mids = 0.5 * (edges[:-1] + edges[1:])
        io = other.piece_of(mids)
        js = self.piece_of(other.affine(io, mids))
        lo = self.affine(js, other.affine(io, edges[:-1]))
        hi = self.affine(js, other.affine(io, edges[1:]))
        return PLMap._snapped(edges, lo, hi)

    @staticmethod
    def _snapped(edges, lo, hi) -> "PLMap":
        # Steep pieces amplify breakpoint rounding; close the resulting seams.
        for _ in range(4):
            keep = hi > lo
            if not keep.all():
                edges = np.concatenate([edges[:-1][keep], [1.0]])
                edges[0] = 0.0
                lo, hi = lo[keep], hi[keep]
            order = np.argsort(lo)
            seams = np.concatenate([[lo[order[0]]], lo[order[1:]] - hi[order[:-1]],
                                    [hi[order[-1]] - 1]])
            if np.max(np.abs(seams)) > SNAP_TOL:
                raise InvariantError("image intervals do not tile [0, 1]")
            lo, hi = lo.copy(), hi.copy()
            lo[order[0]] = 0.0
            hi[order[-1]] = 1.0
            mid = 0.5 * (lo[order[1:]] + hi[order[:-1]])
            lo[order[1:]] = mid
            hi[order[:-1]] = mid
            if np.all(hi > lo):
                return PLMap(edges, lo, hi)
        raise InvariantError("could not repair the image tiling")

    def to_json(self) -> dict:
        return {"dom": self.dom.tolist(), "lo": self.lo.tolist(), "hi": self.hi.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "PLMap":
        return cls(d["dom"], d["lo"], d["hi"])


MonotoneMap1D = PLMap


def _compose_fiber(g: StepFunction1D, gamma: PLMap) -> StepFunction1D:
    """``y -> g(gamma(y))``."""
    if gamma.is_identity():
        return g
    edges = merge_edges(gamma.dom, gamma.preimages(g.partition.edges))
    part = Partition1D.from_edges(edges)
    return StepFunction1D(part, g.values[g.partition.locate(gamma(part.midpoints))])


def pullback(beta: PLMap, fiber_index: Partition1D, fiber_maps: Sequence[PLMap],
             f: StepFunction2D) -> StepFunction2D:
    """``(x, y) -> f(beta(x), gamma_x(y))``."""
    edges = merge_edges(beta.dom, beta.preimages(f.base.edges), fiber_index.edges)
    base = Partition1D.from_edges(edges)
    mids = base.midpoints
    i_f = f.base.locate(beta(mids))
    i_p = fiber_index.locate(mids)
    cache: dict = {}
    fibers = []
    for a, b in zip(i_p, i_f):
        key = (int(a), int(b))
        fib = cache.get(key)
        if fib is None:
            fib = cache[key] = _compose_fiber(f.fibers[key[1]], fiber_maps[key[0]])
        fibers.append(fib)
    return StepFunction2D(base, tuple(fibers))


@dataclass(frozen=True, eq=False)
class LatticeAutomorphism:
    base_map: PLMap
    fiber_index: Partition1D
    fiber_maps: tuple
    multiplier: StepFunction2D

    def __post_init__(self):
        object.__setattr__(self, "fiber_maps", tuple(self.fiber_maps))
        if len(self.fiber_maps) != len(self.fiber_index):
            raise InvariantError("one fiber map per fiber-index cell is required")
        if self.multiplier.min_value() <= 0:
            raise InvariantError("the multiplier must be strictly positive")

    @classmethod
    def identity(cls) -> "LatticeAutomorphism":
        return cls(PLMap.identity(), Partition1D.trivial(), (PLMap.identity(),),
                   StepFunction2D.constant(1.0))

    def __call__(self, f: StepFunction2D) -> StepFunction2D:
        return apply(self, f)

    def __matmul__(self, other: "LatticeAutomorphism") -> "LatticeAutomorphism":
        return compose(self, other)

    @cached_property
    def inverse(self) -> "LatticeAutomorphism":
        return inverse(self)

    def check_isometry(self, fs: Sequence[StepFunction2D], params: NormParams) -> float:
        """Largest relative norm defect over the witnesses ``fs``."""
        worst = 0.0
        for f in fs:
            a, b = mixed_norm(apply(self, f), params), mixed_norm(f, params)
            worst = max(worst, abs(a - b) / max(1.0, b))
        return worst

    def to_json(self) -> dict:
        return {
            "base_map": self.base_map.to_json(),
            "fiber_index": self.fiber_index.lengths.tolist(),
            "fiber_maps": [g.to_json() for g in self.fiber_maps],
            "multiplier": self.multiplier.to_json(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "LatticeAutomorphism":
        return cls(
            PLMap.from_json(d["base_map"]),
            Partition1D(d["fiber_index"]),
            tuple(PLMap.from_json(g) for g in d["fiber_maps"]),
            StepFunction2D.from_json(d["multiplier"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def apply(a: LatticeAutomorphism, f: StepFunction2D) -> StepFunction2D:
    pulled = pullback(a.base_map, a.fiber_index, a.fiber_maps, f)
    return normalize(combine(np.multiply, a.multiplier, pulled))


def compose(second: LatticeAutomorphism, first: LatticeAutomorphism) -> LatticeAutomorphism:
    """The automorphism ``f -> second(first(f))``."""
    b2 = second.base_map
    beta = first.base_map.compose(b2)
    edges = merge_edges(second.fiber_index.edges, b2.dom, b2.preimages(first.fiber_index.edges))
    index = Partition1D.from_edges(edges)
    mids = index.midpoints
    i2 = second.fiber_index.locate(mids)
    i1 = first.fiber_index.locate(b2(mids))
    cache: dict = {}
    maps = []
    for a, b in zip(i1, i2):
        key = (int(a), int(b))
        g = cache.get(key)
        if g is None:
            g = cache[key] = first.fiber_maps[key[0]].compose(second.fiber_maps[key[1]])
        maps.append(g)
    pulled = pullback(b2, second.fiber_index, second.fiber_maps, first.multiplier)
    mult = normalize(combine(np.multiply, second.multiplier, pulled))
    return LatticeAutomorphism(beta, index, tuple(maps), mult)


def inverse(a: LatticeAutomorphism) -> LatticeAutomorphism:
    binv = a.base_map.inverse
    edges = merge_edges(binv.dom, binv.preimages(a.fiber_index.edges))
    index = Partition1D.from_edges(edges)
    src = a.fiber_index.locate(binv(index.midpoints))
    maps = tuple(a.fiber_maps[int(i)].inverse for i in src)
    recip = a.multiplier.map(lambda v: 1.0 / v)
    mult = normalize(pullback(binv, index, maps, recip))
    return LatticeAutomorphism(binv, index, maps, mult)


# -- constructions -------------------------------------------------------------

def unit_to_e(e: StepFunction2D, params: NormParams) -> LatticeAutomorphism:
    """Automorphism sending the constant 1 to ``e``.

    ``e`` must be strictly positive on every cell and have unit norm.  The base
    map is the p-CDF of ``N[e]``, each fiber map the normalized q-CDF of ``e``
    on that fiber, and the multiplier is ``e`` itself.
    """
    tol = tolerances()
    if not e.has_full_support() or e.min_value() <= 0:
        raise PreconditionError("e must be strictly positive on every cell")
    nrm = mixed_norm(e, params)
    if abs(nrm - 1.0) > tol.eps_norm:
        raise PreconditionError(f"e must have unit norm, got {nrm!r}")
    p, q = params.p, params.q
    nq = np.array([fib.power_integral(q) for fib in e.fibers])
    cum = np.concatenate([[0.0], np.cumsum(e.base.lengths * nq ** (p / q))])
    if np.any(np.diff(cum) <= 0):
        raise PreconditionError("a base cell of e carries mass below double precision")
    beta = PLMap.monotone(e.base.edges, cum / cum[-1])
    maps = []
    for fib in e.fibers:
        if fib.values.size == 1:
            maps.append(PLMap.identity())
            continue
        c = np.concatenate([[0.0], np.cumsum(fib.partition.lengths * fib.values ** q)])
        if np.any(np.diff(c) <= 0):
            raise PreconditionError("a fiber cell of e carries mass below double precision")
        maps.append(PLMap.monotone(fib.partition.edges, c / c[-1]))
    return LatticeAutomorphism(beta, e.base, tuple(maps), e)


def _as_intervals(family) -> list[tuple[float, float]]:
    if len(family) == 2 and np.isscalar(family[0]):
        family = [family]
    return [(float(a), float(b)) for a, b in family if b > a]


def _stream_pieces(dst, src) -> list[tuple[float, float, float, float]]:
    """Match two interval families as concatenated streams, linearly."""
    ld = sum(b - a for a, b in dst)
    ls = sum(b - a for a, b in src)
    ratio = ls / ld
    cuts_d = np.concatenate([[0.0], np.cumsum([b - a for a, b in dst])])
    cuts_s = np.concatenate([[0.0], np.cumsum([b - a for a, b in src])]) / ratio
    cuts = np.unique(np.concatenate([cuts_d, cuts_s]))
    pieces = []
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        if t1 - t0 <= 0:
            continue
        tm = 0.5 * (t0 + t1)
        i = min(int(np.searchsorted(cuts_d, tm, side="right") - 1), len(dst) - 1)
        k = min(int(np.searchsorted(cuts_s, tm, side="right") - 1), len(src) - 1)
        da = dst[i][0] + (t0 - cuts_d[i])
        db = dst[i][0] + (t1 - cuts_d[i])
        sa = src[k][0] + (t0 - cuts_s[k]) * ratio
        sb = src[k][0] + (t1 - cuts_s[k]) * ratio
        pieces.append((da, db, sa, sb))
    return pieces


def _complement(intervals) -> list[tuple[float, float]]:
    tol = tolerances().edge_merge
    out, pos = [], 0.0
    for a, b in sorted(intervals):
        if a - pos > tol:
            out.append((pos, a))
        pos = max(pos, b)
    if 1.0 - pos > tol:
        out.append((pos, 1.0))
    return out


def _base_map_from_families(dst_families, src_families, check_lengths: bool) -> PLMap:
    dst_families = [_as_intervals(f) for f in dst_families]
    src_families = [_as_intervals(f) for f in src_families]
    tol = tolerances().eps_norm
    rest_d = _complement([iv for f in dst_families for iv in f])
    rest_s = _complement([iv for f in src_families for iv in f])
    if rest_d or rest_s:
        dst_families.append(rest_d)
        src_families.append(rest_s)
    pieces = []
    for k, (d, s) in enumerate(zip(dst_families, src_families)):
        ld = sum(b - a for a, b in d)
        ls = sum(b - a for a, b in s)
        if check_lengths and abs(ld - ls) > tol:
            raise PreconditionError(f"family {k}: lengths {ls!r} and {ld!r} differ")
        if ld <= 0 or ls <= 0:
            if max(ld, ls) > tol:
                raise PreconditionError(f"family {k} is empty on one side only")
            continue
        pieces.extend(_stream_pieces(d, s))
    pieces.sort()
    edges = merge_edges([pc[0] for pc in pieces] + [pc[1] for pc in pieces])
    starts = np.array([pc[0] for pc in pieces])
    mids = 0.5 * (edges[:-1] + edges[1:])
    idx = np.clip(np.searchsorted(starts, mids, side="right") - 1, 0, None)
    lo, hi = [], []
    for i, a, b in zip(idx, edges[:-1], edges[1:]):
        da, db, sa, sb = pieces[i]
        slope = (sb - sa) / (db - da)
        lo.append(sa + (a - da) * slope)
        hi.append(sa + (b - da) * slope)
    return PLMap(edges, lo, hi)


@dataclass(frozen=True)
class BaseRearrangement:
    """Interval-exchange data: ``src[k]`` is carried onto ``dst[k]``."""

    src: tuple
    dst: tuple

    def automorphism(self) -> LatticeAutomorphism:
        beta = _base_map_from_families(self.dst, self.src, check_lengths=True)
        return LatticeAutomorphism(beta, Partition1D.trivial(), (PLMap.identity(),),
                                   StepFunction2D.constant(1.0))


def base_rearrangement(src_cells, dst_cells) -> LatticeAutomorphism:
    """Measure-preserving base exchange with ``T(1_{src[k]}) = 1_{dst[k]}``.

    Each entry is an interval ``(a, b)`` or a list of intervals; families are
    matched in order and must carry equal total length.
    """
    return BaseRearrangement(tuple(src_cells), tuple(dst_cells)).automorphism()


def fiber_rearrangement(partition: Partition1D, maps: Sequence[PLMap]) -> LatticeAutomorphism:
    """Per base cell, compose fibers with a measure-preserving exchange."""
    for g in maps:
        if np.max(np.abs(g.slopes - 1.0)) > 1e-9:
            raise PreconditionError("fiber maps must preserve measure")
    return LatticeAutomorphism(PLMap.identity(), partition, tuple(maps),
                               StepFunction2D.constant(1.0))


def interval_exchange(lengths, perm) -> PLMap:
    """Cut [0,1] into ``lengths`` and lay the pieces down in order ``perm``."""
    lengths = np.asarray(lengths, dtype=float)
    src_edges = np.concatenate([[0.0], np.cumsum(lengths)])
    src_edges[-1] = 1.0
    placed = np.concatenate([[0.0], np.cumsum(lengths[list(perm)])])
    placed[-1] = 1.0
    start = np.empty(lengths.size)
    start[list(perm)] = placed[:-1]
    end = np.empty(lengths.size)
    end[list(perm)] = placed[1:]
    return PLMap(src_edges, start, end)


# -- full-support perturbation ------------------------------------------------

def perturbation_bound(eps: float, params: NormParams) -> float:
    """Per-atom distance bound for :func:`full_support_perturbation`.

    The fiber-filling term carries a share ``eps`` of each fiber's q-mass, so
    its norm is ``eps**(1/q)`` times the atom norm.
    """
    p, q = params.p, params.q
    return (1 - (1 - eps) ** (1 / q)) + eps ** (1 / q) + (1 - (1 - eps ** p) ** (1 / p)) + eps


def perturbation_parameter(target: float, params: NormParams) -> float:
    """Largest ``eps`` whose :func:`perturbation_bound` is at most ``target``."""
    if perturbation_bound(0.5, params) <= target:
        return 0.5
    return brentq(lambda t: perturbation_bound(t, params) - target, 0.0, 0.5, xtol=1e-300,
                  rtol=1e-12)


def full_support_perturbation(images: Sequence[StepFunction2D] | Embedding, params: NormParams,
                              eps: float) -> Embedding:
    """Nearby isometric copy of a disjoint family whose sum has full support.

    Stage one fills the empty part of each fiber above the base support with a
    share ``eps`` of the fiber mass; stage two adds an ``eps``-weighted copy of
    the whole family on the uncovered part of the base.  Fibers without slack
    are left untouched, so N-profiles are preserved exactly.
    """
    if not 0 < eps < 1:
        raise PreconditionError("eps must lie in (0, 1)")
    spec = images.spec if isinstance(images, Embedding) else None
    images = list(images)
    if total(images).has_full_support():
        return Embedding(tuple(images), spec)
    p, q = params.p, params.q
    rs = refine_many(images)
    base = rs[0].base
    n = len(rs)
    new = [list(r.fibers) for r in rs]
    covered_base = np.zeros(len(base), dtype=bool)
    shrink = (1 - eps) ** (1 / q)
    for c in range(len(base)):
        fibs = [r.fibers[c] for r in rs]
        nq = np.array([f.power_integral(q) for f in fibs])
        owners = np.flatnonzero(nq > 0)
        if owners.size == 0:
            continue
        covered_base[c] = True
        part = fibs[0].partition
        free = np.all(np.array([f.values for f in fibs]) == 0, axis=0)
        slack = float(np.dot(part.lengths, free))
        if slack <= 0:
            continue
        k = owners[0]
        vals = np.where(free, (eps * nq[k] / slack) ** (1 / q), shrink * fibs[k].values)
        new[k][c] = StepFunction1D(part, vals)
    stage1 = [StepFunction2D(base, tuple(fl)) for fl in new]
    if covered_base.all():
        return Embedding(tuple(normalize(g) for g in stage1), spec)
    edges = base.edges
    inside = [(edges[c], edges[c + 1]) for c in range(len(base)) if covered_base[c]]
    outside = [(edges[c], edges[c + 1]) for c in range(len(base)) if not covered_base[c]]
    # swap-and-stretch isometry carrying the covered band onto its complement
    beta = _base_map_from_families([outside, inside], [inside, outside], check_lengths=False)
    mult = StepFunction2D.from_base_profile(
        StepFunction1D(Partition1D.from_edges(beta.dom), beta.slopes ** (1 / p))
    )
    swap = LatticeAutomorphism(beta, Partition1D.trivial(), (PLMap.identity(),), mult)
    keep = (1 - eps ** p) ** (1 / p)
    out = [normalize(g * keep + apply(swap, g) * eps) for g in stage1]
    return Embedding(tuple(out), spec)


# -- band matching and the homogeneity pipeline ----------------------------------

def _cells_to_intervals(edges: np.ndarray, mask: np.ndarray) -> list[tuple[float, float]]:
    out = []
    for c in np.flatnonzero(mask):
        a, b = float(edges[c]), float(edges[c + 1])
        if out and abs(out[-1][1] - a) <= 0:
            out[-1] = (out[-1][0], b)
        else:
            out.append((a, b))
    return out


def _band_automorphism(images: Sequence[StepFunction2D], blocks: list, params: NormParams,
                       widths: np.ndarray) -> LatticeAutomorphism:
    """Automorphism sending ``eta 1_{W_k x V_{k,j}}`` onto the j-th atom of block k."""
    rs = refine_many([normalize(f) for f in images])
    base = rs[0].base
    edges = base.edges
    scale = max(f.max_value() for f in rs)
    thr = 1e-9 * scale
    block_of_cell = np.full(len(base), -1)
    for k, block in enumerate(blocks):
        for t in block:
            block_of_cell[n_map(rs[t], params).values > thr] = k
    if np.any(block_of_cell < 0):
        raise PreconditionError("images do not cover the base")
    maps = []
    for c in range(len(base)):
        block = blocks[block_of_cell[c]]
        m = len(block)
        part = rs[block[0]].fibers[c].partition
        fe = part.edges
        pieces = []
        for j, t in enumerate(block):
            cells = np.flatnonzero(rs[t].fibers[c].values > thr)
            length = float(np.sum(part.lengths[cells]))
            if length <= 0:
                raise PreconditionError("an atom vanishes on a fiber of its band")
            pos, ratio = j / m, (1.0 / m) / length
            for i in cells:
                w = part.lengths[i] * ratio
                pieces.append((fe[i], fe[i + 1], pos, pos + w))
                pos += w
        pieces.sort()
        covered = sum(b - a for a, b, _, _ in pieces)
        if abs(covered - 1.0) > 1e-9:
            raise PreconditionError("the atoms of a band do not fill its fibers")
        dom = np.array([pc[0] for pc in pieces] + [1.0])
        maps.append(PLMap(dom, [pc[2] for pc in pieces], [pc[3] for pc in pieces]))
    psi = LatticeAutomorphism(PLMap.identity(), base, tuple(maps), StepFunction2D.constant(1.0))
    w_edges = np.concatenate([[0.0], np.cumsum(widths)])
    w_edges[-1] = 1.0
    src = [[(w_edges[k], w_edges[k + 1])] for k in range(len(blocks))]
    dst = [_cells_to_intervals(edges, block_of_cell == k) for k in range(len(blocks))]
    rho = base_rearrangement(src, dst)
    return compose(psi, rho)


def _normalized_structure(images, params):
    report = verify_blpq_structure(images, params)
    if not report.is_blpq:
        raise PreconditionError("; ".join(report.violations) or "not a BLpLq family")
    s = total(images)
    lo, hi = s.min_value(), s.max_value()
    if lo <= 0 or hi - lo > tolerances().eps_norm * hi:
        raise PreconditionError("sum of images is not a constant multiple of 1")
    return report, hi


def match_bands(emb1: Sequence[StepFunction2D], emb2: Sequence[StepFunction2D],
                params: NormParams) -> LatticeAutomorphism:
    """Automorphism carrying each image of ``emb1`` onto the same-index image of ``emb2``.

    Both families must be fully supporting BLpLq families with equal block
    structure and sum ``eta * 1``.
    """
    emb1, emb2 = list(emb1), list(emb2)
    if len(emb1) != len(emb2):
        raise PreconditionError("embeddings have different atom counts")
    r1, eta1 = _normalized_structure(emb1, params)
    r2, eta2 = _normalized_structure(emb2, params)
    if sorted(map(tuple, r1.block_partition)) != sorted(map(tuple, r2.block_partition)):
        raise PreconditionError(
            f"structural mismatch: blocks {r1.block_partition} vs {r2.block_partition}"
        )
    if abs(eta1 - eta2) > tolerances().eps_norm * eta1:
        raise PreconditionError("the two families have different sums")
    blocks = r1.block_partition
    spec = BKpqSpec(tuple(len(b) for b in blocks), params)
    p, q = params.p, params.q
    widths = np.array([len(b) ** (p / q) for b in blocks]) / spec.eta ** p
    phi1 = _band_automorphism(emb1, blocks, params, widths)
    phi2 = _band_automorphism(emb2, blocks, params, widths)
    return compose(phi2, inverse(phi1))


@dataclass
class PipelineReport:
    residuals: list
    eps: float
    perturbation: list = field(default_factory=list)
    band_residual: float = 0.0

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0

    @property
    def ok(self) -> bool:
        return self.max_residual < self.eps


PIPELINE_SHARE = 4  # each perturbation moves atoms by at most eps / 4


def auh_pipeline(emb1: Sequence[StepFunction2D], emb2: Sequence[StepFunction2D],
                 params: NormParams, eps: float) -> tuple[LatticeAutomorphism, PipelineReport]:
    """Automorphism ``phi`` with ``||phi(emb1[t]) - emb2[t]|| < eps`` for every atom."""
    emb1, emb2 = list(emb1), list(emb2)
    delta = perturbation_parameter(eps / PIPELINE_SHARE, params)
    staged, units, pert = [], [], []
    for emb in (emb1, emb2):
        g = list(full_support_perturbation(emb, params, delta))
        pert.append(max(distance(a, b, params) for a, b in zip(emb, g)))
        s = total(g)
        u = s * (1.0 / mixed_norm(s, params))
        U = unit_to_e(u, params)
        Uinv = inverse(U)
        staged.append((g, [apply(Uinv, x) for x in g]))
        units.append((U, Uinv))
    (g1, h1), (g2, h2) = staged
    psi = match_bands(h1, h2, params)
    band = max(distance(apply(psi, a), b, params) for a, b in zip(h1, h2))
    phi = compose(units[1][0], compose(psi, units[0][1]))
    residuals = [distance(apply(phi, a), b, params) for a, b in zip(emb1, emb2)]
    return phi, PipelineReport(residuals, eps, pert, band)


# -- stability of the unit-to-e map -------------------------------------------

def _is_interval_indicator(fib: StepFunction1D) -> bool:
    v = fib.values
    if not np.all((v == 0) | (v == 1)):
        return False
    ones = np.flatnonzero(v == 1)
    return ones.size == 0 or ones[-1] - ones[0] + 1 == ones.size


def stability_probe(fs: Sequence[StepFunction2D], e: StepFunction2D, params: NormParams) -> float:
    """``max_k ||phi(f_k) - f_k||`` for the automorphism ``phi`` sending 1 to ``e``."""
    fs = list(fs)
    if not equal(total(fs), StepFunction2D.constant(1.0), tolerances().eps_part):
        raise PreconditionError("the family must sum to 1")
    for k, f in enumerate(fs):
        if not all(_is_interval_indicator(fib.normalized()) for fib in f.fibers):
            raise PreconditionError(f"f[{k}] is not a fiberwise interval indicator")
    phi = unit_to_e(e, params)
    return max(distance(apply(phi, f), f, params) for f in fs)
