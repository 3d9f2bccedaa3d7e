"""Pushforward measures of fiber-norm profiles and moment comparisons."""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .config import PreconditionError
from .stepfn import NormParams, StepFunction2D, is_disjoint, refine_many


@dataclass(frozen=True, eq=False)
class VectorMeasure:
    """Finitely supported measure on R^n given as masses at points.

    With ``exact=True`` masses and coordinates are kept as Python numbers
    (typically ``Fraction``) in object arrays and compared without tolerance.
    """

    masses: np.ndarray
    points: np.ndarray
    exact: bool = False

    def __post_init__(self):
        dtype = object if self.exact else float
        masses = np.asarray(self.masses, dtype=dtype).reshape(-1)
        points = np.asarray(self.points, dtype=dtype)
        if points.ndim == 1:
            points = points.reshape(masses.size, -1)
        if points.shape[0] != masses.size:
            raise PreconditionError("one point per mass is required")
        if np.any(masses <= 0):
            raise PreconditionError("masses must be positive")
        if masses.size and sum(masses) > 1 + 1e-12:
            raise PreconditionError("total mass exceeds 1")
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "points", points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self):
        return sum(self.masses)

    def __len__(self):
        return self.masses.size

    def canonical(self) -> "VectorMeasure":
        """Identical points merged, points sorted lexicographically."""
        acc: dict = {}
        for m, pt in zip(self.masses, map(tuple, self.points)):
            acc[pt] = acc.get(pt, 0) + m
        keys = sorted(acc)
        pts = np.array(keys, dtype=object if self.exact else float).reshape(len(keys), self.dim)
        return VectorMeasure(np.array([acc[k] for k in keys]), pts, self.exact)

    def same_as(self, other: "VectorMeasure") -> bool:
        a, b = self.canonical(), other.canonical()
        return (a.dim == b.dim and len(a) == len(b)
                and all(x == y for x, y in zip(a.masses, b.masses))
                and all(x == y for x, y in zip(a.points.ravel(), b.points.ravel())))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mass"] + [f"z{i}" for i in range(self.dim)])
        for m, pt in zip(self.masses, self.points):
            w.writerow([_fmt(m)] + [_fmt(z) for z in pt])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "VectorMeasure":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        data = np.array([[float(x) for x in row] for row in rows])
        return cls(data[:, 0], data[:, 1:])


def _fmt(x) -> str:
    return str(x) if isinstance(x, Fraction) else format(float(x), ".17g")


def pushforward(fs: Sequence[StepFunction2D], params: NormParams | float,
                power: float = 1.0) -> VectorMeasure:
    """Law of ``x -> (N[f_1](x)**power, ..., N[f_n](x)**power)`` on the base.

    ``params`` may be a :class:`NormParams` or the fiber exponent ``q``.
    """
    if not fs:
        raise PreconditionError("pushforward needs at least one function")
    q = params.q if isinstance(params, NormParams) else float(params)
    rs = refine_many(list(fs))
    lengths = rs[0].base.lengths
    pts = np.array([[fib.power_integral(q) ** (power / q) for fib in r.fibers] for r in rs]).T
    return VectorMeasure(lengths, pts).canonical()


def _clusters(points: np.ndarray, tau: float) -> np.ndarray:
    """Single-linkage cluster labels for the l-infinity distance ``<= tau``."""
    n = points.shape[0]
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    order = np.argsort(points[:, 0], kind="stable")
    xs = points[order, 0]
    for a in range(n):
        b = a + 1
        while b < n and xs[b] - xs[a] <= tau:
            i, j = order[a], order[b]
            if np.max(np.abs(points[i] - points[j])) <= tau:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
            b += 1
    return np.array([find(i) for i in range(n)])


@dataclass
class EquimeasureReport:
    equal: bool
    unmatched_mass: float
    max_cluster_difference: float
    clusters: int


def compare(m1: VectorMeasure, m2: VectorMeasure, tau_val: float = 1e-9,
            tau_mass: float = 1e-9) -> EquimeasureReport:
    """Cluster both supports jointly and compare cluster masses.

    ``unmatched_mass`` is the total-variation distance of the two measures
    after identifying points within ``tau_val``.
    """
    if m1.dim != m2.dim:
        raise PreconditionError(f"dimension mismatch: {m1.dim} vs {m2.dim}")
    if m1.exact and m2.exact:
        a, b = m1.canonical(), m2.canonical()
        da = dict(zip(map(tuple, a.points), a.masses))
        db = dict(zip(map(tuple, b.points), b.masses))
        diffs = [abs(da.get(k, 0) - db.get(k, 0)) for k in set(da) | set(db)]
        tv = sum(diffs) / 2
        return EquimeasureReport(tv == 0, float(tv), float(max(diffs)), len(diffs))
    pts = np.vstack([m1.points.astype(float), m2.points.astype(float)])
    labels = _clusters(pts, tau_val)
    signed = np.concatenate([m1.masses.astype(float), -m2.masses.astype(float)])
    uniq, inv = np.unique(labels, return_inverse=True)
    per = np.zeros(uniq.size)
    np.add.at(per, inv, signed)
    diff = np.abs(per)
    return EquimeasureReport(bool(np.all(diff <= tau_mass)), float(diff.sum() / 2),
                             float(diff.max()), int(uniq.size))


def equimeasurable(m1: VectorMeasure, m2: VectorMeasure, tau_val: float = 1e-9,
                   tau_mass: float = 1e-9) -> bool:
    return compare(m1, m2, tau_val, tau_mass).equal


def rectangle_discrepancy(m1: VectorMeasure, m2: VectorMeasure, grid: int = 64
                          ) -> tuple[float, tuple]:
    """``max_C |m1(C) - m2(C)|`` over half-open boxes with grid thresholds.

    Any such value is a lower bound for the total-variation distance, and it
    does not depend on a clustering tolerance.  Only 1- and 2-dimensional
    measures are supported.
    """
    if m1.dim != m2.dim or m1.dim > 2:
        raise PreconditionError("rectangle discrepancy needs equal dimension <= 2")
    p1, p2 = m1.points.astype(float), m2.points.astype(float)
    if m1.dim == 1:
        p1, p2 = np.hstack([p1, np.zeros_like(p1)]), np.hstack([p2, np.zeros_like(p2)])
    lo = np.minimum(p1.min(axis=0), p2.min(axis=0))
    hi = np.maximum(p1.max(axis=0), p2.max(axis=0))
    ts = [np.linspace(lo[d], hi[d] + 1e-12 * max(1.0, abs(hi[d])), grid + 1) for d in range(2)]
    s1 = _prefix_masses(p1, m1.masses.astype(float), ts)
    s2 = _prefix_masses(p2, m2.masses.astype(float), ts)
    d = s1 - s2
    best, arg = 0.0, None
    for a in range(grid + 1):
        for b in range(a + 1, grid + 1):
            # mass of [t_a, t_b) x [t_c, t_d) for all c < d at once
            col = d[b] - d[a]
            box = col[None, :] - col[:, None]
            np.fill_diagonal(box, 0.0)
            box = np.triu(box)
            k = np.unravel_index(np.argmax(np.abs(box)), box.shape)
            if abs(box[k]) > best:
                best = abs(box[k])
                arg = ((ts[0][a], ts[0][b]), (ts[1][k[0]], ts[1][k[1]]))
    return float(best), arg


def _prefix_masses(points, masses, ts) -> np.ndarray:
    """``S[a, c]`` = mass of ``{z0 < ts0[a], z1 < ts1[c]}``."""
    i = np.searchsorted(ts[0], points[:, 0], side="right")
    j = np.searchsorted(ts[1], points[:, 1], side="right")
    h = np.zeros((ts[0].size + 1, ts[1].size + 1))
    np.add.at(h, (i, j), masses)
    return np.cumsum(np.cumsum(h, axis=0), axis=1)[:-1, :-1]


def moment_functional(m: VectorMeasure, v0, v, r):
    """``sum mass * (v0 + v . z) ** r``; exact when the measure is exact and r integral."""
    v = list(v) if np.ndim(v) else [v]
    if len(v) != m.dim:
        raise PreconditionError("coefficient vector has the wrong dimension")
    if r <= 0:
        raise PreconditionError("r must be positive")
    if m.exact and float(r).is_integer():
        r = int(r)
        return sum(w * (v0 + sum(c * z for c, z in zip(v, pt))) ** r
                   for w, pt in zip(m.masses, m.points))
    base = v0 + m.points.astype(float) @ np.asarray(v, dtype=float)
    return float(np.dot(m.masses.astype(float), np.abs(base) ** r))


def norm_via_moments(fs: Sequence[StepFunction2D], coeffs, params: NormParams) -> float:
    """``||sum c_j f_j||`` from the pushforward of the N^q profiles of disjoint ``fs``."""
    fs = list(fs)
    for i, j in itertools.combinations(range(len(fs)), 2):
        if not is_disjoint(fs[i], fs[j]):
            raise PreconditionError(f"functions {i} and {j} are not disjoint")
    c = np.asarray(coeffs, dtype=float)
    if np.any(c < 0):
        raise PreconditionError("coefficients must be nonnegative")
    m = pushforward(fs, params, power=params.q)
    inner = m.points @ c ** params.q
    return float(np.dot(m.masses, inner ** (params.p / params.q)) ** (1 / params.p))


def joint_moment(m: VectorMeasure, alpha: Sequence[int]):
    """``sum mass * prod z_i ** alpha_i``."""
    if m.exact:
        return sum(w * np.prod([z ** a for z, a in zip(pt, alpha)]) for w, pt in zip(m.masses, m.points))
    return float(np.dot(m.masses, np.prod(m.points ** np.asarray(alpha), axis=1)))


def multi_indices(dim: int, degree: int):
    """All exponent tuples of total degree ``degree``."""
    for cut in itertools.combinations(range(degree + dim - 1), dim - 1):
        bounds = (-1,) + cut + (degree + dim - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(dim))


@dataclass
class MomentMatchReport:
    rows: list = field(default_factory=list)
    first_mismatch_degree: int | None = None
    functional_mismatch: float = 0.0
    tol: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "label", "degree", "value1", "value2", "abs_diff"])
        for row in self.rows:
            w.writerow([row["kind"], row["label"], row["degree"], _fmt(row["value1"]),
                        _fmt(row["value2"]), _fmt(row["abs_diff"])])
        return buf.getvalue()


def moment_match_report(m1: VectorMeasure, m2: VectorMeasure, r: float,
                        degree_max: int | None = None, sample_vs=None, tol: float = 1e-9,
                        v0: float = 1.0) -> MomentMatchReport:
    """Compare the moment functional over sampled ``v`` and raw joint moments by degree."""
    if m1.dim != m2.dim:
        raise PreconditionError("dimension mismatch")
    degree_max = int(2 * (np.ceil(r) + 2)) if degree_max is None else degree_max
    if sample_vs is None:
        sample_vs = np.random.default_rng(0).uniform(0, 3, (20, m1.dim))
    rep = MomentMatchReport(tol=tol)
    for v in sample_vs:
        a, b = moment_functional(m1, v0, v, r), moment_functional(m2, v0, v, r)
        diff = abs(a - b)
        rep.functional_mismatch = max(rep.functional_mismatch, float(diff))
        rep.rows.append({"kind": "functional", "label": " ".join(_fmt(x) for x in v),
                         "degree": r, "value1": a, "value2": b, "abs_diff": diff})
    for d in range(degree_max + 1):
        for alpha in multi_indices(m1.dim, d):
            a, b = joint_moment(m1, alpha), joint_moment(m2, alpha)
            diff = abs(a - b)
            rep.rows.append({"kind": "moment", "label": "-".join(map(str, alpha)),
                             "degree": d, "value1": a, "value2": b, "abs_diff": diff})
            if diff > tol and rep.first_mismatch_degree is None:
                rep.first_mismatch_degree = d
    return rep
