"""Finite-dimensional BLpLq lattices: block specs, canonical atoms, structure checks.

Atoms are indexed ``(k, j)`` with ``k`` the block and ``j`` the position inside
the block, both zero-based.  A block of size ``m`` spans a copy of ``l_q^m``;
blocks are glued with an ``l_p`` sum.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import InvariantError, PreconditionError, tolerances
from .stepfn import (
    NormParams,
    Partition1D,
    StepFunction1D,
    StepFunction2D,
    is_disjoint,
    merge_edges,
    mixed_norm,
    n_map,
    refine_many,
    refine_many_1d,
    total,
)


@dataclass(frozen=True)
class BKpqSpec:
    blocks: tuple
    params: NormParams

    def __post_init__(self):
        blocks = tuple(int(m) for m in self.blocks)
        if not blocks or any(m < 1 for m in blocks):
            raise InvariantError(f"blocks must be positive integers, got {self.blocks!r}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_atoms(self) -> int:
        return sum(self.blocks)

    def atom_keys(self) -> list[tuple[int, int]]:
        return [(k, j) for k, m in enumerate(self.blocks) for j in range(m)]

    @property
    def eta(self) -> float:
        p, q = self.params.p, self.params.q
        return float(sum(m ** (p / q) for m in self.blocks) ** (1.0 / p))

    def to_json(self) -> dict:
        return {"p": self.params.p, "q": self.params.q, "blocks": list(self.blocks)}

    @classmethod
    def from_json(cls, d: dict) -> "BKpqSpec":
        return cls(tuple(d["blocks"]), NormParams(float(d["p"]), float(d["q"])))


@dataclass(frozen=True, eq=False)
class Embedding:
    """Images of the atoms of a finite lattice, in atom order."""

    images: tuple
    spec: BKpqSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(self.images))
        if self.spec is not None and self.spec.n_atoms != len(self.images):
            raise InvariantError("image count does not match the spec")

    def __len__(self):
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    def __getitem__(self, i):
        return self.images[i]

    def violations(self, params: NormParams, tol: float | None = None,
                   unit: bool = True) -> list[str]:
        tol = tolerances().eps_norm if tol is None else tol
        out = []
        for t, f in enumerate(self.images):
            if f.min_value() < 0:
                out.append(f"image {t} is not positive")
            if unit and abs(mixed_norm(f, params) - 1.0) > tol:
                out.append(f"image {t} has norm {mixed_norm(f, params)!r}")
        for a in range(len(self.images)):
            for b in range(a + 1, len(self.images)):
                if not is_disjoint(self.images[a], self.images[b]):
                    out.append(f"images {a} and {b} are not disjoint")
        return out

    def to_json(self) -> dict:
        d = {"images": [f.to_json() for f in self.images]}
        if self.spec is not None:
            d["spec"] = self.spec.to_json()
        return d

    @classmethod
    def from_json(cls, d) -> "Embedding":
        if isinstance(d, list):
            return cls(tuple(StepFunction2D.from_json(x) for x in d))
        spec = BKpqSpec.from_json(d["spec"]) if "spec" in d else None
        return cls(tuple(StepFunction2D.from_json(x) for x in d["images"]), spec)

    def dumps(self) -> str:
        return json.dumps(self.to_json())


@dataclass(frozen=True, eq=False)
class CanonicalAtoms:
    spec: BKpqSpec
    eta: float
    atoms: dict
    base_cells: np.ndarray      # lengths of W_k
    fiber_cells: tuple          # lengths of V_{k,j}, one array per block

    def images(self) -> list[StepFunction2D]:
        return [self.atoms[key] for key in self.spec.atom_keys()]

    def embedding(self) -> Embedding:
        return Embedding(tuple(self.images()), self.spec)

    def combination(self, coeffs) -> StepFunction2D:
        a = _coeff_blocks(self.spec, coeffs)
        terms = [self.atoms[(k, j)] * a[k][j] for k, j in self.spec.atom_keys()]
        return total(terms)


def canonical_representation(spec: BKpqSpec) -> CanonicalAtoms:
    """Atoms ``eta * 1_{W_k x V_{k,j}}`` with ``|W_k| = m_k^{p/q} / eta^p``."""
    p, q = spec.params.p, spec.params.q
    eta = spec.eta
    w = np.array([m ** (p / q) for m in spec.blocks]) / eta ** p
    base = Partition1D(w)
    zero = StepFunction1D.constant(0.0)
    atoms = {}
    for k, m in enumerate(spec.blocks):
        fp = Partition1D.uniform(m)
        for j in range(m):
            vals = np.zeros(m)
            vals[j] = eta
            fibers = [zero] * len(spec.blocks)
            fibers[k] = StepFunction1D(fp, vals)
            atoms[(k, j)] = StepFunction2D(base, tuple(fibers))
    return CanonicalAtoms(
        spec, eta, atoms, w, tuple(np.full(m, 1.0 / m) for m in spec.blocks)
    )


def _coeff_blocks(spec: BKpqSpec, coeffs) -> list[np.ndarray]:
    if len(coeffs) == len(spec.blocks) and all(np.ndim(c) == 1 for c in coeffs):
        blocks = [np.asarray(c, dtype=float) for c in coeffs]
    else:
        flat = np.asarray(coeffs, dtype=float).ravel()
        if flat.size != spec.n_atoms:
            raise PreconditionError(f"expected {spec.n_atoms} coefficients, got {flat.size}")
        blocks, start = [], 0
        for m in spec.blocks:
            blocks.append(flat[start:start + m])
            start += m
    if [b.size for b in blocks] != list(spec.blocks):
        raise PreconditionError("coefficient shape does not match the block sizes")
    return blocks


def closed_form_norm(spec: BKpqSpec, coeffs) -> float:
    """``(sum_k (sum_j |a(k,j)|^q)^{p/q})^{1/p}``."""
    p, q = spec.params.p, spec.params.q
    blocks = _coeff_blocks(spec, coeffs)
    return float(sum(np.sum(np.abs(b) ** q) ** (p / q) for b in blocks) ** (1.0 / p))


def grid_vs_closed_form(spec: BKpqSpec, coeffs) -> tuple[float, float]:
    canon = canonical_representation(spec)
    return mixed_norm(canon.combination(coeffs), spec.params), closed_form_norm(spec, coeffs)


# -- structure recognition ----------------------------------------------------

@dataclass
class BlpqReport:
    is_blpq: bool
    block_partition: list
    violations: list = field(default_factory=list)

    @property
    def blocks(self) -> tuple:
        return tuple(len(b) for b in self.block_partition)


def _profiles(images: Sequence[StepFunction2D], params) -> list[StepFunction1D]:
    return refine_many_1d([n_map(f, params) for f in images])


def _first_breakpoint(u: StepFunction1D, tol: float) -> float:
    nz = np.flatnonzero(u.values > tol)
    return float(u.partition.edges[nz[0]]) if nz.size else 1.0


def verify_blpq_structure(images: Sequence[StepFunction2D] | Embedding, params: NormParams,
                          tol: float | None = None) -> BlpqReport:
    """Group atoms into blocks: equal N profiles inside, base-disjoint across."""
    tol = tolerances().eps_norm if tol is None else tol
    images = list(images)
    n = len(images)
    violations = []
    for a in range(n):
        for b in range(a + 1, n):
            if not is_disjoint(images[a], images[b], tol):
                violations.append(f"atoms {a} and {b} are not disjoint")
    prof = _profiles(images, params)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a in range(n):
        for b in range(a + 1, n):
            if np.any(np.minimum(prof[a].values, prof[b].values) > tol):
                parent[find(a)] = find(b)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    blocks = list(groups.values())
    for block in blocks:
        ref = prof[block[0]].values
        for i in block[1:]:
            if np.max(np.abs(prof[i].values - ref)) > tol * max(1.0, float(np.max(ref))):
                violations.append(
                    f"atoms {block[0]} and {i} share base support but have different N profiles"
                )
    blocks.sort(key=lambda b: (len(b), _first_breakpoint(prof[b[0]], tol), b[0]))
    return BlpqReport(not violations, blocks, violations)


# -- atom extraction for base-simple embeddings ---------------------------------

def _check_constant_sum(images: Sequence[StepFunction2D], tol: float) -> float:
    s = total(images)
    lo, hi = s.min_value(), s.max_value()
    if hi <= 0 or hi - lo > tol * hi:
        raise PreconditionError(
            f"sum of images is not a positive constant (range [{lo!r}, {hi!r}])"
        )
    return hi


@dataclass(frozen=True, eq=False)
class BlpqExtraction:
    spec: BKpqSpec
    family: dict                 # (k, j) -> unit-norm indicator phi(k, j); j is the atom index
    coefficients: np.ndarray     # s[k, j]
    levels: np.ndarray           # distinct N-vectors, one row per block
    level_support: list          # per block, boolean mask over refined base cells

    def images(self) -> list[StepFunction2D]:
        return [self.family[key] for key in sorted(self.family)]

    def reconstruct(self, j: int) -> StepFunction2D:
        terms = [
            self.family[(k, jj)] * self.coefficients[k, jj]
            for (k, jj) in sorted(self.family) if jj == j
        ]
        return total(terms)


def extract_blpq_atoms(images: Sequence[StepFunction2D] | Embedding, params: NormParams,
                       tau: float | None = None) -> BlpqExtraction:
    """Split each image along the level sets of the joint N-vector."""
    tol = tolerances()
    tau = tol.level_merge if tau is None else tau
    images = list(images)
    _check_constant_sum(images, tol.eps_norm)
    rs = refine_many(images)
    base = rs[0].base
    nvec = np.array([n_map(r, params).values for r in rs]).T   # cells x atoms
    reps: list[np.ndarray] = []
    label = np.empty(len(base), dtype=int)
    for c, v in enumerate(nvec):
        scale = max(1.0, float(np.max(v)))
        for i, rep in enumerate(reps):
            if np.max(np.abs(rep - v)) <= tau * scale:
                label[c] = i
                break
        else:
            reps.append(v)
            label[c] = len(reps) - 1
    order = sorted(
        range(len(reps)),
        key=lambda i: (
            int(np.sum(reps[i] > tau)),
            float(base.edges[np.flatnonzero(label == i)[0]]),
            tuple(reps[i]),
        ),
    )
    family = {}
    coeffs = np.zeros((len(reps), len(images)))
    masks, blocks = [], []
    zero = StepFunction1D.constant(0.0)
    for k, i in enumerate(order):
        mask = label == i
        masks.append(mask)
        m = 0
        for j, r in enumerate(rs):
            if reps[i][j] <= tau:
                continue
            fibers = tuple(
                StepFunction1D(fib.partition, (fib.values > 0).astype(float)) if mask[c] else zero
                for c, fib in enumerate(r.fibers)
            )
            ind = StepFunction2D(base, fibers)
            nrm = mixed_norm(ind, params)
            family[(k, j)] = ind * (1.0 / nrm)
            piece = StepFunction2D(
                base, tuple(fib if mask[c] else zero for c, fib in enumerate(r.fibers))
            )
            coeffs[k, j] = mixed_norm(piece, params)
            m += 1
        blocks.append(m)
    spec = BKpqSpec(tuple(blocks), params)
    return BlpqExtraction(spec, family, coeffs, np.array([reps[i] for i in order]), masks)


# -- quantization ---------------------------------------------------------------

def _round_to_simplex_grid(z: np.ndarray, M: int) -> np.ndarray:
    """Largest-remainder rounding of a point of the simplex to the grid ``k / M``."""
    y = z * M
    near = np.abs(y - np.round(y)) < 1e-9
    y = np.where(near, np.round(y), y)
    fl = np.floor(y)
    deficit = int(round(M - fl.sum()))
    if deficit > 0:
        frac = y - fl
        idx = sorted(range(z.size), key=lambda i: (-frac[i], i))[:deficit]
        fl[idx] += 1
    return fl / M


def quantization_grid(n_atoms: int, c: float, q: float, eps: float) -> int:
    """Grid denominator: ell_1 cell diameter below eps/(2n) and per-atom shift below eps/2."""
    need = max(4.0 * n_atoms ** 2 / eps, (2.0 * c / eps) ** q)
    return 1 << max(1, math.ceil(math.log2(need)))


def _reshape_fiber(fibers: Sequence[StepFunction1D], z: np.ndarray, s: np.ndarray,
                   c: float) -> list[StepFunction1D]:
    """Move fiber mass between atoms so atom j covers measure ``s[j]``."""
    part = fibers[0].partition
    edges = part.edges
    owner = np.full(len(part), -1)
    for j, fib in enumerate(fibers):
        owner[fib.values > 0] = j
    segs = [[edges[i], edges[i + 1], int(owner[i])] for i in range(len(part))]
    free = -2
    for j in np.flatnonzero(s < z):
        excess = z[j] - s[j]
        for seg in reversed(segs):
            if excess <= 0:
                break
            if seg[2] != j:
                continue
            length = seg[1] - seg[0]
            if length <= excess:
                seg[2] = free
                excess -= length
            else:
                cut = seg[1] - excess
                segs.insert(segs.index(seg) + 1, [cut, seg[1], free])
                seg[1] = cut
                excess = 0
    growers = [int(j) for j in np.flatnonzero(s > z)]
    out_segs = []
    gi = 0
    need = s[growers[0]] - z[growers[0]] if growers else 0.0
    for a, b, who in segs:
        if who != free:
            out_segs.append([a, b, who])
            continue
        while b - a > 0:
            if gi >= len(growers):
                # rounding leftovers go to the neighbouring owner
                out_segs.append([a, b, out_segs[-1][2] if out_segs else -1])
                break
            last = gi == len(growers) - 1
            take = b - a if last else min(b - a, need)
            out_segs.append([a, a + take, growers[gi]])
            a += take
            need -= take
            if not last and need <= 1e-15:
                gi += 1
                need = s[growers[gi]] - z[growers[gi]]
    segs = out_segs
    new_edges = merge_edges([seg[0] for seg in segs[1:]])
    fp = Partition1D.from_edges(new_edges)
    starts = np.array([seg[0] for seg in segs])
    own = np.array([seg[2] for seg in segs])
    cell_owner = own[np.clip(np.searchsorted(starts, fp.midpoints, side="right") - 1, 0, None)]
    return [StepFunction1D(fp, np.where(cell_owner == j, c, 0.0)) for j in range(len(fibers))]


def quantize_to_kpq(images: Sequence[StepFunction2D] | Embedding, params: NormParams,
                    eps: float) -> Embedding:
    """Snap the normalized N^q-vector of every base cell to a finite simplex grid.

    Requires ``sum images = c * 1``.  The constant sum is preserved: fiber
    support is moved between atoms instead of rescaling values.
    """
    if eps <= 0:
        raise PreconditionError("eps must be positive")
    spec = images.spec if isinstance(images, Embedding) else None
    images = list(images)
    c = _check_constant_sum(images, tolerances().eps_norm)
    q = params.q
    M = quantization_grid(len(images), c, q, eps)
    rs = refine_many(images)
    base = rs[0].base
    new_fibers: list[list[StepFunction1D]] = [[] for _ in images]
    for cell in range(len(base)):
        fibs = [r.fibers[cell] for r in rs]
        z = np.array([f.power_integral(q) for f in fibs]) / c ** q
        z = z / z.sum()
        s = _round_to_simplex_grid(z, M)
        if np.max(np.abs(s - z)) < 1e-12:
            out = fibs
        else:
            out = _reshape_fiber(fibs, z, s, c)
        for j, f in enumerate(out):
            new_fibers[j].append(f)
    return Embedding(tuple(StepFunction2D(base, tuple(fl)) for fl in new_fibers), spec)
