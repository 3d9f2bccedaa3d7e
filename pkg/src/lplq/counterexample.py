"""Isometric but non-equimeasurable pairs for integer ``r = p / q``.

The construction starts from the polynomial ``g`` of degree ``r + 1`` that is
orthogonal to ``1, u, ..., u^r`` on [0, 1].  The densities

    h_1 = 1/2 + g_+ / G,    h_2 = 1/2 + g_- / G,    G = int |g|,

share their first ``r`` moments but not moment ``r + 1``.  With ``H_i`` their
distribution functions and ``F_i = H_i^{-1}``, the pairs
``(1_{y <= F_i(x)}, 1_{y > F_i(x)})`` span isometric sublattices whose
fiber-norm profiles have different laws.

Exact statements use the unnormalized ``g``; ``G`` is irrational in general and
is carried as a rational enclosure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .blpq import Embedding, quantize_to_kpq
from .config import PreconditionError
from .equimeasure import VectorMeasure, _prefix_masses, compare, pushforward, rectangle_discrepancy
from .polynomials import RationalPoly, coefficient_bound, isolate_roots
from .stepfn import NormParams, Partition1D, StepFunction1D, StepFunction2D, mixed_norm

Interval = tuple  # (lo, hi) with Fraction endpoints


def hilbert_nullspace(r: int) -> RationalPoly:
    """Primitive polynomial of degree ``r + 1`` orthogonal to ``u^j`` for ``j <= r``.

    Solves ``A c = 0`` with ``A[i][j] = 1 / (i + j + 1)`` (``i <= r``,
    ``j <= r + 1``) by exact elimination; the result has content 1 and a
    positive leading coefficient.
    """
    if r < 0:
        raise PreconditionError("r must be nonnegative")
    rows, cols = r + 1, r + 2
    a = [[Fraction(1, i + j + 1) for j in range(cols)] for i in range(rows)]
    for col in range(rows):
        piv = next(i for i in range(col, rows) if a[i][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        for i in range(rows):
            if i != col and a[i][col] != 0:
                f = a[i][col]
                a[i] = [v - f * w for v, w in zip(a[i], a[col])]
    coeffs = [-a[i][-1] for i in range(rows)] + [Fraction(1)]
    return RationalPoly(tuple(coeffs)).primitive()


def _ival_div(num: Interval, den: Interval) -> Interval:
    """Interval quotient for a strictly positive denominator."""
    cands = [num[0] / den[0], num[0] / den[1], num[1] / den[0], num[1] / den[1]]
    return min(cands), max(cands)


def _breakpoints(roots: Sequence[Interval]) -> list[Fraction]:
    return [Fraction(0)] + [lo for lo, _ in roots] + [Fraction(1)]


def signed_integral(g: RationalPoly, roots: Sequence[Interval], weight: RationalPoly,
                    part: str = "abs") -> Interval:
    """Rational enclosure of ``int_0^1 weight * g_part`` with ``part`` in {abs, pos, neg}.

    Root positions enter only through the enclosures in ``roots``; moving a
    cut inside an enclosure of width ``w`` changes the antiderivative of
    ``weight * g`` by at most ``B w**2`` with ``B`` a bound of its derivative.
    """
    phi = weight * g
    big = phi.antiderivative()
    bound = coefficient_bound(phi.derivative())
    cuts = _breakpoints(roots)
    total = Fraction(0)
    for a, b in zip(cuts[:-1], cuts[1:]):
        s = 1 if g((a + b) / 2) > 0 else -1
        factor = {"abs": s, "pos": 1 if s > 0 else 0, "neg": 1 if s < 0 else 0}[part]
        if part == "neg":
            factor = -factor
        total += factor * (big(b) - big(a))
    err = sum((2 * bound * (hi - lo) ** 2 for lo, hi in roots), Fraction(0))
    return total - err, total + err


@dataclass
class CounterexampleBundle:
    r: int
    params: NormParams
    n: int
    g: RationalPoly
    roots: list
    G: Interval
    F_bar: tuple
    step_atoms: tuple

    @property
    def G_float(self) -> float:
        return float((self.G[0] + self.G[1]) / 2)

    def pushforwards(self, power: float = 1.0) -> tuple[VectorMeasure, VectorMeasure]:
        return tuple(pushforward(list(e), self.params, power) for e in self.step_atoms)

    def quantized(self, eps: float) -> "CounterexampleBundle":
        atoms = tuple(quantize_to_kpq(e, self.params, eps) for e in self.step_atoms)
        return CounterexampleBundle(self.r, self.params, self.n, self.g, self.roots, self.G,
                                    self.F_bar, atoms)


def _density_parts(g: RationalPoly, roots_f: np.ndarray):
    """Segments of [0, 1] between roots of ``g`` and the sign of ``g`` on each."""
    cuts = np.concatenate([[0.0], roots_f, [1.0]])
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    return cuts, np.sign(g(mids))


def _partial(poly_anti: RationalPoly, cuts, signs, which: int, u: np.ndarray) -> np.ndarray:
    """``int_0^u which * phi`` restricted to segments where ``sign(g) == which``."""
    out = np.zeros_like(u)
    for a, b, s in zip(cuts[:-1], cuts[1:], signs):
        if s == which:
            out += which * (poly_anti(np.clip(u, a, b)) - poly_anti(a))
    return out


def _step_layer(g: RationalPoly, roots_f: np.ndarray, G: float, n: int) -> tuple:
    cuts, signs = _density_parts(g, roots_f)
    a_g = g.antiderivative()
    a_ug = (RationalPoly.x() * g).antiderivative()
    targets = np.arange(n + 1) / n
    out = []
    for which in (1, -1):
        def H(u):
            return u / 2 + _partial(a_g, cuts, signs, which, u) / G

        def M(u):
            return u * u / 4 + _partial(a_ug, cuts, signs, which, u) / G

        lo, hi = np.zeros(n + 1), np.ones(n + 1)
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            below = H(mid) < targets
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        u = 0.5 * (lo + hi)
        u[0], u[-1] = 0.0, 1.0
        # cell mean of F = H^{-1} via the substitution x = H(u)
        out.append(n * np.diff(M(u)))
    return tuple(out)


def pair_from_profile(F: np.ndarray) -> Embedding:
    """``(1_{y <= F(x)}, 1_{y > F(x)})`` on a uniform base of ``len(F)`` cells."""
    base = Partition1D.uniform(F.size)
    one, two = [], []
    for v in F:
        part = Partition1D.from_edges([0.0, float(v), 1.0])
        one.append(StepFunction1D(part, [1.0, 0.0]))
        two.append(StepFunction1D(part, [0.0, 1.0]))
    return Embedding((StepFunction2D(base, tuple(one)), StepFunction2D(base, tuple(two))))


def build_counterexample(params: NormParams, n: int = 1024) -> CounterexampleBundle:
    r_float = params.p / params.q
    r = round(r_float)
    if abs(r_float - r) > 1e-12 or r < 2:
        raise PreconditionError(f"p/q must be an integer >= 2, got {r_float!r}")
    if n < 2:
        raise PreconditionError("resolution must be at least 2")
    g = hilbert_nullspace(r)
    roots = isolate_roots(g, 0, 1)
    G = signed_integral(g, roots, RationalPoly((1,)), "abs")
    roots_f = np.array([float((lo + hi) / 2) for lo, hi in roots])
    F = _step_layer(g, roots_f, float((G[0] + G[1]) / 2), n)
    atoms = tuple(pair_from_profile(x) for x in F)
    return CounterexampleBundle(r, params, n, g, roots, G, F, atoms)


# -- certificates ---------------------------------------------------------------

def moment_identities(g: RationalPoly, degree_max: int) -> list[tuple[int, Fraction]]:
    """``(j, int_0^1 u^j g)`` for ``j <= degree_max``."""
    return [(j, (RationalPoly.monomial(j) * g).integrate()) for j in range(degree_max + 1)]


def joint_moment_difference(g: RationalPoly, a: int, b: int) -> Fraction:
    """``int u^a (1 - u)^b g``: the scaled difference of a joint moment of ``(F, 1 - F)``."""
    return (RationalPoly.monomial(a) * RationalPoly((1, -1)) ** b * g).integrate()


def _fmt_ival(iv: Interval) -> list[str]:
    return [str(iv[0]), str(iv[1])]


@dataclass
class IsometryCertificate:
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row["exact_difference"] == 0 for row in self.rows)


def certify_isometry(bundle: CounterexampleBundle, sample_coeffs) -> IsometryCertificate:
    """Exact check of ``int (v1 F_1 + v2 (1 - F_1))^r`` for both pairs.

    With ``x = H_i(u)`` each side becomes ``int P h_i``; the two differ by
    ``int P g / G`` which is computed exactly.  Each side is also reported as a
    rational enclosure.
    """
    g, r = bundle.g, bundle.r
    cert = IsometryCertificate()
    for v1, v2 in sample_coeffs:
        v1, v2 = (Fraction(v.item() if isinstance(v, np.generic) else v) for v in (v1, v2))
        P = (RationalPoly((v2, v1 - v2))) ** r
        diff = (P * g).integrate()
        half = P.integrate() / 2
        sides = []
        for part in ("pos", "neg"):
            num = signed_integral(g, bundle.roots, P, part)
            q = _ival_div(num, bundle.G)
            sides.append((half + q[0], half + q[1]))
        cert.rows.append({"v": (str(v1), str(v2)), "exact_difference": diff,
                          "lhs": sides[0], "rhs": sides[1]})
    return cert


@dataclass
class NonEquimeasureCertificate:
    gap_degree: int
    gap_raw: Fraction
    gap: Interval
    unmatched_mass: float
    discrepancy: float
    rectangle: tuple

    @property
    def passed(self) -> bool:
        return self.gap_raw != 0


def certify_non_equimeasurable(bundle: CounterexampleBundle, tau_val: float = 1e-9,
                               grid: int = 64) -> NonEquimeasureCertificate:
    deg = bundle.r + 1
    gap_raw = (RationalPoly.monomial(deg) * bundle.g).integrate()
    gap = _ival_div((gap_raw, gap_raw), bundle.G)
    m1, m2 = bundle.pushforwards()
    unmatched = compare(m1, m2, tau_val).unmatched_mass
    disc, rect = rectangle_discrepancy(m1, m2, grid)
    return NonEquimeasureCertificate(deg, gap_raw, gap, unmatched, disc, rect)


def certificate_json(bundle: CounterexampleBundle) -> dict:
    r = bundle.r
    ids = moment_identities(bundle.g, r + 1)
    gap = _ival_div((ids[-1][1], ids[-1][1]), bundle.G)
    return {
        "r": r,
        "g": bundle.g.to_strings(),
        "abs_integral": _fmt_ival(bundle.G),
        "roots": [_fmt_ival(iv) for iv in bundle.roots],
        "moment_identities": [{"degree": j, "lhs": str(v), "rhs": "0"} for j, v in ids[:-1]],
        "gap_degree": r + 1,
        "gap": str(ids[-1][1]),
        "gap_normalized": _fmt_ival(gap),
    }


# -- obstruction search ------------------------------------------------------------

@dataclass
class Witness:
    eps: float
    margin: float
    rectangle: tuple
    direction: str


def find_witness(m_small: VectorMeasure, m_big: VectorMeasure, eps: float, grid: int = 64
                 ) -> Witness | None:
    """Rectangle ``C`` maximizing ``m_big(C) - m_small(C + eps) - eps``.

    ``C`` ranges over boxes ``[t_a, t_b) x [t_c, t_d)`` with thresholds on a
    ``grid``-cell mesh over the joint support; ``C + eps`` is enlarged to the
    half-open box ``[t_a - eps, t_b + eps) x [t_c - eps, t_d + eps)``, which
    contains the open neighbourhood, so the margin is conservative.
    """
    pb, ps = m_big.points.astype(float), m_small.points.astype(float)
    wb, ws = m_big.masses.astype(float), m_small.masses.astype(float)
    lo = np.minimum(pb.min(axis=0), ps.min(axis=0))
    hi = np.maximum(pb.max(axis=0), ps.max(axis=0))
    ts = [np.linspace(lo[d], hi[d] + 1e-12, grid + 1) for d in range(2)]
    big = _prefix_masses(pb, wb, ts)
    low = _prefix_masses(ps, ws, [ts[0] - eps, ts[1] - eps])
    up = _prefix_masses(ps, ws, [ts[0] + eps, ts[1] + eps])
    low_up = _prefix_masses(ps, ws, [ts[0] - eps, ts[1] + eps])
    up_low = _prefix_masses(ps, ws, [ts[0] + eps, ts[1] - eps])
    best = None
    for a in range(grid + 1):
        for b in range(a + 1, grid + 1):
            col_big = big[b] - big[a]
            mass_big = col_big[None, :] - col_big[:, None]
            # small mass of the enlarged box for every (c, d)
            upper = up[b][None, :] - low_up[a][None, :]
            lower = up_low[b][:, None] - low[a][:, None]
            margin = mass_big - (upper - lower) - eps
            margin = np.where(np.triu(np.ones_like(margin, dtype=bool), 1), margin, -np.inf)
            k = np.unravel_index(np.argmax(margin), margin.shape)
            if best is None or margin[k] > best.margin:
                rect = ((ts[0][a], ts[0][b]), (ts[1][k[0]], ts[1][k[1]]))
                best = Witness(eps, float(margin[k]), rect, "")
    return best if best is not None and best.margin > 0 else None


@dataclass
class ObstructionReport:
    witness: Witness | None
    searched: tuple
    conclusion: str

    @property
    def found(self) -> bool:
        return self.witness is not None


DEFAULT_EPS = (0.001, 0.002, 0.005, 0.01, 0.02, 0.05)


def obstruction_report(bundle_or_measures, eps_values: Sequence[float] = DEFAULT_EPS,
                       grid: int = 64) -> ObstructionReport:
    """Largest ``eps`` for which a rectangle witness separates the two pushforwards."""
    if isinstance(bundle_or_measures, CounterexampleBundle):
        m1, m2 = bundle_or_measures.pushforwards()
    else:
        m1, m2 = bundle_or_measures
    best = None
    for eps in sorted(eps_values):
        for small, big, tag in ((m1, m2, "first inside second"), (m2, m1, "second inside first")):
            w = find_witness(small, big, eps, grid)
            if w is not None and (best is None or (w.eps, w.margin) > (best.eps, best.margin)):
                w.direction = tag
                best = w
    if best is None:
        text = "no rectangle witness found; the search is inconclusive"
    else:
        text = (f"pushforwards differ by more than eps={best.eps:g} on a rectangle, so no "
                f"automorphism fixing 1 moves one pair within eps={best.eps:g} of the other")
    return ObstructionReport(best, tuple(eps_values), text)


def step_isometry_gap(bundle: CounterexampleBundle, coeffs) -> float:
    """``| ||a1 f^1_1 + a2 f^1_2|| - ||a1 f^2_1 + a2 f^2_2|| |`` at the step layer."""
    a1, a2 = coeffs
    norms = [mixed_norm(e.images[0] * a1 + e.images[1] * a2, bundle.params)
             for e in bundle.step_atoms]
    return abs(norms[0] - norms[1])
