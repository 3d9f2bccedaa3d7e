"""Exact rational polynomials with Sturm-sequence root isolation."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Sequence

import numpy as np


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class RationalPoly:
    """Polynomial with ``Fraction`` coefficients in ascending degree."""

    coeffs: tuple

    def __post_init__(self):
        c = [_frac(x) for x in self.coeffs]
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c or [Fraction(0)]))

    @classmethod
    def monomial(cls, k: int, c=1) -> "RationalPoly":
        return cls((0,) * k + (c,))

    @classmethod
    def x(cls) -> "RationalPoly":
        return cls((0, 1))

    @property
    def degree(self) -> int:
        return -1 if self.is_zero() else len(self.coeffs) - 1

    @property
    def leading(self) -> Fraction:
        return self.coeffs[-1]

    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0

    def __repr__(self):
        return f"RationalPoly({[str(c) for c in self.coeffs]})"

    # arithmetic
    def __add__(self, other):
        other = _poly(other)
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (Fraction(0),) * (n - len(self.coeffs))
        b = other.coeffs + (Fraction(0),) * (n - len(other.coeffs))
        return RationalPoly(tuple(x + y for x, y in zip(a, b)))

    __radd__ = __add__

    def __neg__(self):
        return RationalPoly(tuple(-c for c in self.coeffs))

    def __sub__(self, other):
        return self + (-_poly(other))

    def __rsub__(self, other):
        return _poly(other) - self

    def __mul__(self, other):
        other = _poly(other)
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return RationalPoly(tuple(out))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = RationalPoly((1,))
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, RationalPoly) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __call__(self, x):
        """Horner evaluation; exact for ``Fraction``/int, vectorized for arrays."""
        if isinstance(x, (int, Fraction)):
            acc = Fraction(0)
            for c in reversed(self.coeffs):
                acc = acc * x + c
            return acc
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for c in reversed(self.coeffs):
            acc = acc * x + float(c)
        return acc

    def derivative(self) -> "RationalPoly":
        return RationalPoly(tuple(k * c for k, c in enumerate(self.coeffs))[1:] or (0,))

    def antiderivative(self) -> "RationalPoly":
        return RationalPoly((0,) + tuple(c / (k + 1) for k, c in enumerate(self.coeffs)))

    def integrate(self, a=0, b=1) -> Fraction:
        big = self.antiderivative()
        return big(_frac(b)) - big(_frac(a))

    def compose(self, inner: "RationalPoly") -> "RationalPoly":
        acc = RationalPoly((0,))
        for c in reversed(self.coeffs):
            acc = acc * inner + c
        return acc

    def divmod(self, other: "RationalPoly") -> tuple["RationalPoly", "RationalPoly"]:
        if other.is_zero():
            raise ZeroDivisionError("polynomial division by zero")
        rem = list(self.coeffs)
        quot = [Fraction(0)] * max(1, len(rem) - other.degree)
        while len(rem) - 1 >= other.degree and any(rem):
            shift = len(rem) - 1 - other.degree
            factor = rem[-1] / other.leading
            quot[shift] = factor
            for i, c in enumerate(other.coeffs):
                rem[i + shift] -= factor * c
            rem.pop()
        return RationalPoly(tuple(quot)), RationalPoly(tuple(rem) or (0,))

    def primitive(self) -> "RationalPoly":
        """Integer coefficients with content 1 and positive leading coefficient."""
        if self.is_zero():
            return self
        den = lcm(*(c.denominator for c in self.coeffs))
        ints = [int(c * den) for c in self.coeffs]
        g = 0
        for v in ints:
            g = gcd(g, v)
        sign = 1 if ints[-1] > 0 else -1
        return RationalPoly(tuple(Fraction(sign * v // g) for v in ints))

    def to_strings(self) -> list[str]:
        return [str(c) for c in self.coeffs]

    @classmethod
    def from_strings(cls, items: Iterable[str]) -> "RationalPoly":
        return cls(tuple(Fraction(s) for s in items))


def _poly(x) -> RationalPoly:
    return x if isinstance(x, RationalPoly) else RationalPoly((x,))


def sturm_sequence(p: RationalPoly) -> list[RationalPoly]:
    seq = [p, p.derivative()]
    while not seq[-1].is_zero() and seq[-1].degree > 0:
        _, rem = seq[-2].divmod(seq[-1])
        if rem.is_zero():
            break
        seq.append(-rem)
    return seq


def _sign_changes(values: Sequence[Fraction]) -> int:
    signs = [v > 0 for v in values if v != 0]
    return sum(a != b for a, b in zip(signs, signs[1:]))


def count_roots(p: RationalPoly, a, b, seq: list[RationalPoly] | None = None) -> int:
    """Number of distinct real roots in the half-open interval ``(a, b]``."""
    seq = seq or sturm_sequence(p)
    a, b = _frac(a), _frac(b)
    return _sign_changes([s(a) for s in seq]) - _sign_changes([s(b) for s in seq])


def isolate_roots(p: RationalPoly, a=0, b=1, width=Fraction(1, 2 ** 60)
                  ) -> list[tuple[Fraction, Fraction]]:
    """Disjoint rational intervals ``(lo, hi]``, each holding exactly one root of ``p``.

    Intervals are refined by bisection until narrower than ``width``.
    """
    seq = sturm_sequence(p)
    out = []
    stack = [(_frac(a), _frac(b))]
    while stack:
        lo, hi = stack.pop()
        k = count_roots(p, lo, hi, seq)
        if k == 0:
            continue
        if k == 1 and hi - lo <= width:
            out.append((lo, hi))
            continue
        mid = (lo + hi) / 2
        stack.extend([(mid, hi), (lo, mid)])
    return sorted(out)


def coefficient_bound(p: RationalPoly) -> Fraction:
    """Upper bound for ``|p|`` on [0, 1]."""
    return sum((abs(c) for c in p.coeffs), Fraction(0))
