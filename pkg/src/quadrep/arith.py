"""Exact arithmetic over Q for local-global computations.

Everything here works with Python ints and fractions.Fraction; nothing is ever
rounded.  Hilbert symbols take values in the additive group Z/2 (0 = split),
which is the convention used by the rest of the package.  The multiplicative
{-1, 0, +1} convention survives only in `legendre`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from sympy import factorint, isprime

Rat = Union[int, Fraction]

#: valuation of 0 at any finite place
INFINITY = math.inf


@dataclass(frozen=True)
class Place:
    """A place of Q: the real place (p is None) or a finite prime p."""

    p: int | None = None

    def __post_init__(self):
        if self.p is not None and not isprime(self.p):
            raise ValueError(f"not a prime: {self.p}")

    @property
    def is_real(self) -> bool:
        return self.p is None

    def __lt__(self, other):  # real place sorts first
        if not isinstance(other, Place):
            return NotImplemented
        a = -1 if self.p is None else self.p
        b = -1 if other.p is None else other.p
        return a < b

    def __str__(self):
        return "oo" if self.p is None else str(self.p)


REAL = Place(None)


def finite(p: int) -> Place:
    return Place(p)


def valuation(r: Rat, p: int) -> int | float:
    """p-adic valuation of a rational; INFINITY for r = 0."""
    if not isprime(p):
        raise ValueError(f"not a prime: {p}")
    r = Fraction(r)
    if r == 0:
        return INFINITY
    v = 0
    n = r.numerator
    while n % p == 0:
        n //= p
        v += 1
    d = r.denominator
    while d % p == 0:
        d //= p
        v -= 1
    return v


def unit_part(r: Rat, p: int) -> Fraction:
    """Write r = p^v * u with u a p-adic unit and return u.  r must be nonzero."""
    r = Fraction(r)
    if r == 0:
        raise ValueError("unit part of 0 is undefined")
    v = valuation(r, p)
    return r / Fraction(p) ** v


def unit_mod(r: Rat, p: int, k: int) -> int:
    """The p-adic unit r as an integer mod p^k (denominator inverted mod p^k)."""
    r = Fraction(r)
    m = p**k
    if r.denominator % p == 0 or r.numerator % p == 0:
        raise ValueError(f"{r} is not a {p}-adic unit")
    return r.numerator * pow(r.denominator, -1, m) % m


def squarefree_part(n: int) -> tuple[int, int]:
    """Split n = s * t^2 with s squarefree, sign(s) = sign(n), t > 0."""
    if n == 0:
        raise ValueError("0 has no squarefree part")
    s, t = 1 if n > 0 else -1, 1
    for q, e in factorint(abs(n)).items():
        if e % 2:
            s *= q
        t *= q ** (e // 2)
    return s, t


def legendre(a: int, p: int) -> int:
    """Legendre symbol (a/p) in {-1, 0, +1}; p must be an odd prime."""
    if p == 2 or not isprime(p):
        raise ValueError(f"need an odd prime, got {p}")
    a %= p
    if a == 0:
        return 0
    r = pow(a, (p - 1) // 2, p)
    return 1 if r == 1 else -1


def _legendre_rat(u: Rat, p: int) -> int:
    """Legendre symbol of a p-adic unit given as a rational."""
    return legendre(unit_mod(u, p, 1), p)


def rat_sqrt(r: Rat) -> Fraction | None:
    """Exact square root of a rational, or None if r is not a square."""
    r = Fraction(r)
    if r < 0:
        return None
    a = math.isqrt(r.numerator)
    b = math.isqrt(r.denominator)
    if a * a == r.numerator and b * b == r.denominator:
        return Fraction(a, b)
    return None


def is_square(r: Rat) -> bool:
    return rat_sqrt(r) is not None


def is_square_local(r: Rat, v: Place) -> bool:
    """Is r a square in the completion at v?  r must be nonzero."""
    r = Fraction(r)
    if r == 0:
        raise ValueError("r must be nonzero")
    if v.is_real:
        return r > 0
    p = v.p
    w = valuation(r, p)
    if w % 2:
        return False
    u = unit_part(r, p)
    if p == 2:
        return unit_mod(u, 2, 3) == 1
    return _legendre_rat(u, p) == 1


def _eps2(u: Rat) -> int:
    """(u-1)/2 mod 2 for a 2-adic unit u: 0 iff u = 1 mod 4."""
    return (unit_mod(u, 2, 2) - 1) // 2 % 2


def _omega2(u: Rat) -> int:
    """(u^2-1)/8 mod 2 for a 2-adic unit u: 0 iff u = +-1 mod 8."""
    return (unit_mod(u, 2, 3) ** 2 - 1) // 8 % 2


def hilbert(a: Rat, b: Rat, v: Place) -> int:
    """Hilbert symbol (a,b)_v in additive Z/2.

    0 iff z^2 = a x^2 + b y^2 has a nontrivial solution over the completion
    at v.  Closed forms: the tame formula at odd p, the epsilon/omega formula
    at p = 2, a sign test at the real place.
    """
    a, b = Fraction(a), Fraction(b)
    if a == 0 or b == 0:
        raise ValueError("hilbert symbol needs nonzero entries")
    if v.is_real:
        return 1 if (a < 0 and b < 0) else 0
    p = v.p
    al, be = valuation(a, p), valuation(b, p)
    u, w = unit_part(a, p), unit_part(b, p)
    if p == 2:
        s = _eps2(u) * _eps2(w) + al * _omega2(w) + be * _omega2(u)
        return s % 2
    s = 0
    if al % 2 and be % 2 and (p - 1) // 2 % 2:
        s += 1
    if be % 2 and _legendre_rat(u, p) == -1:
        s += 1
    if al % 2 and _legendre_rat(w, p) == -1:
        s += 1
    return s % 2


def symbol_support(*values: Rat) -> list[Place]:
    """Places where Hilbert symbols built from the given rationals can be
    nonzero: the real place, 2, and all primes dividing a numerator or
    denominator."""
    ps: set[int] = {2}
    for r in values:
        r = Fraction(r)
        if r == 0:
            continue
        ps |= set(factorint(abs(r.numerator)).keys())
        ps |= set(factorint(r.denominator).keys())
    return [REAL] + [Place(p) for p in sorted(ps)]


def quadratic_character_sum(entries: list[tuple[Rat, Place]], d: Rat) -> int:
    """Sum over v of the local characters (t_v, d)_v, in Z/2.

    Over Q the local Artin map for Q(sqrt(d))/Q is the Hilbert symbol with d;
    d must not be a rational square (the caller owns the split case).
    """
    if is_square(d):
        raise ValueError("d is a rational square; no quadratic character")
    return sum(hilbert(t, d, v) for t, v in entries) % 2
