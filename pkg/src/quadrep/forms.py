"""Quadratic forms over Q as exact Gram matrices.

A form of rank n is stored as the symmetric matrix G of its bilinear form,
so G[i][i] is the coefficient of x_i^2 and G[i][j] is half the coefficient
of x_i x_j.  Integral forms additionally carry their integer polynomial
model, which is what the local point enumeration works with; all Q-linear
algebra happens on the Gram matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from sympy import symbols as _sym
from sympy.solvers.diophantine.diophantine import diop_ternary_quadratic

from . import linalg
from .arith import (
    REAL,
    Place,
    Rat,
    hilbert,
    is_square,
    is_square_local,
    rat_sqrt,
    symbol_support,
)
from .errors import InternalCheckError
from .linalg import Mat, Vec

# sparse integer polynomial: {exponent tuple: coefficient}
Poly = dict[tuple[int, ...], int]


@dataclass(frozen=True)
class GramForm:
    """A nondegenerate quadratic form given by its rational Gram matrix."""

    gram: Mat

    def __post_init__(self):
        n = len(self.gram)
        if any(len(row) != n for row in self.gram):
            raise ValueError("gram matrix must be square")
        if any(self.gram[i][j] != self.gram[j][i] for i in range(n) for j in range(n)):
            raise ValueError("gram matrix must be symmetric")
        if linalg.det(self.gram) == 0:
            raise ValueError("degenerate form")

    @classmethod
    def from_rows(cls, rows) -> "GramForm":
        return cls(linalg.mat(rows))

    @classmethod
    def diagonal(cls, entries) -> "GramForm":
        n = len(entries)
        return cls(
            tuple(
                tuple(Fraction(entries[i]) if i == j else Fraction(0) for j in range(n))
                for i in range(n)
            )
        )

    @classmethod
    def from_poly(cls, poly: Poly, nvars: int) -> "GramForm":
        """Build from a homogeneous degree-2 integer polynomial."""
        g = [[Fraction(0)] * nvars for _ in range(nvars)]
        for exps, c in poly.items():
            if sum(exps) != 2 or len(exps) != nvars:
                raise ValueError(f"not a quadratic monomial: {exps}")
            idx = [i for i, e in enumerate(exps) for _ in range(e)]
            i, j = idx
            if i == j:
                g[i][i] += c
            else:
                g[i][j] += Fraction(c, 2)
                g[j][i] += Fraction(c, 2)
        return cls(tuple(tuple(row) for row in g))

    @property
    def rank(self) -> int:
        return len(self.gram)

    @property
    def det(self) -> Fraction:
        return linalg.det(self.gram)

    def value(self, v: Vec) -> Fraction:
        v = linalg.vec(v)
        return sum(
            self.gram[i][j] * v[i] * v[j]
            for i in range(self.rank)
            for j in range(self.rank)
        )

    def bilinear(self, u: Vec, v: Vec) -> Fraction:
        u, v = linalg.vec(u), linalg.vec(v)
        return sum(
            self.gram[i][j] * u[i] * v[j]
            for i in range(self.rank)
            for j in range(self.rank)
        )

    def is_integral(self) -> bool:
        """Integer polynomial model exists: diagonal integral, doubled
        off-diagonal integral."""
        n = self.rank
        for i in range(n):
            if self.gram[i][i].denominator != 1:
                return False
            for j in range(i + 1, n):
                if (2 * self.gram[i][j]).denominator != 1:
                    return False
        return True

    def poly(self) -> Poly:
        """The integer polynomial model (requires an integral form)."""
        if not self.is_integral():
            raise ValueError("form has no integer polynomial model")
        n = self.rank
        p: Poly = {}
        for i in range(n):
            e = [0] * n
            e[i] = 2
            c = int(self.gram[i][i])
            if c:
                p[tuple(e)] = c
            for j in range(i + 1, n):
                c = int(2 * self.gram[i][j])
                if c:
                    e2 = [0] * n
                    e2[i] = e2[j] = 1
                    p[tuple(e2)] = c
        return p


@dataclass(frozen=True)
class FormInvariants:
    rank: int
    disc: Fraction
    hasse: dict  # Place -> int in Z/2, zero outside the stored support
    signature: tuple[int, int]

    def hasse_at(self, v: Place) -> int:
        return self.hasse.get(v, 0)


def diagonalize(f: GramForm) -> tuple[list[Fraction], Mat]:
    """Rational diagonalization: returns (d, T) with T^t G T = diag(d)."""
    n = f.rank
    g = [list(row) for row in f.gram]
    t = [list(row) for row in linalg.identity(n)]

    def add_col(dst, src, c):
        # column operation plus matching row operation keeps congruence
        for r in range(n):
            g[r][dst] += c * g[r][src]
        for r in range(n):
            g[dst][r] += c * g[src][r]
        for r in range(n):
            t[r][dst] += c * t[r][src]

    def swap_cols(i, j):
        for r in range(n):
            g[r][i], g[r][j] = g[r][j], g[r][i]
        for r in range(n):
            g[i][r], g[j][r] = g[j][r], g[i][r]
        for r in range(n):
            t[r][i], t[r][j] = t[r][j], t[r][i]

    for i in range(n):
        if g[i][i] == 0:
            j = next((j for j in range(i + 1, n) if g[j][j] != 0), None)
            if j is not None:
                swap_cols(i, j)
            else:
                j = next((j for j in range(i + 1, n) if g[i][j] != 0), None)
                if j is None:
                    raise ValueError("degenerate form")
                add_col(i, j, Fraction(1))
        piv = g[i][i]
        for j in range(i + 1, n):
            if g[i][j] != 0:
                add_col(j, i, -g[i][j] / piv)
    tm = tuple(tuple(row) for row in t)
    d = [g[i][i] for i in range(n)]
    check = linalg.mat_mul(linalg.mat_mul(linalg.transpose(tm), f.gram), tm)
    for i in range(n):
        for j in range(n):
            expect = d[i] if i == j else 0
            if check[i][j] != expect:
                raise InternalCheckError("diagonalization check failed")
    return d, tm


def invariants(f: GramForm) -> FormInvariants:
    d, _ = diagonalize(f)
    disc = linalg.det(f.gram)
    places = symbol_support(*d)
    hasse = {}
    for v in places:
        s = 0
        for i in range(len(d)):
            for j in range(i + 1, len(d)):
                s ^= hilbert(d[i], d[j], v)
        if s:
            hasse[v] = s
    pos = sum(1 for x in d if x > 0)
    return FormInvariants(f.rank, disc, hasse, (pos, f.rank - pos))


class _Virtual:
    """Rank/disc/hasse/signature of a form known only through invariants.

    Used for Witt-style splitting without constructing orthogonal
    complements explicitly.
    """

    def __init__(self, rank, disc, hasse, signature):
        self.rank = rank
        self.disc = Fraction(disc)
        self.hasse = dict(hasse)
        self.signature = signature

    @classmethod
    def of(cls, f: GramForm) -> "_Virtual":
        inv = invariants(f)
        return cls(inv.rank, inv.disc, inv.hasse, inv.signature)

    def hasse_at(self, v):
        return self.hasse.get(v, 0)

    def represents(self, a: Fraction, v: Place) -> bool:
        """Serre's criteria for representing a over the completion at v."""
        a = Fraction(a)
        if a == 0:
            raise ValueError("a must be nonzero")
        if v.is_real:
            pos, neg = self.signature
            return pos > 0 if a > 0 else neg > 0
        d = self.disc
        h = self.hasse_at(v)
        if self.rank == 1:
            return is_square_local(a * d, v)
        if self.rank == 2:
            if is_square_local(-d, v):
                return True  # hyperbolic over k_v
            return hilbert(a, -d, v) == h
        if self.rank == 3:
            if not is_square_local(-a * d, v):
                return True
            return hilbert(-1, -d, v) == h
        return True

    def split(self, c: Fraction) -> "_Virtual":
        """Invariants of h with self = <c> perp h (Witt cancellation)."""
        c = Fraction(c)
        disc2 = self.disc / c
        places = set(self.hasse) | set(symbol_support(c, disc2, self.disc))
        hasse2 = {}
        for v in places:
            bit = self.hasse_at(v) ^ hilbert(c, disc2, v)
            if bit:
                hasse2[v] = bit
        pos, neg = self.signature
        sig2 = (pos - 1, neg) if c > 0 else (pos, neg - 1)
        return _Virtual(self.rank - 1, disc2, hasse2, sig2)


def represents_locally(f: GramForm, a: Rat, v: Place) -> bool:
    """Does f represent a over the completion at v?"""
    return _Virtual.of(f).represents(Fraction(a), v)


def represents_rationally(f: GramForm, a: Rat) -> bool:
    """Hasse-Minkowski: local representability at the finitely many places
    that can obstruct."""
    a = Fraction(a)
    if a == 0:
        raise ValueError("a must be nonzero")
    virt = _Virtual.of(f)
    d, _ = diagonalize(f)
    places = symbol_support(a, *d)
    return all(virt.represents(a, v) for v in places)


def represents_form_rationally(f: GramForm, g: GramForm) -> bool:
    """Witt splitting on invariants: f represents g over Q."""
    if g.rank > f.rank:
        raise ValueError("rank(g) must not exceed rank(f)")
    cs, _ = diagonalize(g)
    virt = _Virtual.of(f)
    ds, _ = diagonalize(f)
    places = symbol_support(*(list(ds) + list(cs)))
    for c in cs:
        if not all(virt.represents(c, v) for v in places):
            return False
        virt = virt.split(c)
    return True


# ---------------------------------------------------------------------------
# constructive search
# ---------------------------------------------------------------------------

_X, _Y, _Z = _sym("x y z", integer=True)


def solve_conic(a: Rat, b: Rat, c: Rat) -> tuple[Fraction, Fraction] | None:
    """Rational (x, y) with a x^2 + b y^2 = c, or None if there is none.

    Backed by Lagrange-descent machinery for the associated isotropy problem;
    every returned solution is verified exactly.
    """
    a, b, c = Fraction(a), Fraction(b), Fraction(c)
    if a == 0 or b == 0:
        raise ValueError("degenerate conic")
    if c == 0:
        return (Fraction(0), Fraction(0))
    den = (a.denominator * b.denominator * c.denominator)
    ai, bi, ci = (int(a * den), int(b * den), int(c * den))
    sol = diop_ternary_quadratic(ai * _X**2 + bi * _Y**2 - ci * _Z**2)
    if sol is None or sol[0] is None:
        return None
    x0, y0, z0 = (Fraction(int(t)) for t in sol)
    if x0 == 0 and y0 == 0 and z0 == 0:
        return None
    if z0 != 0:
        x, y = x0 / z0, y0 / z0
    else:
        # binary part is isotropic along e = (x0, y0); build a hyperbolic pair
        if x0 != 0:
            u = (Fraction(1), Fraction(0))
            bu = a * x0  # B(e, u)
            fu = a
        else:
            u = (Fraction(0), Fraction(1))
            bu = b * y0
            fu = b
        alpha = (c - fu) / (2 * bu)
        x, y = alpha * x0 + u[0], alpha * y0 + u[1]
    if a * x * x + b * y * y != c:
        raise InternalCheckError("conic solution failed verification")
    return (x, y)


def _binary_represents(d1: Fraction, d2: Fraction, c: Fraction) -> bool:
    """Closed-form global representability of c by <d1, d2>."""
    if c == 0:
        return True
    disc = d1 * d2
    for v in symbol_support(d1, d2, c):
        if is_square_local(-disc, v):
            continue
        if hilbert(c * d1, -disc, v) != 0:
            return False
    return True


def rationals_by_height(height: int):
    """0, then all p/q in lowest terms with max(|p|, q) <= height, ordered by
    height then numerator."""
    yield Fraction(0)
    import math

    for h in range(1, height + 1):
        # denominators q = h with |p| <= h, and numerators +-h with q < h
        for p in range(-h, h + 1):
            if math.gcd(abs(p), h) == 1:
                yield Fraction(p, h)
        for q in range(1, h):
            if math.gcd(h, q) == 1:
                yield Fraction(h, q)
                yield Fraction(-h, q)


def _ternary_represent(d: list[Fraction], c: Fraction, height: int):
    """Vector (x1,x2,x3) with sum d_i x_i^2 = c, or None within budget."""
    for perm in ([0, 1, 2], [2, 0, 1], [1, 2, 0]):
        dp = [d[perm[0]], d[perm[1]], d[perm[2]]]
        for z0 in rationals_by_height(height):
            cp = c - dp[2] * z0 * z0
            if cp == 0:
                if z0 == 0:
                    continue
                out = [Fraction(0)] * 3
                out[perm[2]] = z0
                return tuple(out)
            if not _binary_represents(dp[0], dp[1], cp):
                continue
            sol = solve_conic(dp[0], dp[1], cp)
            if sol is None:
                raise InternalCheckError("conic contradicted symbol check")
            out = [Fraction(0)] * 3
            out[perm[0]], out[perm[1]], out[perm[2]] = sol[0], sol[1], z0
            return tuple(out)
    return None


def represent_value(f: GramForm, c: Rat, height: int = 40) -> Vec | None:
    """A vector v with f(v) = c, or None if not found within the budget.

    Never returns a wrong witness: results are verified exactly.
    """
    c = Fraction(c)
    if c == 0:
        raise ValueError("use isotropic machinery for c = 0")
    d, t = diagonalize(f)
    n = len(d)
    x: Vec | None = None
    for i in range(n):
        r = rat_sqrt(c / d[i])
        if r is not None:
            xs = [Fraction(0)] * n
            xs[i] = r
            x = tuple(xs)
            break
    if x is None and n >= 2:
        for i, j in itertools.combinations(range(n), 2):
            if not _binary_represents(d[i], d[j], c):
                continue
            sol = solve_conic(d[i], d[j], c)
            if sol is not None:
                xs = [Fraction(0)] * n
                xs[i], xs[j] = sol
                x = tuple(xs)
                break
    if x is None and n >= 3:
        for triple in itertools.combinations(range(n), 3):
            sub = [d[k] for k in triple]
            sol = _ternary_represent(sub, c, height)
            if sol is not None:
                xs = [Fraction(0)] * n
                for k, val in zip(triple, sol):
                    xs[k] = val
                x = tuple(xs)
                break
    if x is None:
        return None
    v = linalg.mat_vec(t, x)
    if f.value(v) != c:
        raise InternalCheckError("represent_value verification failed")
    return v


def orthogonal_complement(f: GramForm, vectors: list[Vec]) -> list[Vec]:
    """Basis of the B_f-orthogonal complement of the span of the vectors."""
    rows = tuple(
        tuple(
            sum(f.gram[i][j] * v[i] for i in range(f.rank)) for j in range(f.rank)
        )
        for v in vectors
    )
    return linalg.kernel_basis(rows)


def find_rational_representation(
    f: GramForm, g: GramForm, height: int = 40
) -> Mat | None:
    """Columns v_1..v_n over Q with B_f(v_i, v_j) = Gram(g)[i][j].

    Bounded search; returns None on budget exhaustion, never a wrong witness.
    """
    if not represents_form_rationally(f, g):
        return None
    cs, tg = diagonalize(g)
    m = f.rank
    basis = [tuple(Fraction(1 if i == j else 0) for i in range(m)) for j in range(m)]
    us: list[Vec] = []
    for c in cs:
        sub = GramForm(
            tuple(
                tuple(f.bilinear(bi, bj) for bj in basis) for bi in basis
            )
        )
        x = represent_value(sub, c, height)
        if x is None:
            return None
        u = tuple(
            sum(x[k] * basis[k][i] for k in range(len(basis))) for i in range(m)
        )
        us.append(u)
        rows = tuple(
            (tuple(f.bilinear(u, b) for b in basis),)
        )[0]
        ker = linalg.kernel_basis((rows,))
        basis = [
            tuple(
                sum(kv[k] * basis[k][i] for k in range(len(basis)))
                for i in range(m)
            )
            for kv in ker
        ]
    cols = us  # columns in diagonal coordinates of g
    tg_inv = linalg.inverse(tg)
    # V = U * Tg^{-1}: columns of V are the witness vectors
    u_mat = linalg.transpose(tuple(cols))  # m x n
    v_mat = linalg.mat_mul(u_mat, tg_inv)
    vt = linalg.transpose(v_mat)
    for i in range(g.rank):
        for j in range(g.rank):
            if f.bilinear(vt[i], vt[j]) != g.gram[i][j]:
                raise InternalCheckError("witness failed Gram verification")
    return v_mat
