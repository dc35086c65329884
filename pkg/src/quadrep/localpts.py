"""Integral local analysis: does a model have Z_p-points, which residue
classes contain them, and what values does the obstruction character take.

The engine walks the tree of residue classes mod p^k.  Children of a live
class are computed by linearizing the system (valid for k >= 1), and a class
is certified to contain a Z_p-point by a multivariate Hensel criterion: an
r x r Jacobian minor of valuation delta with k >= 2*delta + 1 guarantees a
point, landing in the class mod p^(k - delta).  Everything is integer
arithmetic; no floating point, no p-adic approximations that are not tracked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

from . import linalg
from .arith import REAL, Place, Rat, hilbert, is_square_local, valuation
from .errors import (
    DegenerateTransporterError,
    InternalCheckError,
    ResourceLimitError,
)
from .forms import GramForm, Poly
from .linalg import Vec
from .spinor import transporter_class

# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------


def poly_eval(poly: Poly, xs) -> int:
    total = 0
    for exps, c in poly.items():
        term = c
        for x, e in zip(xs, exps):
            if e:
                term *= x**e
        total += term
    return total


class QuadEq:
    """Compiled integer equation of total degree <= 2."""

    __slots__ = ("n", "diag", "cross", "lin", "const")

    def __init__(self, poly: Poly, n: int):
        self.n = n
        self.diag = [0] * n
        self.cross = [[0] * n for _ in range(n)]  # upper triangular, i < j
        self.lin = [0] * n
        self.const = 0
        for exps, c in poly.items():
            deg = sum(exps)
            if deg > 2:
                raise ValueError("model equations must have degree <= 2")
            if deg == 0:
                self.const += c
            elif deg == 1:
                self.lin[exps.index(1)] += c
            else:
                idx = [i for i, e in enumerate(exps) for _ in range(e)]
                i, j = idx
                if i == j:
                    self.diag[i] += c
                else:
                    self.cross[min(i, j)][max(i, j)] += c

    def value(self, xs) -> int:
        t = self.const
        for i in range(self.n):
            xi = xs[i]
            if xi:
                t += self.diag[i] * xi * xi + self.lin[i] * xi
                row = self.cross[i]
                for j in range(i + 1, self.n):
                    if row[j] and xs[j]:
                        t += row[j] * xi * xs[j]
        return t

    def gradient(self, xs) -> list[int]:
        g = []
        for k in range(self.n):
            t = 2 * self.diag[k] * xs[k] + self.lin[k]
            for i in range(k):
                t += self.cross[i][k] * xs[i]
            for j in range(k + 1, self.n):
                t += self.cross[k][j] * xs[j]
            g.append(t)
        return g


@dataclass
class IntegralModel:
    """Polynomial system over Z cutting out the integral points, with an
    optional excluded locus (primitivity constraints: not all coordinates of
    a subset divisible by p)."""

    nvars: int
    equations: list[Poly]
    excluded: list[tuple[int, ...]] = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        self._compiled = [QuadEq(eq, self.nvars) for eq in self.equations]

    @property
    def compiled(self) -> list[QuadEq]:
        return self._compiled

    def residues(self, xs) -> list[int]:
        return [q.value(xs) for q in self._compiled]

    def is_integer_point(self, xs) -> bool:
        import math

        if any(r != 0 for r in self.residues(xs)):
            return False
        for subset in self.excluded:
            if math.gcd(*(abs(xs[i]) for i in subset), 0) != 1:
                return False
        return True


def model_from_form_value(f: GramForm, a: Rat, primitive: bool = False) -> IntegralModel:
    """Model of f(x) = a; primitive deletes the all-coordinates-zero locus."""
    a = Fraction(a)
    if a.denominator != 1:
        raise ValueError("integral model needs an integer target")
    eq = dict(f.poly())
    zero = tuple([0] * f.rank)
    eq[zero] = eq.get(zero, 0) - int(a)
    excluded = [tuple(range(f.rank))] if primitive else []
    return IntegralModel(f.rank, [eq], excluded, label=f"f=a (rank {f.rank})")


def model_from_form_pair(f: GramForm, g: GramForm) -> IntegralModel:
    """Model of the representation problem: n vectors in Z^m with prescribed
    Gram matrix.  Variables are v_1 | v_2 | ... | v_n, concatenated."""
    m, n = f.rank, g.rank
    nv = m * n
    eqs: list[Poly] = []
    two_g = [[int(2 * f.gram[i][j]) for j in range(m)] for i in range(m)]
    del two_g
    for i in range(n):
        for j in range(i, n):
            eq: Poly = {}
            scale = 1 if i == j else 2  # diagonal: f(v_i) = g_ii; else 2B = 2g_ij
            # B(v_i, v_j) = sum_{r,s} G[r][s] v_i[r] v_j[s]
            for r in range(m):
                for s in range(m):
                    grs = f.gram[r][s]
                    if grs == 0:
                        continue
                    coeff = grs * scale if i != j else grs
                    vi = i * m + r
                    vj = j * m + s
                    exps = [0] * nv
                    exps[vi] += 1
                    exps[vj] += 1
                    key = tuple(exps)
                    eq[key] = eq.get(key, 0) + coeff
            target = g.gram[i][j] * (1 if i == j else 2)
            eq = {k: c for k, c in eq.items() if c != 0}
            for k in list(eq):
                if Fraction(eq[k]).denominator != 1:
                    raise InternalCheckError("non-integral pair model")
                eq[k] = int(eq[k])
            zero = tuple([0] * nv)
            eq[zero] = eq.get(zero, 0) - int(target)
            eqs.append(eq)
    return IntegralModel(nv, eqs, label=f"pair (m={m}, n={n})")


def check_smooth_at(model: IntegralModel, point: tuple[Fraction, ...]) -> bool:
    """Jacobian of the system has full rank at a rational point of the model."""
    for eq in model.compiled:
        val = eq.const + sum(
            eq.lin[i] * point[i] for i in range(model.nvars)
        ) + sum(
            eq.diag[i] * point[i] * point[i] for i in range(model.nvars)
        ) + sum(
            eq.cross[i][j] * point[i] * point[j]
            for i in range(model.nvars)
            for j in range(i + 1, model.nvars)
        )
        if val != 0:
            return False
    rows = []
    for eq in model.compiled:
        row = []
        for k in range(model.nvars):
            t = 2 * eq.diag[k] * point[k] + eq.lin[k]
            for i in range(k):
                t += eq.cross[i][k] * point[i]
            for j in range(k + 1, model.nvars):
                t += eq.cross[k][j] * point[j]
            row.append(Fraction(t))
        rows.append(tuple(row))
    ker = linalg.kernel_basis(tuple(rows))
    return len(ker) == model.nvars - len(model.equations)


# ---------------------------------------------------------------------------
# the residue-class engine
# ---------------------------------------------------------------------------


def _minor_valuation(rows: list[list[int]], p: int, cap: int) -> int | float:
    """Minimal p-valuation over all maximal minors of an r x N integer
    matrix; capped search (values above cap are reported as cap + 1)."""
    r = len(rows)
    n = len(rows[0])
    best: int | float = float("inf")
    for cols in itertools.combinations(range(n), r):
        sub = [[rows[i][c] for c in cols] for i in range(r)]
        d = _int_det(sub)
        if d == 0:
            continue
        v = 0
        while d % p == 0:
            d //= p
            v += 1
            if v > cap:
                break
        best = min(best, v)
        if best == 0:
            return 0
    return best


def _int_det(m: list[list[int]]) -> int:
    r = len(m)
    if r == 1:
        return m[0][0]
    if r == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    if r == 3:
        return (
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        )
    total = 0
    for j in range(r):
        if m[0][j]:
            minor = [row[:j] + row[j + 1 :] for row in m[1:]]
            total += (-1) ** j * m[0][j] * _int_det(minor)
    return total


def _solve_mod_p(a: list[list[int]], b: list[int], p: int):
    """Solutions of A x = b over F_p: (particular, kernel basis) or None."""
    rows = len(a)
    cols = len(a[0]) if rows else 0
    m = [[x % p for x in row] + [bv % p] for row, bv in zip(a, b)]
    pivots = []
    rank = 0
    for col in range(cols):
        piv = next((r for r in range(rank, rows) if m[r][col]), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = pow(m[rank][col], -1, p)
        m[rank] = [(x * inv) % p for x in m[rank]]
        for r in range(rows):
            if r != rank and m[r][col]:
                c = m[r][col]
                m[r] = [(x - c * y) % p for x, y in zip(m[r], m[rank])]
        pivots.append(col)
        rank += 1
    for r in range(rank, rows):
        if m[r][cols]:
            return None
    part = [0] * cols
    for r, col in enumerate(pivots):
        part[col] = m[r][cols]
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for fc in free:
        v = [0] * cols
        v[fc] = 1
        for r, pc in enumerate(pivots):
            v[pc] = (-m[r][fc]) % p
        basis.append(v)
    return part, basis


class LocalEngine:
    """Residue-class tree walker for one model at one finite prime."""

    def __init__(self, model: IntegralModel, p: int, cap: int = 1 << 20):
        self.model = model
        self.p = p
        self.cap = cap
        self.scanned = 0

    def _count(self, k: int = 1):
        self.scanned += k
        if self.scanned > self.cap:
            raise ResourceLimitError(
                f"p={self.p} model[{self.model.label}]", self.scanned, self.cap
            )

    # -- level 1: scan solutions mod p ------------------------------------

    def level1(self):
        """Yield live classes mod p (equations hold, excluded locus avoided)."""
        p = self.p
        n = self.model.nvars
        eqs = self.model.compiled
        r = len(eqs)
        excluded = self.model.excluded

        consts0 = [q.const % p for q in eqs]
        lins0 = [[c % p for c in q.lin] for q in eqs]
        xs = [0] * n
        self._count(p**n if p**n < 1 << 28 else 1 << 28)

        def rec(t, consts, lins):
            if t == n - 1:
                for v in range(p):
                    ok = True
                    for e in range(r):
                        q = eqs[e]
                        val = (consts[e] + (q.diag[t] * v + lins[e][t]) * v) % p
                        if val:
                            ok = False
                            break
                    if ok:
                        xs[t] = v
                        if not any(
                            all(xs[i] % p == 0 for i in sub) for sub in excluded
                        ):
                            yield tuple(xs)
                return
            for v in range(p):
                xs[t] = v
                nc = []
                nl = []
                for e in range(r):
                    q = eqs[e]
                    nc.append((consts[e] + (q.diag[t] * v + lins[e][t]) * v) % p)
                    row = q.cross[t]
                    cur = lins[e]
                    nl.append(
                        [
                            (cur[j] + row[j] * v) % p if j > t else cur[j]
                            for j in range(n)
                        ]
                    )
                yield from rec(t + 1, nc, nl)

        if n == 1:
            for v in range(p):
                if all((q.const + (q.diag[0] * v + q.lin[0]) * v) % p == 0 for q in eqs):
                    if not any(all(v % p == 0 for _ in sub) for sub in excluded):
                        yield (v,)
            return
        yield from rec(0, consts0, lins0)

    # -- tree steps --------------------------------------------------------

    def children(self, x: tuple[int, ...], k: int):
        """Live children mod p^(k+1) of a live class mod p^k (k >= 1)."""
        p = self.p
        pk = p**k
        vals = self.model.residues(x)
        jac = [q.gradient(x) for q in self.model.compiled]
        rhs = []
        for v in vals:
            if v % pk:
                return []
            rhs.append(-(v // pk))
        sol = _solve_mod_p(jac, rhs, p)
        if sol is None:
            return []
        part, basis = sol
        dims = len(basis)
        self._count(p**dims)
        out = []
        for coeffs in itertools.product(range(p), repeat=dims):
            delta = list(part)
            for c, bvec in zip(coeffs, basis):
                if c:
                    delta = [(d + c * b) % p for d, b in zip(delta, bvec)]
            out.append(tuple(xi + pk * d for xi, d in zip(x, delta)))
        return out

    def hensel_delta(self, x: tuple[int, ...], k: int) -> int | float:
        """Minimal Jacobian minor valuation at x (capped at k)."""
        jac = [q.gradient(x) for q in self.model.compiled]
        return _minor_valuation(jac, self.p, k)

    def certified(self, x: tuple[int, ...], k: int) -> bool:
        d = self.hensel_delta(x, k)
        return d != float("inf") and k >= 2 * d + 1

    def solvable(self) -> bool:
        """Is there a Z_p-point?  Sound in both directions on termination."""
        queue: list[tuple[tuple[int, ...], int]] = []
        for x in self.level1():
            if self.certified(x, 1):
                return True
            queue.append((x, 1))
        while queue:
            x, k = queue.pop()
            for child in self.children(x, k):
                if self.certified(child, k + 1):
                    return True
                queue.append((child, k + 1))
        return False

    def contains_point(self, x: tuple[int, ...], k: int, level: int) -> bool:
        """Does the class of x mod p^level contain a Z_p-point?  Requires the
        strengthened certificate k >= 2 delta + 1 and k - delta >= level."""
        stack = [(x, k)]
        while stack:
            y, j = stack.pop()
            d = self.hensel_delta(y, j)
            if d != float("inf") and j >= 2 * d + 1 and j - d >= level:
                return True
            for child in self.children(y, j):
                stack.append((child, j + 1))
        return False

    def classes_with_points(self, level: int) -> list[tuple[int, ...]]:
        """All classes mod p^level that contain a Z_p-point (exact list)."""
        frontier = list(self.level1())
        k = 1
        while k < level:
            nxt = []
            for x in frontier:
                nxt.extend(self.children(x, k))
            frontier = nxt
            k += 1
        return [x for x in frontier if self.contains_point(x, level, level)]

    def lift(self, x: tuple[int, ...], k: int, target: int):
        """Newton-refine a certified class representative.

        Returns (y, achieved, delta): F(y) = 0 mod p^achieved with
        achieved >= target, Jacobian minor valuation delta at y, and y agrees
        with a true Z_p-point mod p^(achieved - delta).
        """
        p = self.p
        eqs = self.model.compiled
        r = len(eqs)
        y = list(x)
        big = p ** (target + 2 * k + 8)
        for _ in range(80):
            vals = [q.value(y) for q in eqs]
            cur = min(
                (valuation(v, p) for v in vals if v != 0), default=float("inf")
            )
            if cur == float("inf"):
                cur = target + k
            delta = self.hensel_delta(tuple(y), target + k)
            if cur >= target:
                if delta == float("inf") or cur < 2 * delta + 1:
                    raise InternalCheckError("lift reached target without certificate")
                return tuple(yi % p ** int(cur) for yi in y), int(cur), int(delta)
            jac = [q.gradient(y) for q in eqs]
            cols = self._best_columns(jac, int(delta))
            sub = [[Fraction(jac[i][c]) for c in cols] for i in range(r)]
            rhs = tuple(Fraction(-v) for v in vals)
            corr = linalg.solve(tuple(tuple(row) for row in sub), rhs)
            if corr is None:
                raise InternalCheckError("singular Newton step")
            for c, dc in zip(cols, corr):
                if dc.denominator % p == 0:
                    raise InternalCheckError("non-integral Newton correction")
                y[c] = (y[c] + dc.numerator * pow(dc.denominator, -1, big)) % big
        raise InternalCheckError("Newton iteration did not converge")

    def _best_columns(self, jac: list[list[int]], cap: int):
        r = len(jac)
        n = len(jac[0])
        best, best_cols = None, None
        for cols in itertools.combinations(range(n), r):
            sub = [[jac[i][c] for c in cols] for i in range(r)]
            d = _int_det(sub)
            if d == 0:
                continue
            v = 0
            while d % self.p == 0 and v <= cap + 1:
                d //= self.p
                v += 1
            if best is None or v < best:
                best, best_cols = v, cols
                if v == 0:
                    break
        if best_cols is None:
            raise InternalCheckError("Jacobian identically singular at point")
        return best_cols


def locally_solvable(model: IntegralModel, p: int, cap: int = 1 << 20) -> bool:
    """Decide X(Z_p) != 0 by adaptive Hensel-certified enumeration."""
    return LocalEngine(model, p, cap).solvable()


def enumerate_residues(
    model: IntegralModel, p: int, level: int, cap: int = 1 << 20
) -> list[tuple[int, ...]]:
    """Residue classes mod p^level that contain Z_p-points of the model."""
    return LocalEngine(model, p, cap).classes_with_points(level)


# ---------------------------------------------------------------------------
# place reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlaceReport:
    """Per-place record feeding the obstruction sum.

    `values` holds the Z/2 character values (invariant sets, and norm-class
    encodings in the codimension-2 spinor case).  `reps` holds exact rational
    square-class representatives in the codimension <= 1 spinor case.
    """

    place: Place
    solvable: bool
    values: tuple[int, ...] = ()
    reps: tuple[Fraction, ...] = ()
    method: str = ""
    precision: int = 0

    def __post_init__(self):
        if self.solvable and not self.values and not self.reps:
            raise ValueError("solvable place must carry a nonempty value set")


def _affine_eval(aff: tuple[tuple[Fraction, ...], Fraction], xs) -> Fraction:
    coeffs, const = aff
    return sum(c * x for c, x in zip(coeffs, xs)) + const


def _den_valuation(aff, p: int) -> int:
    coeffs, const = aff
    worst = 0
    for c in list(coeffs) + [const]:
        if c != 0:
            worst = max(worst, -min(0, valuation(c, p)))
    return worst


def invariant_set_ternary(
    quat,
    model: IntegralModel,
    p: int,
    cap: int = 1 << 20,
    max_level: int = 40,
) -> PlaceReport:
    """Value set {inv_p alpha(M)} over M in X(Z_p) for the ternary quaternion.

    `quat` provides d and the two affine forms (in model coordinates) whose
    symbols with d compute the character; adaptive refinement until every
    surviving residue class pins its symbol.
    """
    place = Place(p)
    eng = LocalEngine(model, p, cap)
    d = quat.d
    margin = 3 if p == 2 else 1
    d1 = _den_valuation(quat.l1_model, p)
    d2 = _den_valuation(quat.l2_model, p)

    if is_square_local(d, place):
        if not eng.solvable():
            return PlaceReport(place, False, method="Enumeration", precision=1)
        return PlaceReport(place, True, (0,), method="SquareCharacter", precision=1)

    seen: set[int] = set()
    stack = [(x, 1) for x in eng.level1()]
    any_live = bool(stack)
    while stack:
        x, k = stack.pop()
        if len(seen) == 2:
            break
        bit = None
        for aff, dv in ((quat.l1_model, d1), (quat.l2_model, d2)):
            val = _affine_eval(aff, x)
            if val == 0:
                continue
            w = valuation(val, p)
            if w + margin <= k - dv:
                bit = hilbert(val, d, place)
                break
        if bit is not None:
            if bit in seen:
                continue
            if eng.contains_point(x, k, k):
                seen.add(bit)
            continue
        if k >= max_level:
            raise ResourceLimitError(
                f"invariant set at p={p}", eng.scanned, cap
            )
        for child in eng.children(x, k):
            stack.append((child, k + 1))
    if not seen:
        if not any_live or not eng.solvable():
            return PlaceReport(place, False, method="Enumeration", precision=1)
        raise InternalCheckError("solvable place produced no determined symbol")
    return PlaceReport(
        place,
        True,
        tuple(sorted(seen)),
        method="Enumeration",
        precision=max_level,
    )


def canonical_square_class(val: Fraction, p: int | None) -> Fraction:
    """Canonical square-class representative in Q_p^* (or R for p None)."""
    if val == 0:
        raise ValueError("zero has no square class")
    if p is None:
        return Fraction(1) if val > 0 else Fraction(-1)
    v = valuation(val, p)
    if p == 2:
        from .arith import unit_mod

        u = unit_mod(val / Fraction(2) ** v, 2, 3)
        u = u if u <= 4 else u - 8  # {1, 3, -3, -1}
        return Fraction(2) ** (v % 2) * u
    from .arith import legendre, unit_mod

    u = unit_mod(val / Fraction(p) ** v, p, 1)
    if legendre(u, p) == 1:
        unit = Fraction(1)
    else:
        unit = Fraction(_least_nonresidue(p))
    return Fraction(p) ** (v % 2) * unit


def _least_nonresidue(p: int) -> int:
    from .arith import legendre

    for n in range(2, p):
        if legendre(n, p) == -1:
            return n
    raise InternalCheckError("no quadratic nonresidue found")


def spinor_value_set(
    f: GramForm,
    witness: list[Vec],
    model: IntegralModel,
    p: int,
    d: Fraction | None = None,
    cap: int = 1 << 20,
    max_level: int = 40,
) -> PlaceReport:
    """Set of spinor classes of transporters from the witness to local points.

    With d given (codimension 2) classes live in Q_p^*/N and are encoded as
    Z/2 bits via the Hilbert symbol with d; with d None (codimension <= 1)
    classes live in Q_p^*/squares and are returned as canonical
    representatives.  Stability of each class value is checked by evaluating
    the transporter at two precisions.
    """
    place = Place(p)
    eng = LocalEngine(model, p, cap)
    m = f.rank
    n = len(witness)
    norm_mode = d is not None
    full_group_size = 2 if norm_mode else (8 if p == 2 else 4)

    if norm_mode and is_square_local(d, place):
        if not eng.solvable():
            return PlaceReport(place, False, method="Enumeration", precision=1)
        return PlaceReport(place, True, (0,), method="SquareCharacter", precision=1)

    bits: set[int] = set()
    reps: set[Fraction] = set()
    base = 7 if p == 2 else 2

    wit_den = _witness_den(witness, p)
    margin = 3 if p == 2 else 1

    def class_value(x, k):
        """Transporter class for the residue class at (x, k); None if the
        value is not yet pinned at this precision."""
        target = max(k, base) + 2
        try:
            y, ach, _ = eng.lift(x, k, target + 2)
        except InternalCheckError:
            return None
        pk = p**k
        if any((yi - xi) % pk for yi, xi in zip(y, x)):
            return None  # refined point escaped the class; split further
        out = []
        for trunc in (target, ach):
            yt = tuple(yi % p**trunc for yi in y)
            ws = [
                tuple(Fraction(yt[i * m + j]) for j in range(m)) for i in range(n)
            ]
            try:
                t = transporter_class(witness, ws, f, valuation_prime=p)
            except (DegenerateTransporterError, ZeroDivisionError, ValueError):
                return None
            if t == 0:
                return None
            w = valuation(t, p)
            if w + margin > target - wit_den - 1:
                return None
            out.append(t)
        k1 = (
            hilbert(out[0], d, place)
            if norm_mode
            else canonical_square_class(out[0], p)
        )
        k2 = (
            hilbert(out[1], d, place)
            if norm_mode
            else canonical_square_class(out[1], p)
        )
        if k1 != k2:
            return None
        return k1

    stack = [(x, 1) for x in eng.level1()]
    any_live = bool(stack)
    while stack:
        x, k = stack.pop()
        if len(bits if norm_mode else reps) == full_group_size:
            break
        val = class_value(x, k)
        if val is not None:
            if norm_mode:
                if val in bits:
                    continue
            elif val in reps:
                continue
            if eng.contains_point(x, k, k):
                if norm_mode:
                    bits.add(val)
                else:
                    reps.add(val)
            continue
        if k >= max_level:
            raise ResourceLimitError(f"spinor set at p={p}", eng.scanned, cap)
        for child in eng.children(x, k):
            stack.append((child, k + 1))

    if not bits and not reps:
        if not any_live or not eng.solvable():
            return PlaceReport(place, False, method="Enumeration", precision=1)
        raise InternalCheckError("solvable place produced no spinor classes")
    return PlaceReport(
        place,
        True,
        values=tuple(sorted(bits)),
        reps=tuple(sorted(reps)) if reps else (),
        method="Enumeration",
        precision=max_level,
    )


def _witness_den(witness: list[Vec], p: int) -> int:
    worst = 0
    for v in witness:
        for c in v:
            if c != 0:
                worst = max(worst, -min(0, valuation(c, p)))
    return worst
