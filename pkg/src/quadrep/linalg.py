"""Small exact linear algebra over the rationals.

Matrices are tuples of tuples of Fraction; vectors are tuples of Fraction.
Everything is immutable and exact.
"""

from __future__ import annotations

from fractions import Fraction

Vec = tuple[Fraction, ...]
Mat = tuple[tuple[Fraction, ...], ...]


def vec(xs) -> Vec:
    return tuple(Fraction(x) for x in xs)


def mat(rows) -> Mat:
    return tuple(tuple(Fraction(x) for x in row) for row in rows)


def identity(n: int) -> Mat:
    return tuple(
        tuple(Fraction(1 if i == j else 0) for j in range(n)) for i in range(n)
    )


def transpose(m: Mat) -> Mat:
    return tuple(zip(*m))


def mat_mul(a: Mat, b: Mat) -> Mat:
    bt = transpose(b)
    return tuple(
        tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a
    )


def mat_vec(a: Mat, v: Vec) -> Vec:
    return tuple(sum(x * y for x, y in zip(row, v)) for row in a)


def vec_add(u: Vec, v: Vec) -> Vec:
    return tuple(x + y for x, y in zip(u, v))


def vec_sub(u: Vec, v: Vec) -> Vec:
    return tuple(x - y for x, y in zip(u, v))


def vec_scale(c, v: Vec) -> Vec:
    c = Fraction(c)
    return tuple(c * x for x in v)


def det(m: Mat) -> Fraction:
    n = len(m)
    a = [list(row) for row in m]
    d = Fraction(1)
    for i in range(n):
        piv = next((r for r in range(i, n) if a[r][i] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != i:
            a[i], a[piv] = a[piv], a[i]
            d = -d
        d *= a[i][i]
        inv = 1 / a[i][i]
        for r in range(i + 1, n):
            if a[r][i] != 0:
                factor = a[r][i] * inv
                for c in range(i, n):
                    a[r][c] -= factor * a[i][c]
    return d


def solve(m: Mat, rhs: Vec) -> Vec | None:
    """Solve m x = rhs; None if the system is singular or inconsistent."""
    n = len(m)
    a = [list(row) + [r] for row, r in zip(m, rhs)]
    cols = len(m[0])
    pivots = []
    row = 0
    for col in range(cols):
        piv = next((r for r in range(row, n) if a[r][col] != 0), None)
        if piv is None:
            continue
        a[row], a[piv] = a[piv], a[row]
        inv = 1 / a[row][col]
        a[row] = [x * inv for x in a[row]]
        for r in range(n):
            if r != row and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [x - factor * y for x, y in zip(a[r], a[row])]
        pivots.append(col)
        row += 1
        if row == n:
            break
    for r in range(row, n):
        if a[r][cols] != 0:
            return None
    x = [Fraction(0)] * cols
    for r, col in enumerate(pivots):
        x[col] = a[r][cols]
    return tuple(x)


def inverse(m: Mat) -> Mat:
    n = len(m)
    cols = []
    for j in range(n):
        e = tuple(Fraction(1 if i == j else 0) for i in range(n))
        col = solve(m, e)
        if col is None:
            raise ValueError("singular matrix")
        cols.append(col)
    return transpose(tuple(cols))


def kernel_basis(m: Mat) -> list[Vec]:
    """Basis of the right kernel of m."""
    nrows = len(m)
    ncols = len(m[0]) if nrows else 0
    a = [list(row) for row in m]
    pivots: list[int] = []
    row = 0
    for col in range(ncols):
        piv = next((r for r in range(row, nrows) if a[r][col] != 0), None)
        if piv is None:
            continue
        a[row], a[piv] = a[piv], a[row]
        inv = 1 / a[row][col]
        a[row] = [x * inv for x in a[row]]
        for r in range(nrows):
            if r != row and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [x - factor * y for x, y in zip(a[r], a[row])]
        pivots.append(col)
        row += 1
        if row == nrows:
            break
    basis = []
    free = [c for c in range(ncols) if c not in pivots]
    for fc in free:
        v = [Fraction(0)] * ncols
        v[fc] = Fraction(1)
        for r, pc in enumerate(pivots):
            v[pc] = -a[r][fc]
        basis.append(tuple(v))
    return basis
