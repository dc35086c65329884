"""Constructive orthogonal-group machinery: reflections, reflection
decompositions, the determinant formula for spinor norms, and the
transporter spinor-class recipe used by the obstruction deciders.

All computations are exact over Q.  p-adic considerations enter only through
an optional valuation hint that steers sign-variant choices for numerical
(p-adic) stability when the input vectors approximate local points.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import linalg
from .arith import valuation
from .errors import DegenerateTransporterError, InternalCheckError
from .forms import GramForm, diagonalize
from .linalg import Mat, Vec


def reflect(y: Vec, f: GramForm) -> Mat:
    """Matrix of the reflection along y: x -> x - 2 B(x,y)/f(y) * y."""
    y = linalg.vec(y)
    fy = f.value(y)
    if fy == 0:
        raise ValueError("cannot reflect along an isotropic vector")
    gy = linalg.mat_vec(f.gram, y)
    n = f.rank
    return tuple(
        tuple(
            (Fraction(1) if i == j else Fraction(0)) - 2 * y[i] * gy[j] / fy
            for j in range(n)
        )
        for i in range(n)
    )


def apply_reflection(y: Vec, f: GramForm, x: Vec) -> Vec:
    fy = f.value(y)
    if fy == 0:
        raise ValueError("cannot reflect along an isotropic vector")
    c = 2 * f.bilinear(x, y) / fy
    return tuple(xi - c * yi for xi, yi in zip(x, y))


@dataclass(frozen=True)
class Rotation:
    """An element of SO(f) given by its matrix."""

    matrix: Mat
    form: GramForm

    def __post_init__(self):
        g = self.form.gram
        m = self.matrix
        if linalg.mat_mul(linalg.mat_mul(linalg.transpose(m), g), m) != g:
            raise ValueError("matrix does not preserve the form")
        if linalg.det(m) != 1:
            raise ValueError("not a rotation (det != +1)")

    @classmethod
    def from_reflections(cls, vectors: list[Vec], f: GramForm) -> "Rotation":
        if len(vectors) % 2:
            raise ValueError("odd number of reflections is not a rotation")
        m = linalg.identity(f.rank)
        for y in vectors:
            m = linalg.mat_mul(m, reflect(y, f))
        return cls(m, f)


def spinor_norm_of_reflections(vectors: list[Vec], f: GramForm) -> Fraction:
    """Product of the f-values over an even-length reflection list."""
    if len(vectors) % 2:
        raise ValueError("spinor norm needs an even number of reflections")
    out = Fraction(1)
    for y in vectors:
        fy = f.value(linalg.vec(y))
        if fy == 0:
            raise ValueError("isotropic reflection vector")
        out *= fy
    return out


def spinor_norm_zassenhaus(rot: Rotation) -> Fraction:
    """det((1+tau)/2), a square-class representative of the spinor norm.

    Raises ValueError when det(1+tau) = 0; callers fall back to a reflection
    decomposition.
    """
    n = rot.form.rank
    m = tuple(
        tuple(
            (rot.matrix[i][j] + (1 if i == j else 0)) / Fraction(2)
            for j in range(n)
        )
        for i in range(n)
    )
    d = linalg.det(m)
    if d == 0:
        raise ValueError("det(1 + tau) = 0: Zassenhaus formula not applicable")
    return d


def cartan_dieudonne(rot: Rotation) -> list[Vec]:
    """Even-length reflection list composing exactly to the rotation.

    Works through an f-orthogonal basis; when the direct reflection vector is
    isotropic the two-reflection variant is used (one of the two always works
    since f(se-e) + f(se+e) = 4 f(e)).
    """
    f = rot.form
    n = f.rank
    _, t = diagonalize(f)
    basis = linalg.transpose(t)  # rows are f-orthogonal anisotropic vectors
    cur = rot.matrix
    out: list[Vec] = []
    for b in basis:
        w = linalg.mat_vec(cur, b)
        if w == b:
            continue
        u_minus = linalg.vec_sub(w, b)
        if f.value(u_minus) != 0:
            out.append(u_minus)
            cur = linalg.mat_mul(reflect(u_minus, f), cur)
        else:
            u_plus = linalg.vec_add(w, b)
            out.append(u_plus)
            out.append(b)
            cur = linalg.mat_mul(reflect(b, f), linalg.mat_mul(reflect(u_plus, f), cur))
    if cur != linalg.identity(n):
        raise InternalCheckError("reflection peeling did not reach the identity")
    if len(out) % 2:
        raise InternalCheckError("odd reflection count for a rotation")
    return out


def _transform_tuple(vectors: list[Vec], s: Mat) -> list[Vec]:
    """Replace (v_1..v_n) by the tuple (sum_k S[k][j] v_k)_j."""
    n = len(vectors)
    m = len(vectors[0])
    return [
        tuple(sum(s[k][j] * vectors[k][i] for k in range(n)) for i in range(m))
        for j in range(n)
    ]


def _variant_valuation(val: Fraction, p: int | None) -> float:
    if p is None or val == 0:
        return 0.0
    return valuation(val, p)


def transporter_class(
    vs: list[Vec],
    ws: list[Vec],
    f: GramForm,
    valuation_prime: int | None = None,
    _allow_odd: bool = False,
) -> Fraction:
    """Square-class representative of the spinor norm of a transporter
    sending v_i to w_i, computed without constructing the rotation.

    The needed reflection images are accumulated step by step; at every step
    the minus variant tau_{im(v_i) - v_i} or the plus variant
    tau_{v_i} tau_{im(v_i) + v_i} is chosen, preferring the factor of
    smaller p-adic valuation when a prime hint is given.  The two tuples are
    first rotated into a g-orthogonal shape so both variants always preserve
    the already-pinned vectors; at least one variant is defined at every step.

    When the accumulated reflection count is odd, an anisotropic vector of the
    orthogonal complement of the v_i supplies the stabilizer reflection that
    restores an SO(f)-lift; with n = m no such vector exists and the points
    lie in different connected components (raises DegenerateTransporterError).
    """
    n = len(vs)
    m = f.rank
    if n == 0 or len(ws) != n:
        raise ValueError("need matching nonempty tuples")
    gram = tuple(tuple(f.bilinear(vs[i], vs[j]) for j in range(n)) for i in range(n))
    _, s = diagonalize(GramForm(gram))
    vs_o = _transform_tuple([linalg.vec(v) for v in vs], s)
    ws_o = _transform_tuple([linalg.vec(w) for w in ws], s)

    total = Fraction(1)
    refl = 0
    imgs = list(ws_o)
    for i in range(n):
        vi = vs_o[i]
        wi = imgs[i]
        fvi = f.value(vi)
        u_minus = linalg.vec_sub(wi, vi)
        u_plus = linalg.vec_add(wi, vi)
        fm = f.value(u_minus)
        fp = f.value(u_plus)
        options = []
        if fm != 0:
            options.append(("-", fm, fm))
        if fp != 0 and fvi != 0:
            options.append(("+", fp, fp * fvi))
        if not options:
            raise DegenerateTransporterError(
                f"all reflection variants vanish at step {i}"
            )
        if len(options) == 2 and valuation_prime is not None:
            options.sort(key=lambda o: _variant_valuation(o[2], valuation_prime))
        kind, _, factor = options[0]
        total *= factor
        if kind == "-":
            imgs = [apply_reflection(u_minus, f, x) for x in imgs]
            refl += 1
        else:
            imgs = [
                apply_reflection(vi, f, apply_reflection(u_plus, f, x)) for x in imgs
            ]
            refl += 2
        imgs[i] = vi  # exact by the swap property; guards drift for callers
    if refl % 2:
        if _allow_odd:
            return total
        comp = _anisotropic_complement_vector(f, vs_o)
        if comp is None:
            raise DegenerateTransporterError(
                "odd transporter with full-rank tuple: points lie in "
                "different SO(f)-components"
            )
        total *= f.value(comp)
    return total


def _anisotropic_complement_vector(f: GramForm, vectors: list[Vec]) -> Vec | None:
    """Anisotropic vector orthogonal to all the given vectors, if any."""
    rows = tuple(
        tuple(f.bilinear(v, e) for e in _standard_basis(f.rank)) for v in vectors
    )
    basis = linalg.kernel_basis(rows)
    if not basis:
        return None
    for b in basis:
        if f.value(b) != 0:
            return b
    for i in range(len(basis)):
        for j in range(i + 1, len(basis)):
            w = linalg.vec_add(basis[i], basis[j])
            if f.value(w) != 0:
                return w
    # complement nondegenerate, so some pair combination is anisotropic
    raise InternalCheckError("no anisotropic vector in nondegenerate complement")


def _standard_basis(n: int) -> list[Vec]:
    return [
        tuple(Fraction(1 if i == j else 0) for i in range(n)) for j in range(n)
    ]
