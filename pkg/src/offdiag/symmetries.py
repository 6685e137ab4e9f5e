"""Hidden symmetries: Killing residuals, torsion-modified forms and anomaly coefficients.

Two calculi are used.  Differential forms live in the coordinate basis with
lower indices, ``Psi = (1/p!) Psi_{m...} dx^m ^ ...``, and are differentiated
with the coordinate Christoffel symbols; contractions use ``g^{mn}``, which is
the same as the orthonormal-frame sums with ``diag(1, 1, 1, -1)``.  The
Klein-Gordon and commutator coefficients are N-adapted and use the connection
flavours of :mod:`offdiag.connection` (canonical by default).

Covariant derivatives append the derivative index last.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jets as J
from .connection import (
    christoffel_coordinate_jet,
    connection_jet,
    covariant_derivative_jet,
    curvature_jets,
    dmetric_inverse,
)
from .exact import KerrSenParams, coframe_jet
from .fields import ScalarField, as_points, coordinate_jets
from .jets import Jet
from .tensor_core import (
    DMetric,
    MetricJets,
    TensorComponents,
    _batch_first,
    _is_single,
    _pts,
    coordinate_metric,
    frame_derivative,
    metric_jets,
)

ETA = np.array([1.0, 1.0, 1.0, -1.0])
LETTERS = "abcdefghijkl"


class BasisMismatchError(ValueError):
    pass


class AxisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# fields of vectors, tensors and forms


@dataclass(frozen=True)
class VectorField:
    """Coordinate components ``X^mu`` as four scalar fields."""

    components: tuple[ScalarField, ScalarField, ScalarField, ScalarField]

    def jet(self, u) -> Jet:
        return J.stack([f(u) for f in self.components])


def coordinate_vector(k: int) -> VectorField:
    one, zero = ScalarField.constant(1.0), ScalarField.constant(0.0)
    return VectorField(tuple(one if i == k else zero for i in range(4)))


@dataclass(frozen=True)
class SKTensor:
    """Symmetric rank-2 tensor field.

    ``fn(u)`` returns a ``(4, 4, P)`` jet; ``variance`` is ``"dd"`` or ``"uu"``
    and ``basis`` is ``"adapted"`` (N-adapted frame) or ``"coordinate"``.
    """

    fn: Callable[[list[Jet]], Jet]
    variance: str = "dd"
    basis: str = "adapted"
    name: str = "K"


@dataclass(frozen=True)
class FormField:
    """A ``degree``-form field with lower coordinate components ``fn(u)``."""

    fn: Callable[[list[Jet]], Jet]
    degree: int
    name: str = "form"


@dataclass(frozen=True)
class PForm:
    """Antisymmetric components of a form at one point.

    ``basis`` is ``"orthonormal"`` (Gram ``diag(1, 1, 1, -1)``) or
    ``"coordinate"``.
    """

    degree: int
    components: np.ndarray
    basis: str = "orthonormal"

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float)
        if c.shape != (4,) * self.degree:
            raise ValueError(f"a {self.degree}-form needs shape {(4,) * self.degree}, got {c.shape}")
        for i in range(self.degree - 1):
            if not np.allclose(c, -np.swapaxes(c, i, i + 1), atol=1e-13, rtol=0):
                raise ValueError("form components must be totally antisymmetric")
        object.__setattr__(self, "components", c)


@dataclass(frozen=True)
class HTorsion:
    t_left: float
    t_right: float
    sign: int
    as_3form: PForm


# ---------------------------------------------------------------------------
# exterior algebra on jets (leading axes are form indices)


def _perm_sign(perm) -> int:
    sign, seen = 1, list(perm)
    for i in range(len(seen)):
        while seen[i] != i:
            j = seen[i]
            seen[i], seen[j] = seen[j], seen[i]
            sign = -sign
    return sign


def antisymmetrize(t: Jet, p: int) -> Jet:
    if p <= 1:
        return t
    acc = None
    for perm in itertools.permutations(range(p)):
        term = t.transpose(*perm) * float(_perm_sign(perm))
        acc = term if acc is None else acc + term
    return acc * (1.0 / math.factorial(p))


def symmetrize(t: Jet, p: int) -> Jet:
    if p <= 1:
        return t
    acc = None
    for perm in itertools.permutations(range(p)):
        term = t.transpose(*perm)
        acc = term if acc is None else acc + term
    return acc * (1.0 / math.factorial(p))


def _outer(a: Jet, p: int, b: Jet, q: int) -> Jet:
    la, lb = LETTERS[:p], LETTERS[p : p + q]
    return J.contract(f"{la},{lb}->{la}{lb}", a, b)


def wedge(a: Jet, p: int, b: Jet, q: int) -> Jet:
    """``a ^ b`` with ``(a ^ b) = (p+q)!/(p! q!) Alt(a (x) b)``."""
    coef = math.factorial(p + q) / (math.factorial(p) * math.factorial(q))
    return antisymmetrize(_outer(a, p, b, q), p + q) * coef


def interior(x: Jet, a: Jet, p: int) -> Jet:
    """``X -| a``: contraction of the vector with the first slot."""
    rest = LETTERS[1:p]
    return J.contract(f"a{rest},a->{rest}", a, x)


def wedge_k(a: Jet, p: int, b: Jet, q: int, ginv: Jet, k: int) -> Jet:
    """``a ^_k b = (1/k!) sum (e_{a_k} -| ... e_{a_1} -| a) ^ (e^{a_k} -| ... e^{a_1} -| b)``."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    if p < k or q < k:
        raise ValueError(f"cannot take {k} contractions of a {p}-form with a {q}-form")
    ra, rb = p - k, q - k
    la, lb = LETTERS[k:p], LETTERS[p + k : p + q]
    if k == 1:
        # contract first slots through g^{mn}
        t = J.contract(f"a{la},af->f{la}", a, ginv)
        out = J.contract(f"f{la},f{lb}->{la}{lb}", t, b)
    else:
        t = J.contract(f"ab{la},ae->eb{la}", a, ginv)
        t = J.contract(f"eb{la},bf->ef{la}", t, ginv)
        out = J.contract(f"ef{la},ef{lb}->{la}{lb}", t, b) * 0.5
    coef = math.factorial(ra + rb) / (math.factorial(ra) * math.factorial(rb))
    return antisymmetrize(out, ra + rb) * coef


def _ortho_jets(form: PForm) -> tuple[Jet, Jet]:
    c = form.components.reshape(form.components.shape + (1,))
    ginv = np.diag(ETA if form.basis == "orthonormal" else np.ones(4))[:, :, None]
    return Jet.constant(c, 0), Jet.constant(ginv, 0)


def wedge_contract(A: PForm, B: PForm, k: int, ginv: np.ndarray | None = None) -> PForm:
    """``A ^_k B`` for forms at a point (orthonormal Gram by default)."""
    if A.basis != B.basis:
        raise BasisMismatchError(f"forms in different bases: {A.basis} vs {B.basis}")
    a, gi = _ortho_jets(A)
    b, _ = _ortho_jets(B)
    if ginv is not None:
        gi = Jet.constant(np.asarray(ginv, dtype=float)[:, :, None], 0)
    elif A.basis != "orthonormal":
        raise BasisMismatchError("coordinate-basis forms need an explicit inverse metric")
    out = wedge_k(a, A.degree, b, B.degree, gi, k)
    return PForm(A.degree + B.degree - 2 * k, out.value[..., 0] if out.value.ndim else out.value, A.basis)


# ---------------------------------------------------------------------------
# coordinate geometry and torsion-modified derivatives


@dataclass
class CoordinateGeometry:
    u: list
    g: Jet
    ginv: Jet
    gamma: Jet
    eye: Jet


def coordinate_geometry(m: DMetric, points, order: int) -> CoordinateGeometry:
    pts = as_points(points)
    mj = metric_jets(m, pts, order)
    g = coordinate_metric(mj)
    gamma = christoffel_coordinate_jet(g)
    ginv = J.inverse_matrix(g)
    P = pts.shape[0]
    eye = Jet.constant(np.broadcast_to(np.eye(4)[:, :, None], (4, 4, P)).copy(), order)
    return CoordinateGeometry(coordinate_jets(pts, order), g, ginv, gamma, eye)


def torsion_D(geo: CoordinateGeometry, psi: Jet, p: int, T: Jet | None) -> Jet:
    """``HD_{d_n} Psi`` for every direction ``n`` (appended last).

    ``HD_X Psi = nabla_X Psi + (1/2)(X -| T) ^_1 Psi``.
    """
    nab = covariant_derivative_jet(psi, "d" * p, geo.gamma, geo.eye) if p else J.stack([psi.d(k) for k in range(4)])
    if T is None or p == 0:
        return nab
    k = nab.order
    T = T.truncate(k)
    ginv = geo.ginv.truncate(k)
    psi = psi.truncate(k)
    # (d_n -| T) is T[n, ...]; stack the correction over n
    corr = J.stack([wedge_k(T[n], 2, psi, p, ginv, 1) for n in range(4)])
    corr = corr.moveaxis(0, p)
    return nab + corr * 0.5


def torsion_covariant_derivative(m: DMetric, T: FormField | None, X: VectorField, psi: FormField, p) -> Jet:
    """``HD_X Psi`` at ``p`` as coordinate components (jet of order 0)."""
    geo = coordinate_geometry(m, _pts(p), 1)
    u = geo.u
    Tj = T.fn(u) if T is not None else None
    D = torsion_D(geo, psi.fn(u), psi.degree, Tj)
    x = X.jet(u).truncate(D.order)
    letters = LETTERS[: psi.degree]
    return J.contract(f"{letters}z,z->{letters}", D, x)


def _hd_pair(geo: CoordinateGeometry, psi: Jet, p: int, T: Jet | None):
    D = torsion_D(geo, psi, p, T)
    k = D.order
    ginv = geo.ginv.truncate(k)
    # Hd Psi = dx^n ^ HD_n Psi
    moved = D.moveaxis(p, 0)
    d = antisymmetrize(moved, p + 1) * float(p + 1)
    if p == 0:
        return d, None
    # Hd* Psi = - g^{mn} d_m -| HD_n Psi
    rest = LETTERS[1:p]
    dstar = -J.contract(f"a{rest}n,an->{rest}", D, ginv)
    return d, dstar


def torsion_d_star(m: DMetric, T: FormField | None, psi: FormField, p):
    """``(Hd Psi, Hd* Psi)`` as coordinate-component arrays at ``p``."""
    geo = coordinate_geometry(m, _pts(p), 1)
    Tj = T.fn(geo.u) if T is not None else None
    d, ds = _hd_pair(geo, psi.fn(geo.u), psi.degree, Tj)
    single = _is_single(p)
    conv = lambda x: None if x is None else _batch_first(x.value, single)  # noqa: E731
    return conv(d), conv(ds)


def cky_residual(m: DMetric, h2: FormField, T: FormField | None, p, frame: Callable[[list[Jet]], Jet] | None = None):
    """``max_X |HD_X h - X^flat ^ xi|`` with ``xi = -(1/3) Hd* h``.

    ``X`` runs over the rows of ``frame(u)`` (vectors as coordinate
    components); by default the coordinate basis vectors.
    """
    if h2.degree != 2:
        raise ValueError("cky_residual expects a 2-form")
    geo = coordinate_geometry(m, _pts(p), 1)
    u = geo.u
    Tj = T.fn(u) if T is not None else None
    h = h2.fn(u)
    D = torsion_D(geo, h, 2, Tj)
    k = D.order
    ginv = geo.ginv.truncate(k)
    xi = -J.contract("abn,an->b", D, ginv) * (-1.0 / 3.0)
    g = geo.g.truncate(k)
    if frame is None:
        X = Jet.constant(np.broadcast_to(np.eye(4)[:, :, None], (4, 4, g.shape[-1])).copy(), k)
    else:
        X = frame(u).truncate(k)
    worst = np.zeros(g.shape[-1])
    for A in range(4):
        x = X[A]
        DX = J.contract("abz,z->ab", D, x)
        xflat = J.contract("mn,n->m", g, x)
        diff = DX - wedge(xflat, 1, xi, 1)
        worst = np.maximum(worst, np.abs(diff.value).max(axis=(0, 1)))
    return worst[0] if _is_single(p) else worst


def cky_xi(m: DMetric, h2: FormField, T: FormField | None, p) -> np.ndarray:
    """``xi = -(1/3) Hd* h`` as lower coordinate components."""
    _, ds = torsion_d_star(m, T, h2, p)
    return -ds / 3.0


# ---------------------------------------------------------------------------
# Kerr-Sen objects built from the orthonormal coframe


def _frame_form(ks: KerrSenParams, layout: str, terms, degree: int, pol=None, m=None) -> Callable:
    """Form ``sum c(u) e^{A1} ^ ... `` from coframe rows; ``terms`` maps index tuples to coefficient fns."""

    def fn(u):
        e = coframe_jet(ks, u, layout, pol, m)
        acc = None
        for idx, coef in terms:
            t = e[idx[0]]
            for k in range(1, degree):
                t = wedge(t, k, e[idx[k]], 1)
            t = t * coef(u)
            acc = t if acc is None else acc + t
        return acc

    return fn


def _r_theta(ks: KerrSenParams, u, layout: str):
    th = u[2] if layout == "ks" else u[1]
    return ks.r_of_xt(u[0]), th


def principal_cky(ks: KerrSenParams, sign: int = 1, layout: str = "ks", pol=None, m=None) -> FormField:
    """``+h = a cos e^3 ^ e^2 + r e^4 ^ e^1`` and ``-h = a cos e^2 ^ e^3 - r e^1 ^ e^4``."""

    def acos(u):
        return J.cos(_r_theta(ks, u, layout)[1]) * ks.a

    def rr(u):
        return _r_theta(ks, u, layout)[0]

    if sign > 0:
        terms = [((2, 1), acos), ((3, 0), rr)]
    else:
        terms = [((1, 2), acos), ((0, 3), lambda u: -rr(u))]
    return FormField(_frame_form(ks, layout, terms, 2, pol, m), 2, "+h" if sign > 0 else "-h")


def h_torsion_scalars(ks: KerrSenParams, r, theta, sign: int):
    """``(<|T, |>T)`` for the H-torsion of the given sign; floats or jets."""
    a, b = ks.a, ks.b
    if isinstance(r, Jet):
        s, c = J.sin(theta), J.cos(theta)
        rho2 = r * r + c * c * a**2
        B2 = rho2 + r * (2.0 * b)
        S0 = r * r - r * (2.0 * ks._c) + a**2
        left = s * (-2.0 * a) * (-(r + b) / B2 + r / rho2 * float(sign))
        right = c * J.sqrt(J.absolute(S0)) * (-2.0 * a) / J.sqrt(rho2) * (-J.reciprocal(B2) + J.reciprocal(rho2) * float(sign))
        return left, right
    s, c = np.sin(theta), np.cos(theta)
    rho2 = r * r + a * a * c * c
    B2 = rho2 + 2.0 * b * r
    S0 = ks.S0(r)
    left = -2.0 * a * s * (-(r + b) / B2 + sign * r / rho2)
    right = -2.0 * a * c * np.sqrt(abs(S0)) / np.sqrt(rho2) * (-1.0 / B2 + sign / rho2)
    return left, right


def h_torsion_form(ks: KerrSenParams, sign: int = 1, layout: str = "ks") -> FormField:
    """``HT = |>T e^{234} + <|T e^{124}`` as a coordinate 3-form field."""

    def left(u):
        r, th = _r_theta(ks, u, layout)
        return h_torsion_scalars(ks, r, th, sign)[0]

    def right(u):
        r, th = _r_theta(ks, u, layout)
        return h_torsion_scalars(ks, r, th, sign)[1]

    terms = [((1, 2, 3), right), ((0, 1, 3), left)]
    return FormField(_frame_form(ks, layout, terms, 3), 3, f"HT{'+' if sign > 0 else '-'}")


def h_torsion(ks: KerrSenParams, pol, p, sign: int = 1) -> HTorsion:
    """H-torsion at ``p = (r, theta)`` (further entries ignored), in the orthonormal basis."""
    p = np.asarray(p, dtype=float)
    r, th = float(p[0]), float(p[1])
    if abs(np.sin(th)) < 1e-12:
        raise AxisError("the H-torsion is defined off the axis only")
    left, right = h_torsion_scalars(ks, r, th, sign)
    c = np.zeros((4, 4, 4))
    for (i, j, k), val in (((1, 2, 3), right), ((0, 1, 3), left)):
        for perm in itertools.permutations(range(3)):
            idx = tuple((i, j, k)[q] for q in perm)
            c[idx] = _perm_sign(perm) * val
    return HTorsion(float(left), float(right), int(sign), PForm(3, c, "orthonormal"))


def kbar_tensor(ks: KerrSenParams, layout: str = "ks", pol=None, m=None, sign: int = 1) -> SKTensor:
    """``K = s a^2 cos^2 (e^4 e^4 - e^1 e^1) + r^2 (e^2 e^2 + e^3 e^3)`` (coordinate, lower).

    ``sign = 1`` is the printed form; ``sign = -1`` flips the ``a^2`` term.
    """

    def fn(u):
        e = coframe_jet(ks, u, layout, pol, m)
        r, th = _r_theta(ks, u, layout)
        c = J.cos(th)
        A = c * c * (ks.a**2 * sign)
        R2 = r * r
        sq = lambda k: J.contract("a,b->ab", e[k], e[k])  # noqa: E731
        return (sq(3) - sq(0)) * A + (sq(1) + sq(2)) * R2

    return SKTensor(fn, "dd", "coordinate", "Kbar")


def kbar_analog(m: DMetric, ks: KerrSenParams, layout: str = "rot") -> SKTensor:
    """``K`` of the same shape as the Kerr tensor in the orthonormal N-adapted coframe of ``m``.

    With ``e^a`` normalized by ``sqrt|G_aa|`` the components are
    ``diag(-A |G_00|, R |G_11|, R |G_22|, A |G_33|)``, ``A = a^2 cos^2``,
    ``R = r^2``.
    """

    def fn(u):
        pts = np.stack([x.value for x in u], axis=-1)
        G = metric_jets(m, pts, u[0].order).G
        r, th = _r_theta(ks, u, layout)
        c = J.cos(th)
        A = c * c * ks.a**2
        R2 = r * r
        coef = [-A, R2, R2, A]
        zero = Jet.constant(np.zeros(G.shape[-1]), G.order)
        return J.stack([J.stack([coef[a] * J.absolute(G[a, a]) if a == b else zero for b in range(4)]) for a in range(4)])

    return SKTensor(fn, "dd", "adapted", "Kbar-analog")


def coordinate_frame_vectors(ks: KerrSenParams, layout: str = "ks", pol=None, m=None):
    """Rows ``e_A^mu`` of the orthonormal frame dual to :func:`coframe_jet`."""

    def fn(u):
        e = coframe_jet(ks, u, layout, pol, m)
        return J.inverse_matrix(e).transpose(1, 0)

    return fn


# ---------------------------------------------------------------------------
# N-adapted geometry for Killing and anomaly operators


@dataclass
class AdaptedGeometry:
    mj: MetricJets
    conn: Jet
    G: Jet
    Gi: Jet
    u: list
    flavor: str

    @property
    def E(self) -> Jet:
        return self.mj.E


def adapted_geometry(m: DMetric, points, order: int, flavor: str = "canonical") -> AdaptedGeometry:
    pts = as_points(points)
    mj = metric_jets(m, pts, order)
    conn = connection_jet(mj, flavor)
    return AdaptedGeometry(mj, conn, mj.G, dmetric_inverse(mj.G), coordinate_jets(pts, order), flavor)


def _adapted_vector(geo: AdaptedGeometry, X: VectorField) -> Jet:
    """``X^alpha = e^alpha_mu X^mu``."""
    return J.contract("am,m->a", geo.mj.Theta, X.jet(geo.u))


def adapted_tensor_uu(geo: AdaptedGeometry, K: SKTensor) -> Jet:
    k = K.fn(geo.u)
    if K.basis == "coordinate":
        if K.variance == "dd":
            k = J.contract("am,mn->an", geo.mj.E, k)
            k = J.contract("bn,an->ab", geo.mj.E, k)
        else:
            k = J.contract("am,mn->an", geo.mj.Theta, k)
            k = J.contract("bn,an->ab", geo.mj.Theta, k)
    elif K.basis != "adapted":
        raise BasisMismatchError(f"unknown basis {K.basis!r}")
    if K.variance == "dd":
        k = J.contract("ac,cd->ad", geo.Gi, k)
        k = J.contract("bd,ad->ab", geo.Gi, k)
    return k


def _D(geo: AdaptedGeometry, T: Jet, variance: str) -> Jet:
    return covariant_derivative_jet(T, variance, geo.conn, geo.E)


def _raise_last(geo: AdaptedGeometry, T: Jet, rank: int) -> Jet:
    lead = LETTERS[: rank - 1]
    return J.contract(f"{lead}z,yz->{lead}y", T, geo.Gi)


def _lower(geo: AdaptedGeometry, T: Jet, variance: str) -> Jet:
    for s, kind in enumerate(variance):
        if kind == "u":
            lead = LETTERS[: len(variance)]
            src = lead
            dst = lead[:s] + "z" + lead[s + 1 :]
            T = J.contract(f"{src},{lead[s]}z->{dst}", T, geo.G)
    return T


def killing_residual(m: DMetric, flavor: str, K: VectorField, p) -> float | np.ndarray:
    """``max |D_(a K_b)|`` over N-adapted slots."""
    geo = adapted_geometry(m, _pts(p), 2, flavor)
    k = _adapted_vector(geo, K)
    kl = J.contract("ab,b->a", geo.G, k)
    Dk = _D(geo, kl, "d")
    r = np.abs((Dk + Dk.transpose(1, 0)).value * 0.5).max(axis=(0, 1))
    return r[0] if _is_single(p) else r


def sk_residual(m: DMetric, flavor: str, K: SKTensor, p) -> float | np.ndarray:
    """``max |D_(a K_bc)|``; ``K`` must be in the N-adapted basis."""
    if K.basis != "adapted":
        raise BasisMismatchError("sk_residual needs the N-adapted basis; convert with to_adapted()")
    geo = adapted_geometry(m, _pts(p), 2, flavor)
    k = K.fn(geo.u)
    if K.variance == "uu":
        k = _lower(geo, k, "uu")
    Dk = _D(geo, k, "dd")
    r = np.abs(symmetrize(Dk, 3).value).max(axis=(0, 1, 2))
    return r[0] if _is_single(p) else r


def to_adapted(m: DMetric, K: SKTensor) -> SKTensor:
    """Re-express a coordinate-basis tensor in the N-adapted frame."""
    if K.basis == "adapted":
        return K
    variance = K.variance

    def fn(u):
        pts = np.stack([x.value for x in u], axis=-1)
        mj = metric_jets(m, pts, u[0].order)
        k = K.fn(u)
        M = mj.E if variance == "dd" else mj.Theta
        k = J.contract("am,mn->an", M, k)
        return J.contract("bn,an->ab", M, k)

    return SKTensor(fn, variance, "adapted", K.name)


def metric_tensor(m: DMetric) -> SKTensor:
    def fn(u):
        pts = np.stack([x.value for x in u], axis=-1)
        return metric_jets(m, pts, u[0].order).G

    return SKTensor(fn, "dd", "adapted", "g")


# ---------------------------------------------------------------------------
# Klein-Gordon operator and commutator coefficients


def _grad(geo: AdaptedGeometry, f: Jet) -> Jet:
    return frame_derivative(geo.E, f)


def _box(geo: AdaptedGeometry, f: Jet) -> Jet:
    """``g^{bc} D_b D_c f``."""
    df = _grad(geo, f)
    ddf = _D(geo, df, "d")
    return J.contract("cb,bc->", ddf, geo.Gi)


def _div(geo: AdaptedGeometry, V: Jet) -> Jet:
    """``D_a V^a``."""
    dv = _D(geo, V, "u")
    return dv[0, 0] + dv[1, 1] + dv[2, 2] + dv[3, 3]


def klein_gordon(m: DMetric, flavor: str, f: ScalarField, p):
    geo = adapted_geometry(m, _pts(p), 1, flavor)
    u2 = coordinate_jets(geo.mj.points, 2)
    out = _box(geo, f(u2)).value
    return out[0] if _is_single(p) else out


def ckv_anomaly_coeffs(m: DMetric, K: VectorField, p, flavor: str = "canonical"):
    """``(C^a, D)`` with ``C^a = -(1/2) D^a D^c K_c`` and ``D = (1/2) D_a K^a``."""
    geo = adapted_geometry(m, _pts(p), 2, flavor)
    k = _adapted_vector(geo, K)
    divk = _div(geo, k)
    C = J.contract("ab,b->a", geo.Gi, _grad(geo, divk)) * -0.5
    D = divk * 0.5
    single = _is_single(p)
    return _batch_first(C.value, single), (D.value[0] if single else D.value)


def _ricci_mixed(geo_hi: AdaptedGeometry) -> Jet:
    """``R_nu^gamma = g^{gamma mu} R_{mu nu}`` as ``[gamma, nu]``."""
    _, Ric = curvature_jets(geo_hi.mj, geo_hi.flavor)
    return J.contract("gm,mn->gn", geo_hi.Gi, Ric)


def antisym_ricci_k(m: DMetric, K: SKTensor, p, flavor: str = "canonical") -> np.ndarray:
    """``R_nu^{[gamma} K^{beta] nu}`` pointwise, shape ``(4, 4)`` per point."""
    geo = adapted_geometry(m, _pts(p), 2, flavor)
    S = _ricci_k(geo, K)
    return _batch_first(S.value, _is_single(p))


def _ricci_k(geo: AdaptedGeometry, K: SKTensor) -> Jet:
    Rm = _ricci_mixed(geo)
    k = adapted_tensor_uu(geo, K).truncate(Rm.order)
    t = J.contract("gn,bn->gb", Rm, k)
    return (t - t.transpose(1, 0)) * 0.5


def sk_anomaly(m: DMetric, K: SKTensor, p, flavor: str = "canonical"):
    """``A^b = -(4/3) D_g (R_nu^{[g} K^{b] nu})``."""
    geo = adapted_geometry(m, _pts(p), 3, flavor)
    S = _ricci_k(geo, K)
    dS = _D(geo, S, "uu")
    A = _trace_first_last(dS) * (-4.0 / 3.0)
    return _batch_first(A.value, _is_single(p))


def _trace_first_last(t: Jet) -> Jet:
    """Trace of the first against the last tensor slot."""
    return Jet(np.trace(t.c, axis1=0, axis2=len(t.shape) - 2), t.order)


@dataclass(frozen=True)
class CommutatorBlocks:
    """Coefficients of ``[box, Q_K] = B3 DDD + B2 DD + B1 D``."""

    three: np.ndarray
    two: np.ndarray
    one: np.ndarray


def _blocks_jet(geo: AdaptedGeometry, K: SKTensor):
    k = adapted_tensor_uu(geo, K)
    Dk = _raise_last(geo, _D(geo, k, "uu"), 3)  # [a, b, g] = D^g K^{ab}
    S3 = symmetrize(Dk, 3)
    B3 = S3 * 2.0
    dS3 = _D(geo, S3, "uuu")  # [g, m, b, n] = D_n S3^{gmb}
    B2 = (dS3[:, 0, :, 0] + dS3[:, 1, :, 1] + dS3[:, 2, :, 2] + dS3[:, 3, :, 3]) * 3.0  # [g, b]
    B2 = B2.transpose(1, 0)
    # one-derivative block
    R = _ricci_k(geo, K)
    t1 = _trace_first_last(_D(geo, R, "uu")) * (-4.0 / 3.0)
    dS3u = _raise_last(geo, dS3, 4)  # [m, t, b, g] = D^g S3^{mtb}
    Gk = geo.G.truncate(dS3u.order)
    A = J.contract("mtbg,mt->bg", dS3u, Gk)  # g_{mt} D^g S3^{mtb}
    Bm = J.contract("mgtb,mt->gb", dS3u, Gk)  # g_{mt} D^b S3^{mgt}
    X = (A.transpose(1, 0) - Bm) * 0.5  # [g, b]
    t2 = _trace_first_last(_D(geo, X, "uu"))
    V = dS3[:, 0, :, 0] + dS3[:, 1, :, 1] + dS3[:, 2, :, 2] + dS3[:, 3, :, 3]  # [g, b] = D_a S3^{gab}
    t3 = _trace_first_last(_D(geo, V, "uu"))
    o = t3.order
    B1 = t1.truncate(o) + t2.truncate(o) + t3
    return B3, B2, B1


def rank2_commutator_coeffs(m: DMetric, K: SKTensor, p, flavor: str = "canonical") -> CommutatorBlocks:
    geo = adapted_geometry(m, _pts(p), 3, flavor)
    B3, B2, B1 = _blocks_jet(geo, K)
    single = _is_single(p)
    return CommutatorBlocks(*(_batch_first(x.value, single) for x in (B3, B2, B1)))


def commutator_probe(m: DMetric, K: SKTensor, f: ScalarField, p, flavor: str = "canonical"):
    """``([box, Q_K] f, blocks contracted with D^3 f, D^2 f, D f)`` at ``p``.

    ``Q_K f = D_a (K^{ab} D_b f)``; both sides are evaluated with nested jets.
    """
    geo = adapted_geometry(m, _pts(p), 3, flavor)
    u4 = coordinate_jets(geo.mj.points, 4)
    fj = f(u4)
    k = adapted_tensor_uu(geo, K)

    def Q(h: Jet) -> Jet:
        dh = _grad(geo, h)
        kk = k.truncate(dh.order)
        return _div(geo, J.contract("ab,b->a", kk, dh))

    lhs = _box(geo, Q(fj)) - Q(_box(geo, fj))
    B3, B2, B1 = _blocks_jet(geo, K)
    d1 = _grad(geo, fj)  # [b]
    d2 = _D(geo, d1, "d")  # [b, a] = D_a D_b f
    d3 = _D(geo, d2, "dd")  # [b, a, g] = D_g D_a D_b f
    o = 0
    rhs = (
        J.contract("gab,bag->", B3.truncate(o), d3.truncate(o))
        + J.contract("bg,gb->", B2.truncate(o), d2.truncate(o))
        + J.contract("b,b->", B1.truncate(o), d1.truncate(o))
    )
    single = _is_single(p)
    lv, rv = lhs.value, rhs.value
    return (lv[0], rv[0]) if single else (lv, rv)


@dataclass(frozen=True)
class AnomalyReport:
    einstein_max: float
    antisym_max: float
    anomaly_max: float
    lc_branch: bool
    verdict: str


class PreconditionError(ValueError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def anomaly_vanishing_check(solution: DMetric, lam: float, K: SKTensor, grid, tol_einstein: float = 1e-7,
                            flavor: str = "canonical") -> AnomalyReport:
    """Max ``|sk_anomaly|`` over ``grid`` for an Einstein-verified solution."""
    from .connection import einstein_residual
    from .solutions import lcconstr_residual

    pts = as_points(grid)
    ein = float(np.abs(einstein_residual(solution, lam, pts, flavor=flavor).values).max())
    if ein >= tol_einstein:
        raise PreconditionError(f"not an Einstein solution: residual {ein:.3e} >= {tol_einstein}", ein)
    S = np.abs(antisym_ricci_k(solution, K, pts, flavor)).max()
    A = np.abs(sk_anomaly(solution, K, pts, flavor)).max()
    lc = bool(np.max(lcconstr_residual(solution, pts)) < 1e-9)
    verdict = "anomaly vanishes" if A < 1e-8 else "anomaly present"
    if lc:
        verdict += " (zero-torsion branch: also for the Levi-Civita connection)"
    return AnomalyReport(ein, float(S), float(A), lc, verdict)


def tensor_components(x: np.ndarray, variance: str) -> TensorComponents:
    return TensorComponents(x, tuple("up" if c == "u" else "down" for c in variance))
