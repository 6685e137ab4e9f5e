"""Decoupled field equations and the construction of off-diagonal solutions.

Sign conventions: Ricci follows :mod:`offdiag.connection` (positive on
spheres) and sources act as ``R^a_b = U^a_b``, so a cosmological source gives
``R_ab = lambda g_ab``.  With these conventions the vertical coefficient is
``h3 = -s (h4*)^2 exp(-2 phi) / (4 h4)`` for ``h4* = s (exp 2phi)* / U2``, the
horizontal factor ``exp(psi)`` solves the Liouville equation
``psi_11 + psi_22 + 2 U4 exp(psi) = 0`` and ``w_i = d_i phi / phi*``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RectBivariateSpline

from . import jets as J
from .connection import SourceSpec, canonical_jet, torsion_jet
from .fields import ONE, ZERO, ScalarField, as_points, coordinate_jets
from .jets import Jet, JetDomainError
from .tensor_core import (
    DMetric,
    _is_single,
    _pts,
    anholonomy_jet,
    frame_derivative,
    metric_jets,
)

X_ONLY = (True, True, False, False)
XV = (True, True, True, False)


class BranchError(ValueError):
    """A formula was evaluated on a degenerate branch (zero divisor or log argument)."""


class QuadratureError(RuntimeError):
    pass


class UnsupportedCaseError(ValueError):
    pass


class DegenerateDeformationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# fields from numerical data


def field_from_partials(partials, depends, name: str) -> ScalarField:
    """Wrap ``partials(points, alpha) -> values`` as a jet-valued field.

    The resulting field must be evaluated on plain coordinate jets, which is
    how every field in this package is evaluated.
    """

    def fn(u):
        order = u[0].order
        pts = np.stack([uk.value for uk in u], axis=-1)
        c = np.zeros(pts.shape[:-1] + (J.ncoef(order),))
        for idx, alpha in enumerate(J.MULTI_INDICES[: J.ncoef(order)]):
            if any(a and not d for a, d in zip(alpha, depends)):
                continue
            c[..., idx] = partials(pts, alpha) / _factorial_prod(alpha)
        return Jet(c, order)

    return ScalarField(fn, name, tuple(depends))


def _factorial_prod(alpha) -> float:
    out = 1.0
    for a in alpha:
        for k in range(2, a + 1):
            out *= k
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_QUAD_CHUNK = 8192  # quadrature nodes evaluated per batch


def integrate_v(f: ScalarField, v0: float, rtol: float = 1e-12, max_panels: int = 512, name: str | None = None) -> ScalarField:
    """``F(x, v) = integral_{v0}^{v} f(x, v') dv'`` as an exactly differentiable field.

    Coefficients without a ``v`` derivative are integrated with composite
    Gauss-Legendre quadrature, doubling the panel count until successive
    results agree to ``rtol``; coefficients with ``alpha_v >= 1`` are read off
    the integrand.
    """
    nodes = 0.5 * (_GL_NODES + 1.0)
    weights = 0.5 * _GL_WEIGHTS

    def quad(pts, order, panels):
        P = pts.shape[0]
        t = (np.arange(panels)[:, None] + nodes[None, :]).ravel() / panels  # in [0, 1]
        w = np.tile(weights, panels) / panels
        span = pts[:, 2] - v0
        out = []
        step = max(1, _QUAD_CHUNK // t.size)
        for lo in range(0, P, step):
            sub = pts[lo : lo + step]
            big = np.repeat(sub[:, None, :], t.size, axis=1)
            big[:, :, 2] = v0 + span[lo : lo + step, None] * t[None, :]
            c = f.jet(big.reshape(-1, 4), order).c.reshape(sub.shape[0], t.size, -1)
            out.append(np.einsum("pqc,q->pc", c, w))
        return np.concatenate(out, axis=0) * span[:, None]

    vmask = np.array([a[2] for a in J.MULTI_INDICES])

    def fn(u):
        order = u[0].order
        pts = np.stack([uk.value for uk in u], axis=-1)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 4)
        panels = 1
        prev = quad(flat, order, panels)
        while True:
            panels *= 2
            cur = quad(flat, order, panels)
            err = np.abs(cur - prev).max(initial=0.0)
            scale = max(1.0, np.abs(cur).max(initial=0.0))
            if err <= rtol * scale:
                break
            if panels >= max_panels:
                raise QuadratureError(f"v-quadrature did not converge (error {err:.3e} at {panels} panels)")
            prev = cur
        n = J.ncoef(order)
        out = np.zeros((flat.shape[0], n))
        out[:, ~vmask[:n].astype(bool)] = cur[:, ~vmask[:n].astype(bool)]
        if order >= 1:
            here = f.jet(flat, order - 1).c
            for idx, alpha in enumerate(J.MULTI_INDICES[:n]):
                if alpha[2] >= 1:
                    lower = list(alpha)
                    lower[2] -= 1
                    out[:, idx] = here[:, J.INDEX_OF[tuple(lower)]] / alpha[2]
        return Jet(out.reshape(shape + (n,)), order)

    return ScalarField(fn, name or f"int_v({f.name})", tuple(d or k == 2 for k, d in enumerate(f.depends)))


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class GeneratingData:
    """Generating and integration functions of the general solution.

    ``phi(x, v)`` with ``phi* != 0``; ``psi(x)`` the horizontal conformal
    factor; ``h4_under(x)``; ``n1``/``n2`` the pairs of integration functions
    of the ``n_k`` coefficients.  ``v0`` is the base point of every
    ``v``-integral.
    """

    phi: ScalarField
    psi: ScalarField
    h4_under: ScalarField = ZERO
    n1: tuple[ScalarField, ScalarField] = (ZERO, ZERO)
    n2: tuple[ScalarField, ScalarField] | None = None
    eps1: int = 1
    eps2: int = 1
    sign_h4: int = 1
    w_sign: int = 1
    v0: float = 0.0
    ref_point: tuple[float, float, float, float] | None = None


@dataclass(frozen=True)
class PolarizationSet:
    eta1: ScalarField = ONE
    eta2: ScalarField = ONE
    eta3: ScalarField = ONE
    eta4: ScalarField = ONE
    etaN: tuple[ScalarField, ScalarField, ScalarField, ScalarField] = (ONE, ONE, ONE, ONE)


@dataclass(frozen=True)
class PsiGrid:
    x1min: float
    x1max: float
    x2min: float
    x2max: float
    n1: int = 65
    n2: int = 65


@dataclass(frozen=True)
class DecoupledResiduals:
    """Residuals of the four decoupled equations at each point.

    ``g``, ``h`` are the horizontal and vertical diagonal rows; ``w`` and
    ``n`` the mixed rows for ``k = 1, 2`` (shape ``(2, P)``).
    """

    g: np.ndarray
    h: np.ndarray
    w: np.ndarray
    n: np.ndarray

    def as_tuple(self):
        return (self.g, self.h, self.w, self.n)

    def max_abs(self) -> np.ndarray:
        return np.max(np.stack([np.abs(self.g), np.abs(self.h), np.abs(self.w).max(axis=0), np.abs(self.n).max(axis=0)]), axis=0)


# ---------------------------------------------------------------------------
# decoupled equations


def _vblock_bracket(h3: Jet, h4: Jet) -> Jet:
    """``h4** - (h4*)^2/(2 h4) - h3* h4*/(2 h3)``."""
    h4s, h3s = h4.d(2), h3.d(2)
    return h4s.d(2) - h4s * h4s / (h4.truncate(1) * 2.0) - h3s * h4s / (h3.truncate(1) * 2.0)


def decoupled_rows(u, m: DMetric):
    """Explicit Ricci rows of the ansatz with ``omega = 1``.

    Returns ``(R^1_1, R^3_3, R_{3k}, R_{4k})`` jets (order drops by two).
    """
    g1, g2, h3, h4 = m.g1(u), m.g2(u), m.h3(u), m.h4(u)
    g1b, g2b, g1p, g2p = g1.d(0), g2.d(0), g1.d(1), g2.d(1)
    g1_, g2_ = g1.truncate(1), g2.truncate(1)
    hbr = g2b.d(0) - g1b * g2b / (g1_ * 2.0) - g2b * g2b / (g2_ * 2.0)
    hbr = hbr + g1p.d(1) - g1p * g2p / (g2_ * 2.0) - g1p * g1p / (g1_ * 2.0)
    r11 = -hbr / (g1 * g2 * 2.0)
    vbr = _vblock_bracket(h3, h4)
    r33 = -vbr / (h3 * h4 * 2.0)
    h3_, h4_ = h3.truncate(1), h4.truncate(1)
    h4s = h4.d(2)
    w = [m.n31(u), m.n32(u)]
    n = [m.n41(u), m.n42(u)]
    r3k, r4k = [], []
    for k in range(2):
        r3k.append(
            w[k] * vbr / (h4 * 2.0)
            + h4s / (h4_ * 4.0) * (h3.d(k) / h3_ + h4.d(k) / h4_)
            - h4s.d(k) / (h4 * 2.0)
        )
        ns = n[k].d(2)
        gamma = h4s * 1.5 / h4_ - h3.d(2) * 0.5 / h3_
        r4k.append(-(h4 / (h3 * 2.0)) * (ns.d(2) + gamma * ns))
    return r11, r33, r3k, r4k


def decoupled_residuals(m: DMetric, src: SourceSpec | float, p) -> DecoupledResiduals:
    if not isinstance(src, SourceSpec):
        src = SourceSpec.cosmological(float(src))
    pts = as_points(_pts(p))
    u = coordinate_jets(pts, 2)
    r11, r33, r3k, r4k = decoupled_rows(u, m)
    u0 = coordinate_jets(pts, 0)
    g = r11.value - src.upsilon4(u0).value
    h = r33.value - src.upsilon2(u0).value
    w = np.stack([r.value for r in r3k])
    n = np.stack([r.value for r in r4k])
    if _is_single(p):
        g, h, w, n = g[0], h[0], w[:, 0], n[:, 0]
    return DecoupledResiduals(g, h, w, n)


def eqe1_residuals(m: DMetric, src: SourceSpec | float, p) -> DecoupledResiduals:
    """Residuals of the integrable form of the decoupled equations.

    With ``phi = ln|h4* / sqrt|h3 h4||``: the Liouville equation for
    ``psi = ln|g1|``, ``h4* + 2 h3 h4 U2 / phi* = 0``,
    ``beta w_i - alpha_i = 0`` (``alpha_i = h4* d_i phi``, ``beta = h4* phi*``)
    and ``n_i** + gamma n_i* = 0`` with ``gamma = (ln(|h4|^{3/2}/|h3|^{1/2}))*``.
    """
    if not isinstance(src, SourceSpec):
        src = SourceSpec.cosmological(float(src))
    pts = as_points(_pts(p))
    u = coordinate_jets(pts, 2)
    g1, h3, h4 = m.g1(u), m.h3(u), m.h4(u)
    h4s = h4.d(2)
    if np.any(h4s.value == 0):
        raise BranchError("h4* = 0: phi is undefined on this branch")
    eps = np.sign(g1.value)
    psi = J.log(J.absolute(g1))
    u0 = coordinate_jets(pts, 0)
    up4, up2 = src.upsilon4(u0).value, src.upsilon2(u0).value
    r_psi = psi.d(0).d(0).value + psi.d(1).d(1).value + 2.0 * eps * up4 * np.exp(psi.value)
    phi = J.log(J.absolute(h4s)) - J.log(J.absolute(h3.truncate(1) * h4.truncate(1))) * 0.5
    phis = phi.d(2)
    if np.any(phis.value == 0):
        raise BranchError("phi* = 0 on this branch")
    h3v, h4v = h3.value, h4.value
    r_h4 = h4s.value + 2.0 * h3v * h4v * up2 / phis.value
    w = [m.n31(u), m.n32(u)]
    n = [m.n41(u), m.n42(u)]
    beta = h4s.value * phis.value
    r_w = np.stack([beta * w[k].value - h4s.value * phi.d(k).value for k in range(2)])
    gamma = (h4s.truncate(0) * 1.5 / h4.truncate(0) - h3.d(2).truncate(0) * 0.5 / h3.truncate(0)).value
    r_n = np.stack([n[k].d(2).d(2).value + gamma * n[k].d(2).value for k in range(2)])
    if _is_single(p):
        return DecoupledResiduals(r_psi[0], r_h4[0], r_w[:, 0], r_n[:, 0])
    return DecoupledResiduals(r_psi, r_h4, r_w, r_n)


# ---------------------------------------------------------------------------
# the horizontal equation


def solve_psi(upsilon4: ScalarField, grid: PsiGrid, boundary: ScalarField | None = None, eps=(1, 1)) -> ScalarField:
    """Solve ``psi_11 + psi_22 = U4`` with Dirichlet data on a rectangle.

    Five-point stencil with a direct sparse solve; the result is a bicubic
    interpolating spline.  Only the elliptic sign pair is supported.
    """
    if tuple(eps) != (1, 1):
        raise UnsupportedCaseError(f"only the elliptic sign pair (1, 1) is supported, got {tuple(eps)}")
    if grid.n1 < 4 or grid.n2 < 4 or grid.n1 > 257 or grid.n2 > 257:
        raise ValueError("grid counts must lie in [4, 257]")
    x = np.linspace(grid.x1min, grid.x1max, grid.n1)
    y = np.linspace(grid.x2min, grid.x2max, grid.n2)
    hx, hy = x[1] - x[0], y[1] - y[0]
    X, Y = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size), np.zeros(X.size)], axis=1)
    f = upsilon4.values(pts).reshape(X.shape)
    psi = np.zeros_like(X)
    if boundary is not None:
        b = boundary.values(pts).reshape(X.shape)
        psi[0, :], psi[-1, :], psi[:, 0], psi[:, -1] = b[0, :], b[-1, :], b[:, 0], b[:, -1]
    ni, nj = grid.n1 - 2, grid.n2 - 2
    Dx = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(ni, ni)) / hx**2
    Dy = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(nj, nj)) / hy**2
    A = sp.kron(Dx, sp.identity(nj)) + sp.kron(sp.identity(ni), Dy)
    rhs = f[1:-1, 1:-1].copy()
    rhs[0, :] -= psi[0, 1:-1] / hx**2
    rhs[-1, :] -= psi[-1, 1:-1] / hx**2
    rhs[:, 0] -= psi[1:-1, 0] / hy**2
    rhs[:, -1] -= psi[1:-1, -1] / hy**2
    psi[1:-1, 1:-1] = spla.spsolve(A.tocsc(), rhs.ravel()).reshape(ni, nj)
    spline = RectBivariateSpline(x, y, psi, kx=3, ky=3, s=0)

    def partials(p, alpha):
        a1, a2 = alpha[0], alpha[1]
        if a1 > 3 or a2 > 3:
            return np.zeros(p.shape[:-1])
        flat = p.reshape(-1, 4)
        return spline.ev(flat[:, 0], flat[:, 1], dx=a1, dy=a2).reshape(p.shape[:-1])

    out = field_from_partials(partials, X_ONLY, "psi")
    object.__setattr__(out, "name", "psi")
    return out


def liouville_psi(lam: float, scale: float = 1.0) -> ScalarField:
    """``psi = ln 4 - 2 ln(1 + lam r^2)``; ``exp(psi)`` has Gaussian curvature ``lam``.

    ``scale`` rescales ``r`` so the curvature becomes ``lam`` for the metric
    ``exp(psi) dx^2`` with ``x`` measured in units of ``scale``.
    """
    lam = float(lam)

    def fn(u):
        r2 = u[0] * u[0] + u[1] * u[1]
        return J.log(r2 * lam + 1.0) * -2.0 + np.log(4.0)

    return ScalarField(fn, f"liouville({lam})", X_ONLY)


# ---------------------------------------------------------------------------
# generated metrics


def _vblock(h4: ScalarField, h4s: ScalarField, phi: ScalarField, s: int) -> ScalarField:
    def fn(u):
        a = h4s(u)
        return -float(s) * a * a * J.exp(phi(u) * -2.0) / (h4(u) * 4.0)

    return ScalarField(fn, "h3", XV)


def _ratio_w(phi: ScalarField, k: int, sign: int) -> ScalarField:
    def fn(u):
        ph = phi(u)
        # one extra order so the quotient keeps the order of the inputs
        return ph.d(k) / ph.d(2) * float(sign)

    return _order_lift(fn, f"w{k + 1}", XV)


def _order_lift(fn, name, depends, extra: int = 1) -> ScalarField:
    """Field whose formula differentiates its inputs ``extra`` times: evaluate that much higher."""

    def lifted(u):
        order = u[0].order + extra
        if order > J.MAX_ORDER:
            raise ValueError(f"{name}: requested order {order - extra} needs order {order} inputs")
        up = [Jet.variable(k, uk.value, order) if depends[k] else Jet.constant(uk.value, order) for k, uk in enumerate(u)]
        return fn(up)

    return ScalarField(lifted, name, depends)


def generate_metric(gen: GeneratingData, src: SourceSpec) -> DMetric:
    """Off-diagonal solution determined by the generating data.

    ``h4 = h4_under + s * integral U2^{-1} (exp 2phi)* dv`` from ``v0``;
    ``h3 = -s (h4*)^2 exp(-2phi) / (4 h4)`` with ``h4*`` taken from the exact
    integrand; ``w_i = w_sign d_i phi / phi*``;
    ``n_k = n1_k + n2_k integral sqrt|h3| / |h4|^{3/2} dv``.
    """
    s = int(np.sign(gen.sign_h4))
    phi, up2 = gen.phi, src.upsilon2

    def integrand_fn(u):
        ph = phi(u)
        e2 = J.exp(ph * 2.0)
        return e2.d(2) / up2(u).truncate(e2.order - 1) * float(s)

    integrand = _order_lift(integrand_fn, "h4*", XV)
    if up2.depends[2]:
        h4 = gen.h4_under + integrate_v(integrand, gen.v0, name="h4_int")
    else:
        # U2 independent of v: the integral is exp(2 phi) / U2 up to its value at v0
        v0 = float(gen.v0)

        def closed(u):
            base = [uk if k != 2 else Jet.constant(np.full(uk.shape, v0), uk.order) for k, uk in enumerate(u)]
            return (J.exp(phi(u) * 2.0) - J.exp(phi(base) * 2.0)) / up2(u) * float(s)

        h4 = gen.h4_under + ScalarField(closed, "h4_int", XV)
    h4 = ScalarField(h4.fn, "h4", XV)
    h3 = _vblock(h4, integrand, phi, s)
    w1 = _ratio_w(phi, 0, gen.w_sign)
    w2 = _ratio_w(phi, 1, gen.w_sign)
    n41, n42 = gen.n1
    if gen.n2 is not None:
        def n_integrand(u):
            return J.sqrt(J.absolute(h3(u))) * J.power(J.absolute(h4(u)), -1.5)

        nint = integrate_v(ScalarField(n_integrand, "n_integrand", XV), gen.v0, name="n_int")
        n41 = n41 + gen.n2[0] * nint
        n42 = n42 + gen.n2[1] * nint
    g1 = gen.psi.apply(J.exp, "exp") * float(gen.eps1)
    g2 = gen.psi.apply(J.exp, "exp") * float(gen.eps2)
    ref = gen.ref_point if gen.ref_point is not None else (0.0, 0.0, gen.v0, 0.0)
    h4ref = float(h4.values(np.asarray(ref))[0])
    sig4 = int(np.sign(h4ref)) or 1
    signature = (int(gen.eps1), int(gen.eps2), -s * sig4, sig4)
    return DMetric(
        g1=g1, g2=g2, h3=h3, h4=h4, n31=w1, n32=w2, n41=n41, n42=n42,
        signature=signature,
        extras={"phi": phi, "psi": gen.psi, "source": src},
    )


# ---------------------------------------------------------------------------
# Levi-Civita branch


def lc_condition_residual(m: DMetric, p) -> np.ndarray:
    """Residuals of the zero-torsion constraints, one row per group.

    Rows: ``max(|w_i* - e_i ln sqrt|h3||, |e_i ln|h4||)``, ``|e_k w_i - e_i w_k|``,
    ``|n_i*|``, ``|d_i n_k - d_k n_i|``; shape ``(4,)`` or ``(4, P)``.
    """
    pts = as_points(_pts(p))
    mj = metric_jets(m, pts, 1)
    u = coordinate_jets(pts, 1)
    h3, h4 = m.h3(u), m.h4(u)
    if np.any(h4.value == 0) or np.any(h3.value == 0):
        raise BranchError("h3 or h4 vanishes: logarithms undefined")
    lh3 = frame_derivative(mj.E, J.log(J.absolute(h3)))
    lh4 = frame_derivative(mj.E, J.log(J.absolute(h4)))
    w = [m.n31(u), m.n32(u)]
    n = [m.n41(u), m.n42(u)]
    ew = [frame_derivative(mj.E, wk) for wk in w]
    r1 = np.max(
        np.stack(
            [np.abs(w[i].d(2).value - 0.5 * lh3[i].value) for i in range(2)]
            + [np.abs(lh4[i].value) for i in range(2)]
        ),
        axis=0,
    )
    r2 = np.abs(ew[1][0].value - ew[0][1].value)
    r3 = np.max(np.stack([np.abs(nk.d(2).value) for nk in n]), axis=0)
    r4 = np.abs(n[1].d(0).value - n[0].d(1).value)
    out = np.stack([r1, r2, r3, r4])
    return out[:, 0] if _is_single(p) else out


def lcconstr_residual(m: DMetric, p) -> np.ndarray:
    """Max absolute canonical torsion component per point."""
    mj = metric_jets(m, _pts(p), 1)
    T = torsion_jet(canonical_jet(mj), anholonomy_jet(mj)).value
    r = np.abs(T).max(axis=(0, 1, 2))
    return r[0] if _is_single(p) else r


def separable_solution(
    phi0: ScalarField,
    iota: float,
    lam: float,
    psi: ScalarField | None = None,
    n_potential: ScalarField | None = None,
    sign_h4: int = 1,
) -> DMetric:
    """Zero-torsion family ``phi = phi0(x) exp(v / iota)``.

    ``h4 = s exp(2 phi) / lam``, ``h3 = -(phi*)^2 / lam``, ``w_i = d_i phi / phi*``
    (equal to ``iota d_i ln|phi0|``, independent of ``v``) and ``n_i`` the
    gradient of ``n_potential``.  The horizontal block is the Liouville
    factor for ``lam`` unless ``psi`` is given.
    """
    if iota == 0:
        raise ValueError("iota must be nonzero")
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    iota, lam, s = float(iota), float(lam), int(np.sign(sign_h4)) or 1

    def phi_fn(u):
        return phi0(u) * J.exp(u[2] / iota)

    phi = ScalarField(phi_fn, "phi", XV)

    def check(u):
        v = phi0(u).value
        if np.any(v == 0):
            raise BranchError("phi0 vanishes: phi* = 0")

    def h4_fn(u):
        check(u)
        return J.exp(phi(u) * 2.0) * (s / lam)

    def h3_fn(u):
        ps = phi0(u) * J.exp(u[2] / iota) / iota
        return ps * ps * (-1.0 / lam)

    def w_fn(k):
        def fn(u):
            up = [Jet.variable(j, uk.value, u[0].order + 1) if j < 2 else Jet.constant(uk.value, u[0].order + 1) for j, uk in enumerate(u)]
            p0 = phi0(up)
            return p0.d(k) / p0.truncate(p0.order - 1) * iota

        return ScalarField(fn, f"w{k + 1}", X_ONLY)

    if n_potential is None:
        n41 = n42 = ZERO
    else:
        n41 = _order_lift(lambda u: n_potential(u).d(0), "n1", X_ONLY)
        n42 = _order_lift(lambda u: n_potential(u).d(1), "n2", X_ONLY)
    psi = psi if psi is not None else liouville_psi(lam)
    g = psi.apply(J.exp, "exp")
    return DMetric(
        g1=g, g2=g,
        h3=ScalarField(h3_fn, "h3", XV), h4=ScalarField(h4_fn, "h4", XV),
        n31=w_fn(0), n32=w_fn(1), n41=n41, n42=n42,
        signature=(1, 1, -1, s) if lam > 0 else (1, 1, 1, -s),
        extras={"phi": phi, "psi": psi, "source": SourceSpec.cosmological(lam)},
    )


# ---------------------------------------------------------------------------
# polarizations


def apply_polarizations(primary: DMetric, pol: PolarizationSet) -> DMetric:
    """``g_i -> eta_i g_i``, ``h_a -> eta_a h_a``, ``N_i^a -> eta_i^a N_i^a``."""
    e31, e32, e41, e42 = pol.etaN
    return primary.replace(
        g1=primary.g1 * pol.eta1,
        g2=primary.g2 * pol.eta2,
        h3=primary.h3 * pol.eta3,
        h4=primary.h4 * pol.eta4,
        n31=primary.n31 * e31,
        n32=primary.n32 * e32,
        n41=primary.n41 * e41,
        n42=primary.n42 * e42,
    )


def chi3_from_chi4(chi4: ScalarField, h3_prim: ScalarField, lam: float) -> ScalarField:
    """``chi3 = -1 + (lam h3_prim)^{-1} [(ln sqrt|1 - chi4|)*]^2``."""
    lam = float(lam)
    if lam == 0:
        raise ValueError("lambda must be nonzero")

    def fn(u):
        c = chi4(u)
        if np.any(c.value >= 1.0):
            raise JetDomainError("chi4 >= 1: log argument 1 - chi4 is not positive")
        d = J.log(1.0 - c).d(2) * 0.5
        out = d * d / (h3_prim(u).truncate(d.order) * lam) - 1.0
        if np.any(np.abs(out.value + 1.0) < 1e-14):
            raise DegenerateDeformationError("chi3 = -1 (eta3 = 0): chi4* vanishes, the deformation is degenerate")
        return out

    deps = tuple(a or b for a, b in zip(chi4.depends, h3_prim.depends))
    return _order_lift(fn, "chi3", deps)


# ---------------------------------------------------------------------------
# v-block from a prescribed h4


@dataclass(frozen=True)
class VBlock:
    phi: ScalarField
    h3: ScalarField
    h4: ScalarField
    w1: ScalarField
    w2: ScalarField


def vblock_from_h4(h4: ScalarField, h4_under: ScalarField, lam: float) -> VBlock:
    """Vertical data solving ``R^3_3 = lam`` for a prescribed ``h4(x, v)``.

    The generating function is ``phi = ln sqrt|lam (h4 - h4_under)|``; then
    ``h3 = -(h4*)^2 / (4 lam h4 (h4 - h4_under))`` and
    ``w_i = d_i(h4 - h4_under) / h4*`` (which equals ``d_i phi / phi*``).
    """
    lam = float(lam)
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    deps = tuple(a or b for a, b in zip(h4.depends, h4_under.depends))

    def diff(u):
        return h4(u) - h4_under(u)

    def phi_fn(u):
        d = diff(u)
        if np.any(d.value == 0):
            raise BranchError("h4 = h4_under: log argument of phi vanishes")
        return J.log(J.absolute(d * lam)) * 0.5

    def h3_fn(u):
        a = h4(u)
        s = a.d(2)
        top = a.truncate(s.order)
        return -(s * s) / (top * (diff(u).truncate(s.order)) * (4.0 * lam))

    def w_fn(k):
        def fn(u):
            d = diff(u)
            s = d.d(2)
            if np.any(s.value == 0):
                raise BranchError("h4* = 0: w_i undefined")
            return d.d(k) / s

        return _order_lift(fn, f"w{k + 1}", deps)

    return VBlock(
        phi=ScalarField(phi_fn, "phi", deps),
        h3=_order_lift(h3_fn, "h3", deps),
        h4=h4,
        w1=w_fn(0),
        w2=w_fn(1),
    )


# ---------------------------------------------------------------------------
# domain checks


class DomainSplitError(ValueError):
    """``h4`` changes sign on the sampled domain; ``locus`` lists bracketing points."""

    def __init__(self, message: str, locus):
        super().__init__(message)
        self.locus = locus


def check_generating_domain(gen: GeneratingData, m: DMetric, grid, min_phis: float = 1e-6) -> None:
    """Reject a grid where ``phi*`` nearly vanishes or ``h4`` changes sign.

    ``grid`` has shape ``(..., 4)``; sign changes are searched along every
    grid axis of a structured grid and between all points otherwise.
    """
    pts = np.asarray(grid, dtype=float)
    flat = pts.reshape(-1, 4)
    phis = gen.phi.jet(flat, 1).d(2).value
    k = int(np.argmin(np.abs(phis)))
    if abs(phis[k]) <= min_phis:
        raise BranchError(f"|phi*| = {abs(phis[k]):.3e} <= {min_phis} at {flat[k].tolist()}")
    h4 = m.h4.values(flat).reshape(pts.shape[:-1])
    if np.all(h4 > 0) or np.all(h4 < 0):
        return
    locus = []
    for ax in range(h4.ndim):
        a = np.moveaxis(h4, ax, 0)
        p = np.moveaxis(pts, ax, 0)
        flip = np.signbit(a[1:]) != np.signbit(a[:-1])
        for idx in zip(*np.nonzero(flip)):
            i0 = (idx[0],) + idx[1:]
            i1 = (idx[0] + 1,) + idx[1:]
            locus.append(0.5 * (p[i0] + p[i1]))
    raise DomainSplitError(f"h4 changes sign on the domain ({len(locus)} crossings); split the domain", np.array(locus))
