"""Concrete solution families: Kerr-Sen primary data, rotoids and solitonic deformations.

Two slot layouts are used.  The Kerr-Sen primary metric, whose ``(t, phi)``
block is not diagonalizable by coordinates, is stored as
``(x~, t | theta, phi)`` with ``N_t^phi = g_{t phi} / g_{phi phi}``.  The
deformed families use ``(x~, theta | phi, t)`` with ``v = phi``.  Here
``x~ = integral dr / sqrt(S0)`` is available in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jets as J
from .connection import SourceSpec
from .fields import ONE, ZERO, ScalarField
from .jets import Jet
from .solutions import (
    BranchError,
    DegenerateDeformationError,
    PolarizationSet,
    _order_lift,
    liouville_psi,
    vblock_from_h4,
)
from .tensor_core import DMetric, _is_single, _pts

KS_COORDS = ("xt", "t", "theta", "phi")
ROT_COORDS = ("xt", "theta", "phi", "t")


class HorizonDomainError(ValueError):
    pass


class FrameDegenerateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Kerr-Sen


@dataclass(frozen=True)
class KerrSenParams:
    M: float
    a: float
    b: float = 0.0

    def __post_init__(self):
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not 0 <= self.a < self.M:
            raise ValueError("spin must satisfy 0 <= a < M")
        if self.b < 0:
            raise ValueError("twist b must be nonnegative")

    @property
    def Q(self) -> float:
        return float(np.sqrt(2.0 * self.M * self.b))

    @property
    def J(self) -> float:
        return self.M * self.a

    @property
    def mu_dipole(self) -> float:
        return self.Q * self.a

    # S0 = (r - c)^2 + k
    @property
    def _c(self) -> float:
        return self.M - self.b

    @property
    def _k(self) -> float:
        return self.a**2 - self._c**2

    @property
    def r_plus(self) -> float:
        """Outer root of ``S0``; ``nan`` when ``S0`` has no real root."""
        return self._c + np.sqrt(-self._k) if self._k <= 0 else float("nan")

    @property
    def xt_min(self) -> float:
        """Lower edge of the ``x~`` chart (the outer root of ``S0``)."""
        return 0.5 * np.log(abs(self._k)) if self._k != 0 else -np.inf

    def S0(self, r):
        return r * r - 2.0 * self._c * r + self.a**2

    def xt_of_r(self, r):
        """``x~(r) = ln(r - c + sqrt(S0))``, the antiderivative of ``1/sqrt(S0)``."""
        r = np.asarray(r, dtype=float)
        s = self.S0(r)
        if np.any(s <= 0) or np.any(r - self._c <= 0):
            raise HorizonDomainError(f"S0 <= 0 for r in {np.atleast_1d(r)[np.atleast_1d(s) <= 0].tolist()}")
        return np.log(r - self._c + np.sqrt(s))

    def r_of_xt(self, x):
        """Inverse of :meth:`xt_of_r`; accepts floats, arrays or jets."""
        if isinstance(x, Jet):
            return (J.exp(x) - J.exp(-x) * self._k) * 0.5 + self._c
        x = np.asarray(x, dtype=float)
        return self._c + 0.5 * (np.exp(x) - self._k * np.exp(-x))


def _check_exterior(ks: KerrSenParams, x: Jet) -> None:
    if np.any(x.value <= ks.xt_min + 1e-12):
        raise HorizonDomainError(f"x~ <= {ks.xt_min:.6g}: point is not in the exterior (S0 <= 0)")


def _ks_blocks(ks: KerrSenParams, xt: Jet, th: Jet):
    """String-frame ``g_tt, g_tphi, g_phiphi`` and ``rho^2`` as jets."""
    _check_exterior(ks, xt)
    a, b = ks.a, ks.b
    r = ks.r_of_xt(xt)
    s, c = J.sin(th), J.cos(th)
    s2 = s * s
    rho2 = r * r + c * c * a**2
    B2 = rho2 + r * (2.0 * b)
    S0 = r * r - r * (2.0 * ks._c) + a**2
    Sig = r * r + r * (2.0 * b) + a**2
    f = rho2 / (B2 * B2)  # e^Phi / B2
    gtt = f * (s2 * a**2 - S0)
    gtp = f * s2 * (S0 - Sig) * a
    gpp = f * s2 * (Sig * Sig - S0 * s2 * a**2)
    return gtt, gtp, gpp, rho2


def kerr_sen_primary(ks: KerrSenParams) -> DMetric:
    """Kerr-Sen string-frame metric in the layout ``(x~, t | theta, phi)``.

    ``g1 = h3 = rho^2``, ``h4 = g_{phi phi}``, ``N_t^phi = g_{t phi}/g_{phi phi}``
    and ``g2 = g_tt - g_{t phi}^2 / g_{phi phi}``.  With ``b = 0`` this is the
    Kerr metric.
    """
    dep = (True, False, True, False)

    def part(which):
        def fn(u):
            gtt, gtp, gpp, rho2 = _ks_blocks(ks, u[0], u[2])
            if which == "g1":
                return rho2
            if which == "g2":
                return gtt - gtp * gtp / gpp
            if which == "h4":
                return gpp
            return gtp / gpp

        return ScalarField(fn, f"ks_{which}", dep)

    rho2 = part("g1")
    return DMetric(
        g1=rho2, g2=part("g2"), h3=rho2, h4=part("h4"), n42=part("n"),
        signature=(1, -1, 1, 1), coords=KS_COORDS,
        extras={"params": ks, "killing_t": 1, "killing_phi": 3},
    )


def kerr_sen_datai(ks: KerrSenParams) -> dict[str, ScalarField]:
    """The printed diagonal-form coefficients on ``(x~, theta)``, for reference.

    Keys ``g1, g2, h3, h4, K1, K2, q, beta, Phi``.  Their ``h3`` does not
    reproduce the ``(phi, t)`` block of the Kerr-Sen metric, so they are not
    assembled into a metric here.
    """
    dep = (True, True, False, False)
    a, b = ks.a, ks.b

    def base(u):
        r = ks.r_of_xt(u[0])
        s, c = J.sin(u[1]), J.cos(u[1])
        rho2 = r * r + c * c * a**2
        B2 = rho2 + r * (2.0 * b)
        return r, s, rho2, B2

    def field(fn, name):
        return ScalarField(lambda u: fn(*base(u)), name, dep)

    ePhi = field(lambda r, s, rho2, B2: rho2 / B2, "ePhi")
    K1 = field(lambda r, s, rho2, B2: -(r * r - r * (2.0 * ks._c) + a**2) / B2, "K1")
    K2 = field(lambda r, s, rho2, B2: s * s * a**2 / B2 * (rho2 / B2), "K2")
    q = field(lambda r, s, rho2, B2: -(r * r + r * (2.0 * b) + a**2) / a if a else r * 0.0 + np.inf, "q")
    beta = field(lambda r, s, rho2, B2: s * s * -a, "beta")
    g1 = field(lambda r, s, rho2, B2: rho2, "g1")
    h4 = K1 + K2
    h3 = beta * beta * K2 * (1.0 + K2 / (K1 * q * q)) ** 2
    Phi = field(lambda r, s, rho2, B2: J.log(rho2 / B2), "Phi")
    return {"g1": g1, "g2": g1, "h3": h3, "h4": h4, "K1": K1, "K2": K2, "q": q, "beta": beta, "Phi": Phi, "ePhi": ePhi}


def auxm1_matrix(ks: KerrSenParams, r: float, theta: float) -> np.ndarray:
    """Quadratic element of the off-diagonal primary form in ``(r, theta, phi, t)``.

    ``e^Phi B2 (dr^2/S0 + dtheta^2) + e^Phi B2^{-1} (sin^2 (a e3)^2 - S0 e4^2)`` with
    ``a e3 = a dt - (r^2 + 2br + a^2) dphi`` and ``e4 = dt - a sin^2 dphi``.
    """
    a, b = ks.a, ks.b
    s2, c2 = np.sin(theta) ** 2, np.cos(theta) ** 2
    rho2 = r * r + a * a * c2
    B2 = rho2 + 2.0 * b * r
    S0 = ks.S0(r)
    if S0 <= 0:
        raise HorizonDomainError(f"S0 = {S0} <= 0 at r = {r}")
    ePhi = rho2 / B2
    Sig = r * r + 2.0 * b * r + a * a
    ae3 = np.array([0.0, 0.0, -Sig, a])  # (dr, dtheta, dphi, dt)
    e4 = np.array([0.0, 0.0, -a * s2, 1.0])
    G = np.zeros((4, 4))
    G[0, 0] = ePhi * B2 / S0
    G[1, 1] = ePhi * B2
    G += ePhi / B2 * (s2 * np.outer(ae3, ae3) - S0 * np.outer(e4, e4))
    return G


def kerr_sen_offdiag_check(ks: KerrSenParams, p) -> float:
    """Max deviation between the off-diagonal form and the adapted DMetric.

    ``p = (r, theta, phi, t)``; the DMetric is assembled at
    ``(x~(r), t, theta, phi)`` and pulled back through the coordinate change.
    """
    from .tensor_core import assemble_metric

    r, th, ph, t = (float(x) for x in np.asarray(_pts(p), dtype=float))
    A = auxm1_matrix(ks, r, th)
    m = kerr_sen_primary(ks)
    G = assemble_metric(m, np.array([ks.xt_of_r(r), t, th, ph]))
    # d(x~, t, theta, phi) / d(r, theta, phi, t)
    Jac = np.zeros((4, 4))
    Jac[0, 0] = 1.0 / np.sqrt(ks.S0(r))
    Jac[1, 3] = 1.0
    Jac[2, 1] = 1.0
    Jac[3, 2] = 1.0
    B = Jac.T @ G @ Jac
    return float(np.abs(A - B).max())


def sample_exterior(ks: KerrSenParams, n: int, rng: np.random.Generator, r_range=None, theta_margin: float = 0.3):
    """``n`` points ``(r, theta)`` in the default window ``r in [3M, 10M]``."""
    lo, hi = r_range if r_range is not None else (3.0 * ks.M, 10.0 * ks.M)
    r = rng.uniform(lo, hi, n)
    th = rng.uniform(theta_margin, np.pi - theta_margin, n)
    return r, th


def ks_points(ks: KerrSenParams, r, th, t=0.0, phi=0.0) -> np.ndarray:
    """Points in the ``(x~, t, theta, phi)`` layout."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    th = np.broadcast_to(np.asarray(th, dtype=float), r.shape)
    return np.column_stack([ks.xt_of_r(r), np.full(r.shape, t), th, np.full(r.shape, phi)])


def rot_points(ks: KerrSenParams, r, th, phi, t=0.0) -> np.ndarray:
    """Points in the ``(x~, theta, phi, t)`` layout."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    th = np.broadcast_to(np.asarray(th, dtype=float), r.shape)
    phi = np.broadcast_to(np.asarray(phi, dtype=float), r.shape)
    return np.column_stack([ks.xt_of_r(r), th, phi, np.full(r.shape, t)])


# ---------------------------------------------------------------------------
# rotoids


@dataclass(frozen=True)
class RotoidParams:
    """Ellipsoidal deformation data.

    ``q0`` may be a float or a callable on the radial jet ``r``; ``mu1``
    defaults to the Kerr-Sen mass.
    """

    eps: float
    mu0: float = 1.0
    q0: float | Callable[[Jet], Jet] = 1.0
    omega0: float = 1.0
    phi0: float = 0.0
    mu1: float | None = None

    def rho_amplitude(self, r):
        q0 = self.q0(r) if callable(self.q0) else self.q0
        return q0 / (4.0 * self.mu0**2) if not isinstance(q0, Jet) else q0 * (1.0 / (4.0 * self.mu0**2))


ROTOID_H4_UNDER = -2.0


def rotoid_profile(ks: KerrSenParams, rp: RotoidParams) -> ScalarField:
    """``q + eps rho`` on the ``(x~, theta, phi, t)`` layout."""
    mu1 = ks.M if rp.mu1 is None else rp.mu1

    def fn(u):
        _check_exterior(ks, u[0])
        r = ks.r_of_xt(u[0])
        q = 1.0 - J.reciprocal(r) * (2.0 * mu1)
        rho = J.sin(u[2] * rp.omega0 + rp.phi0) * rp.rho_amplitude(r)
        return q + rho * rp.eps

    return ScalarField(fn, "q+eps*rho", (True, False, True, False))


def _rotoid_family(ks, rp, lam, psi, eta: ScalarField, n_potential=None) -> DMetric:
    prof = rotoid_profile(ks, rp)
    h4_core = -(eta * prof)

    def h4_fn(u):
        out = h4_core(u)
        if np.any(out.value - ROTOID_H4_UNDER <= 0):
            raise BranchError("2 - eta (q + eps rho) <= 0 on the domain")
        return out

    h4 = ScalarField(h4_fn, "h4", h4_core.depends)
    vb = vblock_from_h4(h4, ScalarField.constant(ROTOID_H4_UNDER), lam)
    psi = psi if psi is not None else liouville_psi(lam)
    g = psi.apply(J.exp, "exp")
    if n_potential is None:
        n1 = n2 = ZERO
    else:
        n1 = _order_lift(lambda u: n_potential(u).d(0), "n1", (True, True, False, False))
        n2 = _order_lift(lambda u: n_potential(u).d(1), "n2", (True, True, False, False))
    return DMetric(
        g1=g, g2=g, h3=vb.h3, h4=h4, n31=vb.w1, n32=vb.w2, n41=n1, n42=n2,
        # h4 in (-2, 0) on the exterior, so sign(h3) = sign(lam)
        signature=(1, 1, 1 if lam > 0 else -1, -1), coords=ROT_COORDS,
        extras={"params": (ks, rp), "phi": vb.phi, "psi": psi, "source": SourceSpec.cosmological(lam), "eta": eta,
                "killing_t": 3, "killing_phi": 2},
    )


def rotoid_metric(ks: KerrSenParams, rp: RotoidParams, lam: float, psi: ScalarField | None = None, n_potential=None) -> DMetric:
    """Black-ellipsoid deformation in the layout ``(x~, theta | phi, t)``.

    ``h4 = -(q + eps rho)`` and, with ``h4_under = -2`` (so that
    ``phi = ln sqrt|lam (2 - q - eps rho)|``),
    ``h3 = (h4*)^2 / (4 lam (q + eps rho)(2 - q - eps rho))`` and
    ``w_i = d_i h4 / h4*``.  ``psi`` is the full horizontal exponent,
    ``g_1 = g_2 = exp(psi)``, defaulting to the Liouville factor for ``lam``.
    """
    return _rotoid_family(ks, rp, lam, psi, ONE, n_potential)


def rotoid_horizon(ks: KerrSenParams, rp: RotoidParams, phi):
    """Parametric ellipse ``r+ = 2 mu1 / (1 + eps q0 / (4 mu0^2) sin(omega0 phi + phi0))``."""
    mu1 = ks.M if rp.mu1 is None else rp.mu1
    if callable(rp.q0):
        raise ValueError("the parametric ellipse needs a constant q0")
    amp = rp.q0 / (4.0 * rp.mu0**2)
    return 2.0 * mu1 / (1.0 + rp.eps * amp * np.sin(rp.omega0 * np.asarray(phi) + rp.phi0))


def rotoid_h4_radial(ks: KerrSenParams, rp: RotoidParams, r, phi):
    """``h4 = -(q + eps rho)`` as a plain function of ``(r, phi)``."""
    mu1 = ks.M if rp.mu1 is None else rp.mu1
    r = np.asarray(r, dtype=float)
    q0 = rp.q0(r) if callable(rp.q0) else rp.q0
    return -(1.0 - 2.0 * mu1 / r + rp.eps * q0 / (4.0 * rp.mu0**2) * np.sin(rp.omega0 * np.asarray(phi) + rp.phi0))


# ---------------------------------------------------------------------------
# solitons


@dataclass(frozen=True)
class SolitonParams:
    """KdV soliton data.

    ``tilt`` makes the soliton depend on ``x~`` through
    ``xi = phi + tilt x~ - c theta - phase`` with ``c = speed + eps_sol tilt^2``;
    ``h4_base`` is the constant ``h4`` of the mass-polarized family.
    """

    speed: float
    phase: float = 0.0
    eps_sol: int = 1
    tilt: float = 0.0
    h4_base: float | None = None

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError("soliton speed must be positive")
        if self.eps_sol not in (1, -1):
            raise ValueError("eps_sol must be +1 or -1")


def kdv_soliton(sp: SolitonParams) -> ScalarField:
    """``eta = (v0/2) sech^2(sqrt(v0) xi / 2)`` on the ``(x~, theta, phi)`` slots."""
    v0 = float(sp.speed)
    kappa = 0.5 * np.sqrt(v0)
    c = v0 + sp.eps_sol * sp.tilt**2

    def fn(u):
        xi = u[2] - u[1] * c - sp.phase
        if sp.tilt:
            xi = xi + u[0] * sp.tilt
        s = J.sech(xi * kappa)
        return s * s * (0.5 * v0)

    return ScalarField(fn, f"kdv({v0})", (bool(sp.tilt), True, True, False))


def _kdv_bracket(eta: Jet) -> Jet:
    """``eta' + 6 eta eta* + eta***`` (order drops by three)."""
    e3 = eta.d(2).d(2).d(2)
    o = e3.order
    return eta.d(1).truncate(o) + eta.truncate(o) * eta.d(2).truncate(o) * 6.0 + e3


def sol3d_residual(eta: ScalarField, p, eps_sol: int = 1):
    """``eta_11 + eps (eta_2 + 6 eta eta_3 + eta_333)_3`` with slots ``(x~, theta, phi)``."""
    from .fields import coordinate_jets

    pts = np.asarray(_pts(p), dtype=float)
    e = eta(coordinate_jets(pts, 4))
    out = e.d(0).d(0).value + eps_sol * _kdv_bracket(e).d(2).value
    return out[0] if _is_single(p) else out


def kdv_bracket_values(eta: ScalarField, p):
    from .fields import coordinate_jets

    e = eta(coordinate_jets(np.asarray(_pts(p), dtype=float), 3))
    out = _kdv_bracket(e).value
    return out[0] if _is_single(p) else out


def soliton_mass_metric(ks: KerrSenParams, sp: SolitonParams, lam: float, psi: ScalarField | None = None) -> DMetric:
    """Solitonically polarized mass: ``h4 = eta_11`` in ``(x~, theta | phi, t)``.

    ``phi = ln sqrt|lam (h4_base + eps (eta' + 6 eta eta* + eta***)*)|``, which on
    solutions of the soliton equation equals ``ln sqrt|lam (h4_base - h4)|``.
    Requires ``tilt != 0``: an ``x~``-independent soliton has ``eta_11 = 0``.
    """
    if not sp.tilt:
        raise DegenerateDeformationError("eta independent of x~ gives h4 = eta_11 = 0; set a nonzero tilt")
    eta = kdv_soliton(sp)
    base = sp.h4_base if sp.h4_base is not None else -(1.0 + sp.tilt**2 * sp.speed**2)
    def h4_fn(u):
        return eta(u).d(0).d(0)

    h4 = _order_lift(h4_fn, "eta_11", eta.depends, 2)
    vb = vblock_from_h4(h4, ScalarField.constant(base), lam)
    psi = psi if psi is not None else liouville_psi(lam)
    g = psi.apply(J.exp, "exp")
    ref = np.array([[0.0, 0.0, sp.phase, 0.0]])  # soliton peak
    s4 = int(np.sign(h4.values(ref)[0])) or -1
    s3 = int(np.sign(vb.h3.values(ref)[0])) or 1
    return DMetric(
        g1=g, g2=g, h3=vb.h3, h4=h4, n31=vb.w1, n32=vb.w2,
        signature=(1, 1, s3, s4), coords=ROT_COORDS,
        extras={"params": (ks, sp), "phi": vb.phi, "psi": psi, "eta": eta, "h4_base": base,
                "source": SourceSpec.cosmological(lam), "killing_t": 3},
    )


def solgfunct_phi(eta: ScalarField, h4_base: float, lam: float, eps_sol: int = 1) -> ScalarField:
    """``ln sqrt|lam (h4_base + eps (eta' + 6 eta eta* + eta***)*)|`` evaluated literally."""

    def fn(u):
        br = _kdv_bracket(eta(u)).d(2)
        return J.log(J.absolute((br * float(eps_sol) + h4_base) * lam)) * 0.5

    return _order_lift(fn, "phi_sol", eta.depends, 4)


def mass_polarization(ks: KerrSenParams, m: DMetric, p):
    """``mu1 = r (1 - eta_11) / 2`` at points of the ``(x~, theta, phi, t)`` layout."""
    pts = np.atleast_2d(np.asarray(_pts(p), dtype=float))
    r = ks.r_of_xt(pts[:, 0])
    out = 0.5 * r * (1.0 - m.h4.values(pts))
    return out[0] if _is_single(p) else out


def soliton_background_metric(ks: KerrSenParams, rp: RotoidParams, sp: SolitonParams | ScalarField, lam: float,
                              psi: ScalarField | None = None, n_potential=None) -> DMetric:
    """Rotoid in a solitonic background: ``h4 = -eta (q + eps rho)``.

    The generating function is ``ln sqrt|lam (2 - eta (q + eps rho))|``.  With
    ``eta = 1`` this is exactly :func:`rotoid_metric`.
    """
    eta = sp if isinstance(sp, ScalarField) else kdv_soliton(sp)
    return _rotoid_family(ks, rp, lam, psi, eta, n_potential)


# ---------------------------------------------------------------------------
# orthonormal coframe


def coframe_jet(ks: KerrSenParams, u, layout: str = "rot", pol: PolarizationSet | None = None, m: DMetric | None = None) -> Jet:
    """Orthonormal coframe ``e[A, mu]`` as jets, columns in the slot order of ``layout``.

    ``layout`` is ``"rot"`` for ``(x~, theta, phi, t)`` or ``"ks"`` for
    ``(x~, t, theta, phi)``.  ``w_i``, ``n_i`` and the polarizations are read
    from ``m`` and ``pol`` (rot layout only); by default they are zero and one.
    """
    if layout == "ks":
        if pol is not None or m is not None:
            raise ValueError("polarizations and N-coefficients are only defined on the rot layout")
        xt, th = u[0], u[2]
    elif layout == "rot":
        xt, th = u[0], u[1]
    else:
        raise ValueError(f"unknown layout {layout!r}")
    _check_exterior(ks, xt)
    if np.any(np.abs(np.sin(th.value)) < 1e-12):
        raise FrameDegenerateError("sin(theta) = 0: the coframe degenerates on the axis")
    a, b = ks.a, ks.b
    order = xt.order
    zero = Jet.constant(np.zeros(xt.shape), order)
    one = Jet.constant(np.ones(xt.shape), order)
    r = ks.r_of_xt(xt)
    s, c = J.sin(th), J.cos(th)
    rho = J.sqrt(r * r + c * c * a**2)
    B2 = rho * rho + r * (2.0 * b)
    S0 = r * r - r * (2.0 * ks._c) + a**2
    qa = -(r * r + r * (2.0 * b) + a**2)
    if pol is None:
        e1 = e2 = e3 = e4 = one
    else:
        e1, e2, e3, e4 = (J.sqrt(J.absolute(f(u))) for f in (pol.eta1, pol.eta2, pol.eta3, pol.eta4))
    if m is None:
        w1 = w2 = n1 = n2 = zero
    else:
        w1, w2, n1, n2 = (f(u) for f in (m.n31, m.n32, m.n41, m.n42))
    E3 = [w1, w2, one, zero]
    E4 = [n1, n2, zero, one]
    f3 = rho / B2 * s
    f4 = rho / B2 * J.sqrt(S0)
    rows = [
        [rho * e1, zero, zero, zero],
        [zero, rho * e2, zero, zero],
        [f3 * (e4 * E4[k] * a + qa * e3 * E3[k]) for k in range(4)],
        [f4 * (e4 * E4[k] - s * s * e3 * E3[k] * a) for k in range(4)],
    ]
    if layout == "ks":
        # rot columns (x~, theta, phi, t) -> ks columns (x~, t, theta, phi)
        rows = [[row[0], row[3], row[1], row[2]] for row in rows]
    return J.stack([J.stack(row) for row in rows])


def orthonormal_coframe(m: DMetric, ks: KerrSenParams, pol: PolarizationSet, p) -> np.ndarray:
    """Rows ``e^mu`` of the orthonormal coframe in coordinates ``(x~, theta, phi, t)``.

    ``e^1 = rho sqrt|eta1| dx~``, ``e^2 = sqrt|eta2| rho dtheta``,
    ``e^3 = rho B2^{-1} sin (a sqrt|eta4| E4 - (r^2 + 2br + a^2) sqrt|eta3| E3)``,
    ``e^4 = rho B2^{-1} sqrt(S0) (sqrt|eta4| E4 - a sin^2 sqrt|eta3| E3)``, with
    ``E3 = dphi + w_i dx^i`` and ``E4 = dt + n_i dx^i`` taken from ``m``.
    The ``e^3`` row is the printed ``a sin (E4 + q E3)`` with ``q`` multiplied out,
    so it stays finite at ``a = 0``.
    """
    from .fields import coordinate_jets

    pts = np.atleast_2d(np.asarray(_pts(p), dtype=float))
    out = np.moveaxis(coframe_jet(ks, coordinate_jets(pts, 0), "rot", pol, m).value, -1, 0)
    return out[0] if _is_single(p) else out


ETA = np.diag([1.0, 1.0, 1.0, -1.0])


def coframe_metric(coframe: np.ndarray) -> np.ndarray:
    return coframe.T @ ETA @ coframe


def _pol_values(pol: PolarizationSet, p):
    return [abs(float(f.values(p)[0])) for f in (pol.eta1, pol.eta2, pol.eta3, pol.eta4)]


def target_metric(m: DMetric, ks: KerrSenParams, pol: PolarizationSet, p) -> np.ndarray:
    """Polarized Kerr-Sen metric assembled from the Boyer-Lindquist ``(t, phi)`` block.

    ``dx~ -> sqrt|eta_i| dx~``, ``dphi -> sqrt|eta3| E3``, ``dt -> sqrt|eta4| E4``;
    an independent construction used to check :func:`orthonormal_coframe`.
    """
    from .fields import coordinate_jets

    p = np.asarray(_pts(p), dtype=float)
    u = coordinate_jets(p, 0)
    gtt, gtp, gpp, rho2 = (x.value[0] for x in _ks_blocks(ks, u[0], u[1]))
    e1, e2, e3, e4 = _pol_values(pol, p)
    w = [float(f.values(p)[0]) for f in (m.n31, m.n32)]
    n = [float(f.values(p)[0]) for f in (m.n41, m.n42)]
    E3 = np.sqrt(e3) * np.array([w[0], w[1], 1.0, 0.0])
    E4 = np.sqrt(e4) * np.array([n[0], n[1], 0.0, 1.0])
    G = np.diag([rho2 * e1, rho2 * e2, 0.0, 0.0])
    G += gpp * np.outer(E3, E3) + gtt * np.outer(E4, E4) + gtp * (np.outer(E3, E4) + np.outer(E4, E3))
    return G
