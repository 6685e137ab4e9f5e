"""Connections, torsion, distortion, curvature and Einstein residuals.

Coefficient arrays are laid out as ``conn[g, a, b] = Gamma^g_{ab}`` with
``D_{e_b} e_a = Gamma^g_{ab} e_g``: the last index is the direction of
differentiation.  The Riemann tensor follows
``R(e_c, e_d) e_b = R^a_{bcd} e_a`` and Ricci is ``R_{bd} = R^a_{bad}``, which
makes the round sphere positively curved.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import jets as J
from .fields import ScalarField, coordinate_jets
from .jets import Jet
from .tensor_core import (
    DMetric,
    MetricJets,
    TensorComponents,
    _batch_first,
    _is_single,
    _letters,
    _pts,
    anholonomy_jet,
    coordinate_metric,
    frame_derivative,
    metric_jets,
)

FLAVORS = ("canonical", "distortion", "levi-civita-adapted", "christoffel-coordinate")

_HMASK = np.array([1.0, 1.0, 0.0, 0.0])
_VMASK = 1.0 - _HMASK


def _block_mask(*kinds: str) -> np.ndarray:
    """Indicator over index tuples with each slot horizontal ('h') or vertical ('v')."""
    parts = [_HMASK if k == "h" else _VMASK for k in kinds]
    out = parts[0]
    for p in parts[1:]:
        out = np.multiply.outer(out, p)
    return out


def _masked(x: Jet, mask: np.ndarray) -> Jet:
    return x * mask.reshape(mask.shape + (1,) * (len(x.shape) - mask.ndim))


@dataclass(frozen=True)
class ConnectionCoefficients:
    gamma: TensorComponents
    flavor: str


@dataclass(frozen=True)
class CurvatureBlock:
    riemann: TensorComponents
    ricci: TensorComponents
    scalar_h: np.ndarray
    scalar_v: np.ndarray
    scalar_total: np.ndarray


@dataclass(frozen=True)
class SourceSpec:
    """Diagonal source ``diag(U4, U4, U2, U2)`` acting as ``R^a_b = U^a_b``.

    ``upsilon4`` depends on ``x^k`` and acts on the horizontal block,
    ``upsilon2`` on ``(x^k, v)`` and acts on the vertical block.
    """

    upsilon2: ScalarField
    upsilon4: ScalarField
    lam: float | None = None

    @classmethod
    def cosmological(cls, lam: float) -> "SourceSpec":
        c = ScalarField.constant(lam, "lambda")
        return cls(c, c, float(lam))

    def diagonal(self, u) -> list[Jet]:
        u4, u2 = self.upsilon4(u), self.upsilon2(u)
        return [u4, u4, u2, u2]


# ---------------------------------------------------------------------------
# jet-level kernels


def dmetric_inverse(G: Jet) -> Jet:
    """Inverse of the diagonal d-metric."""
    P = G.shape[-1]
    zero = Jet.constant(np.zeros(P), G.order)
    diag = [J.reciprocal(G[a, a]) for a in range(4)]
    return J.stack([J.stack([diag[a] if a == b else zero for b in range(4)]) for a in range(4)])


def canonical_jet(mj: MetricJets) -> Jet:
    """Canonical d-connection; the order drops by one."""
    G = mj.G
    Gi = dmetric_inverse(G)
    eG = frame_derivative(mj.E, G)  # eG[c, a, b] = e_c G_ab
    eN = frame_derivative(mj.E, mj.N)  # eN[k, i, a] = e_k N_i^a
    G = G.truncate(eG.order)
    Gi = Gi.truncate(eG.order)
    # Christoffel-type combination A[r, j, k] = (e_k G_jr + e_j G_kr - e_r G_jk) / 2
    A = (eG.transpose(2, 1, 0) + eG.transpose(2, 0, 1) - eG) * 0.5
    sym = J.contract("gr,rab->gab", Gi, A)
    # C^i_{jc} = g^{ik} e_c g_{jk} / 2
    B = eG.transpose(2, 1, 0) * 0.5
    cmix = J.contract("gr,rab->gab", Gi, B)
    # L^a_{bk} = e_b N_k^a + h^{ac}(e_k h_bc - h_dc e_b N_k^d - h_db e_c N_k^d) / 2
    t1 = J.contract("dc,bkd->cbk", G, eN)
    M = (eG.transpose(2, 1, 0) - t1 - t1.transpose(1, 0, 2)) * 0.5
    lmix = eN.transpose(2, 0, 1) + J.contract("ac,cbk->abk", Gi, M)
    return (
        _masked(sym, _block_mask("h", "h", "h"))
        + _masked(sym, _block_mask("v", "v", "v"))
        + _masked(cmix, _block_mask("h", "h", "v"))
        + _masked(lmix, _block_mask("v", "v", "h"))
    )


def koszul_jet(mj: MetricJets, W: Jet | None = None) -> Jet:
    """Levi-Civita connection in the N-adapted frame from the Koszul formula."""
    if W is None:
        W = anholonomy_jet(mj)
    eG = frame_derivative(mj.E, mj.G)
    G = mj.G.truncate(eG.order)
    Gi = dmetric_inverse(G)
    WG = J.contract("nab,nm->mab", W, G)  # WG[m, a, b] = W^n_{ab} g_nm
    # 2 Gamma_{m a b} = e_b g_am + e_a g_bm - e_m g_ba + W_{m b a} - W_{a b m} - W_{b a m}
    low = (
        eG.transpose(2, 1, 0)
        + eG.transpose(2, 0, 1)
        - eG
        + WG.transpose(0, 2, 1)
        - WG.transpose(2, 0, 1)
        - WG.transpose(2, 1, 0)
    ) * 0.5
    return J.contract("gm,mab->gab", Gi, low)


def christoffel_coordinate_jet(g: Jet) -> Jet:
    """Coordinate Christoffel symbols ``Gamma^m_{rn}`` of a coordinate metric jet."""
    dg = J.stack([g.d(k) for k in range(4)])  # dg[k, a, b] = d_k g_ab
    gi = J.inverse_matrix(g.truncate(dg.order))
    low = (dg.transpose(2, 1, 0) + dg.transpose(2, 0, 1) - dg) * 0.5
    return J.contract("gm,mab->gab", gi, low)


def christoffel_to_adapted(mj: MetricJets, gc: Jet) -> Jet:
    """Express a coordinate connection in the N-adapted frame."""
    eE = frame_derivative(mj.E, mj.E)  # eE[b, a, m] = e_b E_a^m
    E = mj.E.truncate(gc.order)
    Th = mj.Theta.truncate(gc.order)
    t = J.contract("ar,mrn->amn", E, gc)
    t = J.contract("bn,amn->mab", E, t)
    inner = eE.transpose(2, 1, 0) + t
    return J.contract("gm,mab->gab", Th, inner)


def torsion_jet(conn: Jet, W: Jet) -> Jet:
    """``T[g, a, b] = Gamma^g_{ab} - Gamma^g_{ba} + W^g_{ab}``."""
    W = W.truncate(conn.order)
    return conn - conn.transpose(0, 2, 1) + W


def _xi(G: Jet, Gi: Jet, mask: np.ndarray, sign: float) -> Jet:
    """``Xi[a, b, c, d] = (delta^a_c delta^b_d + sign * G_cd G^ab) / 2`` on one block."""
    d = np.einsum("ac,bd->abcd", np.diag(mask), np.diag(mask))[..., None]
    gg = J.contract("cd,ab->abcd", _masked(G, np.outer(mask, mask)), _masked(Gi, np.outer(mask, mask)))
    return (gg * sign + d) * 0.5


def distortion_jet(mj: MetricJets, canonical: Jet | None = None, W: Jet | None = None) -> Jet:
    """Distortion ``Z`` with Levi-Civita = canonical + Z, assembled block by block.

    ``Omega^a_{jk} = W^a_{jk}`` and the torsion is :func:`torsion_jet` of the
    canonical connection.
    """
    if canonical is None:
        canonical = canonical_jet(mj)
    if W is None:
        W = anholonomy_jet(mj)
    k = canonical.order
    W = W.truncate(k)
    G = mj.G.truncate(k)
    Gi = dmetric_inverse(G)
    T = torsion_jet(canonical, W)
    hm, vm = _HMASK, _VMASK
    Om = _masked(W, _block_mask("v", "h", "h"))
    Cm = _masked(canonical, _block_mask("h", "h", "v"))  # C^i_{jb}
    Tm = _masked(T, _block_mask("v", "h", "v"))  # T^c_{jd}
    Gh, Gv = _masked(G, np.outer(hm, hm)), _masked(G, np.outer(vm, vm))
    Gih, Giv = _masked(Gi, np.outer(hm, hm)), _masked(Gi, np.outer(vm, vm))
    xi_h_minus = _xi(G, Gi, hm, -1.0)
    xi_h_plus = _xi(G, Gi, hm, 1.0)
    xi_v_minus = _xi(G, Gi, vm, -1.0)
    xi_v_plus = _xi(G, Gi, vm, 1.0)

    # Z^a_{jk} = -C^i_{jb} g_ik h^ab - Omega^a_{jk} / 2
    z_ajk = -J.contract("kjb,ab->ajk", J.contract("ijb,ik->kjb", Cm, Gh), Giv) - Om * 0.5
    # (Omega^c_{jk} h_cb g^{ji}) / 2 is shared by the two h-upper mixed blocks
    oh = J.contract("cjk,cb->jkb", Om, Gv)
    oh = J.contract("jkb,ji->ikb", oh, Gih) * 0.5
    # Z^i_{bk} = oh + Xi+^{ih}_{jk} C^j_{hb};  Z^i_{kb} = oh + Xi-^{ih}_{jk} C^j_{hb}
    z_ibk = (oh + J.contract("ihjk,jhb->ikb", xi_h_plus, Cm)).transpose(0, 2, 1)
    z_ikb = oh + J.contract("ihjk,jhb->ikb", xi_h_minus, Cm)
    # Z^a_{bk} = Xi-^{ad}_{cb} T^c_{kd};  Z^a_{jb} = -Xi+^{ad}_{cb} T^c_{jd}
    z_abk = J.contract("adcb,ckd->abk", xi_v_minus, Tm)
    z_ajb = -J.contract("adcb,cjd->ajb", xi_v_plus, Tm)
    # Z^i_{ab} = +g^{ij} (T^c_{ja} h_cb + T^c_{jb} h_ca) / 2
    th = J.contract("cja,cb->jab", Tm, Gv)
    z_iab = J.contract("ij,jab->iab", Gih, th + th.transpose(0, 2, 1)) * 0.5
    return (
        _masked(z_ajk, _block_mask("v", "h", "h"))
        + _masked(z_ibk, _block_mask("h", "v", "h"))
        + _masked(z_ikb, _block_mask("h", "h", "v"))
        + _masked(z_abk, _block_mask("v", "v", "h"))
        + _masked(z_ajb, _block_mask("v", "h", "v"))
        + _masked(z_iab, _block_mask("h", "v", "v"))
    )


def riemann_jet(conn: Jet, W: Jet, E: Jet) -> Jet:
    """``R[a, b, c, d]`` for a frame connection; the order drops by one."""
    dG = frame_derivative(E, conn)  # dG[n, g, a, b] = e_n Gamma^g_{ab}
    k = dG.order
    conn = conn.truncate(k)
    W = W.truncate(k)
    first = dG.transpose(1, 2, 0, 3) - dG.transpose(1, 2, 3, 0)
    Q = J.contract("mbd,amg->abgd", conn, conn)
    anh = J.contract("mgd,abm->abgd", W, conn)
    return first + Q - Q.transpose(0, 1, 3, 2) - anh


def ricci_from_riemann(R: Jet) -> Jet:
    return sum((R[a, :, a] for a in range(1, 4)), R[0, :, 0])


def covariant_derivative_jet(T: Jet, variance: str, conn: Jet, E: Jet) -> Jet:
    """``D_c T`` with the derivative index appended last.

    ``variance`` has one character per tensor slot: ``'u'`` (upper) or ``'d'``.
    """
    rank = len(variance)
    eT = frame_derivative(E, T)
    k = eT.order
    conn = conn.truncate(k)
    T = T.truncate(k)
    out = eT.transpose(*range(1, rank + 1), 0)
    letters = _letters(rank, "mz")
    for s, kind in enumerate(variance):
        src = letters[:s] + "m" + letters[s + 1 :]
        dst = letters + "z"
        if kind == "u":
            out = out + J.contract(f"{letters[s]}mz,{src}->{dst}", conn, T)
        else:
            out = out - J.contract(f"m{letters[s]}z,{src}->{dst}", conn, T)
    return out


# ---------------------------------------------------------------------------
# flavour dispatch on metric jets


def connection_jet(mj: MetricJets, flavor: str) -> Jet:
    if flavor == "canonical":
        return canonical_jet(mj)
    if flavor == "distortion":
        return distortion_jet(mj)
    if flavor == "levi-civita-adapted":
        return canonical_jet(mj) + distortion_jet(mj)
    if flavor == "levi-civita-koszul":
        return koszul_jet(mj)
    if flavor == "christoffel-coordinate":
        return christoffel_coordinate_jet(coordinate_metric(mj))
    raise ValueError(f"unknown connection flavor {flavor!r}; expected one of {FLAVORS}")


def curvature_jets(mj: MetricJets, flavor: str = "canonical"):
    """Riemann and Ricci jets for an N-adapted flavour (order drops by two)."""
    if flavor == "christoffel-coordinate":
        raise ValueError("curvature is evaluated in the N-adapted frame; use levi-civita-adapted")
    conn = connection_jet(mj, flavor)
    W = anholonomy_jet(mj)
    R = riemann_jet(conn, W, mj.E)
    return R, ricci_from_riemann(R)


def coordinate_ricci_jet(g: Jet) -> Jet:
    """Ricci tensor of a coordinate metric from its Christoffel symbols."""
    gam = christoffel_coordinate_jet(g)
    P = g.shape[-1]
    zeroW = Jet.constant(np.zeros((4, 4, 4, P)), gam.order)
    eye = Jet.constant(np.broadcast_to(np.eye(4)[:, :, None], (4, 4, P)), gam.order)
    R = riemann_jet(gam, zeroW, eye)
    return ricci_from_riemann(R)


# ---------------------------------------------------------------------------
# public pointwise operations


def _conn_result(arr: Jet, flavor: str, p) -> ConnectionCoefficients:
    vals = _batch_first(arr.value, _is_single(p))
    return ConnectionCoefficients(TensorComponents(vals, ("up", "down", "down")), flavor)


def canonical_dconnection(m: DMetric, p) -> ConnectionCoefficients:
    return _conn_result(canonical_jet(metric_jets(m, _pts(p), 1)), "canonical", p)


def distortion(m: DMetric, p) -> ConnectionCoefficients:
    return _conn_result(distortion_jet(metric_jets(m, _pts(p), 1)), "distortion", p)


def lc_adapted(m: DMetric, p) -> ConnectionCoefficients:
    return _conn_result(connection_jet(metric_jets(m, _pts(p), 1), "levi-civita-adapted"), "levi-civita-adapted", p)


def christoffel_coordinate(m: DMetric, p) -> ConnectionCoefficients:
    mj = metric_jets(m, _pts(p), 1)
    return _conn_result(christoffel_coordinate_jet(coordinate_metric(mj)), "christoffel-coordinate", p)


def dtorsion(m: DMetric, p) -> TensorComponents:
    mj = metric_jets(m, _pts(p), 1)
    T = torsion_jet(canonical_jet(mj), anholonomy_jet(mj))
    return TensorComponents(_batch_first(T.value, _is_single(p)), ("up", "down", "down"))


def curvature(conn: str | ConnectionCoefficients, m: DMetric, p) -> CurvatureBlock:
    """Curvature of the named connection flavour.

    Connection coefficients are rebuilt as jets from order-2 metric data, so
    their frame derivatives are exact.
    """
    flavor = conn.flavor if isinstance(conn, ConnectionCoefficients) else conn
    mj = metric_jets(m, _pts(p), 2)
    R, Ric = curvature_jets(mj, flavor)
    Gi = dmetric_inverse(mj.G.truncate(0)).value
    ric = Ric.value
    sh = np.einsum("ij...,ij...->...", Gi[:2, :2], ric[:2, :2])
    sv = np.einsum("ab...,ab...->...", Gi[2:, 2:], ric[2:, 2:])
    single = _is_single(p)
    squeeze = (lambda x: x[0]) if single else (lambda x: x)
    return CurvatureBlock(
        TensorComponents(_batch_first(R.value, single), ("up", "down", "down", "down")),
        TensorComponents(_batch_first(ric, single), ("down", "down")),
        squeeze(sh),
        squeeze(sv),
        squeeze(sh + sv),
    )


def einstein_residual_jet(mj: MetricJets, src: SourceSpec, flavor: str = "canonical") -> Jet:
    """``R_{bd} - U_(b) g_{bd}`` in the N-adapted frame."""
    _, Ric = curvature_jets(mj, flavor)
    u = coordinate_jets(mj.points, Ric.order)
    diag = src.diagonal(u)
    G = mj.G.truncate(Ric.order)
    scale = J.stack([J.stack([diag[a]] * 4) for a in range(4)])
    return Ric - G * scale


def einstein_residual(m: DMetric, src: SourceSpec | float, p, flavor: str = "canonical") -> TensorComponents:
    if not isinstance(src, SourceSpec):
        src = SourceSpec.cosmological(float(src))
    mj = metric_jets(m, _pts(p), 2)
    res = einstein_residual_jet(mj, src, flavor)
    return TensorComponents(_batch_first(res.value, _is_single(p)), ("down", "down"))


def metric_compat_jet(mj: MetricJets, conn: Jet) -> Jet:
    return covariant_derivative_jet(mj.G, "dd", conn, mj.E)


def metric_compat_residual(m: DMetric, p, conn_fn: Callable[[MetricJets], Jet] = canonical_jet) -> np.ndarray:
    """Max ``|D_c g_{ab}|`` over slots, per point."""
    mj = metric_jets(m, _pts(p), 1)
    r = np.abs(metric_compat_jet(mj, conn_fn(mj)).value).max(axis=(0, 1, 2))
    return r[0] if _is_single(p) else r
