"""N-adapted frames, anholonomy, and assembly of off-diagonal metrics.

Slots are ordered ``(x1, x2, y3, y4)``; indices 0 and 1 are horizontal, 2 and
3 vertical.  Array-valued results carry the point batch on the last axis
internally; the public helpers move it to the front (or drop it for a single
point).
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from . import jets as J
from .fields import ONE, SLOT_NAMES, ZERO, ScalarField, as_points, coordinate_jets
from .jets import Jet

H = (0, 1)
V = (2, 3)
DET_FLOOR = 1e-12


class SingularMetricError(ValueError):
    def __init__(self, message: str, det=None):
        super().__init__(message)
        self.det = det


@dataclass(frozen=True)
class Point:
    u1: float
    u2: float
    u3: float
    u4: float

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("point coordinates must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2, self.u3, self.u4], dtype=float)


@dataclass(frozen=True)
class DMetric:
    """Ansatz data ``(g_i, h_a, omega, N_i^a)`` of one off-diagonal metric.

    ``n31, n32`` are ``N_1^3, N_2^3`` (the ``w_i``) and ``n41, n42`` are
    ``N_1^4, N_2^4`` (the ``n_i``).  ``coords`` only labels the slots.
    """

    g1: ScalarField
    g2: ScalarField
    h3: ScalarField
    h4: ScalarField
    omega: ScalarField = ONE
    n31: ScalarField = ZERO
    n32: ScalarField = ZERO
    n41: ScalarField = ZERO
    n42: ScalarField = ZERO
    signature: tuple[int, int, int, int] = (1, 1, 1, -1)
    coords: tuple[str, str, str, str] = SLOT_NAMES
    extras: dict = field(default_factory=dict, compare=False, repr=False)

    def replace(self, **changes) -> "DMetric":
        import dataclasses

        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class FramePair:
    """``frame[alpha, mu] = e_alpha^mu`` and ``coframe[alpha, mu] = e^alpha_mu``."""

    frame: np.ndarray
    coframe: np.ndarray

    def duality(self) -> np.ndarray:
        """Matrix of pairings ``e^alpha(e_beta)``; the identity for a valid pair."""
        return np.einsum("...am,...bm->...ab", self.coframe, self.frame)


@dataclass(frozen=True)
class TensorComponents:
    values: np.ndarray
    variance: tuple[str, ...]

    @property
    def rank(self) -> int:
        return len(self.variance)


@dataclass
class MetricJets:
    """Jets of the d-metric data at a batch of points.

    ``G`` is the N-adapted d-metric ``diag(g1, g2, w^2 h3, w^2 h4)``, ``N`` the
    N-connection with ``N[i, a] = N_i^a``, ``E``/``Theta`` frame and coframe.
    All tensors have shape ``(4, ..., P)``.
    """

    order: int
    points: np.ndarray
    G: Jet
    N: Jet
    E: Jet
    Theta: Jet

    @property
    def npoints(self) -> int:
        return self.points.shape[0]

    def truncate(self, order: int) -> "MetricJets":
        return MetricJets(order, self.points, *(x.truncate(order) for x in (self.G, self.N, self.E, self.Theta)))


def metric_jets(m: DMetric, points, order: int) -> MetricJets:
    pts = as_points(points)
    u = coordinate_jets(pts, order)
    P = pts.shape[0]
    w2 = m.omega(u) * m.omega(u)
    diag = [m.g1(u), m.g2(u), w2 * m.h3(u), w2 * m.h4(u)]
    zero = Jet.constant(np.zeros(P), order)
    G = J.stack([J.stack([diag[a] if a == b else zero for b in range(4)]) for a in range(4)])
    nfields = {(0, 2): m.n31, (1, 2): m.n32, (0, 3): m.n41, (1, 3): m.n42}
    Nrows = [[nfields[(i, a)](u) if (i, a) in nfields else zero for a in range(4)] for i in range(4)]
    N = J.stack([J.stack(row) for row in Nrows])
    eye = np.eye(4)[:, :, None]
    E = -N + eye
    Theta = N.swapaxes(0, 1) + eye
    det = np.prod(np.stack([d.value for d in diag]), axis=0)
    if np.any(np.abs(det) <= DET_FLOOR) or not np.all(np.isfinite(det)):
        k = int(np.argmin(np.where(np.isfinite(det), np.abs(det), -1.0)))
        raise SingularMetricError(f"degenerate d-metric at {pts[k].tolist()}: det={det[k]!r}", det[k])
    return MetricJets(order, pts, G, N, E, Theta)


def _letters(n: int, skip: str = "") -> str:
    return "".join(c for c in string.ascii_lowercase if c not in skip)[:n]


def frame_derivative(E: Jet, f: Jet) -> Jet:
    """``e_alpha(f)`` for every frame vector; the new index is prepended."""
    df = J.stack([f.d(mu) for mu in range(4)])
    rank = len(f.shape) - 1
    rest = _letters(rank, "am")
    return J.contract(f"am,m{rest}->a{rest}", E, df)


def coordinate_metric(mj: MetricJets) -> Jet:
    """Coordinate components ``g_{mu nu} = e^alpha_mu G_{alpha beta} e^beta_nu``."""
    tmp = J.contract("ab,bn->an", mj.G, mj.Theta)
    return J.contract("am,an->mn", mj.Theta, tmp)


def anholonomy_jet(mj: MetricJets) -> Jet:
    """``W[g, a, b]`` with ``[e_a, e_b] = W^g_{ab} e_g`` (order drops by one)."""
    N = mj.N
    eN = frame_derivative(mj.E, N)  # eN[k, i, a] = e_k N_i^a
    P = mj.npoints
    zero = Jet.constant(np.zeros(P), mj.order - 1)
    comps = [[[zero] * 4 for _ in range(4)] for _ in range(4)]
    for i in H:
        for a in V:
            for b in V:
                comps[b][i][a] = eN[a, i, b]
                comps[b][a][i] = -eN[a, i, b]
        for j in H:
            for a in V:
                # Omega^a_{ij} = e_j N_i^a - e_i N_j^a
                comps[a][i][j] = eN[j, i, a] - eN[i, j, a]
    return J.stack([J.stack([J.stack(row) for row in plane]) for plane in comps])


def _batch_first(arr: np.ndarray, single: bool) -> np.ndarray:
    arr = np.moveaxis(arr, -1, 0)
    return arr[0] if single else arr


def _is_single(p) -> bool:
    if isinstance(p, Point):
        return True
    return np.ndim(p) == 1


def _pts(p):
    return p.as_array() if isinstance(p, Point) else p


def jet_eval(f: ScalarField, p, order: int) -> Jet:
    if not 0 <= order <= J.MAX_ORDER:
        raise ValueError(f"order must be in [0, {J.MAX_ORDER}], got {order}")
    return f.jet(_pts(p), order)


def assemble_metric(m: DMetric, p) -> np.ndarray:
    """Coordinate matrix of the off-diagonal metric at ``p`` (or a batch)."""
    mj = metric_jets(m, _pts(p), 0)
    return _batch_first(coordinate_metric(mj).value, _is_single(p))


def nadapted_frames(m: DMetric, p) -> FramePair:
    mj = metric_jets(m, _pts(p), 0)
    single = _is_single(p)
    return FramePair(_batch_first(mj.E.value, single), _batch_first(mj.Theta.value, single))


def anholonomy(m: DMetric, p) -> TensorComponents:
    mj = metric_jets(m, _pts(p), 1)
    W = anholonomy_jet(mj).value
    return TensorComponents(_batch_first(W, _is_single(p)), ("up", "down", "down"))


def frame_transform(g_under, vierbein) -> np.ndarray:
    """``g_{ab} = e_a^A e_b^B g_{AB}`` for a vierbein ``e[a, A]``."""
    g_under = np.asarray(g_under, dtype=float)
    e = np.asarray(vierbein, dtype=float)
    det = np.linalg.det(e)
    if np.any(np.abs(det) < DET_FLOOR):
        raise SingularMetricError("singular vierbein", det)
    return np.einsum("...aA,...bB,...AB->...ab", e, e, g_under)


def check_signature(m: DMetric, p) -> bool:
    g = assemble_metric(m, as_points(_pts(p)))
    eig = np.linalg.eigvalsh(g)
    want = np.sort(np.asarray(m.signature))
    return bool(np.all(np.sign(eig) == want[None, :]))


def _random_wave(rng: np.random.Generator, base: float, amp: float, depends) -> ScalarField:
    """``base + amp * sum_k a_k sin(b_k . u + c_k)`` over the coordinates in ``depends``."""
    k = rng.uniform(-1.0, 1.0, (3, 4)) * np.asarray(depends, dtype=float)
    a = rng.uniform(-1.0, 1.0, 3) / 3.0
    c = rng.uniform(0.0, 2.0 * np.pi, 3)

    def fn(u):
        acc = Jet.constant(np.full(u[0].shape, base), u[0].order)
        for j in range(3):
            arg = sum((u[m] * float(k[j, m]) for m in range(4) if depends[m]), Jet.constant(np.full(u[0].shape, c[j]), u[0].order))
            acc = acc + J.sin(arg) * float(amp * a[j])
        return acc

    return ScalarField(fn, "wave", tuple(bool(d) for d in depends))


def random_dmetric(rng: np.random.Generator, omega: bool = True) -> DMetric:
    """Random analytic ansatz metric of signature ``(+, +, +, -)``.

    ``g_i`` depend on ``x^k``, ``h_a`` and ``N_i^a`` on ``(x^k, y3)`` and
    ``omega`` on all four coordinates.  Diagonal entries stay at least 0.5
    away from zero.
    """
    xo, xv = (True, True, False, False), (True, True, True, False)
    g1 = _random_wave(rng, rng.uniform(1.0, 2.0), 0.4, xo)
    g2 = _random_wave(rng, rng.uniform(1.0, 2.0), 0.4, xo)
    h3 = _random_wave(rng, rng.uniform(1.0, 2.0), 0.4, xv)
    h4 = _random_wave(rng, -rng.uniform(1.0, 2.0), 0.4, xv)
    n = [_random_wave(rng, 0.0, 0.6, xv) for _ in range(4)]
    om = _random_wave(rng, 1.0, 0.2, (True, True, True, True)) if omega else ONE
    return DMetric(g1, g2, h3, h4, om, n[0], n[1], n[2], n[3], extras={"random": True})
