import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offdiag import jets as J
from offdiag.connection import einstein_residual
from offdiag.dsl import bind
from offdiag.exact import KerrSenParams, RotoidParams, kerr_sen_primary, ks_points, rot_points, rotoid_metric
from offdiag.fields import ONE, ScalarField
from offdiag.jets import Jet
from offdiag.solutions import separable_solution
from offdiag.symmetries import (
    AxisError,
    BasisMismatchError,
    PForm,
    PreconditionError,
    SKTensor,
    anomaly_vanishing_check,
    antisym_ricci_k,
    cky_residual,
    cky_xi,
    commutator_probe,
    coordinate_frame_vectors,
    coordinate_vector,
    h_torsion,
    h_torsion_form,
    kbar_analog,
    kbar_tensor,
    killing_residual,
    metric_tensor,
    principal_cky,
    sk_anomaly,
    sk_residual,
    to_adapted,
    wedge_contract,
)
from offdiag.tensor_core import DMetric, random_dmetric

LC = "levi-civita-adapted"
KERR = KerrSenParams(1.0, 0.6, 0.0)
SEN = KerrSenParams(1.0, 0.5, 0.3)


def _kerr_points(ks, n=6, seed=0):
    rng = np.random.default_rng(seed)
    return ks_points(ks, rng.uniform(3.0, 8.0, n), rng.uniform(0.4, 2.7, n), t=0.2, phi=0.3)


def _separable():
    phi0 = bind("1 + 0.2*sin(x1) + 0.1*cos(x2)")
    npot = bind("0.3*x1*x2 + 0.1*sin(x1)")
    return separable_solution(phi0, 2.0, -0.5, n_potential=npot)


SEP_POINTS = np.array([[0.2, 0.3, -0.2, 0.0], [0.6, 0.7, 0.3, 0.4], [0.8, 0.1, 0.1, -0.3]])


def _probe_tensor() -> SKTensor:
    def fn(u):
        rows = [J.stack([u[a] * u[b] * 0.1 + (1.0 if a == b else 0.0) for b in range(4)]) for a in range(4)]
        return J.stack(rows)

    return SKTensor(fn, "uu", "adapted", "probe")


def _random_form(rng, degree):
    c = rng.normal(size=(4,) * degree)
    out = np.zeros_like(c)
    for perm in itertools.permutations(range(degree)):
        sign = np.linalg.det(np.eye(degree)[list(perm)])
        out += sign * np.transpose(c, perm)
    return PForm(degree, out / len(list(itertools.permutations(range(degree)))))


class TestForms:
    def test_rejects_non_antisymmetric(self):
        with pytest.raises(ValueError):
            PForm(2, np.eye(4))
        with pytest.raises(ValueError):
            PForm(2, np.zeros((4, 4, 4)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([(1, 1), (1, 2), (2, 2), (2, 3)]))
    def test_single_contraction_graded_symmetry(self, seed, pq):
        # A ^_1 B = (-1)^((p-1)(q-1)) B ^_1 A
        rng = np.random.default_rng(seed)
        p, q = pq
        A, B = _random_form(rng, p), _random_form(rng, q)
        ab = wedge_contract(A, B, 1).components
        ba = wedge_contract(B, A, 1).components
        np.testing.assert_allclose(ab, (-1) ** ((p - 1) * (q - 1)) * ba, atol=1e-12)

    def test_one_forms_contract_to_the_inner_product(self):
        a, b = np.array([1.0, 2.0, 0.5, 3.0]), np.array([0.3, -1.0, 2.0, 1.5])
        out = wedge_contract(PForm(1, a), PForm(1, b), 1).components
        assert float(out) == pytest.approx(a @ np.diag([1, 1, 1, -1]) @ b)

    def test_double_contraction_of_two_forms(self):
        rng = np.random.default_rng(4)
        A, B = _random_form(rng, 2), _random_form(rng, 2)
        eta = np.diag([1.0, 1.0, 1.0, -1.0])
        want = 0.5 * np.einsum("ab,cd,ac,bd->", A.components, B.components, eta, eta)
        assert float(wedge_contract(A, B, 2).components) == pytest.approx(want, rel=1e-12)

    def test_basis_mismatch(self):
        A = PForm(1, np.ones(4))
        B = PForm(1, np.ones(4), "coordinate")
        with pytest.raises(BasisMismatchError):
            wedge_contract(A, B, 1)
        with pytest.raises(BasisMismatchError):
            wedge_contract(B, B, 1)
        assert float(wedge_contract(B, B, 1, np.eye(4)).components) == 4.0

    def test_too_many_contractions(self):
        with pytest.raises(ValueError):
            wedge_contract(PForm(1, np.ones(4)), PForm(2, np.zeros((4, 4))), 2)


class TestKilling:
    @pytest.mark.parametrize("slot", [1, 3])
    def test_kerr_coordinate_killing_vectors(self, slot):
        m = kerr_sen_primary(KERR)
        assert killing_residual(m, LC, coordinate_vector(slot), _kerr_points(KERR)).max() < 1e-9

    def test_radial_vector_is_not_killing(self):
        m = kerr_sen_primary(KERR)
        assert killing_residual(m, LC, coordinate_vector(0), _kerr_points(KERR)).max() > 1e-3

    def test_single_point_returns_a_float(self):
        m = kerr_sen_primary(KERR)
        assert np.ndim(killing_residual(m, LC, coordinate_vector(1), _kerr_points(KERR)[0])) == 0

    def test_rotoid_time_translation(self):
        m = rotoid_metric(SEN, RotoidParams(0.05), 0.1)
        p = rot_points(SEN, [3.5, 5.0], [0.8, 1.9], [0.2, 0.4])
        assert killing_residual(m, LC, coordinate_vector(3), p).max() < 1e-9


class TestKerrTensor:
    def test_printed_sign_is_killing(self):
        m = kerr_sen_primary(KERR)
        K = to_adapted(m, kbar_tensor(KERR))
        assert sk_residual(m, LC, K, _kerr_points(KERR)).max() < 1e-8

    def test_flipped_sign_is_not(self):
        m = kerr_sen_primary(KERR)
        K = to_adapted(m, kbar_tensor(KERR, sign=-1))
        assert sk_residual(m, LC, K, _kerr_points(KERR)).max() > 1e-3

    def test_metric_is_trivially_killing(self):
        m = kerr_sen_primary(KERR)
        assert sk_residual(m, LC, metric_tensor(m), _kerr_points(KERR)).max() < 1e-9

    def test_coordinate_basis_is_rejected(self):
        m = kerr_sen_primary(KERR)
        with pytest.raises(BasisMismatchError):
            sk_residual(m, LC, kbar_tensor(KERR), _kerr_points(KERR))

    def test_analog_matches_kerr_tensor_shape(self):
        # both are diagonal in the adapted frame with the same signs
        m = rotoid_metric(SEN, RotoidParams(0.05), 0.1)
        p = rot_points(SEN, [4.0], [1.0], [0.3])
        K = kbar_analog(m, SEN).fn([Jet.variable(p[:, i], i, 0) for i in range(4)]).value[..., 0]
        assert np.abs(K - np.diag(np.diag(K))).max() == 0.0
        assert K[0, 0] < 0 < K[1, 1] and K[2, 2] > 0 and K[3, 3] > 0


class TestCKY:
    def test_kerr_principal_tensor(self):
        m = kerr_sen_primary(KERR)
        p = _kerr_points(KERR)
        res = cky_residual(m, principal_cky(KERR), None, p, frame=coordinate_frame_vectors(KERR))
        assert res.max() < 1e-8

    def test_h_torsion_form_vanishes_without_twist(self):
        m = kerr_sen_primary(KERR)
        p = _kerr_points(KERR)
        frame = coordinate_frame_vectors(KERR)
        plain = cky_residual(m, principal_cky(KERR), None, p, frame=frame)
        tors = cky_residual(m, principal_cky(KERR), h_torsion_form(KERR), p, frame=frame)
        np.testing.assert_allclose(tors, plain, atol=1e-12)

    @pytest.mark.parametrize("sign", [1, -1])
    def test_kerr_sen_torsion_residual_is_reported(self, sign):
        # informational only: the residual is finite, no threshold is claimed
        m = kerr_sen_primary(SEN)
        p = _kerr_points(SEN, 3)
        res = cky_residual(m, principal_cky(SEN, sign), h_torsion_form(SEN, sign), p,
                           frame=coordinate_frame_vectors(SEN))
        assert np.all(np.isfinite(res))

    def test_coordinate_frame_agrees(self):
        m = kerr_sen_primary(KERR)
        assert cky_residual(m, principal_cky(KERR), None, _kerr_points(KERR)).max() < 1e-8

    def test_static_limit(self):
        ks = KerrSenParams(1.0, 0.0, 0.0)
        m = kerr_sen_primary(ks)
        res = cky_residual(m, principal_cky(ks), None, _kerr_points(ks), frame=coordinate_frame_vectors(ks))
        assert res.max() < 1e-8

    def test_xi_is_the_time_translation(self):
        # xi^mu = -(1/3) (d* h)^mu is proportional to the stationary Killing vector
        m = kerr_sen_primary(KERR)
        p = _kerr_points(KERR, 3)
        xi = cky_xi(m, principal_cky(KERR), None, p)
        from offdiag.tensor_core import assemble_metric

        g = assemble_metric(m, p)
        up = np.linalg.solve(g, xi[..., None])[..., 0]
        np.testing.assert_allclose(up[:, [0, 2, 3]], 0.0, atol=1e-9)
        np.testing.assert_allclose(np.abs(up[:, 1]), np.abs(up[0, 1]), rtol=1e-9)
        assert abs(up[0, 1]) > 0.1

    def test_h_torsion_vanishes_without_twist(self):
        ht = h_torsion(KERR, None, [4.0, 1.0], 1)
        assert ht.t_left == 0.0 and ht.t_right == 0.0

    def test_h_torsion_off_axis_only(self):
        with pytest.raises(AxisError):
            h_torsion(SEN, None, [4.0, 0.0], 1)


class TestAnomaly:
    def test_vanishes_on_the_separable_einstein_solution(self):
        m = _separable()
        rep = anomaly_vanishing_check(m, -0.5, _probe_tensor(), SEP_POINTS)
        assert rep.einstein_max < 1e-7
        assert rep.anomaly_max < 1e-8
        assert rep.lc_branch

    def test_precondition_rejects_non_einstein_metric(self):
        m = random_dmetric(np.random.default_rng(3))
        with pytest.raises(PreconditionError) as info:
            anomaly_vanishing_check(m, 0.0, _probe_tensor(), SEP_POINTS)
        assert info.value.residual > 1e-7

    def test_present_for_non_einstein_metric(self):
        m = random_dmetric(np.random.default_rng(3))
        assert np.abs(sk_anomaly(m, _probe_tensor(), SEP_POINTS)).max() > 1e-3

    def test_antisymmetric_ricci_k_vanishes_for_einstein(self):
        m = _separable()
        assert np.abs(antisym_ricci_k(m, _probe_tensor(), SEP_POINTS)).max() < 1e-8


class TestCommutator:
    @pytest.mark.parametrize("flavor", ["canonical", LC])
    def test_probe_sides_agree(self, flavor):
        m = _separable()
        f = bind("sin(x1)*cos(x2) + 0.3*v*t + 0.1*x1^2")
        lhs, rhs = commutator_probe(m, _probe_tensor(), f, SEP_POINTS, flavor)
        np.testing.assert_allclose(lhs, rhs, atol=1e-8 * max(1.0, np.abs(lhs).max()))

    def test_flat_metric_constant_tensor_commutes(self):
        flat = DMetric(ONE, ONE, ONE, -ONE)
        K = metric_tensor(flat)
        f = ScalarField(lambda u: J.sin(u[0]) * J.exp(u[2] * 0.3), "f", (True, False, True, False))
        lhs, rhs = commutator_probe(flat, K, f, SEP_POINTS)
        assert np.abs(lhs).max() < 1e-10
        assert np.abs(rhs).max() < 1e-10

    def test_einstein_precheck(self):
        m = _separable()
        assert np.abs(einstein_residual(m, -0.5, SEP_POINTS).values).max() < 1e-7
