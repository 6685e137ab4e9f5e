import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offdiag import jets as J
from offdiag.connection import (
    FLAVORS,
    SourceSpec,
    canonical_dconnection,
    canonical_jet,
    christoffel_coordinate_jet,
    christoffel_to_adapted,
    connection_jet,
    coordinate_ricci_jet,
    curvature,
    curvature_jets,
    distortion,
    dtorsion,
    einstein_residual,
    lc_adapted,
    metric_compat_residual,
)
from offdiag.fields import ONE, ScalarField
from offdiag.tensor_core import DMetric, coordinate_metric, metric_jets, random_dmetric

seeds = st.integers(0, 10_000)
FLAT = DMetric(ONE, ONE, ONE, -ONE)
P0 = np.array([[0.2, -0.4, 0.7, 0.1], [0.5, 0.3, -0.2, 0.9]])


def _random(seed, n=4):
    rng = np.random.default_rng(seed)
    return random_dmetric(rng), rng.uniform(-1, 1, (n, 4))


def _sphere_metric() -> DMetric:
    s2 = ScalarField(lambda u: J.sin(u[0]) * J.sin(u[0]), "sin^2", (True, False, False, False))
    return DMetric(ONE, s2, ONE, -ONE)


class TestFlat:
    @pytest.mark.parametrize("op", [canonical_dconnection, distortion, lc_adapted])
    def test_connections_vanish(self, op):
        assert np.abs(op(FLAT, P0).gamma.values).max() < 1e-12

    def test_torsion_and_curvature_vanish(self):
        assert np.abs(dtorsion(FLAT, P0).values).max() < 1e-12
        for flavor in ("canonical", "levi-civita-adapted"):
            cb = curvature(flavor, FLAT, P0)
            assert np.abs(cb.riemann.values).max() < 1e-12
            assert np.abs(cb.scalar_total).max() < 1e-12


class TestDistortion:
    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_canonical_plus_distortion_is_levi_civita(self, seed):
        m, p = _random(seed)
        mj = metric_jets(m, p, 1)
        lc = connection_jet(mj, "levi-civita-adapted").value
        ch = christoffel_to_adapted(mj, christoffel_coordinate_jet(coordinate_metric(mj))).value
        assert np.abs(lc - ch).max() < 1e-10
        kz = connection_jet(mj, "levi-civita-koszul").value
        assert np.abs(lc - kz).max() < 1e-10

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_canonical_is_metric_compatible(self, seed):
        m, p = _random(seed)
        assert metric_compat_residual(m, p).max() < 1e-11

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_pure_torsion_blocks_vanish(self, seed):
        m, p = _random(seed)
        T = dtorsion(m, p).values
        assert np.abs(T[:, :2, :2, :2]).max() < 1e-12  # T^i_{jk}
        assert np.abs(T[:, 2:, 2:, 2:]).max() < 1e-12  # T^a_{bc}

    def test_torsion_is_generically_nonzero(self):
        m, p = _random(7)
        assert np.abs(dtorsion(m, p).values).max() > 1e-3


class TestCurvature:
    def test_unit_sphere_has_positive_scalar_curvature(self):
        p = np.array([[0.7, 0.1, 0.0, 0.0], [1.3, 2.0, 0.5, 0.2]])
        cb = curvature("levi-civita-adapted", _sphere_metric(), p)
        np.testing.assert_allclose(cb.scalar_h, 2.0, atol=1e-12)
        np.testing.assert_allclose(cb.scalar_v, 0.0, atol=1e-12)

    @settings(max_examples=5, deadline=None)
    @given(seeds)
    def test_adapted_levi_civita_ricci_matches_coordinate_ricci(self, seed):
        m, p = _random(seed, 2)
        mj = metric_jets(m, p, 2)
        _, ric = curvature_jets(mj, "levi-civita-adapted")
        ric_c = coordinate_ricci_jet(coordinate_metric(mj)).value
        E = mj.E.truncate(0).value
        ric_a = np.einsum("am...,bn...,mn...->ab...", E, E, ric_c)
        assert np.abs(ric.value - ric_a).max() < 1e-9

    def test_unknown_flavor(self):
        with pytest.raises(ValueError):
            connection_jet(metric_jets(FLAT, P0, 1), "weitzenbock")
        assert "canonical" in FLAVORS

    def test_curvature_rejects_coordinate_flavor(self):
        with pytest.raises(ValueError):
            curvature("christoffel-coordinate", FLAT, P0)


class TestEinstein:
    def test_flat_is_vacuum(self):
        assert np.abs(einstein_residual(FLAT, 0.0, P0).values).max() < 1e-12

    def test_flat_is_not_lambda_vacuum(self):
        assert np.abs(einstein_residual(FLAT, 0.5, P0).values).max() == pytest.approx(0.5)

    def test_source_spec_cosmological(self):
        src = SourceSpec.cosmological(0.3)
        assert src.lam == 0.3
        assert src.upsilon2.values(P0)[0] == 0.3

    def test_canonical_jet_shape(self):
        mj = metric_jets(FLAT, P0, 1)
        assert canonical_jet(mj).shape == (4, 4, 4, 2)
