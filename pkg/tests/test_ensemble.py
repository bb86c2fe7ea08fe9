"""
Tests for particle ensembles and the blob reconstruction.

Run with: pytest tests/test_ensemble.py -v
"""
import numpy as np
import pytest

from src.ensemble import (MomentSpec, ParticleEnsemble, QuadraturePlan, blob_state, default_width,
                          density_at, entropy, lp_profile, moment, sample_initial, score_at,
                          site_densities)
from src.errors import ConfigError, DomainError
from src.kernels import Domain

from conftest import PLANE, TORUS


# ==============================
# Construction and sampling
# ==============================

class TestParticleEnsemble:
    """Validation of the ensemble invariants."""

    def test_weights_must_sum_to_one(self):
        with pytest.raises(DomainError, match="sum to 1"):
            ParticleEnsemble(np.zeros((2, 2)), np.zeros((2, 2)), np.array([0.5, 0.6]), 0.1, 0.1, PLANE)

    def test_negative_weight(self):
        with pytest.raises(DomainError):
            ParticleEnsemble(np.zeros((2, 2)), np.zeros((2, 2)), np.array([1.5, -0.5]), 0.1, 0.1, PLANE)

    def test_torus_positions_in_cell(self):
        """Torus positions outside [0, side) are rejected."""
        with pytest.raises(DomainError):
            ParticleEnsemble(np.array([[1.0, 0.2], [0.1, 0.1]]), np.zeros((2, 2)), np.full(2, 0.5), 0.1, 0.1, TORUS)

    def test_arrays_are_read_only(self, torus_ensemble):
        with pytest.raises(ValueError):
            torus_ensemble.velocities[0, 0] = 1.0

    def test_with_state_keeps_weights(self, torus_ensemble):
        moved = torus_ensemble.with_state(torus_ensemble.positions, 2 * torus_ensemble.velocities)
        assert np.array_equal(moved.weights, torus_ensemble.weights)
        assert moved.energy == pytest.approx(4 * torus_ensemble.energy)


class TestSampling:
    """Seeded initial conditions."""

    def test_same_seed_same_sample(self):
        a = sample_initial("maxwellian", 32, seed=3)
        b = sample_initial("maxwellian", 32, seed=3)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.velocities, b.velocities)

    def test_different_seed(self):
        a = sample_initial("maxwellian", 32, seed=3)
        b = sample_initial("maxwellian", 32, seed=4)
        assert not np.array_equal(a.velocities, b.velocities)

    def test_equal_weights_and_torus_cell(self):
        e = sample_initial("two-bump", 50, seed=0, domain=Domain("torus", 2.0), perturbation=0.5)
        assert e.mass == pytest.approx(1.0, abs=1e-12)
        assert np.all(e.weights == 1 / 50)
        assert np.all((e.positions >= 0) & (e.positions < 2.0))

    def test_anisotropic_temperatures(self):
        """Per-axis variances follow the configured temperatures."""
        e = sample_initial("anisotropic-gaussian", 4000, seed=1, temperatures=[2.0, 1.0])
        cov = e.covariance()
        assert cov[0, 0] == pytest.approx(2.0, rel=0.1)
        assert cov[1, 1] == pytest.approx(1.0, rel=0.1)

    def test_anisotropic_needs_d_temperatures(self):
        with pytest.raises(DomainError):
            sample_initial("anisotropic-gaussian", 10, seed=1, temperatures=[2.0])

    def test_unknown_condition(self):
        with pytest.raises(ConfigError, match="two-bump"):
            sample_initial("shell", 10, seed=0)

    def test_default_width(self):
        """c * N^(-1/(2d+2)): 0.8 * 64^(-1/6) = 0.4."""
        assert default_width(64, 2) == pytest.approx(0.4)


# ==============================
# Reconstruction and scores
# ==============================

class TestBlobReconstruction:
    """Density, analytic score and entropy-gradient score."""

    def test_density_positive(self, plane_ensemble):
        values = density_at(plane_ensemble, plane_ensemble.positions, plane_ensemble.velocities)
        assert values.shape == (plane_ensemble.n,)
        assert np.all(values > 0)

    def test_site_densities_match_pointwise(self, plane_ensemble, engine):
        sites = site_densities(plane_ensemble, engine)
        points = density_at(plane_ensemble, plane_ensemble.positions, plane_ensemble.velocities)
        assert np.allclose(sites, points, rtol=1e-13)

    def test_analytic_score_matches_finite_difference(self, plane_ensemble):
        x, v = np.array([0.1, -0.2]), np.array([0.3, 0.4])
        gx, gv = score_at(plane_ensemble, x, v)
        h = 1e-6
        for axis in range(2):
            step = h * np.eye(2)[axis]
            fd_x = (np.log(density_at(plane_ensemble, x + step, v)) - np.log(density_at(plane_ensemble, x - step, v))) / (2 * h)
            fd_v = (np.log(density_at(plane_ensemble, x, v + step)) - np.log(density_at(plane_ensemble, x, v - step))) / (2 * h)
            assert gx[axis] == pytest.approx(fd_x, rel=1e-5, abs=1e-7)
            assert gv[axis] == pytest.approx(fd_v, rel=1e-5, abs=1e-7)

    def test_blob_score_is_entropy_gradient(self, plane_ensemble, engine):
        """score_v[k] = (dH/dv_k) / w_k for the particle entropy."""
        e = plane_ensemble
        state = blob_state(e, engine)
        h = 1e-5
        for k in (0, 7):
            for axis in range(2):
                plus, minus = np.array(e.velocities), np.array(e.velocities)
                plus[k, axis] += h
                minus[k, axis] -= h
                fd = (entropy(e.with_state(e.positions, plus), engine=engine)
                      - entropy(e.with_state(e.positions, minus), engine=engine)) / (2 * h)
                assert state.score_v[k, axis] == pytest.approx(fd / e.weights[k], rel=1e-5, abs=1e-6)

    def test_site_score_is_analytic_score(self, plane_ensemble, engine):
        state = blob_state(plane_ensemble, engine)
        gx, gv = score_at(plane_ensemble, plane_ensemble.positions, plane_ensemble.velocities)
        assert np.allclose(state.site_score_x, gx, rtol=1e-12, atol=1e-12)
        assert np.allclose(state.site_score_v, gv, rtol=1e-12, atol=1e-12)

    def test_blob_score_has_zero_mean(self, torus_ensemble, engine):
        """H is translation invariant in v, so sum_k w_k score_v[k] = 0."""
        state = blob_state(torus_ensemble, engine)
        scale = np.sum(torus_ensemble.weights * np.linalg.norm(state.score_v, axis=1))
        assert np.max(np.abs(torus_ensemble.weights @ state.score_v)) < 1e-12 * scale


# ==============================
# Moments, norms and entropy
# ==============================

class TestMomentsAndNorms:

    def test_zero_order_moment(self, torus_ensemble):
        """Each bracket is 1 at order 0, so the moment is 2."""
        assert moment(torus_ensemble, MomentSpec(0, 0)) == pytest.approx(2.0)

    def test_negative_order_rejected(self):
        with pytest.raises(DomainError):
            MomentSpec(-1, 0)

    def test_l1_profile_is_mass(self, plane_ensemble):
        """|| f~ ||_{L^1_v L^1_x} = 1 on a wide grid."""
        plan = QuadraturePlan(mode="grid", v_extent=10.0, v_points=200)
        assert lp_profile(plane_ensemble, 1.0, 0.0, plan) == pytest.approx(1.0, abs=1e-4)

    def test_lp_needs_p_at_least_one(self, plane_ensemble):
        plan = QuadraturePlan(mode="grid", v_extent=4.0, v_points=10)
        with pytest.raises(DomainError):
            lp_profile(plane_ensemble, 0.5, 0.0, plan)

    def test_unset_grid(self, plane_ensemble):
        with pytest.raises(ConfigError, match="quadrature.v_points"):
            lp_profile(plane_ensemble, 2.0, 0.0, QuadraturePlan())

    def test_particle_entropy(self, torus_ensemble, engine):
        """The particle quadrature is sum_i w_i log f~(z_i)."""
        dens = site_densities(torus_ensemble, engine)
        assert entropy(torus_ensemble, engine=engine) == pytest.approx(float(torus_ensemble.weights @ np.log(dens)))
