"""
Tests for the Maxwell-molecule moment oracle.

Run with: pytest tests/test_oracle.py -v
"""
import numpy as np
import pytest

from src.dynamics import IntegratorConfig, run
from src.ensemble import sample_initial
from src.errors import ContractError, DomainError
from src.kernels import KernelSet
from src.oracle import (VelocityMarginal, collision_moment_rate, compare_to_oracle, derive_relaxation_rate,
                        evaluate_oracle, homogeneous_marginal, moment_ode_reference)
from src.pairs import PairEngine

from conftest import SLOW, TORUS


@pytest.fixture
def maxwell_kernel():
    return KernelSet.build(2, 0.0, kappa="constant", domain=TORUS)


class TestRelaxationRate:
    """lambda from Gauss-Hermite moments of the weak collision term."""

    @pytest.mark.parametrize("d", [2, 3])
    def test_rate_is_four_d(self, d):
        assert derive_relaxation_rate(d) == pytest.approx(4.0 * d, rel=1e-10)

    def test_one_dimension_has_no_relaxation(self):
        with pytest.raises(ContractError, match="d >= 2"):
            derive_relaxation_rate(1)

    def test_isotropic_start_is_replaced(self):
        """An isotropic P0 has no deviator to fit against; a sheared one of equal trace is used."""
        assert derive_relaxation_rate(2, np.eye(2)) == pytest.approx(8.0, rel=1e-10)

    def test_rate_is_traceless_and_proportional_to_deviator(self):
        P0 = np.array([[2.0, 0.5], [0.5, 1.0]])
        G = collision_moment_rate(P0)
        dev = P0 - 0.5 * np.trace(P0) * np.eye(2)
        assert np.trace(G) == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(G, -8.0 * dev, atol=1e-10)

    def test_scales_with_kernel_constant(self):
        P0 = np.diag([2.0, 1.0])
        assert np.allclose(collision_moment_rate(P0, c=3.0), 3.0 * collision_moment_rate(P0), atol=1e-12)

    def test_non_spd_covariance(self):
        with pytest.raises(DomainError, match="positive definite"):
            collision_moment_rate(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(DomainError, match="symmetric"):
            collision_moment_rate(np.array([[1.0, 0.5], [0.0, 1.0]]))


# ==============================
# Reference curves
# ==============================

class TestMomentReference:
    """The deviator decays as exp(-lambda c t); the trace stays put."""

    def test_matches_closed_form(self, maxwell_kernel):
        P0 = np.diag([2.0, 1.0])
        times = np.linspace(0.0, 0.25, 6)
        ref = moment_ode_reference(P0, maxwell_kernel, times)
        dev0 = P0 - 1.5 * np.eye(2)
        for t, P in zip(times, ref.tensors):
            expected = dev0 * np.exp(-8.0 * maxwell_kernel.kappa_k1 * t) + 1.5 * np.eye(2)
            assert np.allclose(P, expected, rtol=1e-8, atol=1e-10)
            assert np.trace(P) == pytest.approx(3.0, rel=1e-12)

    def test_dense_lookup(self, maxwell_kernel):
        ref = moment_ode_reference(np.diag([2.0, 1.0]), maxwell_kernel, [0.0, 0.2])
        assert ref.at(0.1)[0, 0] == pytest.approx(1.5 + 0.5 * np.exp(-0.8), rel=1e-8)
        with pytest.raises(ContractError, match="outside"):
            ref.at(0.5)

    def test_frame_columns(self, maxwell_kernel):
        ref = moment_ode_reference(np.diag([2.0, 1.0]), maxwell_kernel, [0.0, 0.1])
        frame = ref.to_frame()
        assert list(frame.columns) == ["t", "P_11", "P_12", "P_21", "P_22"]
        assert len(frame) == 2

    def test_needs_maxwell_molecules(self):
        soft = KernelSet.build(2, -1.0, kappa="constant", domain=TORUS)
        with pytest.raises(ContractError, match="gamma = 0"):
            moment_ode_reference(np.eye(2), soft, [0.0, 0.1])
        exponential = KernelSet.build(2, 0.0, domain=TORUS)
        with pytest.raises(ContractError, match="constant kappa"):
            moment_ode_reference(np.eye(2), exponential, [0.0, 0.1])

    def test_times_must_increase(self, maxwell_kernel):
        with pytest.raises(ContractError):
            moment_ode_reference(np.eye(2), maxwell_kernel, [0.1, 0.1])


# ==============================
# Comparison with particle runs
# ==============================

class TestOracleComparison:

    def test_marginal_keeps_velocity_moments(self, maxwell_kernel):
        e = sample_initial("anisotropic-gaussian", 32, seed=1, domain=TORUS, temperatures=[2.0, 1.0])
        (t, marginal), = homogeneous_marginal([(0.0, e)], maxwell_kernel)
        assert isinstance(marginal, VelocityMarginal)
        assert np.allclose(marginal.covariance(), e.covariance(), rtol=0, atol=1e-14)
        assert marginal.mass == pytest.approx(e.mass)
        assert marginal.energy == pytest.approx(e.energy)

    def test_marginal_needs_constant_kernel(self, torus_ensemble, torus_kernel):
        with pytest.raises(ContractError):
            homogeneous_marginal([(0.0, torus_ensemble)], torus_kernel)

    def test_initial_snapshot_matches_exactly(self, maxwell_kernel):
        e = sample_initial("anisotropic-gaussian", 32, seed=1, domain=TORUS, temperatures=[2.0, 1.0])
        report, reference = evaluate_oracle([(0.0, e)], maxwell_kernel)
        assert report.deviation < 1e-10
        assert report.passed
        assert report.rate == pytest.approx(8.0, rel=1e-10)
        assert reference.horizon == pytest.approx(2.0 / 8.0)

    def test_needs_initial_snapshot(self, maxwell_kernel, torus_ensemble):
        with pytest.raises(ContractError, match="t=0"):
            evaluate_oracle([(0.1, torus_ensemble)], maxwell_kernel)

    def test_frozen_ensemble_drifts_from_reference(self, maxwell_kernel):
        """A curve that never relaxes departs from the reference by |dev0| (1 - exp(-lambda c t))."""
        e = sample_initial("anisotropic-gaussian", 64, seed=2, domain=TORUS, temperatures=[2.0, 1.0])
        ref = moment_ode_reference(e.covariance(), maxwell_kernel, [0.0, 0.25])
        assert compare_to_oracle([(0.0, e), (0.25, e)], ref) > 0.05


@SLOW
def test_particle_run_follows_reference():
    """N = 4096 anisotropic Gaussian, d = 2, rk4 with dt = 2.5e-3 up to 2/(lambda c)."""
    e = sample_initial("anisotropic-gaussian", 4096, seed=0, domain=TORUS, temperatures=[2.0, 1.0])
    k = KernelSet.build(2, 0.0, kappa="constant", domain=TORUS)
    cfg = IntegratorConfig(dt=2.5e-3, t_end=0.25, snapshot_every=10, energy_budget=1e-4)
    with PairEngine(1, 64) as engine:
        traj = run(e, k, cfg, engine=engine)
    report, _ = evaluate_oracle(traj, k, threshold=0.05)
    assert report.passed
    assert report.control_failed
