"""
Tests for dissipation, action, the trajectory functionals and the
convolution profile.

Run with: pytest tests/test_functionals.py -v
"""
import numpy as np
import pytest

from src.ensemble import sample_initial
from src.errors import ConfigError, ContractError, DomainError
from src.fields import TimeDependentField
from src.functionals import (FunctionalSample, RunningFunctionals, accumulate, action, alpha, chain_rule_residual,
                             dissipation, evaluate_sample, fisher_terms, grazing_integrability, reverse_trajectory,
                             tolerance_budget, variational_J, velocity_convolution_profile, weak_form_residual)
from src.kernels import Domain, KernelSet
from src.pairs import PairEngine
from src.rates import GrazingRate

from conftest import PLANE, TORUS


def _sample(t, H=0.0, D=0.0, A=0.0, chain=0.0, defect=0.0):
    return FunctionalSample(t=t, H=H, D=D, A=A, chain=chain, defect=defect, lhs=0.0, moment=0.0)


class TestAlpha:
    """alpha(s, u) = |u|^2 / 2s."""

    def test_values(self):
        assert alpha(2.0, 3.0) == pytest.approx(2.25)
        assert alpha(np.array(2.0), np.array([3.0, 4.0])) == pytest.approx(6.25)

    def test_boundary_convention(self):
        assert alpha(0.0, 0.0) == 0.0
        assert alpha(0.0, 1.0) == np.inf

    def test_negative_s(self):
        with pytest.raises(DomainError):
            alpha(-1.0, 0.0)

    @pytest.mark.parametrize("r", [0.5, 2.0, 7.0])
    def test_one_homogeneous(self, r):
        rng = np.random.default_rng(3)
        s = rng.uniform(0.1, 2.0, size=40)
        u = rng.standard_normal((40, 2))
        assert np.allclose(alpha(r * s, r * u), r * alpha(s, u), rtol=1e-14, atol=0.0)

    def test_convex(self):
        """alpha(l p + (1 - l) q) <= l alpha(p) + (1 - l) alpha(q)."""
        rng = np.random.default_rng(8)
        s1, s2 = rng.uniform(0.05, 3.0, size=(2, 200))
        u1, u2 = rng.standard_normal((2, 200, 3))
        lam = rng.uniform(0.0, 1.0, size=200)
        mixed = alpha(lam * s1 + (1 - lam) * s2, lam[:, None] * u1 + (1 - lam[:, None]) * u2)
        chord = lam * alpha(s1, u1) + (1 - lam) * alpha(s2, u2)
        assert np.all(mixed <= chord * (1 + 1e-12))


class TestToleranceBudget:
    """factor * (h^2 + N^(-1/2)) by default."""

    def test_default_sampling_term(self):
        assert tolerance_budget(0.1, 100) == pytest.approx(10.0 * (0.01 + 0.1))
        assert tolerance_budget(0.0, 1024, factor=1.0) == pytest.approx(1.0 / 32.0)

    def test_inverse_sampling_term(self):
        assert tolerance_budget(0.1, 100, sampling="inverse") == pytest.approx(0.2)
        assert tolerance_budget(0.0, 1000, factor=1.0, sampling="inverse") == pytest.approx(1e-3)

    def test_unknown_sampling_term(self):
        with pytest.raises(ConfigError) as info:
            tolerance_budget(0.1, 100, sampling="log")
        assert info.value.key == "tolerance.sampling"


# ==============================
# Instantaneous functionals
# ==============================

class TestDissipation:
    """The three forms of D and the action identity."""

    @pytest.mark.parametrize("gamma,variant", [(-1.5, "coulomb-power"), (-1.0, "coulomb-power"),
                                               (0.0, "coulomb-power"), (1.0, "coulomb-power"),
                                               (-3.0, "generalized-hard")])
    def test_forms_agree(self, gamma, variant, engine):
        for seed in range(3):
            e = sample_initial("two-bump", 20, seed=seed, domain=TORUS)
            k = KernelSet.build(2, gamma, variant=variant, domain=TORUS)
            forms = [dissipation(e, k, form, engine) for form in ("grad-log", "cross-product", "sqrt-form")]
            assert forms[0] > 0
            assert forms[1] == pytest.approx(forms[0], rel=1e-10)
            assert forms[2] == pytest.approx(forms[0], rel=1e-10)

    def test_action_of_landau_rate_is_dissipation(self, torus_ensemble, torus_kernel, engine):
        D = dissipation(torus_ensemble, torus_kernel, engine=engine)
        assert action(torus_ensemble, GrazingRate.landau(), torus_kernel, engine) == pytest.approx(D, rel=1e-10)

    def test_action_of_zero_rate(self, torus_ensemble, torus_kernel, engine):
        assert action(torus_ensemble, GrazingRate.zero(), torus_kernel, engine) == 0.0

    @pytest.mark.parametrize("r", [0.5, 2.0, 7.0])
    def test_action_is_quadratic_in_the_rate(self, r, torus_ensemble, torus_kernel, engine):
        U = GrazingRate.perturbed(0.5, 7)
        base = action(torus_ensemble, U, torus_kernel, engine)
        assert action(torus_ensemble, U.scaled(r), torus_kernel, engine) == pytest.approx(r * r * base, rel=1e-12)

    def test_unknown_form(self, torus_ensemble, torus_kernel):
        with pytest.raises(DomainError):
            dissipation(torus_ensemble, torus_kernel, form="log-sqrt")

    def test_fisher_terms_nonnegative(self, plane_ensemble, plane_kernel, engine):
        fisher, cross = fisher_terms(plane_ensemble, plane_kernel, engine=engine)
        assert fisher > 0
        assert cross >= 0


class TestEvaluateSample:
    """One pair pass yields every integrand."""

    def test_matches_standalone_functionals(self, torus_ensemble, torus_kernel, engine):
        s = evaluate_sample(0.0, torus_ensemble, torus_kernel, GrazingRate.landau(), engine)
        D = dissipation(torus_ensemble, torus_kernel, engine=engine)
        assert s.D == pytest.approx(D, rel=1e-11)
        assert s.A == pytest.approx(D, rel=1e-10)
        assert s.chain == pytest.approx(-D, rel=1e-10)

    def test_perturbed_rate_is_off_the_optimum(self, torus_ensemble, torus_kernel, engine):
        """chain + D/2 + A/2 = 1/4 sum w w |sqrt(kappa) g + U~/sqrt(kappa)|^2 > 0 away from the Landau rate."""
        s = evaluate_sample(0.0, torus_ensemble, torus_kernel, GrazingRate.perturbed(0.5, 7), engine)
        assert s.chain + 0.5 * s.D + 0.5 * s.A > 1e-6 * s.D

    def test_weak_flux_of_mass_is_zero(self, torus_ensemble, torus_kernel, engine):
        probe = TimeDependentField.parse("1", 2)
        s = evaluate_sample(0.0, torus_ensemble, torus_kernel, GrazingRate.landau(), engine, probes=[probe])
        assert s.weak["1"] == pytest.approx((1.0, 0.0), abs=1e-14)


# ==============================
# Running accumulation
# ==============================

class TestRunningFunctionals:
    """Trapezoid integration of the sampled integrands."""

    def test_trapezoid(self):
        running = RunningFunctionals()
        running.add(_sample(0.0, H=1.0, D=1.0, A=1.0, chain=-1.0))
        running.add(_sample(1.0, H=0.0, D=3.0, A=1.0, chain=-1.0, defect=0.5))
        assert running.int_D == pytest.approx(2.0)
        assert running.int_defect == pytest.approx(0.25)
        assert running.entropy_change == pytest.approx(-1.0)
        assert running.j_running == pytest.approx(-1.0 + 1.0 + 0.5)
        assert running.chain_residual == pytest.approx(-1.0 + 1.0)

    def test_defect_corrected_values(self):
        """The corrected J and chain residual subtract int defect from H(T) - H(0)."""
        running = RunningFunctionals()
        running.add(_sample(0.0, H=1.0, D=1.0, A=1.0, chain=-1.0))
        running.add(_sample(1.0, H=0.0, D=3.0, A=1.0, chain=-1.0, defect=0.5))
        assert running.net_entropy_change == pytest.approx(-1.25)
        assert running.j_corrected == pytest.approx(running.j_running - 0.25)
        assert running.chain_corrected == pytest.approx(running.chain_residual - 0.25)

    def test_single_sample_has_zero_integrals(self):
        running = RunningFunctionals()
        running.add(_sample(0.0, H=2.0, D=1.0, A=1.0))
        assert running.j_running == 0.0
        assert running.chain_residual == 0.0
        assert running.last.H == 2.0

    def test_non_monotone_times(self):
        running = RunningFunctionals()
        running.add(_sample(1.0))
        with pytest.raises(ContractError, match="non-monotone"):
            running.add(_sample(1.0))

    def test_entropy_rise_is_recorded(self):
        """H may not increase beyond the per-step budget times D."""
        running = RunningFunctionals()
        running.add(_sample(0.0, H=0.0, D=1.0), step_budget=0.01)
        running.add(_sample(0.1, H=0.5, D=1.0), step_budget=0.01)
        assert running.h_violation == pytest.approx(0.49)

    def test_integrability_constant(self, torus_kernel):
        running = RunningFunctionals()
        running.add(_sample(0.0))
        report = running.integrability(torus_kernel)
        assert report.constant == pytest.approx(4.0 * torus_kernel.kappa_max ** 0.5)
        assert report.holds


# ==============================
# Trajectory functionals
# ==============================

class TestTrajectoryFunctionals:
    """J, chain and weak residuals on explicit snapshot lists."""

    def test_need_two_snapshots(self, torus_ensemble, torus_kernel):
        with pytest.raises(ContractError):
            variational_J([(0.0, torus_ensemble)], GrazingRate.landau(), torus_kernel)
        with pytest.raises(ContractError):
            chain_rule_residual([(0.0, torus_ensemble)], GrazingRate.landau(), torus_kernel)

    def test_non_monotone_trajectory(self, torus_ensemble, torus_kernel):
        with pytest.raises(ContractError):
            accumulate([(0.5, torus_ensemble), (0.1, torus_ensemble)], GrazingRate.landau(), torus_kernel)

    def test_weak_form_needs_initial_time(self, torus_ensemble, torus_kernel):
        phi = TimeDependentField.parse("v1", 2)
        with pytest.raises(ContractError, match="t=0"):
            weak_form_residual([(0.2, torus_ensemble), (0.4, torus_ensemble)], phi, torus_kernel)

    def test_weak_form_rejects_non_periodic_probe(self, torus_ensemble, torus_kernel):
        phi = TimeDependentField.parse("x1*v1", 2)
        with pytest.raises(DomainError, match="periodic"):
            weak_form_residual([(0.0, torus_ensemble), (0.1, torus_ensemble)], phi, torus_kernel)

    def test_static_curve_is_not_a_solution(self, torus_ensemble, torus_kernel):
        """A frozen ensemble keeps H constant and A = D, so J_T = int D."""
        snaps = [(0.0, torus_ensemble), (0.1, torus_ensemble)]
        J = variational_J(snaps, GrazingRate.landau(), torus_kernel)
        D = dissipation(torus_ensemble, torus_kernel)
        running = accumulate(snaps, GrazingRate.landau(), torus_kernel)
        assert J == pytest.approx(0.1 * D, rel=1e-9)
        assert running.j_corrected == pytest.approx(0.1 * D - running.int_defect, rel=1e-9, abs=1e-12 * D)

    def test_reverse_trajectory(self, torus_ensemble):
        moved = torus_ensemble.with_state(torus_ensemble.positions, torus_ensemble.velocities + 1.0)
        reversed_snaps = reverse_trajectory([(0.0, torus_ensemble), (0.3, moved)])
        assert [t for t, _ in reversed_snaps] == [0.0, pytest.approx(0.3)]
        assert np.array_equal(reversed_snaps[0][1].velocities, -moved.velocities)

    def test_integrability_holds_on_static_curve(self, torus_ensemble, torus_kernel):
        report = grazing_integrability([(0.0, torus_ensemble), (0.2, torus_ensemble)], GrazingRate.landau(),
                                       torus_kernel)
        assert report.lhs > 0
        assert report.holds
        assert report.margin > 0
        assert report.very_soft_lhs is None
        assert report.very_soft_bound is None

    def test_integrability_is_homogeneous_in_the_rate(self, torus_ensemble, torus_kernel):
        """Doubling U doubles the left side and sqrt(C_A), so the verdict is unchanged."""
        snaps = [(0.0, torus_ensemble), (0.2, torus_ensemble)]
        base = grazing_integrability(snaps, GrazingRate.landau(), torus_kernel)
        doubled = grazing_integrability(snaps, GrazingRate.landau().scaled(2.0), torus_kernel)
        assert doubled.lhs == pytest.approx(2.0 * base.lhs, rel=1e-12)
        assert doubled.c_action == pytest.approx(4.0 * base.c_action, rel=1e-12)
        assert doubled.c_moment == pytest.approx(base.c_moment, rel=1e-14)
        assert doubled.bound == pytest.approx(2.0 * base.bound, rel=1e-12)
        assert doubled.holds == base.holds


class TestVerySoftIntegrability:
    """|v - v*|^(1+gamma/2) weighted diagnostic, reported for gamma < -2 with a soft core."""

    @pytest.fixture
    def cube(self):
        return sample_initial("maxwellian", 12, seed=6, dim=3, domain=TORUS)

    def _report(self, cube, gamma, eps):
        k = KernelSet.build(3, gamma, kappa="constant", domain=TORUS, soft_core_eps=eps)
        return grazing_integrability([(0.0, cube), (0.1, cube)], GrazingRate.landau(), k), k

    def test_reported_below_cauchy_schwarz_bound(self, cube):
        report, _ = self._report(cube, -2.5, 0.05)
        assert report.very_soft_lhs > 0
        assert report.very_soft_lhs <= report.very_soft_bound * (1 + 1e-12)

    def test_matches_direct_pair_sum(self, cube):
        """A static curve integrates the instantaneous pair sum over the horizon."""
        report, k = self._report(cube, -2.5, 0.05)
        s = evaluate_sample(0.0, cube, k, GrazingRate.landau(), PairEngine())
        assert report.very_soft_lhs == pytest.approx(0.1 * s.soft_lhs, rel=1e-12)
        assert s.soft_moment > 0

    def test_report_only(self, cube):
        """The very-soft line never changes the main verdict."""
        report, _ = self._report(cube, -2.5, 0.05)
        assert report.holds == (report.lhs <= report.bound * (1 + 1e-12))

    def test_absent_without_soft_core(self, cube):
        report, _ = self._report(cube, -2.5, 0.0)
        assert report.very_soft_lhs is None

    def test_absent_for_moderately_soft(self, cube):
        report, _ = self._report(cube, -1.0, 0.05)
        assert report.very_soft_lhs is None


# ==============================
# Velocity convolution profile
# ==============================

class TestConvolutionProfile:

    def test_zero_exponents_give_mass(self):
        e = sample_initial("maxwellian", 8, seed=2, domain=PLANE)
        result = velocity_convolution_profile(e, 0.0, 0.0, [[0.0, 0.0]])
        assert result["max"] == pytest.approx(1.0, abs=1e-4)

    def test_positive_profile(self):
        e = sample_initial("maxwellian", 8, seed=2, domain=Domain("torus", 1.0))
        result = velocity_convolution_profile(e, 1.0, 0.5, [[0.0, 0.0], [1.0, -1.0]])
        assert len(result["values"]) == 2
        assert all(v > 0 for v in result["values"])

    def test_exponent_range(self, plane_ensemble):
        with pytest.raises(DomainError):
            velocity_convolution_profile(plane_ensemble, -2.0, 0.0, [[0.0, 0.0]])
