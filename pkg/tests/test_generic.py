"""
Tests for the Hamiltonian and dissipative brackets.

Run with: pytest tests/test_generic.py -v
"""
import numpy as np
import pytest

from src.ensemble import sample_initial
from src.errors import ContractError
from src.fields import EntropyField, ScalarField, energy_field
from src.generic import BracketProbe, L_form, M_form, energy_production, generic_rhs, verify_generic
from src.kernels import Domain, KernelSet
from src.operators import landau_velocity_field

from conftest import PLANE, TORUS

PROBES = ["1", "v1", "v1^2", "v1*v2 + 0.5*v2^2", "v1^3 ; gauss=2", "v2 ; wave=1,0"]


def _probes(dim=2):
    return [ScalarField.parse(text, dim) for text in PROBES]


class TestBrackets:
    """Pairings of single probe pairs."""

    def test_m_is_symmetric(self, torus_ensemble, torus_kernel, engine):
        g, h = ScalarField.parse("v1^3", 2), ScalarField.parse("v1*v2 ; gauss=1.5", 2)
        gh = M_form(BracketProbe(g, h, torus_ensemble, torus_kernel), engine)
        hg = M_form(BracketProbe(h, g, torus_ensemble, torus_kernel), engine)
        assert gh == pytest.approx(hg, rel=1e-12)

    def test_energy_is_a_casimir_of_m(self, torus_ensemble, torus_kernel, engine):
        """M dE = 0: the energy gradient is in the kernel of grad~."""
        value = M_form(BracketProbe(energy_field(2), ScalarField.parse("v1^3", 2), torus_ensemble, torus_kernel),
                       engine)
        assert value == 0.0

    def test_l_of_energy_is_transport(self, plane_ensemble, plane_kernel):
        """<L dE, x1> = sum_i w_i v_i1."""
        probe = BracketProbe(energy_field(2), ScalarField.parse("x1", 2), plane_ensemble, plane_kernel)
        assert L_form(probe) == pytest.approx(plane_ensemble.momentum[0], abs=1e-15)

    def test_l_is_antisymmetric(self, plane_ensemble, plane_kernel):
        g, h = ScalarField.parse("x1*v2", 2), ScalarField.parse("x2^2 + v1", 2)
        gh = L_form(BracketProbe(g, h, plane_ensemble, plane_kernel))
        hg = L_form(BracketProbe(h, g, plane_ensemble, plane_kernel))
        assert gh == pytest.approx(-hg, rel=1e-12)

    def test_entropy_probe(self, torus_ensemble, torus_kernel, engine):
        """M dS with the blob entropy pairs to the dissipation."""
        S = EntropyField()
        value = M_form(BracketProbe(S, S, torus_ensemble, torus_kernel), engine)
        assert value > 0

    def test_generic_rhs(self, torus_ensemble, torus_kernel, engine):
        xdot, vdot = generic_rhs(torus_ensemble, torus_kernel, engine)
        assert np.array_equal(xdot, torus_ensemble.velocities)
        assert np.array_equal(vdot, landau_velocity_field(torus_ensemble, torus_kernel, engine))

    def test_energy_production_vanishes(self, torus_ensemble, torus_kernel, engine):
        value, scale = energy_production(torus_ensemble, torus_kernel, engine)
        assert abs(value) <= 1e-13 * scale


class TestVerifyGeneric:
    """The full bracket check suite."""

    @pytest.mark.parametrize("gamma,domain", [(0.0, TORUS), (-1.0, TORUS), (1.0, PLANE)])
    def test_default_probes_pass(self, gamma, domain, engine):
        e = sample_initial("two-bump", 20, seed=9, domain=domain)
        k = KernelSet.build(2, gamma, domain=domain)
        report = verify_generic(e, k, _probes(), 1e-10, engine)
        assert report.passed, report.summary()["failed"]
        names = [c.name for c in report.checks]
        assert "a(z) z = 0" in names
        assert "entropy production >= 0" in names
        assert any(n.startswith("L dS = 0") for n in names)

    def test_entropy_check_is_report_only(self, torus_ensemble, torus_kernel, engine):
        report = verify_generic(torus_ensemble, torus_kernel, _probes(), 1e-10, engine)
        assert all(not c.enforced for c in report.checks if c.name.startswith("L dS = 0"))

    def test_three_dimensions(self, engine):
        e = sample_initial("maxwellian", 12, seed=2, dim=3, domain=Domain("torus", 1.0))
        k = KernelSet.build(3, -1.0, domain=Domain("torus", 1.0))
        probes = [ScalarField.parse(t, 3) for t in ("v1", "v2*v3", "v3^2 ; gauss=1")]
        assert verify_generic(e, k, probes, 1e-10, engine).passed

    def test_flipped_projection_fails(self, torus_ensemble, engine):
        """Fault injection: Pi -> Id + zz^T/|z|^2 breaks the degeneracy checks."""
        k = KernelSet.build(2, 0.0, domain=TORUS, flip_projection=True)
        report = verify_generic(torus_ensemble, k, _probes(), 1e-10, engine)
        assert not report.passed
        failed = report.summary()["failed"]
        assert "a(z) z = 0" in failed
        assert any(name.startswith("M dE = 0") for name in failed)

    def test_needs_three_probes(self, torus_ensemble, torus_kernel):
        with pytest.raises(ContractError, match="at least 3"):
            verify_generic(torus_ensemble, torus_kernel, _probes()[:2])
