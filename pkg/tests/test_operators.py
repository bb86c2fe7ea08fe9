"""
Tests for the fuzzy gradient, its adjoint and the particle velocity fields.

Run with: pytest tests/test_operators.py -v
"""
import numpy as np
import pytest

from src.errors import ContractError
from src.fields import ScalarField, energy_field
from src.kernels import KernelSet
from src.operators import (divergence_pairing, fuzzy_gradient, grazing_divergence_field, landau_velocity_field,
                           transport_field, weak_divergence_pairing)
from src.pairs import PairEngine, tree_sum
from src.rates import GrazingRate, PairField

from conftest import single_particle


def _pair_points(n=12, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (n, 2)), rng.standard_normal((n, 2)), rng.uniform(0, 1, (n, 2)), rng.standard_normal((n, 2))


class TestFuzzyGradient:
    """grad~ phi = sqrt(A) Pi (grad_v phi - grad_v phi*)."""

    def test_energy_is_in_the_kernel(self):
        """grad_v E differs by z across a pair and Pi z = 0."""
        x, v, xs, vs = _pair_points()
        g = fuzzy_gradient(energy_field(2), x, v, xs, vs, KernelSet(dim=2, gamma=0.0))
        assert np.max(np.abs(g)) < 1e-13

    def test_antisymmetric_under_swap(self):
        phi = ScalarField.parse("v1^3 + x1*v2", 2)
        k = KernelSet(dim=2, gamma=-1.0)
        x, v, xs, vs = _pair_points()
        assert np.allclose(fuzzy_gradient(phi, x, v, xs, vs, k), -fuzzy_gradient(phi, xs, vs, x, v, k))

    def test_orthogonal_to_velocity_difference(self):
        phi = ScalarField.parse("v1^2*v2 ; gauss=1.2", 2)
        x, v, xs, vs = _pair_points()
        g = fuzzy_gradient(phi, x, v, xs, vs, KernelSet(dim=2, gamma=1.0))
        assert np.max(np.abs(np.sum(g * (v - vs), axis=1))) < 1e-12

    def test_zero_on_the_diagonal(self):
        x, v, _, _ = _pair_points()
        g = fuzzy_gradient(ScalarField.parse("v1^3", 2), x, v, x, v, KernelSet(dim=2, gamma=0.0))
        assert np.all(g == 0.0)


class TestDivergence:
    """The divergence is the discrete adjoint of grad~."""

    def test_adjoint_identity(self, torus_ensemble, torus_kernel, engine):
        B = PairField(lambda x, v, xs, vs: v * vs[..., :1] + np.sin(2 * np.pi * xs) - 0.3 * v ** 2)
        phi = ScalarField.parse("v1^2*v2 + 0.5*v2 ; wave=1,0", 2)
        weak = weak_divergence_pairing(phi, B, torus_ensemble, torus_kernel, engine)
        strong = divergence_pairing(phi, B, torus_ensemble, torus_kernel, engine)
        assert strong == pytest.approx(-weak, rel=1e-11)

    def test_unknown_symmetry_tag(self):
        with pytest.raises(Exception, match="symmetry"):
            PairField(lambda x, v, xs, vs: v, symmetry_tag="odd")


class TestVelocityFields:
    """Collision and grazing fields conserve momentum and energy."""

    def test_landau_field_conserves(self, torus_ensemble, torus_kernel, engine):
        e = torus_ensemble
        vdot = landau_velocity_field(e, torus_kernel, engine)
        scale = np.sum(e.weights * np.linalg.norm(vdot, axis=1) * (1 + np.linalg.norm(e.velocities, axis=1)))
        assert np.max(np.abs(e.weights @ vdot)) < 1e-13 * scale
        assert abs(e.weights @ np.sum(e.velocities * vdot, axis=1)) < 1e-13 * scale

    def test_grazing_field_of_landau_rate_is_collision_field(self, torus_ensemble, torus_kernel, engine):
        collision = landau_velocity_field(torus_ensemble, torus_kernel, engine)
        grazing = grazing_divergence_field(torus_ensemble, GrazingRate.landau(), torus_kernel, engine)
        assert np.allclose(grazing, collision, rtol=1e-10, atol=1e-12 * np.max(np.abs(collision)))

    def test_perturbed_rate_conserves(self, torus_ensemble, torus_kernel, engine):
        e = torus_ensemble
        vdot = grazing_divergence_field(e, GrazingRate.perturbed(0.5, seed=7), torus_kernel, engine)
        scale = np.sum(e.weights * np.linalg.norm(vdot, axis=1) * (1 + np.linalg.norm(e.velocities, axis=1)))
        assert np.max(np.abs(e.weights @ vdot)) < 1e-13 * scale
        assert abs(e.weights @ np.sum(e.velocities * vdot, axis=1)) < 1e-13 * scale

    def test_zero_rate_gives_free_transport(self, torus_ensemble, torus_kernel, engine):
        vdot = grazing_divergence_field(torus_ensemble, GrazingRate.zero(), torus_kernel, engine)
        assert np.all(vdot == 0.0)
        assert np.array_equal(transport_field(torus_ensemble), torus_ensemble.velocities)

    def test_single_particle_is_rejected(self, torus_kernel):
        with pytest.raises(ContractError):
            landau_velocity_field(single_particle(), torus_kernel)

    def test_thread_count_does_not_change_bits(self, torus_ensemble, torus_kernel):
        """Fixed blocks and ordered merges make the field independent of the worker count."""
        with PairEngine(1, block_size=5) as serial, PairEngine(3, block_size=5) as threaded:
            a = landau_velocity_field(torus_ensemble, torus_kernel, serial)
            b = landau_velocity_field(torus_ensemble, torus_kernel, threaded)
        assert np.array_equal(a, b)


def test_tree_sum_order():
    """Pairwise association ((a+b)+(c+d))+e."""
    parts = [1e16, 1.0, -1e16, 1.0, 3.0]
    assert tree_sum(list(parts)) == ((parts[0] + parts[1]) + (parts[2] + parts[3])) + parts[4]
    assert tree_sum([]) == 0.0
