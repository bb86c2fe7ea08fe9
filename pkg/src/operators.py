"""
The fuzzy gradient, its adjoint divergence, the collision field and free transport.

    grad~ phi(x, v, x*, v*) = sqrt(A(v - v*)) Pi_{(v - v*)perp} (grad_v phi(x, v) - grad_v phi(x*, v*))

The divergence is defined as the exact discrete adjoint of grad~ under the
particle pair quadrature.
"""
import logging

import numpy as np

from .ensemble import BlobState, ParticleEnsemble, blob_state
from .errors import ContractError
from .fields import ScalarField
from .kernels import KernelSet
from .pairs import PairBlock, PairEngine
from .rates import GrazingRate, PairField

logger = logging.getLogger(__name__)


def fuzzy_gradient(phi: ScalarField, x, v, x_star, v_star, k: KernelSet) -> np.ndarray:
    x, v = np.asarray(x, dtype=float), np.asarray(v, dtype=float)
    x_star, v_star = np.asarray(x_star, dtype=float), np.asarray(v_star, dtype=float)
    z = v - v_star
    r2 = np.sum(z * z, axis=-1)
    diff = phi.grad_v(x, v) - phi.grad_v(x_star, v_star)
    moving = r2 > 0
    root = np.where(moving, np.sqrt(k.weight_from_r2(np.where(moving, r2, 1.0))), 0.0)
    return root[..., None] * k.project_perp(z, diff, r2)


def _block(e: ParticleEnsemble, k: KernelSet, rows: slice) -> PairBlock:
    return PairBlock(e.positions, e.velocities, e.weights, rows, k)


def weak_divergence_pairing(phi: ScalarField, B: PairField, e: ParticleEnsemble, k: KernelSet,
                            engine: PairEngine | None = None) -> float:
    """sum_{i != j} w_i w_j grad~ phi(i, j) . B(i, j)."""
    engine = engine or PairEngine()
    _, grad_v = phi.site_gradients(e)

    def block(rows: slice) -> float:
        pb = _block(e, k, rows)
        pairing = np.sum(pb.fuzzy(grad_v) * B.on_block(pb, e), axis=-1)
        return float(np.sum(pb.pair_mass * pairing))

    return float(engine.reduce(block, e.n))


def divergence_flux(B: PairField, e: ParticleEnsemble, k: KernelSet,
                    engine: PairEngine | None = None) -> np.ndarray:
    """G_i = sum_j w_j sqrt(A) Pi (B(i, j) - B(j, i)), the particle form of grad~ . B."""
    engine = engine or PairEngine()

    def block(rows: slice) -> np.ndarray:
        pb = _block(e, k, rows)
        jump = B.on_block(pb, e) - B.on_block(pb, e, swapped=True)
        term = (pb.inner * pb.sqrt_weight)[..., None] * pb.project(jump)
        return np.sum(term, axis=1)

    return engine.map_rows(block, e.n)


def divergence_pairing(phi: ScalarField, B: PairField, e: ParticleEnsemble, k: KernelSet,
                       engine: PairEngine | None = None) -> float:
    """<phi, grad~ . B> = -sum_i w_i grad_v phi_i . G_i."""
    _, grad_v = phi.site_gradients(e)
    flux = divergence_flux(B, e, k, engine)
    return float(-np.sum(e.weights * np.sum(grad_v * flux, axis=1)))


def landau_velocity_field(e: ParticleEnsemble, k: KernelSet, engine: PairEngine | None = None,
                          state: BlobState | None = None) -> np.ndarray:
    """v'_i = -sum_{j != i} w_j kappa A Pi (s_i - s_j) with s the entropy-gradient score."""
    if e.n < 2:
        raise ContractError(f"the collision field needs N >= 2, got {e.n}")
    engine = engine or PairEngine()
    state = state if state is not None else blob_state(e, engine)

    def block(rows: slice) -> np.ndarray:
        pb = _block(e, k, rows)
        coef = pb.inner * pb.kappa * pb.weight
        return -np.sum(coef[..., None] * pb.project(pb.difference(state.score_v)), axis=1)

    return engine.map_rows(block, e.n)


def transport_field(e: ParticleEnsemble) -> np.ndarray:
    return np.array(e.velocities)


def grazing_divergence_field(e: ParticleEnsemble, U: GrazingRate, k: KernelSet,
                             engine: PairEngine | None = None,
                             state: BlobState | None = None) -> np.ndarray:
    """
    v'_i = 1/2 sum_j w_j sqrt(A) Pi [U~(i, j) - U~(j, i)], the particle velocity
    whose weak pairing reproduces d/dt int phi f = 1/2 int grad~ phi . U.
    """
    if e.n < 2:
        raise ContractError(f"the grazing field needs N >= 2, got {e.n}")
    engine = engine or PairEngine()
    ctx = U.context(e, engine, state)

    def block(rows: slice) -> np.ndarray:
        pb = _block(e, k, rows)
        jump = U.pair_values(pb, e, ctx) - U.pair_values(pb, e, ctx, swapped=True)
        term = (0.5 * pb.inner * pb.sqrt_weight)[..., None] * pb.project(jump)
        return np.sum(term, axis=1)

    return engine.map_rows(block, e.n)
