"""
Grazing rates U(x, v, x*, v*) on particle pairs.

Rates are handled in pair-normalized form U~ = U / (f~ f~*), the quantity
the particle quadrature of every pair integral needs.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .ensemble import BlobState, ParticleEnsemble, blob_state
from .errors import ConfigError, NumericError
from .pairs import PairBlock, PairEngine

logger = logging.getLogger(__name__)

RATE_KINDS = ("landau", "zero", "pair-field", "perturbed-landau")
DENSITY_FLOOR = 1e-300


@dataclass(frozen=True)
class PairField:
    """
    A pairwise field B(x, v, x*, v*) in R^d.

    The evaluator receives broadcastable arrays of shape (..., d) and returns
    an array of the broadcast shape.
    """

    evaluator: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    symmetry_tag: str = "none"

    def __post_init__(self):
        if self.symmetry_tag not in ("antisymmetric-under-swap", "none"):
            raise ConfigError(f"unknown symmetry tag '{self.symmetry_tag}'",
                              accepted=["antisymmetric-under-swap", "none"])

    def on_block(self, pb: PairBlock, e: ParticleEnsemble, swapped: bool = False) -> np.ndarray:
        xi, vi = e.positions[pb.rows, None, :], e.velocities[pb.rows, None, :]
        xj, vj = e.positions[None, :, :], e.velocities[None, :, :]
        if swapped:
            out = self.evaluator(xj, vj, xi, vi)
        else:
            out = self.evaluator(xi, vi, xj, vj)
        out = np.broadcast_to(np.asarray(out, dtype=float), pb.dv.shape)
        if not np.all(np.isfinite(out)):
            raise NumericError("pair field returned non-finite values")
        return out


@lru_cache(maxsize=4)
def pair_noise(seed: int, n: int, d: int) -> np.ndarray:
    """Fixed Gaussian field eta_ij for the perturbed Landau rate."""
    if n * n * d > 50_000_000:
        logger.warning("perturbation field holds %d entries", n * n * d)
    eta = np.random.Generator(np.random.Philox(seed)).standard_normal((n, n, d))
    eta.setflags(write=False)
    return eta


@dataclass(frozen=True)
class RateContext:
    state: BlobState
    noise: np.ndarray | None = None


@dataclass(frozen=True)
class GrazingRate:
    """
    landau:            U~ = -kappa grad~ log f~ (the dissipative rate)
    zero:              U~ = 0
    pair-field:        U~ = B / (f~ f~*) for a density-form PairField B
    perturbed-landau:  U~ = landau + amplitude * kappa sqrt(A) Pi eta_ij
    Every kind is multiplied by scale.
    """

    kind: str = "landau"
    field: PairField | None = None
    amplitude: float = 0.0
    seed: int = 0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ConfigError(f"unknown rate '{self.kind}'", "rate", list(RATE_KINDS))
        if self.kind == "pair-field" and self.field is None:
            raise ConfigError("a pair-field rate needs a PairField", "rate")

    @classmethod
    def landau(cls) -> "GrazingRate":
        return cls("landau")

    @classmethod
    def zero(cls) -> "GrazingRate":
        return cls("zero")

    @classmethod
    def perturbed(cls, amplitude: float, seed: int) -> "GrazingRate":
        return cls("perturbed-landau", amplitude=amplitude, seed=seed)

    @classmethod
    def from_field(cls, pair_field: PairField) -> "GrazingRate":
        return cls("pair-field", field=pair_field)

    def scaled(self, r: float) -> "GrazingRate":
        return GrazingRate(self.kind, self.field, self.amplitude, self.seed, self.scale * r)

    @property
    def is_landau(self) -> bool:
        return self.kind == "landau" and self.scale == 1.0

    def context(self, e: ParticleEnsemble, engine: PairEngine, state: BlobState | None = None) -> RateContext:
        state = state if state is not None else blob_state(e, engine)
        noise = pair_noise(self.seed, e.n, e.dim) if self.kind == "perturbed-landau" else None
        if self.kind == "pair-field" and np.min(state.densities) < DENSITY_FLOOR:
            raise NumericError("reconstructed density vanishes below 1e-300 on a particle")
        return RateContext(state=state, noise=noise)

    def pair_values(self, pb: PairBlock, e: ParticleEnsemble, ctx: RateContext,
                    swapped: bool = False) -> np.ndarray:
        """U~(i, j) for i in the block, or U~(j, i) when swapped."""
        if self.kind == "zero":
            return np.zeros_like(pb.dv)
        if self.kind == "pair-field":
            dens = ctx.state.densities
            values = self.field.on_block(pb, e, swapped) / (dens[pb.rows, None] * dens[None, :])[..., None]
            return self.scale * values
        landau = -pb.kappa[..., None] * pb.fuzzy(ctx.state.score_v)
        if swapped:
            landau = -landau
        if self.kind == "perturbed-landau":
            eta = ctx.noise[:, pb.rows, :].transpose(1, 0, 2) if swapped else ctx.noise[pb.rows]
            landau = landau + self.amplitude * (pb.kappa * pb.sqrt_weight)[..., None] * pb.project(eta)
        return landau if self.scale == 1.0 else self.scale * landau
