"""
Dissipative and Hamiltonian brackets on particle ensembles.

    <M g, h> = 1/2 sum_{i != j} w_i w_j kappa grad~ g . grad~ h
    <L g, h> = sum_i w_i (grad_x h . grad_v g - grad_v h . grad_x g)

With E = |v|^2/2 and S the blob entropy, L dE is free transport and
M dS the collision field; verify_generic checks the symmetry, degeneracy
and production identities of the pair (L, M) against a probe set.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .ensemble import BlobState, ParticleEnsemble, blob_state
from .errors import ContractError
from .fields import ScalarField, energy_field
from .kernels import KernelSet
from .operators import landau_velocity_field, transport_field
from .pairs import PairBlock, PairEngine
from .schemas import VerificationReport

logger = logging.getLogger(__name__)

MIN_PROBES = 3


class Probe(Protocol):
    label: str

    def site_gradients(self, e: ParticleEnsemble, k: KernelSet | None = None,
                       engine: PairEngine | None = None) -> tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True)
class BracketProbe:
    """A pair of fields (g, h) to be paired on an ensemble."""

    g: Probe
    h: Probe
    e: ParticleEnsemble
    k: KernelSet

    def gradients(self, engine: PairEngine | None = None):
        return (self.g.site_gradients(self.e, self.k, engine),
                self.h.site_gradients(self.e, self.k, engine))


def _m_pairing(e: ParticleEnsemble, k: KernelSet, gv: np.ndarray, hv: np.ndarray,
               engine: PairEngine) -> tuple[float, float]:
    """(<M g, h>, 1/2 sum w w kappa A |dg| |dh|), the second being the scale of the first."""

    def block(rows: slice) -> np.ndarray:
        pb = PairBlock(e.positions, e.velocities, e.weights, rows, k)
        fg, fh = pb.fuzzy(gv), pb.fuzzy(hv)
        c = 0.5 * pb.pair_mass * pb.kappa
        size = pb.weight * np.linalg.norm(pb.difference(gv), axis=-1) * np.linalg.norm(pb.difference(hv), axis=-1)
        return np.array([np.sum(c * np.sum(fg * fh, axis=-1)), np.sum(c * size)])

    value, scale = engine.reduce(block, e.n)
    return float(value), float(scale)


def M_form(p: BracketProbe, engine: PairEngine | None = None) -> float:
    engine = engine or PairEngine()
    (_, gv), (_, hv) = p.gradients(engine)
    return _m_pairing(p.e, p.k, gv, hv, engine)[0]


def _l_pairing(e: ParticleEnsemble, g_grads, h_grads) -> tuple[float, float]:
    (gx, gv), (hx, hv) = g_grads, h_grads
    w = e.weights
    a = w @ np.sum(hx * gv, axis=1)
    b = w @ np.sum(hv * gx, axis=1)
    scale = w @ (np.linalg.norm(hx, axis=1) * np.linalg.norm(gv, axis=1)
                 + np.linalg.norm(hv, axis=1) * np.linalg.norm(gx, axis=1))
    return float(a - b), float(scale)


def L_form(p: BracketProbe, engine: PairEngine | None = None) -> float:
    """sum_i w_i grad h . J grad g with J = [[0, Id], [-Id, 0]]."""
    return _l_pairing(p.e, *p.gradients(engine))[0]


def generic_rhs(e: ParticleEnsemble, k: KernelSet, engine: PairEngine | None = None,
                state: BlobState | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(x', v') = (L dE, M dS); the same fields the solver integrates."""
    return transport_field(e), landau_velocity_field(e, k, engine, state)


def energy_production(e: ParticleEnsemble, k: KernelSet, engine: PairEngine | None = None,
                      state: BlobState | None = None) -> tuple[float, float]:
    """(<dE, dz/dt>, sum_i w_i |v_i| |v'_i|)."""
    _, vdot = generic_rhs(e, k, engine, state)
    w = e.weights
    value = w @ np.sum(e.velocities * vdot, axis=1)
    scale = w @ (np.linalg.norm(e.velocities, axis=1) * np.linalg.norm(vdot, axis=1))
    return float(value), float(scale)


def _relative(value: float, scale: float) -> float:
    return abs(value) / scale if scale > 0 else abs(value)


def verify_generic(e: ParticleEnsemble, k: KernelSet, probes: Sequence[ScalarField],
                   tolerance: float = 1e-10, engine: PairEngine | None = None) -> VerificationReport:
    """
    Run the bracket checks over all probe pairs. Residuals are relative to the
    magnitude of the pairing they test; L dS = 0 is reported but not enforced.
    """
    if len(probes) < MIN_PROBES:
        raise ContractError(f"verify_generic needs at least {MIN_PROBES} probes, got {len(probes)}")
    engine = engine or PairEngine()
    state = blob_state(e, engine)
    grads = [p.site_gradients(e) for p in probes]
    energy = energy_field(e.dim).site_gradients(e)
    entropy = (state.score_x, state.score_v)
    site_entropy = (state.site_score_x, state.site_score_v)
    report = VerificationReport()
    logger.info("bracket checks: %d probes, N=%d, flip_projection=%s", len(probes), e.n, k.flip_projection)

    for (a, ga), (b, gb) in itertools.combinations(zip(probes, grads), 2):
        pair = f"{a.label} , {b.label}"
        lab, scale_ab = _l_pairing(e, ga, gb)
        lba, _ = _l_pairing(e, gb, ga)
        report.add(f"L antisymmetry [{pair}]", _relative(lab + lba, scale_ab), tolerance)
        mab, scale = _m_pairing(e, k, ga[1], gb[1], engine)
        mba, _ = _m_pairing(e, k, gb[1], ga[1], engine)
        report.add(f"M symmetry [{pair}]", _relative(mab - mba, scale), tolerance)

    for p, gp in zip(probes, grads):
        mpp, scale = _m_pairing(e, k, gp[1], gp[1], engine)
        report.add(f"M positivity [{p.label}]", mpp / scale if scale > 0 else mpp, tolerance, lower=True)
        lpp, scale = _l_pairing(e, gp, gp)
        report.add(f"L alternating [{p.label}]", _relative(lpp, scale), tolerance)
        value, scale = _m_pairing(e, k, energy[1], gp[1], engine)
        report.add(f"M dE = 0 [{p.label}]", _relative(value, scale), tolerance)
        value, scale = _l_pairing(e, site_entropy, gp)
        report.add(f"L dS = 0 [{p.label}]", _relative(value, scale), tolerance, enforced=False)

    dv = e.velocities[:, None, :] - e.velocities[None, :, :]
    az = np.einsum("ijab,ijb->ija", k.pair_matrix(dv), dv)
    size = k.weight_from_r2(np.sum(dv * dv, axis=-1)) * np.linalg.norm(dv, axis=-1)
    moving = size > 0
    ratio = np.linalg.norm(az, axis=-1)[moving] / size[moving]
    report.add("a(z) z = 0", float(np.max(ratio)) if ratio.size else 0.0, tolerance)

    production, scale = _m_pairing(e, k, entropy[1], entropy[1], engine)
    report.add("entropy production >= 0", production / scale if scale > 0 else production, tolerance, lower=True)
    _, vdot = generic_rhs(e, k, engine, state)
    rate = float(e.weights @ np.sum(state.score_v * vdot, axis=1))
    report.add("entropy production = -dH/dt", _relative(production + rate, scale), tolerance)
    value, scale = energy_production(e, k, engine, state)
    report.add("energy production = 0", _relative(value, scale), tolerance)

    summary = report.summary()
    logger.info("bracket checks: %d/%d passed", summary["total"] - len(summary["failed"]), summary["total"])
    return report


