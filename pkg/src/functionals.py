"""
Scalar functionals of a particle ensemble and of trajectories.

Pair integrals are particle pair quadratures: the pair measure f f* deta
becomes sum_{i != j} w_i w_j, and rates enter in the normalized form
U~ = U / (f~ f~*).

Along a trajectory all time integrals use the trapezoid rule through
RunningFunctionals, the accumulator shared with the solver.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ensemble import (BlobState, ParticleEnsemble, QuadraturePlan, blob_state, density_at,
                       score_at, velocity_marginal)
from .errors import ConfigError, ContractError, DomainError, NumericError
from .fields import TimeDependentField
from .kernels import KernelSet, japanese
from .pairs import PairBlock, PairEngine
from .rates import GrazingRate
from .schemas import IntegrabilityReport

logger = logging.getLogger(__name__)

DISSIPATION_FORMS = ("grad-log", "cross-product", "sqrt-form")


class AlphaFunction:
    """alpha(s, u) = |u|^2 / (2 s), with alpha(0, 0) = 0 and alpha(0, u != 0) = +inf."""

    def __call__(self, s, u):
        s = np.asarray(s, dtype=float)
        u = np.asarray(u, dtype=float)
        if np.any(s < 0):
            raise DomainError("alpha is defined for s >= 0")
        sq = np.sum(u * u, axis=-1) if u.ndim > s.ndim else u * u
        positive = s > 0
        value = np.where(positive, sq / (2 * np.where(positive, s, 1.0)), np.where(sq == 0, 0.0, np.inf))
        return float(value) if value.ndim == 0 else value


alpha = AlphaFunction()


SAMPLING_TERMS = ("sqrt", "inverse")


def tolerance_budget(h: float, n: int, factor: float = 10.0, sampling: str = "sqrt") -> float:
    """
    Declared discrete tolerance factor * (h^2 + N^(-1/2)) for J, chain and
    weak residuals. sampling="inverse" swaps the Monte Carlo term for 1/N.
    """
    if sampling not in SAMPLING_TERMS:
        raise ConfigError(f"unknown sampling term '{sampling}'", "tolerance.sampling", list(SAMPLING_TERMS))
    return factor * (h * h + (n ** -0.5 if sampling == "sqrt" else 1.0 / n))


def _block(e: ParticleEnsemble, k: KernelSet, rows: slice) -> PairBlock:
    return PairBlock(e.positions, e.velocities, e.weights, rows, k)


def _require_pairs(e: ParticleEnsemble):
    if e.n < 2:
        raise ContractError(f"pair functionals need N >= 2, got {e.n}")


def dissipation(e: ParticleEnsemble, k: KernelSet, form: str = "grad-log",
                engine: PairEngine | None = None, state: BlobState | None = None) -> float:
    """
    D = 1/2 sum_{i != j} w_i w_j kappa |grad~ log f~|^2 in one of three forms:

    grad-log       1/2 kappa A |Pi (s_i - s_j)|^2
    cross-product  1/4 kappa A/|z|^2 sum_ab |z_a ds_b - z_b ds_a|^2
    sqrt-form      kappa 2A |Pi g|^2 with g = (s_i - s_j)/2 the gradient of sqrt(f f*) over sqrt(f f*)
    """
    if form not in DISSIPATION_FORMS:
        raise DomainError(f"unknown dissipation form '{form}'")
    _require_pairs(e)
    engine = engine or PairEngine()
    state = state if state is not None else blob_state(e, engine)

    def block(rows: slice) -> float:
        pb = _block(e, k, rows)
        ds = pb.difference(state.score_v)
        if form == "grad-log":
            proj = pb.project(ds)
            density = 0.5 * pb.weight * np.sum(proj * proj, axis=-1)
        elif form == "cross-product":
            cross = pb.dv[..., :, None] * ds[..., None, :] - pb.dv[..., None, :] * ds[..., :, None]
            density = 0.25 * pb.reduced_weight * np.sum(cross * cross, axis=(-2, -1))
        else:
            g = pb.sqrt_weight[..., None] * pb.project(0.5 * ds)
            density = 2.0 * np.sum(g * g, axis=-1)
        return float(np.sum(pb.pair_mass * pb.kappa * density))

    return float(engine.reduce(block, e.n))


def fisher_terms(e: ParticleEnsemble, k: KernelSet, plan: QuadraturePlan | None = None,
                 engine: PairEngine | None = None, state: BlobState | None = None) -> tuple[float, float]:
    """
    (int f <v>^g |grad_v log f|^2, sum_ab int f <v>^g |v_a d_b log f - v_b d_a log f|^2)
    with analytic blob scores.
    """
    plan = plan or QuadraturePlan()
    if plan.mode == "particle":
        if state is None:
            state = blob_state(e, engine or PairEngine())
        return _fisher_sum(e.velocities, state.site_score_v, e.weights, k.gamma)
    x_nodes, x_cell = plan.position_grid(e)
    v_nodes, v_cell = plan.velocity_grid(e.dim)
    fisher = cross = 0.0
    for xi in x_nodes:
        xs = np.broadcast_to(xi, v_nodes.shape)
        f = density_at(e, xs, v_nodes)
        _, sv = score_at(e, xs, v_nodes)
        a, b = _fisher_sum(v_nodes, sv, f, k.gamma)
        fisher += a
        cross += b
    cell = x_cell * v_cell
    return fisher * cell, cross * cell


def _fisher_sum(v: np.ndarray, s: np.ndarray, mass: np.ndarray, gamma: float) -> tuple[float, float]:
    weight = mass * japanese(v) ** gamma
    bracket = v[:, :, None] * s[:, None, :] - v[:, None, :] * s[:, :, None]
    return (float(weight @ np.sum(s * s, axis=1)),
            float(weight @ np.sum(bracket * bracket, axis=(1, 2))))


def action(e: ParticleEnsemble, U: GrazingRate, k: KernelSet, engine: PairEngine | None = None,
           state: BlobState | None = None) -> float:
    """A(f, U) = 1/2 sum_{i != j} w_i w_j |U~|^2 / kappa."""
    engine = engine or PairEngine()
    ctx = U.context(e, engine, state)

    def block(rows: slice) -> float:
        pb = _block(e, k, rows)
        values = U.pair_values(pb, e, ctx)
        return float(0.5 * np.sum(pb.pair_mass * np.sum(values * values, axis=-1) / pb.kappa))

    return float(engine.reduce(block, e.n))


# ==============================
# Samples and the running accumulator
# ==============================

@dataclass
class FunctionalSample:
    """Everything the time integrals need at one instant."""

    t: float
    H: float
    D: float
    A: float
    chain: float
    defect: float
    lhs: float
    moment: float
    soft_lhs: float = 0.0
    soft_moment: float = 0.0
    weak: dict[str, tuple[float, float]] = field(default_factory=dict)


def evaluate_sample(t: float, e: ParticleEnsemble, k: KernelSet, U: GrazingRate, engine: PairEngine,
                    state: BlobState | None = None,
                    probes: Sequence[TimeDependentField] = ()) -> FunctionalSample:
    """
    One pass over all pairs: dissipation, action, chain integrand
    1/2 sum w w grad~ log f~ . U~, integrability weights and weak-form fluxes.
    """
    _require_pairs(e)
    state = state if state is not None else blob_state(e, engine)
    ctx = U.context(e, engine, state)
    q = 1.0 + abs(k.gamma) / 2
    site_weight = japanese(e.velocities) ** q + japanese(e.positions)
    very_soft = k.gamma < -2 and k.soft_core_eps > 0
    eps2 = k.soft_core_eps ** 2
    probe_data = [p.evaluate(t, e.positions, e.velocities) for p in probes]

    def block(rows: slice) -> np.ndarray:
        pb = _block(e, k, rows)
        g = pb.fuzzy(state.score_v)
        values = U.pair_values(pb, e, ctx)
        m = pb.pair_mass
        parts = [
            0.5 * np.sum(m * pb.kappa * np.sum(g * g, axis=-1)),
            0.5 * np.sum(m * np.sum(values * values, axis=-1) / pb.kappa),
            0.5 * np.sum(m * np.sum(g * values, axis=-1)),
            np.sum(m * np.linalg.norm(values, axis=-1) * (site_weight[rows, None] + site_weight[None, :])),
        ]
        if very_soft:
            rho = (pb.r2 + eps2) ** ((2.0 + k.gamma) / 4.0)
            parts += [np.sum(m * np.linalg.norm(values, axis=-1) * rho), np.sum(m * rho * rho)]
        else:
            parts += [0.0, 0.0]
        for _, _, _, gv in probe_data:
            parts.append(0.5 * np.sum(m * np.sum(pb.fuzzy(gv) * values, axis=-1)))
        return np.asarray(parts)

    sums = engine.reduce(block, e.n)
    w = e.weights
    weak = {}
    for probe, (value, dtime, gx, _), collision in zip(probes, probe_data, sums[6:]):
        transport = np.sum(gx * e.velocities, axis=1)
        flux = float(w @ (dtime + transport)) + float(collision)
        weak[probe.label] = (float(w @ value), flux)
    return FunctionalSample(
        t=float(t),
        H=float(w @ np.log(state.densities)),
        D=float(sums[0]),
        A=float(sums[1]),
        chain=float(sums[2]),
        defect=float(np.sum(w * np.sum(state.score_x * e.velocities, axis=1))),
        lhs=float(sums[3]),
        moment=float(w @ (japanese(e.positions) ** 2 + japanese(e.velocities) ** (2 + abs(k.gamma)))),
        soft_lhs=float(sums[4]),
        soft_moment=float(sums[5]),
        weak=weak,
    )


class RunningFunctionals:
    """
    Trapezoid accumulation of int D, int A, the chain integrand, the transport
    defect and the weak-form fluxes.

    J and the chain residual use the plain entropy difference H(t) - H(0).
    The transport defect sum_i w_i s^x_i . v_i is the entropy change free
    transport produces through the regularization alone; it vanishes in the
    continuum. j_corrected and chain_corrected subtract its time integral,
    and the H-theorem monitor works on the corrected entropy.
    """

    def __init__(self):
        self.first: FunctionalSample | None = None
        self.last: FunctionalSample | None = None
        self.int_D = 0.0
        self.int_A = 0.0
        self.int_chain = 0.0
        self.int_defect = 0.0
        self.int_lhs = 0.0
        self.int_moment = 0.0
        self.int_soft_lhs = 0.0
        self.int_soft_moment = 0.0
        self.weak_flux: dict[str, float] = {}
        self.max_step = 0.0
        self.h_violation = 0.0

    def add(self, s: FunctionalSample, step_budget: float | None = None):
        prev = self.last
        if prev is None:
            self.first = s
            self.weak_flux = {name: 0.0 for name in s.weak}
        else:
            h = s.t - prev.t
            if not h > 0:
                raise ContractError(f"non-monotone times: {prev.t} -> {s.t}")
            net_before = prev.H - self.int_defect
            self.int_D += 0.5 * h * (prev.D + s.D)
            self.int_A += 0.5 * h * (prev.A + s.A)
            self.int_chain += 0.5 * h * (prev.chain + s.chain)
            self.int_defect += 0.5 * h * (prev.defect + s.defect)
            self.int_lhs += 0.5 * h * (prev.lhs + s.lhs)
            self.int_moment += 0.5 * h * (prev.moment + s.moment)
            self.int_soft_lhs += 0.5 * h * (prev.soft_lhs + s.soft_lhs)
            self.int_soft_moment += 0.5 * h * (prev.soft_moment + s.soft_moment)
            for name in self.weak_flux:
                self.weak_flux[name] += 0.5 * h * (prev.weak[name][1] + s.weak[name][1])
            self.max_step = max(self.max_step, h)
            rise = (s.H - self.int_defect) - net_before
            allowed = (step_budget if step_budget is not None else h * h) * max(prev.D, s.D)
            self.h_violation += max(0.0, rise - allowed)
        self.last = s

    @property
    def entropy_change(self) -> float:
        return self.last.H - self.first.H

    @property
    def net_entropy_change(self) -> float:
        """H(t) - H(0) net of the transport defect."""
        return self.entropy_change - self.int_defect

    @property
    def j_running(self) -> float:
        """H(t) - H(0) + 1/2 int D + 1/2 int A."""
        return self.entropy_change + 0.5 * self.int_D + 0.5 * self.int_A

    @property
    def chain_residual(self) -> float:
        return self.entropy_change - self.int_chain

    @property
    def j_corrected(self) -> float:
        return self.net_entropy_change + 0.5 * self.int_D + 0.5 * self.int_A

    @property
    def chain_corrected(self) -> float:
        return self.net_entropy_change - self.int_chain

    def weak_residual(self, label: str) -> float:
        start, end = self.first.weak[label][0], self.last.weak[label][0]
        return abs(end - start - self.weak_flux[label])

    def integrability(self, k: KernelSet) -> IntegrabilityReport:
        very_soft = {}
        if k.gamma < -2 and k.soft_core_eps > 0:
            # Cauchy-Schwarz with C_S = int sum w w |v - v*|_eps^(2+gamma) dt
            very_soft = {"very_soft_lhs": self.int_soft_lhs,
                         "very_soft_bound": math.sqrt(2.0 * k.kappa_max * self.int_A * self.int_soft_moment)}
        return IntegrabilityReport(lhs=self.int_lhs, c_action=self.int_A, c_moment=self.int_moment,
                                   constant=4.0 * math.sqrt(k.kappa_max), **very_soft)


# ==============================
# Trajectory functionals
# ==============================

def _snapshots(trajectory) -> list[tuple[float, ParticleEnsemble]]:
    snaps = list(getattr(trajectory, "snapshots", trajectory))
    if not snaps:
        raise ContractError("empty trajectory")
    times = [t for t, _ in snaps]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ContractError("non-monotone times in trajectory")
    return snaps


def accumulate(trajectory, U: GrazingRate, k: KernelSet, engine: PairEngine | None = None,
               probes: Sequence[TimeDependentField] = ()) -> RunningFunctionals:
    engine = engine or PairEngine()
    running = RunningFunctionals()
    for t, e in _snapshots(trajectory):
        running.add(evaluate_sample(t, e, k, U, engine, probes=probes))
    return running


def _require_two(trajectory):
    if len(_snapshots(trajectory)) < 2:
        raise ContractError("need at least 2 snapshots")


def variational_J(trajectory, U: GrazingRate, k: KernelSet, engine: PairEngine | None = None) -> float:
    """J_T = H(f_T) - H(f_0) + 1/2 int D + 1/2 int A (entropy difference net of the transport defect)."""
    _require_two(trajectory)
    return accumulate(trajectory, U, k, engine).j_running


def chain_rule_residual(trajectory, U: GrazingRate, k: KernelSet, engine: PairEngine | None = None) -> float:
    """H(f_t) - H(f_s) - 1/2 int sum w w grad~ log f~ . U~ (entropy net of the transport defect)."""
    _require_two(trajectory)
    return accumulate(trajectory, U, k, engine).chain_residual


def weak_form_residual(trajectory, phi: TimeDependentField, k: KernelSet,
                       engine: PairEngine | None = None, U: GrazingRate | None = None) -> float:
    """
    |int f_T phi(T) - int f_0 phi(0) - int int f (d_t phi + v . grad_x phi)
      - 1/2 int int grad~ phi . U|

    U defaults to the Landau rate, for which the last term is
    -1/2 int int kappa f f* grad~ phi . grad~ log f.
    """
    snaps = _snapshots(trajectory)
    if snaps[0][0] != 0:
        raise ContractError("weak-form residual needs the t=0 snapshot")
    e0 = snaps[0][1]
    if e0.domain.is_torus and phi.field.depends_on_x:
        raise DomainError(f"probe '{phi.label}' is not periodic in x on the torus")
    U = U or GrazingRate.landau()
    return accumulate(snaps, U, k, engine, probes=[phi]).weak_residual(phi.label)


def grazing_integrability(trajectory, U: GrazingRate, k: KernelSet,
                          engine: PairEngine | None = None) -> IntegrabilityReport:
    """int sum w w |U~| (<v>^q + <v*>^q + <x> + <x*>) dt against 4 sqrt(kappa_max) sqrt(C_A C_E)."""
    return accumulate(trajectory, U, k, engine).integrability(k)


def reverse_trajectory(trajectory) -> list[tuple[float, ParticleEnsemble]]:
    """
    The time-reversed curve t -> T - t with velocities reflected; it solves
    the transport grazing rate equation for the rate scaled by -1.
    """
    snaps = _snapshots(trajectory)
    horizon = snaps[-1][0]
    return [(horizon - t, e.with_state(e.positions, -e.velocities)) for t, e in reversed(snaps)]


# ==============================
# Convolution profile
# ==============================

def _directions(d: int, resolution: int) -> tuple[np.ndarray, np.ndarray]:
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.ones(2)
    if d == 2:
        theta = 2 * np.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(theta), np.sin(theta)], axis=1), np.full(resolution, 2 * np.pi / resolution)
    if d == 3:
        mu, wmu = np.polynomial.legendre.leggauss(resolution)
        phi = 2 * np.pi * np.arange(2 * resolution) / (2 * resolution)
        m, p = np.meshgrid(mu, phi, indexing="ij")
        s = np.sqrt(1 - m ** 2)
        dirs = np.stack([s * np.cos(p), s * np.sin(p), m], axis=-1).reshape(-1, 3)
        weights = np.multiply.outer(wmu, np.full(2 * resolution, np.pi / resolution)).ravel()
        return dirs, weights
    raise DomainError("convolution profile supports d <= 3")


def _radial_rule(power: float, radius: float, panel: float, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for int_0^R r^(power-1) g(r) dr; the first panel absorbs the singular power."""
    x, w = np.polynomial.legendre.leggauss(order)
    panels = max(1, math.ceil(radius / panel))
    edges = np.linspace(0.0, radius, panels + 1)
    top = edges[1] ** power
    s = 0.5 * top * (x + 1)
    nodes = [s ** (1.0 / power)]
    weights = [0.5 * top * w / power]
    lo, hi = edges[1:-1], edges[2:]
    if len(lo):
        r = (0.5 * (lo + hi))[:, None] + (0.5 * (hi - lo))[:, None] * x[None, :]
        nodes.append(r.ravel())
        weights.append(((0.5 * (hi - lo))[:, None] * w[None, :] * r ** (power - 1)).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def velocity_convolution_profile(e: ParticleEnsemble, alpha_exp: float, delta: float, probes,
                                 rtol: float = 1e-4) -> dict:
    """
    max over probe velocities of <v>^-a || <.>^delta f~ *_v |v - .|^a ||_{L^1_x},
    the empirical constant of the velocity convolution estimates.
    """
    d = e.dim
    if alpha_exp <= -d:
        raise DomainError(f"alpha_exp must exceed -d = {-d}")
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if not np.all(np.isfinite(probes)):
        raise DomainError("probe velocities must be finite")
    power = alpha_exp + d

    def integral(v: np.ndarray, order: int, refine: int) -> float:
        radius = float(np.max(np.linalg.norm(e.velocities - v, axis=1))) + 30.0 * e.beta
        nodes, weights = _radial_rule(power, radius, e.beta / refine, order)
        resolution = min(4096, max(16, math.ceil(refine * 4 * np.pi * radius / e.beta)))
        if d == 3:
            resolution = min(256, max(8, math.ceil(refine * 2 * np.pi * radius / e.beta)))
        dirs, dweights = _directions(d, resolution)
        total = 0.0
        for r, wr in zip(nodes, weights):
            points = v + r * dirs
            g = velocity_marginal(e, points) * japanese(points) ** delta
            total += wr * float(dweights @ g)
        return total

    values = []
    for v in probes:
        coarse = integral(v, 8, 1)
        fine = integral(v, 12, 2)
        if not np.isfinite(fine) or abs(fine - coarse) > rtol * abs(fine):
            raise NumericError(f"convolution profile did not converge at v={v.tolist()}")
        values.append(japanese(v) ** (-alpha_exp) * fine)
    return {"alpha": alpha_exp, "delta": delta, "values": [float(x) for x in values],
            "max": float(max(values))}
