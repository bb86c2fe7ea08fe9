"""
Time integration of the particle system

    x' = v,   v' = landau_velocity_field      (fuzzy Landau)
    x' = v,   v' = grazing_divergence_field   (transport grazing rate equation)

with explicit RK4 or midpoint steps, conservation monitors and snapshot
capture. Running functionals are sampled at every step and integrated with
the trapezoid rule; snapshots and reports are stored at the configured
cadence.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ensemble import BlobState, ParticleEnsemble, QuadraturePlan, blob_state
from .errors import BudgetViolationError, ConfigError, ContractError, IntegrationBlowupError
from .fields import TimeDependentField
from .functionals import SAMPLING_TERMS, RunningFunctionals, evaluate_sample, fisher_terms, tolerance_budget
from .kernels import KernelSet
from .operators import grazing_divergence_field, landau_velocity_field, transport_field
from .pairs import PairBlock, PairEngine
from .rates import GrazingRate
from .schemas import FunctionalReport

logger = logging.getLogger(__name__)

SCHEMES = ("rk4", "midpoint")
DT_FACTOR = 0.01

Callback = Callable[[float, ParticleEnsemble, FunctionalReport], None]


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "rk4"
    dt: float | None = None
    t_end: float = 1.0
    snapshot_every: int = 10
    momentum_budget: float = 1e-10
    energy_budget: float = 1e-8
    abort_factor: float = 100.0
    tolerance_factor: float = 10.0
    tolerance_sampling: str = "sqrt"
    deterministic_parallel: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme '{self.scheme}'", "integrator.scheme", list(SCHEMES))
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ConfigError("t_end must be finite and >= 0", "integrator.t_end")
        if self.dt is not None:
            if not (math.isfinite(self.dt) and self.dt > 0):
                raise ConfigError("dt must be positive", "integrator.dt")
            if 0 < self.t_end < self.dt:
                raise ConfigError(f"dt={self.dt} exceeds t_end={self.t_end}", "integrator.dt")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1", "integrator.snapshot_every")
        if self.tolerance_sampling not in SAMPLING_TERMS:
            raise ConfigError(f"unknown sampling term '{self.tolerance_sampling}'", "tolerance.sampling",
                              list(SAMPLING_TERMS))


@dataclass
class Trajectory:
    snapshots: list[tuple[float, ParticleEnsemble]] = field(default_factory=list)
    reports: list[FunctionalReport] = field(default_factory=list)
    kernel: KernelSet | None = None
    meta: dict = field(default_factory=dict)
    running: RunningFunctionals | None = None

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.snapshots]

    @property
    def final(self) -> ParticleEnsemble:
        return self.snapshots[-1][1]

    def __len__(self) -> int:
        return len(self.snapshots)


def default_time_step(e: ParticleEnsemble, k: KernelSet, engine: PairEngine | None = None) -> float:
    """0.01 * beta^2 / max A over particle pairs."""
    engine = engine or PairEngine()
    if e.n < 2:
        return DT_FACTOR * e.beta ** 2

    def block(rows: slice) -> np.ndarray:
        pb = PairBlock(e.positions, e.velocities, e.weights, rows, k)
        return np.max(np.where(pb.inner > 0, pb.weight, 0.0), axis=1)

    peak = float(np.max(engine.map_rows(block, e.n)))
    if not peak > 0 or not math.isfinite(peak):
        return DT_FACTOR * e.beta ** 2
    return DT_FACTOR * e.beta ** 2 / peak


class ParticleSolver:
    """Kernel, rate, engine and integrator settings for one run."""

    def __init__(self, k: KernelSet, config: IntegratorConfig, rate: GrazingRate | None = None,
                 engine: PairEngine | None = None, plan: QuadraturePlan | None = None,
                 probes: Sequence[TimeDependentField] = ()):
        self.k = k
        self.config = config
        self.rate = rate
        self.engine = engine or PairEngine()
        self.plan = plan or QuadraturePlan()
        self.probes = list(probes)

    @property
    def mode(self) -> str:
        return "landau" if self.rate is None else "tgre"

    @property
    def sampled_rate(self) -> GrazingRate:
        return self.rate if self.rate is not None else GrazingRate.landau()

    def velocity_field(self, e: ParticleEnsemble, state: BlobState | None = None) -> np.ndarray:
        if self.rate is None or self.rate.is_landau:
            return landau_velocity_field(e, self.k, self.engine, state)
        return grazing_divergence_field(e, self.rate, self.k, self.engine, state)

    def _rhs(self, e: ParticleEnsemble, x: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        stage = e.with_state(x, v, check=False)
        return transport_field(stage), self.velocity_field(stage)

    def step(self, e: ParticleEnsemble, dt: float, state: BlobState | None = None,
             t: float = 0.0) -> ParticleEnsemble:
        x0, v0 = e.positions, e.velocities
        k1x, k1v = transport_field(e), self.velocity_field(e, state)
        if self.config.scheme == "midpoint":
            k2x, k2v = self._rhs(e, x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
            x1, v1 = x0 + dt * k2x, v0 + dt * k2v
        else:
            k2x, k2v = self._rhs(e, x0 + 0.5 * dt * k1x, v0 + 0.5 * dt * k1v)
            k3x, k3v = self._rhs(e, x0 + 0.5 * dt * k2x, v0 + 0.5 * dt * k2v)
            k4x, k4v = self._rhs(e, x0 + dt * k3x, v0 + dt * k3v)
            x1 = x0 + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v1 = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(v1))):
            bad = np.nonzero(~(np.isfinite(x1).all(axis=1) & np.isfinite(v1).all(axis=1)))[0]
            raise IntegrationBlowupError(
                f"non-finite state after step at t={t:.6g} (dt={dt:.3e}, {len(bad)} particles)",
                dump={"t": t, "dt": dt, "particles": bad.tolist(),
                      "positions": np.array(x0), "velocities": np.array(v0)},
            )
        return e.with_state(e.domain.wrap(x1), v1)

    def time_step(self, e: ParticleEnsemble) -> float:
        if self.config.dt is not None:
            return self.config.dt
        dt = default_time_step(e, self.k, self.engine)
        if self.config.t_end > 0:
            dt = min(dt, self.config.t_end)
        return dt

    def _report(self, t: float, e: ParticleEnsemble, state: BlobState, running: RunningFunctionals,
                drift: tuple[float, float]) -> FunctionalReport:
        fisher, cross = fisher_terms(e, self.k, self.plan, self.engine, state)
        last = running.last
        aux = {
            "transport_defect": running.int_defect,
            "J_corrected": running.j_corrected,
            "chain_corrected": running.chain_corrected,
            "momentum_drift": drift[0],
            "energy_drift": drift[1],
            "h_violation": running.h_violation,
        }
        for probe in self.probes:
            aux[f"weak[{probe.label}]"] = running.weak_residual(probe.label)
        return FunctionalReport(
            t=t, mass=e.mass, momentum=[float(m) for m in e.momentum], energy=e.energy,
            H=last.H, D=last.D, A=last.A, fisher=fisher, cross_fisher=cross,
            chain_residual=running.chain_residual, J_running=running.j_running, aux=aux,
        )

    def _monitor(self, t: float, e: ParticleEnsemble, p0: np.ndarray, e0: float,
                 warned: set) -> tuple[float, float]:
        cfg = self.config
        drift = (float(np.max(np.abs(e.momentum - p0))), abs(e.energy - e0))
        for name, value, budget in (("momentum", drift[0], cfg.momentum_budget),
                                    ("energy", drift[1], cfg.energy_budget)):
            limit = cfg.abort_factor * budget
            if value > limit:
                raise BudgetViolationError(name, value, limit, t)
            if value > budget and name not in warned:
                warned.add(name)
                logger.warning("%s drift %.3e exceeds budget %.3e at t=%.6g", name, value, budget, t)
        return drift

    def run(self, initial: ParticleEnsemble, callbacks: Sequence[Callback] = ()) -> Trajectory:
        if initial.n < 2:
            raise ContractError(f"a run needs N >= 2 particles, got {initial.n}")
        cfg = self.config
        dt = self.time_step(initial)
        steps = 0 if cfg.t_end == 0 else max(1, math.ceil(cfg.t_end / dt - 1e-9))
        tol = tolerance_budget(dt, initial.n, cfg.tolerance_factor, cfg.tolerance_sampling)
        rate = self.sampled_rate
        traj = Trajectory(kernel=self.k, meta={
            "mode": self.mode, "rate": rate.kind, "rate_amplitude": rate.amplitude, "rate_seed": rate.seed,
            "scheme": cfg.scheme, "dt": dt, "dt_auto": cfg.dt is None, "t_end": cfg.t_end, "steps": steps,
            "snapshot_every": cfg.snapshot_every, "tolerance": tol, "tolerance_sampling": cfg.tolerance_sampling,
            "momentum_budget": cfg.momentum_budget, "energy_budget": cfg.energy_budget,
        })
        logger.info("run: mode=%s rate=%s scheme=%s N=%d dt=%.3e steps=%d",
                    self.mode, rate.kind, cfg.scheme, initial.n, dt, steps)

        running = RunningFunctionals()
        traj.running = running
        p0, e0 = initial.momentum, initial.energy
        warned: set = set()
        e, t = initial, 0.0
        drift = (0.0, 0.0)
        for s in range(steps + 1):
            state = blob_state(e, self.engine)
            running.add(evaluate_sample(t, e, self.k, rate, self.engine, state, self.probes),
                        step_budget=cfg.tolerance_factor * dt * dt)
            if s == 0 or s == steps or s % cfg.snapshot_every == 0:
                report = self._report(t, e, state, running, drift)
                traj.snapshots.append((t, e))
                traj.reports.append(report)
                logger.debug("t=%.6g H=%.8g D=%.4g J=%.3e", t, report.H, report.D, report.J_running)
                for callback in callbacks:
                    callback(t, e, report)
            if s == steps:
                break
            t_next = cfg.t_end if s + 1 == steps else (s + 1) * dt
            e = self.step(e, t_next - t, state, t)
            t = t_next
            drift = self._monitor(t, e, p0, e0, warned)

        traj.meta.update({
            "momentum_drift": drift[0], "energy_drift": drift[1],
            "J_T": running.j_running, "chain_residual": running.chain_residual,
            "J_corrected": running.j_corrected, "chain_corrected": running.chain_corrected,
            "transport_defect": running.int_defect, "h_violation": running.h_violation,
        })
        logger.info("run done: J_T=%.3e chain=%.3e energy drift=%.3e",
                    running.j_running, running.chain_residual, drift[1])
        return traj


def step_landau(e: ParticleEnsemble, k: KernelSet, cfg: IntegratorConfig,
                engine: PairEngine | None = None) -> ParticleEnsemble:
    solver = ParticleSolver(k, cfg, engine=engine)
    return solver.step(e, solver.time_step(e))


def step_tgre(e: ParticleEnsemble, U: GrazingRate, k: KernelSet, cfg: IntegratorConfig,
              engine: PairEngine | None = None) -> ParticleEnsemble:
    solver = ParticleSolver(k, cfg, rate=U, engine=engine)
    return solver.step(e, solver.time_step(e))


def run(initial: ParticleEnsemble, k: KernelSet, cfg: IntegratorConfig, U: GrazingRate | None = None,
        engine: PairEngine | None = None, plan: QuadraturePlan | None = None,
        probes: Sequence[TimeDependentField] = (), callbacks: Sequence[Callback] = ()) -> Trajectory:
    return ParticleSolver(k, cfg, rate=U, engine=engine, plan=plan, probes=probes).run(initial, callbacks)
