"""
The four subcommands. Each takes a validated RunConfig (or a trajectory
directory), prints a report and returns an exit status.
"""
import itertools
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import load_config, read_meta, write_key_values, write_meta
from .dynamics import IntegratorConfig, Trajectory, default_time_step, run
from .ensemble import ParticleEnsemble, QuadraturePlan, default_width, sample_initial
from .errors import ContractError, SnapshotError, UsageError
from .fields import ScalarField, TimeDependentField, parse_probe_list
from .functionals import RunningFunctionals, action, dissipation, evaluate_sample, tolerance_budget
from .generic import verify_generic
from .kernels import Domain, KernelSet, mollifier_mass, peetre_bound_check, sandwich_ratio
from .oracle import evaluate_oracle
from .pairs import PairEngine
from .rates import GrazingRate
from .reports import (RUN_HEADER, banner, print_check_table, print_functionals_summary, print_oracle_summary,
                      print_run_summary)
from .schemas import FunctionalReport, RunConfig, VerificationReport
from .snapshots import (DIAGNOSTICS_FILE, META_FILE, SNAPSHOT_DIR, CsvStream, load_snapshots,
                        snapshot_path, write_snapshot)

logger = logging.getLogger(__name__)

MASS_RTOL = 1e-8
IDENTITY_RTOL = 1e-10


@dataclass
class Setup:
    """Everything a run needs, with every 'auto' value resolved."""

    cfg: RunConfig
    kernel: KernelSet
    initial: ParticleEnsemble
    integrator: IntegratorConfig
    rate: GrazingRate | None
    plan: QuadraturePlan
    probes: list[TimeDependentField]
    resolved: dict = field(default_factory=dict)

    def engine(self) -> PairEngine:
        return PairEngine(self.cfg.parallel.threads, self.cfg.parallel.block_size)


def build_domain(cfg: RunConfig) -> Domain:
    return Domain(cfg.domain.kind, cfg.domain.side)


def resolve_widths(cfg: RunConfig, n: int | None = None) -> tuple[float, float]:
    width = default_width(n or cfg.n, cfg.dim, cfg.ensemble.bandwidth_c)
    alpha = width if cfg.ensemble.alpha == "auto" else cfg.ensemble.alpha
    beta = width if cfg.ensemble.beta == "auto" else cfg.ensemble.beta
    return float(alpha), float(beta)


def build_kernel(cfg: RunConfig, beta: float) -> KernelSet:
    eps = cfg.kernel.soft_core_eps
    if eps == "auto":
        eps = beta / 10 if cfg.gamma < -2 else 0.0
    const = None if cfg.kernel.kappa_const == "auto" else cfg.kernel.kappa_const
    return KernelSet.build(
        cfg.dim, cfg.gamma, variant=cfg.kernel.variant, kappa=cfg.kernel.kappa, k2=cfg.kernel.k2,
        sigma=cfg.kernel.sigma, kappa_const=const, domain=build_domain(cfg), soft_core_eps=float(eps),
        flip_projection=cfg.debug.flip_projection,
    )


def build_initial(cfg: RunConfig, alpha: float, beta: float, n: int | None = None) -> ParticleEnsemble:
    ic = cfg.initial
    return sample_initial(
        ic.condition, n or cfg.n, cfg.seed, dim=cfg.dim, domain=build_domain(cfg),
        temperature=ic.temperature, temperatures=ic.temperatures, bump_offset=ic.bump_offset,
        perturbation=ic.perturbation, alpha=alpha, beta=beta,
    )


def build_rate(cfg: RunConfig) -> GrazingRate | None:
    if cfg.mode == "landau":
        return None
    if cfg.rate == "zero":
        return GrazingRate.zero()
    if cfg.rate == "perturbed-landau":
        return GrazingRate.perturbed(cfg.perturbation.amplitude, cfg.perturbation.seed)
    return GrazingRate.landau()


def build_probes(text: str, dim: int, domain: Domain, horizon: float) -> list[TimeDependentField]:
    """Weak-form probes; polynomial x-dependence is skipped on the torus."""
    probes = []
    for item in parse_probe_list(text):
        probe = TimeDependentField.parse(item, dim, domain.side, horizon)
        if domain.is_torus and probe.field.depends_on_x:
            logger.warning("skipping probe '%s': not periodic in x", probe.label)
            continue
        probes.append(probe)
    return probes


def prepare(cfg: RunConfig, engine: PairEngine | None = None) -> Setup:
    alpha, beta = resolve_widths(cfg)
    kernel = build_kernel(cfg, beta)
    initial = build_initial(cfg, alpha, beta)
    it = cfg.integrator
    dt = default_time_step(initial, kernel, engine) if it.dt == "auto" else it.dt
    if it.dt == "auto" and it.t_end > 0:
        dt = min(dt, it.t_end)
    integrator = IntegratorConfig(
        scheme=it.scheme, dt=dt, t_end=it.t_end, snapshot_every=it.snapshot_every,
        momentum_budget=cfg.monitor.momentum_budget, energy_budget=cfg.monitor.energy_budget,
        abort_factor=cfg.monitor.abort_factor, tolerance_factor=cfg.tolerance.factor,
        tolerance_sampling=cfg.tolerance.sampling,
        deterministic_parallel=cfg.parallel.deterministic,
    )
    resolved = {
        "ensemble.alpha": alpha, "ensemble.beta": beta, "integrator.dt": dt,
        "kernel.soft_core_eps": kernel.soft_core_eps,
        "kernel.kappa_const": kernel.kappa_k1 if kernel.kappa_kind == "constant" else "auto",
    }
    logger.info("resolved: %s", resolved)
    return Setup(
        cfg=cfg, kernel=kernel, initial=initial, integrator=integrator, rate=build_rate(cfg),
        plan=QuadraturePlan(**cfg.quadrature.model_dump()),
        probes=build_probes(cfg.functionals.probes, cfg.dim, kernel.domain, it.t_end),
        resolved=resolved,
    )


def _clear_snapshots(out: Path):
    for old in (out / SNAPSHOT_DIR).glob("t_*.csv"):
        old.unlink()


def integrate(setup: Setup, out: str | Path | None) -> Trajectory:
    """Run the solver, streaming diagnostics and snapshots to out when given."""
    callbacks = []
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        _clear_snapshots(out)
        diagnostics = CsvStream(out / DIAGNOSTICS_FILE)
        index = itertools.count()

        def capture(t: float, e: ParticleEnsemble, report: FunctionalReport):
            diagnostics.write(report.row())
            write_snapshot(snapshot_path(out, next(index)), t, e, seed=setup.cfg.seed)

        callbacks.append(capture)
    with setup.engine() as engine:
        traj = run(setup.initial, setup.kernel, setup.integrator, setup.rate, engine, setup.plan,
                   setup.probes, callbacks)
    if out is not None:
        extra = {key: traj.meta[key] for key in (
            "tolerance", "tolerance_sampling", "steps", "momentum_drift", "energy_drift", "J_T", "chain_residual",
            "J_corrected", "chain_corrected", "transport_defect", "h_violation",
        )}
        extra["seed"] = setup.cfg.seed
        extra["perturbation_seed"] = setup.cfg.perturbation.seed
        write_meta(Path(out) / META_FILE, setup.cfg, setup.resolved, extra)
    return traj


# ==============================
# run
# ==============================

def cmd_run(cfg: RunConfig, out: str | Path = "output") -> int:
    setup = prepare(cfg)
    it = setup.integrator
    banner("FUZZY LANDAU RUN")
    print(RUN_HEADER.format(
        mode=cfg.mode, rate=setup.rate.kind if setup.rate else "landau", scheme=it.scheme, n=cfg.n,
        dim=cfg.dim, gamma=cfg.gamma, variant=cfg.kernel.variant, kappa=cfg.kernel.kappa, dt=it.dt,
        t_end=it.t_end, steps=0 if it.t_end == 0 else max(1, math.ceil(it.t_end / it.dt - 1e-9)), out=out,
    ))
    traj = integrate(setup, out)
    print_run_summary(traj.meta, traj.reports[-1])
    print(f"\nDiagnostics saved to {Path(out) / DIAGNOSTICS_FILE}")
    return 0


# ==============================
# verify
# ==============================

def kernel_checks(report: VerificationReport, k: KernelSet, e: ParticleEnsemble, seed: int,
                  engine: PairEngine):
    """Mollifier and kernel normalizations, Peetre bounds and the dissipation identities."""
    if not (k.kappa_kind == "constant" and not k.domain.is_torus):
        report.add("kappa mass = 1", k.kappa_mass() - 1.0, MASS_RTOL)
    report.add("x-mollifier mass = 1", mollifier_mass(e.x_mollifier) - 1.0, MASS_RTOL)
    report.add("v-mollifier mass = 1", mollifier_mass(e.v_mollifier) - 1.0, MASS_RTOL)

    rng = np.random.Generator(np.random.Philox(seed + 1))
    x = 3.0 * rng.standard_normal((512, k.dim))
    y = 3.0 * rng.standard_normal((512, k.dim))
    for p in (-2.0, 1.0, 3.0):
        result = peetre_bound_check(p, x, y)
        report.add(f"Peetre bound p={p:g}", float(result["violations"]), 0.0)
    if k.variant == "generalized-hard":
        ratio = sandwich_ratio(k, rng.standard_normal((512, k.dim)))
        report.add("sandwich constant", ratio, 2.0 ** (abs(k.gamma + 2) / 2), enforced=False)

    forms = [dissipation(e, k, form, engine) for form in ("grad-log", "cross-product", "sqrt-form")]
    scale = max(abs(forms[0]), 1e-300)
    report.add("D cross-product form", (forms[1] - forms[0]) / scale, IDENTITY_RTOL)
    report.add("D sqrt form", (forms[2] - forms[0]) / scale, IDENTITY_RTOL)
    report.add("A(Landau) = D", (action(e, GrazingRate.landau(), k, engine) - forms[0]) / scale, IDENTITY_RTOL)


def cmd_verify(cfg: RunConfig, out: str | Path | None = None) -> int:
    labels = parse_probe_list(cfg.verify.probes)
    if not labels:
        raise UsageError("verify.probes is empty; give at least three '|'-separated fields")
    alpha, beta = resolve_widths(cfg, cfg.verify.n)
    k = build_kernel(cfg, beta)
    e = build_initial(cfg, alpha, beta, cfg.verify.n)
    probes = [ScalarField.parse(label, cfg.dim, cfg.domain.side) for label in labels]
    with PairEngine(cfg.parallel.threads, cfg.parallel.block_size) as engine:
        report = verify_generic(e, k, probes, cfg.verify.tolerance, engine)
        kernel_checks(report, k, e, cfg.seed, engine)
    print_check_table(report)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        stream = CsvStream(out / "verify.csv")
        for check in report.checks:
            stream.write(check.model_dump())
    return 0 if report.passed else 1


# ==============================
# functionals
# ==============================

def cmd_functionals(trajectory: str | Path, config: str | Path | None = None,
                    out: str | Path | None = None, threads: int | None = None) -> int:
    """Recompute the trajectory functionals from a run directory."""
    root = Path(trajectory)
    meta_path = root / META_FILE
    if not meta_path.is_file():
        raise SnapshotError(f"missing {meta_path}")
    cfg = load_config(meta_path)
    meta = read_meta(meta_path)
    probe_text = load_config(config).functionals.probes if config is not None else cfg.functionals.probes
    snaps = load_snapshots(root)
    first = snaps[0][1]
    if first.dim != cfg.dim:
        raise SnapshotError(f"snapshots have d={first.dim}, run.meta says d={cfg.dim}")
    k = build_kernel(cfg, first.beta)
    rate = build_rate(cfg) or GrazingRate.landau()
    horizon = snaps[-1][0]
    probes = build_probes(probe_text, cfg.dim, k.domain, horizon)

    target = Path(out) if out is not None else root
    target.mkdir(parents=True, exist_ok=True)
    stream = CsvStream(target / "functionals.csv")
    running = RunningFunctionals()
    with PairEngine(threads or cfg.parallel.threads, cfg.parallel.block_size) as engine:
        for t, e in snaps:
            running.add(evaluate_sample(t, e, k, rate, engine, probes=probes))
            last = running.last
            row = {"t": t, "H": last.H, "D": last.D, "A": last.A, "J_running": running.j_running,
                   "chain_residual": running.chain_residual, "transport_defect": running.int_defect,
                   "J_corrected": running.j_corrected, "chain_corrected": running.chain_corrected}
            row.update({f"weak[{p.label}]": running.weak_residual(p.label) for p in probes})
            stream.write(row)

    tol = tolerance_budget(running.max_step, first.n, cfg.tolerance.factor, cfg.tolerance.sampling)
    weak = {p.label: running.weak_residual(p.label) for p in probes}
    integrability = running.integrability(k)
    summary = {
        "snapshots": len(snaps), "rate": rate.kind, "tolerance": tol,
        "entropy_change": running.entropy_change, "transport_defect": running.int_defect,
        "int_D": running.int_D, "int_A": running.int_A, "J_T": running.j_running,
        "J_within_tolerance": abs(running.j_running) <= tol,
        "chain_residual": running.chain_residual, "H_final": running.last.H,
        "J_corrected": running.j_corrected, "chain_corrected": running.chain_corrected,
        "tolerance_sampling": cfg.tolerance.sampling,
        "integrability_lhs": integrability.lhs, "integrability_bound": integrability.bound,
        "integrability_margin": integrability.margin, "very_soft_lhs": integrability.very_soft_lhs,
        "very_soft_bound": integrability.very_soft_bound, "source_seed": meta.get("seed"),
    }
    summary.update({f"weak[{label}]": value for label, value in weak.items()})
    write_key_values(target / "functionals.meta", summary, "trajectory functionals")
    print_functionals_summary(summary, integrability, weak)
    print(f"\nFunctionals saved to {stream.path}")
    return 0


# ==============================
# oracle
# ==============================

def cmd_oracle(cfg: RunConfig, out: str | Path | None = None) -> int:
    if cfg.gamma != 0:
        raise ContractError(f"the oracle needs gamma = 0, got {cfg.gamma}")
    if cfg.kernel.kappa != "constant":
        raise ContractError(f"the oracle needs kernel.kappa = constant, got '{cfg.kernel.kappa}'")
    if cfg.dim < 2:
        raise ContractError("the oracle needs d >= 2")
    setup = prepare(cfg)
    traj = integrate(setup, out)
    report, reference = evaluate_oracle(traj, setup.kernel, cfg.oracle.threshold, cfg.oracle.t_factor)
    if out is not None:
        reference.write_csv(Path(out) / "oracle.csv")
        write_key_values(Path(out) / "oracle.meta", report.model_dump() | {"passed": report.passed},
                         "homogeneous moment oracle")
    print_oracle_summary(report, setup.initial.beta)
    return 0 if report.passed else 1
