from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ==============================
# Run configuration
# ==============================

class KernelConfig(Section):
    variant: Literal["coulomb-power", "generalized-hard"] = Field(
        default="coulomb-power", description="Interaction weight A: |z|^(2+gamma) or <z>^(gamma+2)|z|^2"
    )
    kappa: Literal["exponential", "scaled", "constant"] = Field(
        default="exponential", description="Spatial kernel family"
    )
    k2: float = Field(default=1.0, gt=0, description="Decay rate of the exponential spatial kernel")
    sigma: float = Field(default=1.0, gt=0, description="Length parameter of the scaled spatial kernel")
    kappa_const: float | Literal["auto"] = Field(
        default="auto", description="Value of a constant kernel; auto is 1/side^d on the torus, 1 elsewhere"
    )
    soft_core_eps: float | Literal["auto"] = Field(
        default="auto", description="Soft-core length; auto is beta/10 when gamma < -2, else 0"
    )


class DomainConfig(Section):
    kind: Literal["torus", "whole-space"] = Field(default="torus", description="Spatial domain")
    side: float = Field(default=1.0, gt=0, description="Torus side length L")


class InitialConfig(Section):
    condition: Literal["maxwellian", "anisotropic-gaussian", "two-bump", "uniform-x-gaussian-v"] = Field(
        default="maxwellian", description="Initial sampling law"
    )
    temperature: float = Field(default=1.0, gt=0, description="Velocity temperature")
    temperatures: list[float] | None = Field(
        default=None, description="Per-axis temperatures for anisotropic-gaussian, e.g. '2,1'"
    )
    bump_offset: float = Field(default=2.0, description="Velocity offset of the two-bump law along v1")
    perturbation: float = Field(default=0.0, gt=-1, lt=1, description="Cosine modulation of the x-density")

    @field_validator("temperatures", mode="before")
    @classmethod
    def split_list(cls, value):
        if isinstance(value, str):
            return [float(s) for s in value.split(",") if s.strip()]
        return value


class EnsembleConfig(Section):
    alpha: float | Literal["auto"] = Field(default="auto", description="Spatial mollifier width")
    beta: float | Literal["auto"] = Field(default="auto", description="Velocity mollifier width")
    bandwidth_c: float = Field(default=0.8, gt=0, description="c in the default width c*N^(-1/(2d+2))")


class IntegratorSection(Section):
    scheme: Literal["rk4", "midpoint"] = Field(default="rk4", description="Explicit time stepper")
    dt: float | Literal["auto"] = Field(default="auto", description="Time step; auto is 0.01*beta^2/max A")
    t_end: float = Field(default=1.0, ge=0, description="Final time")
    snapshot_every: int = Field(default=10, ge=1, description="Steps between stored snapshots")


class ParallelConfig(Section):
    threads: int = Field(default=1, ge=1, description="Worker threads for pair sums")
    deterministic: bool = Field(default=True, description="Fixed block order and tree reduction")
    block_size: int = Field(default=64, ge=1, description="Rows per pair block")


class MonitorConfig(Section):
    momentum_budget: float = Field(default=1e-10, gt=0, description="Declared momentum drift budget")
    energy_budget: float = Field(default=1e-8, gt=0, description="Declared energy drift budget")
    abort_factor: float = Field(default=100.0, ge=1, description="Abort when drift exceeds factor*budget")


class ToleranceConfig(Section):
    factor: float = Field(default=10.0, gt=0, description="tol = factor*(h^2 + N^(-1/2))")
    sampling: Literal["sqrt", "inverse"] = Field(
        default="sqrt", description="Sampling term of the budget: N^(-1/2) (sqrt) or 1/N (inverse)",
    )


class QuadratureConfig(Section):
    mode: Literal["particle", "grid"] = Field(default="particle", description="Entropy and Fisher quadrature")
    v_extent: float | None = Field(default=None, gt=0, description="Velocity grid half width")
    v_points: int | None = Field(default=None, ge=2, description="Velocity grid points per axis")
    x_points: int | None = Field(default=None, ge=2, description="Position grid points per axis")


class PerturbationConfig(Section):
    amplitude: float = Field(default=0.5, ge=0, description="Amplitude of the perturbed Landau rate")
    seed: int = Field(default=7, ge=0, description="Seed of the fixed perturbation field")


class VerifyConfig(Section):
    n: int = Field(default=32, ge=2, description="Ensemble size of the bracket probes")
    probes: str = Field(
        default="1 | v1 | v1^2 | v1*v2 + 0.5*v2^2 | v1^3 ; gauss=2 | v2 ; wave=1,0",
        description="'|'-separated scalar fields",
    )
    tolerance: float = Field(default=1e-10, gt=0, description="Relative tolerance of the bracket checks")


class FunctionalsConfig(Section):
    probes: str = Field(
        default="1 | v1 | v1^2 + v2^2 | v1^2 ; time=1+t ; vanish | v1*v2 | v1 ; wave=1,0",
        description="'|'-separated weak-form probes; 'time=<poly>' and 'vanish' add time factors",
    )


class OracleConfig(Section):
    threshold: float = Field(default=0.05, gt=0, description="Accepted relative second-moment deviation")
    t_factor: float = Field(default=2.0, gt=0, description="Compare on t <= t_factor/(lambda c)")


class DebugConfig(Section):
    flip_projection: bool = Field(default=False, description="Fault injection: Pi -> Id + zz^T/|z|^2")


class RunConfig(Section):
    mode: Literal["landau", "tgre"] = Field(default="landau", description="Dynamics to integrate")
    rate: Literal["landau", "zero", "perturbed-landau"] = Field(
        default="landau", description="Grazing rate of a tgre run"
    )
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Master seed")
    dim: int = Field(default=2, ge=1, le=3, description="Dimension d of x and v")
    n: int = Field(default=256, ge=2, description="Number of particles")
    gamma: float = Field(default=0.0, le=1, description="Potential exponent")
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    domain: DomainConfig = Field(default_factory=DomainConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    parallel: ParallelConfig = Field(default_factory=ParallelConfig)
    monitor: MonitorConfig = Field(default_factory=MonitorConfig)
    tolerance: ToleranceConfig = Field(default_factory=ToleranceConfig)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    perturbation: PerturbationConfig = Field(default_factory=PerturbationConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    functionals: FunctionalsConfig = Field(default_factory=FunctionalsConfig)
    oracle: OracleConfig = Field(default_factory=OracleConfig)
    debug: DebugConfig = Field(default_factory=DebugConfig)

    @model_validator(mode="after")
    def check_gamma(self):
        if self.kernel.variant == "coulomb-power" and self.gamma <= -min(self.dim, 4):
            raise ValueError(f"gamma must exceed -min(d,4) = {-min(self.dim, 4)}")
        return self


# ==============================
# Reports
# ==============================

class FunctionalReport(BaseModel):
    t: float = Field(description="Time of the snapshot")
    mass: float = Field(description="Total weight, 1 up to rounding")
    momentum: list[float] = Field(description="sum_i w_i v_i")
    energy: float = Field(description="1/2 sum_i w_i |v_i|^2")
    H: float = Field(description="Blob entropy sum_i w_i log f~(z_i)")
    D: float = Field(ge=0, description="Entropy dissipation")
    A: float = Field(ge=0, description="Action of the grazing rate")
    fisher: float = Field(ge=0, description="Weighted Fisher information")
    cross_fisher: float = Field(ge=0, description="Weighted cross Fisher information")
    chain_residual: float = Field(description="Running chain-rule residual")
    J_running: float = Field(description="Running variational functional")
    aux: dict[str, float] = Field(default_factory=dict, description="Named extras")

    def row(self) -> dict:
        out = {"t": self.t, "mass": self.mass}
        out.update({f"mom_{i + 1}": m for i, m in enumerate(self.momentum)})
        out.update({
            "energy": self.energy, "H": self.H, "D": self.D, "A": self.A,
            "fisher": self.fisher, "cross_fisher": self.cross_fisher,
            "chain_residual": self.chain_residual, "J_running": self.J_running,
        })
        return out


class CheckResult(BaseModel):
    name: str = Field(description="Check identifier")
    residual: float = Field(description="Measured residual or ratio")
    tolerance: float = Field(description="Accepted bound")
    passed: bool = Field(description="residual within tolerance")
    enforced: bool = Field(default=True, description="Whether a failure fails the report")


class VerificationReport(BaseModel):
    checks: list[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.enforced)

    def add(self, name: str, residual: float, tolerance: float, enforced: bool = True,
            lower: bool = False) -> CheckResult:
        """Record a check; lower=True means residual must be >= -tolerance."""
        passed = residual >= -tolerance if lower else abs(residual) <= tolerance
        check = CheckResult(name=name, residual=float(residual), tolerance=float(tolerance),
                            passed=bool(passed), enforced=enforced)
        self.checks.append(check)
        return check

    def summary(self) -> dict:
        return {
            "passed": self.passed,
            "total": len(self.checks),
            "failed": [c.name for c in self.checks if c.enforced and not c.passed],
        }


class IntegrabilityReport(BaseModel):
    lhs: float = Field(ge=0, description="Time integral of the weighted |U| pair sum")
    c_action: float = Field(ge=0, description="C_A = int A dt")
    c_moment: float = Field(ge=0, description="C_E = int E_{2,2+|gamma|} dt")
    constant: float = Field(gt=0, description="Explicit Cauchy-Schwarz constant 4 sqrt(kappa_max)")
    very_soft_lhs: float | None = Field(
        default=None, ge=0, description="int sum w w |U~| |v - v*|_eps^(1+gamma/2) dt; gamma < -2 with a soft core only",
    )
    very_soft_bound: float | None = Field(
        default=None, ge=0, description="sqrt(2 kappa_max C_A int sum w w |v - v*|_eps^(2+gamma) dt); report only",
    )

    @property
    def bare_bound(self) -> float:
        return (self.c_action * self.c_moment) ** 0.5

    @property
    def bound(self) -> float:
        return self.constant * self.bare_bound

    @property
    def margin(self) -> float:
        return self.bound - self.lhs

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound * (1 + 1e-12)


class OracleReport(BaseModel):
    deviation: float = Field(description="Max relative second-moment deviation")
    negative_control: float = Field(description="Deviation against a reference with doubled rate")
    rate: float = Field(description="Derived relaxation rate lambda")
    kappa_const: float = Field(description="Constant spatial kernel value c")
    threshold: float = Field(description="Acceptance threshold")
    n: int = Field(description="Particle count")
    horizon: float = Field(description="Compared time window end")

    @property
    def passed(self) -> bool:
        return self.deviation <= self.threshold

    @property
    def control_failed(self) -> bool:
        return self.negative_control > self.threshold
