from .schemas import FunctionalReport, IntegrabilityReport, OracleReport, VerificationReport

RULE = "=" * 60

RUN_HEADER = """mode: {mode}   rate: {rate}   scheme: {scheme}
N = {n}   d = {dim}   gamma = {gamma}   kernel: {variant} / {kappa}
dt = {dt:.4g}   t_end = {t_end:g}   steps = {steps}
output: {out}"""

SAMPLING_NOISE_NOTE = """The particle covariance carries a sampling error of order
sqrt(2/N) = {noise:.3f} at N = {n}, plus the bias of the blob score at
beta = {beta:.3g}. A deviation of {deviation:.3f} against a threshold of
{threshold:.3f} at this size is expected to be dominated by that noise;
rerun with a larger n (the reference scenario uses n = 4096)."""

CONTROL_NOTE = """Negative control did not fail: a reference with doubled rate stays
within {threshold:.3f} of the particles. The comparison window is too short
or the run too noisy to discriminate the relaxation rate."""


def banner(title: str):
    print(RULE)
    print(title)
    print(RULE)


def print_run_summary(meta: dict, last: FunctionalReport):
    print("\n" + RULE)
    print("RUN SUMMARY")
    print(RULE)
    print(f"Final time:         {last.t:.6g}")
    print(f"Momentum drift:     {meta['momentum_drift']:.3e}   (budget {meta['momentum_budget']:.1e})")
    print(f"Energy drift:       {meta['energy_drift']:.3e}   (budget {meta['energy_budget']:.1e})")
    print(f"Entropy H:          {last.H:.10g}")
    print(f"Dissipation D:      {last.D:.6g}")
    print(f"J_T:                {meta['J_T']:.3e}   (tolerance {meta['tolerance']:.3e})")
    print(f"Chain residual:     {meta['chain_residual']:.3e}")
    print(f"J_T net of defect:  {meta['J_corrected']:.3e}   (transport defect {meta['transport_defect']:.3e})")
    print(f"H-theorem excess:   {meta['h_violation']:.3e}")


def print_check_table(report: VerificationReport, title: str = "BRACKET AND KERNEL CHECKS"):
    banner(title)
    width = max(24, max((len(c.name) for c in report.checks), default=0))
    print(f"{'check':{width}s}  {'residual':>11s}  {'tolerance':>10s}  result")
    for c in report.checks:
        status = "pass" if c.passed else "FAIL"
        if not c.enforced:
            status += " (report)"
        print(f"{c.name:{width}s}  {c.residual:11.3e}  {c.tolerance:10.1e}  {status}")
    summary = report.summary()
    print(f"\n--- Results: {summary['total'] - len(summary['failed'])}/{summary['total']} passed ---")
    for name in summary["failed"]:
        print(f"  FAILED: {name}")


def print_functionals_summary(summary: dict, integrability: IntegrabilityReport, weak: dict[str, float]):
    banner("TRAJECTORY FUNCTIONALS")
    print(f"Snapshots:          {summary['snapshots']}")
    print(f"H(T) - H(0):        {summary['entropy_change']:.6g}")
    print(f"Transport defect:   {summary['transport_defect']:.3e}")
    print(f"int D dt:           {summary['int_D']:.6g}")
    print(f"int A dt:           {summary['int_A']:.6g}")
    print(f"J_T:                {summary['J_T']:.3e}   (tolerance {summary['tolerance']:.3e})")
    print(f"Chain residual:     {summary['chain_residual']:.3e}")
    print(f"J_T net of defect:  {summary['J_corrected']:.3e}")
    print(f"Chain, net defect:  {summary['chain_corrected']:.3e}")
    print("\nWeak-form residuals:")
    for label, value in weak.items():
        print(f"  {label:40s}: {value:.3e}")
    print("\nGrazing integrability:")
    print(f"  LHS:                      {integrability.lhs:.6g}")
    print(f"  sqrt(C_A C_E):            {integrability.bare_bound:.6g}")
    print(f"  4 sqrt(kappa_max) bound:  {integrability.bound:.6g}")
    print(f"  margin:                   {integrability.margin:.6g}   ({'holds' if integrability.holds else 'VIOLATED'})")
    if integrability.very_soft_lhs is not None:
        print(f"  very-soft LHS:            {integrability.very_soft_lhs:.6g}   (report only)")
        print(f"  very-soft bound:          {integrability.very_soft_bound:.6g}")


def print_oracle_summary(report: OracleReport, beta: float):
    banner("HOMOGENEOUS MOMENT ORACLE")
    print(f"Relaxation rate lambda:   {report.rate:.10g}")
    print(f"Kernel constant c:        {report.kappa_const:.6g}")
    print(f"Window:                   t <= {report.horizon:.6g}")
    print(f"Max deviation:            {report.deviation:.4f}   (threshold {report.threshold:.3f})")
    print(f"Doubled-rate control:     {report.negative_control:.4f}")
    print(f"\n--- Result: {'PASS' if report.passed else 'FAIL'} ---")
    if not report.passed:
        print(SAMPLING_NOISE_NOTE.format(noise=(2.0 / report.n) ** 0.5, n=report.n, beta=beta,
                                         deviation=report.deviation, threshold=report.threshold))
    if report.horizon > 0 and not report.control_failed:
        print(CONTROL_NOTE.format(threshold=report.threshold))
