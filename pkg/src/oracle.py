"""
Independent references for Maxwell molecules (gamma = 0) with a constant
spatial kernel.

In that case the velocity marginal obeys the homogeneous equation and its
covariance closes on itself:

    dP/dt = -lambda c (P - tr(P)/d Id)

lambda is not taken from the literature. derive_relaxation_rate evaluates the
weak collision term against v_a v_b at Gaussian states with Gauss-Hermite
quadrature, which is exact for the polynomial integrand, and fits the
relaxation form. None of the solver's collision code is used here.
"""
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from .errors import ContractError, DomainError
from .kernels import KernelSet
from .schemas import OracleReport

logger = logging.getLogger(__name__)

HERMITE_ORDER = 4
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12


@dataclass(frozen=True)
class VelocityMarginal:
    """Positions dropped; (v_i, w_i) only."""

    velocities: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def momentum(self) -> np.ndarray:
        return self.weights @ self.velocities

    @property
    def energy(self) -> float:
        return float(0.5 * self.weights @ np.sum(self.velocities ** 2, axis=1))

    def second_moment(self) -> np.ndarray:
        return np.einsum("i,ia,ib->ab", self.weights, self.velocities, self.velocities)

    def covariance(self) -> np.ndarray:
        mean = self.momentum
        return self.second_moment() - np.outer(mean, mean)


def _require_maxwell(k: KernelSet):
    if k.kappa_kind != "constant":
        raise ContractError(f"the homogeneous oracle needs a constant kappa, got '{k.kappa_kind}'")
    if k.gamma != 0:
        raise ContractError(f"the moment oracle needs gamma = 0, got {k.gamma}")


def homogeneous_marginal(trajectory, k: KernelSet | None = None) -> list[tuple[float, VelocityMarginal]]:
    k = k or getattr(trajectory, "kernel", None)
    if k is None:
        raise ContractError("homogeneous_marginal needs the kernel of the source run")
    if k.kappa_kind != "constant":
        raise ContractError(f"the homogeneous limit needs a constant kappa, got '{k.kappa_kind}'")
    snaps = getattr(trajectory, "snapshots", trajectory)
    return [(t, VelocityMarginal(np.array(e.velocities), np.array(e.weights))) for t, e in snaps]


def _check_spd(P0) -> np.ndarray:
    P0 = np.asarray(P0, dtype=float)
    if P0.ndim != 2 or P0.shape[0] != P0.shape[1]:
        raise DomainError("P0 must be a square matrix")
    if not np.all(np.isfinite(P0)) or not np.allclose(P0, P0.T, rtol=0, atol=1e-12 * np.max(np.abs(P0))):
        raise DomainError("P0 must be finite and symmetric")
    try:
        np.linalg.cholesky(P0)
    except np.linalg.LinAlgError:
        raise DomainError("P0 must be positive definite") from None
    return 0.5 * (P0 + P0.T)


def _deviator(P: np.ndarray) -> np.ndarray:
    d = P.shape[0]
    return P - np.trace(P) / d * np.eye(d)


def collision_moment_rate(P0, c: float = 1.0, order: int = HERMITE_ORDER) -> np.ndarray:
    """
    dP_ab/dt = -1/2 c E[A (grad phi - grad phi*) . Pi (s - s*)] with phi = v_a v_b,
    v, v* independent N(0, P0), s = -P0^-1 v and A = |v - v*|^2.
    """
    P0 = _check_spd(P0)
    d = P0.shape[0]
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / np.sqrt(2 * np.pi)
    xi = np.array(list(itertools.product(nodes, repeat=2 * d)))
    w = np.prod(np.array(list(itertools.product(weights, repeat=2 * d))), axis=1)
    L = np.linalg.cholesky(P0)
    v, v_star = xi[:, :d] @ L.T, xi[:, d:] @ L.T
    z = v - v_star
    r2 = np.sum(z * z, axis=1)
    ds = -np.linalg.solve(P0, z.T).T
    # A Pi y = |z|^2 y - z (z . y), polynomial in z
    a_pi_ds = r2[:, None] * ds - z * np.sum(z * ds, axis=1)[:, None]
    rate = np.empty((d, d))
    for a in range(d):
        for b in range(d):
            grad_diff = np.zeros_like(z)
            grad_diff[:, a] += z[:, b]
            grad_diff[:, b] += z[:, a]
            rate[a, b] = -0.5 * c * float(w @ np.sum(grad_diff * a_pi_ds, axis=1))
    return rate


def derive_relaxation_rate(d: int, P0=None, c: float = 1.0, order: int = HERMITE_ORDER) -> float:
    """Least-squares fit of the quadrature rate to -lambda c dev(P0); 4d for this kernel."""
    if d < 2:
        raise ContractError("the relaxation rate needs d >= 2; in d = 1 the covariance is conserved")
    if P0 is None:
        P0 = np.diag([2.0] + [1.0] * (d - 1))
    P0 = _check_spd(P0)
    if P0.shape[0] != d:
        raise DomainError(f"P0 must be {d} x {d}")
    dev = _deviator(P0)
    if np.allclose(dev, 0.0):
        P0 = np.diag([2.0] + [1.0] * (d - 1)) * np.trace(P0) / (d + 1)
        dev = _deviator(P0)
    G = collision_moment_rate(P0, c, order)
    lam = -float(np.sum(G * dev)) / (c * float(np.sum(dev * dev)))
    logger.debug("relaxation rate: d=%d lambda=%.12g", d, lam)
    return lam


@dataclass
class MomentReference:
    times: np.ndarray
    tensors: np.ndarray
    rate: float
    kappa_const: float
    P0: np.ndarray
    solution: object = None

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> np.ndarray:
        if not (self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12):
            raise ContractError(f"t={t} outside the reference window [{self.times[0]}, {self.times[-1]}]")
        d = self.P0.shape[0]
        dev = self.solution.sol(t).reshape(d, d)
        return dev + np.trace(self.P0) / d * np.eye(d)

    def to_frame(self) -> pd.DataFrame:
        d = self.P0.shape[0]
        rows = []
        for t, P in zip(self.times, self.tensors):
            row = {"t": float(t)}
            row.update({f"P_{a + 1}{b + 1}": float(P[a, b]) for a in range(d) for b in range(d)})
            rows.append(row)
        return pd.DataFrame(rows)

    def write_csv(self, path: str | Path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


def moment_ode_reference(P0, k: KernelSet, times, rate: float | None = None) -> MomentReference:
    """
    Reference covariance curve on the given times. Only the deviatoric part
    is integrated, so the trace is exactly tr(P0).
    """
    _require_maxwell(k)
    P0 = _check_spd(P0)
    d = P0.shape[0]
    if d != k.dim:
        raise DomainError(f"P0 is {d} x {d} but the kernel has d={k.dim}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise ContractError("reference times must be a non-empty increasing sequence")
    c = k.kappa_k1
    lam = derive_relaxation_rate(d, P0, c) if rate is None else float(rate)
    dev0 = _deviator(P0).ravel()
    span = (float(times[0]), float(max(times[-1], times[0] + 1e-12)))
    solution = solve_ivp(lambda t, y: -lam * c * y, span, dev0, method="DOP853",
                         rtol=ODE_RTOL, atol=ODE_ATOL, dense_output=True)
    if not solution.success:
        raise ContractError(f"reference integration failed: {solution.message}")
    iso = np.trace(P0) / d * np.eye(d)
    tensors = np.array([solution.sol(t).reshape(d, d) + iso for t in times])
    logger.info("moment reference: d=%d lambda=%.6g c=%.6g window=[%.4g, %.4g]",
                d, lam, c, times[0], times[-1])
    return MomentReference(times=times, tensors=tensors, rate=lam, kappa_const=c, P0=P0, solution=solution)


def compare_to_oracle(trajectory, reference: MomentReference) -> float:
    """max over snapshots in the reference window of max|P - P_ref| / (tr P_ref / d)."""
    snaps = getattr(trajectory, "snapshots", trajectory)
    d = reference.P0.shape[0]
    deviation = 0.0
    compared = 0
    for t, e in snaps:
        if t > reference.horizon + 1e-12:
            continue
        P = e.covariance()
        if P.shape != (d, d):
            raise ContractError(f"trajectory has d={P.shape[0]}, reference has d={d}")
        ref = reference.at(t)
        deviation = max(deviation, float(np.max(np.abs(P - ref))) / (np.trace(ref) / d))
        compared += 1
    if compared == 0:
        raise ContractError("no snapshot inside the reference window")
    return deviation


def evaluate_oracle(trajectory, k: KernelSet, threshold: float = 0.05,
                    t_factor: float = 2.0) -> tuple[OracleReport, MomentReference]:
    """Compare a run to its reference on t <= t_factor/(lambda c), with a doubled-rate control."""
    _require_maxwell(k)
    snaps = list(getattr(trajectory, "snapshots", trajectory))
    if not snaps or snaps[0][0] != 0:
        raise ContractError("the oracle needs the t=0 snapshot")
    P0 = snaps[0][1].covariance()
    d = P0.shape[0]
    lam = derive_relaxation_rate(d, P0, k.kappa_k1)
    horizon = t_factor / (lam * k.kappa_k1)
    times = np.array([t for t, _ in snaps if t <= horizon + 1e-12])
    if times.size < 2:
        times = np.array([0.0, horizon])
    reference = moment_ode_reference(P0, k, times, rate=lam)
    control = moment_ode_reference(P0, k, times, rate=2.0 * lam)
    report = OracleReport(
        deviation=compare_to_oracle(snaps, reference),
        negative_control=compare_to_oracle(snaps, control),
        rate=lam, kappa_const=k.kappa_k1, threshold=threshold,
        n=snaps[0][1].n, horizon=float(min(times[-1], snaps[-1][0])),
    )
    logger.info("oracle: deviation=%.4f control=%.4f threshold=%.3f", report.deviation,
                report.negative_control, threshold)
    return report, reference
