"""
Weighted particle ensembles and their blob reconstruction

    f~(x, v) = sum_i w_i M_alpha(x - x_i) M_beta(v - v_i)

together with the scores, moments, norms and entropy evaluated on it.
"""
import logging
import math
from dataclasses import InitVar, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .kernels import Domain, Mollifier, japanese
from .pairs import PairEngine

logger = logging.getLogger(__name__)

CONDITIONS = ("maxwellian", "anisotropic-gaussian", "two-bump", "uniform-x-gaussian-v")
MASS_TOLERANCE = 1e-12
POINT_CHUNK = 256


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    alpha: float
    beta: float
    domain: Domain = field(default_factory=Domain)
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        object.__setattr__(self, "positions", _frozen(self.positions))
        object.__setattr__(self, "velocities", _frozen(self.velocities))
        object.__setattr__(self, "weights", _frozen(self.weights))
        if self.positions.ndim != 2 or self.positions.shape != self.velocities.shape:
            raise DomainError("positions and velocities must both be N x d arrays")
        if self.weights.shape != (self.positions.shape[0],):
            raise DomainError("weights must have length N")
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("mollifier widths must be positive")
        if check:
            self.validate()

    def validate(self):
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise DomainError("ensemble holds non-finite coordinates")
        if np.any(self.weights < 0):
            raise DomainError("weights must be non-negative")
        if abs(self.mass - 1.0) > MASS_TOLERANCE:
            raise DomainError(f"weights must sum to 1, got {self.mass!r}")
        if self.domain.is_torus and (np.any(self.positions < 0) or np.any(self.positions >= self.domain.side)):
            raise DomainError(f"torus positions must lie in [0, {self.domain.side})")

    def with_state(self, positions, velocities, check: bool = True) -> "ParticleEnsemble":
        """Same weights and widths, new phase-space coordinates."""
        return ParticleEnsemble(positions, velocities, self.weights, self.alpha, self.beta,
                                self.domain, check=check)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

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

    @property
    def x_mollifier(self) -> Mollifier:
        return Mollifier.build(self.alpha, self.dim, self.domain)

    @property
    def v_mollifier(self) -> Mollifier:
        return Mollifier.build(self.beta, self.dim)


@dataclass(frozen=True)
class MomentSpec:
    a: float
    b: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or self.a < 0 or self.b < 0:
            raise DomainError("moment orders must be finite and >= 0")


@dataclass(frozen=True)
class QuadraturePlan:
    """How entropy, Fisher terms and Lp profiles are integrated."""

    mode: str = "particle"
    v_extent: float | None = None
    v_points: int | None = None
    x_points: int | None = None

    def velocity_grid(self, d: int) -> tuple[np.ndarray, float]:
        if self.v_extent is None or self.v_points is None:
            raise ConfigError("velocity grid is unset", "quadrature.v_points")
        return _midpoint_grid(d, -self.v_extent, self.v_extent, self.v_points)

    def position_grid(self, e: ParticleEnsemble) -> tuple[np.ndarray, float]:
        if self.x_points is None:
            raise ConfigError("position grid is unset", "quadrature.x_points")
        if e.domain.is_torus:
            return _midpoint_grid(e.dim, 0.0, e.domain.side, self.x_points)
        pad = 8.0 * e.alpha
        lo = float(np.min(e.positions)) - pad
        hi = float(np.max(e.positions)) + pad
        return _midpoint_grid(e.dim, lo, hi, self.x_points)


def _midpoint_grid(d: int, lo: float, hi: float, points: int) -> tuple[np.ndarray, float]:
    h = (hi - lo) / points
    axis = lo + h * (np.arange(points) + 0.5)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1), h ** d


def default_width(n: int, d: int, c: float = 0.8) -> float:
    """Bandwidth c * N^(-1/(2d+2)) for both mollifiers."""
    return c * n ** (-1.0 / (2 * d + 2))


def curve_p_threshold(d: int, gamma: float) -> float:
    """Lower end d/(d - |gamma|) of the Lp range in the curve assumptions."""
    return math.inf if abs(gamma) >= d else d / (d - abs(gamma))


# --- reconstruction at arbitrary points ---

def _blob_terms(e: ParticleEnsemble, x: np.ndarray, v: np.ndarray, gradients: bool):
    mx, mv = e.x_mollifier, e.v_mollifier
    dx = x[:, None, :] - e.positions[None, :, :]
    dv = v[:, None, :] - e.velocities[None, :, :]
    if not gradients:
        return mx(dx) * mv(dv) @ e.weights, None, None
    kx, gx = mx.value_and_gradient(dx)
    kv, gv = mv.value_and_gradient(dv)
    w = e.weights
    dens = (kx * kv) @ w
    grad_x = np.einsum("mn,mnd->md", kv * w, gx)
    grad_v = np.einsum("mn,mnd->md", kx * w, gv)
    return dens, grad_x, grad_v


def _points(e: ParticleEnsemble, x, v) -> tuple[np.ndarray, np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    single = x.ndim == 1
    x, v = np.atleast_2d(x), np.atleast_2d(v)
    if x.shape != v.shape or x.shape[1] != e.dim:
        raise DomainError("x and v must be matching arrays of d-vectors")
    return x, v, single


def density_at(e: ParticleEnsemble, x, v):
    """Blob density f~ at one point or an (M, d) batch of points."""
    x, v, single = _points(e, x, v)
    out = np.concatenate([
        _blob_terms(e, x[s:s + POINT_CHUNK], v[s:s + POINT_CHUNK], False)[0]
        for s in range(0, len(x), POINT_CHUNK)
    ])
    return float(out[0]) if single else out


def score_at(e: ParticleEnsemble, x, v):
    """Analytic (grad_x log f~, grad_v log f~) at one point or a batch."""
    x, v, single = _points(e, x, v)
    gx_parts, gv_parts = [], []
    for s in range(0, len(x), POINT_CHUNK):
        dens, gx, gv = _blob_terms(e, x[s:s + POINT_CHUNK], v[s:s + POINT_CHUNK], True)
        gx_parts.append(gx / dens[:, None])
        gv_parts.append(gv / dens[:, None])
    gx, gv = np.concatenate(gx_parts), np.concatenate(gv_parts)
    return (gx[0], gv[0]) if single else (gx, gv)


# --- reconstruction at particle sites ---

@dataclass(frozen=True)
class BlobState:
    """
    Site densities and scores of an ensemble.

    score_* is the gradient of the discrete entropy sum_i w_i log f~(z_i) with
    respect to z_k, divided by w_k; site_score_* is grad log f~ at z_k.
    """

    densities: np.ndarray
    score_x: np.ndarray
    score_v: np.ndarray
    site_score_x: np.ndarray
    site_score_v: np.ndarray


def site_densities(e: ParticleEnsemble, engine: PairEngine) -> np.ndarray:
    mx, mv = e.x_mollifier, e.v_mollifier

    def block(rows: slice) -> np.ndarray:
        dx = e.positions[rows, None, :] - e.positions[None, :, :]
        dv = e.velocities[rows, None, :] - e.velocities[None, :, :]
        return (mx(dx) * mv(dv)) @ e.weights

    return engine.map_rows(block, e.n)


def blob_state(e: ParticleEnsemble, engine: PairEngine) -> BlobState:
    mx, mv = e.x_mollifier, e.v_mollifier
    dens = site_densities(e, engine)
    w = e.weights
    inv = 1.0 / dens
    d = e.dim

    def block(rows: slice) -> np.ndarray:
        dx = e.positions[rows, None, :] - e.positions[None, :, :]
        dv = e.velocities[rows, None, :] - e.velocities[None, :, :]
        kx, gx = mx.value_and_gradient(dx)
        kv, gv = mv.value_and_gradient(dv)
        grad_x = kv[..., None] * gx
        grad_v = kx[..., None] * gv
        site = w[None, :] * inv[rows, None]
        pair = site + (w * inv)[None, :]
        return np.concatenate([
            np.einsum("bn,bnd->bd", pair, grad_x),
            np.einsum("bn,bnd->bd", pair, grad_v),
            np.einsum("bn,bnd->bd", site, grad_x),
            np.einsum("bn,bnd->bd", site, grad_v),
        ], axis=1)

    out = engine.map_rows(block, e.n)
    return BlobState(
        densities=dens,
        score_x=out[:, :d], score_v=out[:, d:2 * d],
        site_score_x=out[:, 2 * d:3 * d], site_score_v=out[:, 3 * d:],
    )


# --- moments, norms, entropy ---

def moment(e: ParticleEnsemble, spec: MomentSpec) -> float:
    return float(e.weights @ (japanese(e.positions) ** spec.a + japanese(e.velocities) ** spec.b))


def velocity_marginal(e: ParticleEnsemble, v: np.ndarray) -> np.ndarray:
    """x-integral of f~ at velocity points; the x-mollifier has unit mass."""
    mv = e.v_mollifier
    return np.concatenate([
        mv(v[s:s + POINT_CHUNK, None, :] - e.velocities[None, :, :]) @ e.weights
        for s in range(0, len(v), POINT_CHUNK)
    ])


def lp_profile(e: ParticleEnsemble, p: float, weight_exponent: float, plan: QuadraturePlan) -> float:
    """|| <v>^k f~ ||_{L^p_v L^1_x} on the configured velocity grid."""
    if p < 1:
        raise DomainError(f"p must be >= 1, got {p}")
    nodes, cell = plan.velocity_grid(e.dim)
    profile = japanese(nodes) ** weight_exponent * velocity_marginal(e, nodes)
    return float((cell * np.sum(profile ** p)) ** (1.0 / p))


def entropy(e: ParticleEnsemble, plan: QuadraturePlan | None = None,
            engine: PairEngine | None = None) -> float:
    """H(f~): particle quadrature sum_i w_i log f~(z_i), or phase-space grid quadrature."""
    plan = plan or QuadraturePlan()
    if plan.mode == "particle":
        dens = site_densities(e, engine or PairEngine())
        return float(e.weights @ np.log(dens))
    x_nodes, x_cell = plan.position_grid(e)
    v_nodes, v_cell = plan.velocity_grid(e.dim)
    total = 0.0
    for xi in x_nodes:
        f = density_at(e, np.broadcast_to(xi, v_nodes.shape), v_nodes)
        total += float(np.sum(f * np.log(np.maximum(f, 1e-300))))
    return total * x_cell * v_cell


def sample_initial(condition: str, n: int, seed: int, *, dim: int = 2, domain: Domain | None = None,
                   temperature: float = 1.0, temperatures: list[float] | None = None,
                   bump_offset: float = 2.0, perturbation: float = 0.0,
                   alpha: float | None = None, beta: float | None = None) -> ParticleEnsemble:
    """Seeded i.i.d. sample with equal weights 1/N."""
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown initial condition '{condition}'", "initial.condition", list(CONDITIONS))
    if n < 2:
        raise DomainError(f"need at least 2 particles, got {n}")
    if temperature <= 0:
        raise DomainError("temperature must be positive")
    domain = domain or Domain()
    rng = np.random.Generator(np.random.Philox(seed))

    if domain.is_torus:
        positions = _torus_positions(rng, n, dim, domain.side, perturbation)
    elif condition == "uniform-x-gaussian-v":
        positions = rng.uniform(-domain.side / 2, domain.side / 2, size=(n, dim))
    else:
        positions = rng.standard_normal((n, dim))

    if condition == "anisotropic-gaussian":
        temps = np.asarray(temperatures if temperatures is not None else [temperature] * dim, dtype=float)
        if temps.shape != (dim,) or np.any(temps <= 0):
            raise DomainError(f"need {dim} positive temperatures, got {temperatures}")
        velocities = rng.standard_normal((n, dim)) * np.sqrt(temps)
    else:
        velocities = rng.standard_normal((n, dim)) * math.sqrt(temperature)
    if condition == "two-bump":
        sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        velocities[:, 0] += sign * bump_offset

    width = default_width(n, dim)
    weights = np.full(n, 1.0 / n)
    ensemble = ParticleEnsemble(positions, velocities, weights,
                                alpha if alpha is not None else width,
                                beta if beta is not None else width, domain)
    logger.info("sampled %s: N=%d d=%d seed=%d alpha=%.4g beta=%.4g",
                condition, n, dim, seed, ensemble.alpha, ensemble.beta)
    return ensemble


def _torus_positions(rng: np.random.Generator, n: int, dim: int, side: float,
                     perturbation: float) -> np.ndarray:
    """Uniform on the torus, or density 1 + eps cos(2 pi x_1 / L) by rejection."""
    if perturbation == 0:
        return rng.uniform(0.0, side, size=(n, dim))
    if not 0 < abs(perturbation) < 1:
        raise DomainError("initial.perturbation must lie in (-1, 1)")
    accepted = []
    count = 0
    while count < n:
        cand = rng.uniform(0.0, side, size=(2 * n, dim))
        keep = rng.random(2 * n) * (1 + abs(perturbation)) < 1 + perturbation * np.cos(2 * np.pi * cand[:, 0] / side)
        accepted.append(cand[keep])
        count += int(np.sum(keep))
    return np.concatenate(accepted)[:n]
