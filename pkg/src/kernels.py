"""
Closed-form kernels: the interaction weight A, the projector, the spatial
kernel kappa, the exponential mollifiers and the weight estimates they satisfy.

Every function here is a pure function of immutable inputs.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate

from .errors import ConfigError, ContractError, DomainError, NumericError

logger = logging.getLogger(__name__)

VARIANTS = ("coulomb-power", "generalized-hard")
KAPPA_KINDS = ("exponential", "scaled", "constant")
DOMAIN_KINDS = ("torus", "whole-space")

# points cap for tensor Gauss-Legendre rules
MAX_RULE_POINTS = 8_000_000


def japanese(z) -> np.ndarray:
    """<z> = sqrt(1 + |z|^2) along the last axis."""
    z = np.asarray(z, dtype=float)
    return np.sqrt(1.0 + np.sum(z * z, axis=-1))


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def radial_integral(profile, d: int) -> float:
    """Integrate a radial profile over R^d with adaptive quadrature."""
    value, err = integrate.quad(
        lambda r: r ** (d - 1) * profile(r), 0.0, np.inf,
        epsabs=0.0, epsrel=1e-13, limit=400,
    )
    if not np.isfinite(value) or err > 1e-9 * abs(value):
        raise NumericError(f"radial quadrature did not converge (value={value}, err={err})")
    return sphere_area(d) * value


def box_rule(d: int, half_width: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite tensor Gauss-Legendre rule on [-half_width, half_width]^d."""
    x, w = leggauss(order)
    edges = np.linspace(-half_width, half_width, panels + 1)
    mids = 0.5 * (edges[1:] + edges[:-1])
    halves = 0.5 * (edges[1:] - edges[:-1])
    nodes_1d = (mids[:, None] + halves[:, None] * x[None, :]).ravel()
    weights_1d = (halves[:, None] * w[None, :]).ravel()
    grids = np.meshgrid(*([nodes_1d] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = weights_1d
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, weights_1d).ravel()
    return nodes, weights


def _apply_rule(func, nodes: np.ndarray, weights: np.ndarray, chunk: int = 200_000) -> np.ndarray:
    total = None
    for start in range(0, len(weights), chunk):
        values = np.asarray(func(nodes[start:start + chunk]))
        part = np.tensordot(weights[start:start + chunk], values, axes=(0, 0))
        total = part if total is None else total + part
    return total


def box_integral(func, d: int, half_width: float, panels: int = 4, order: int = 12,
                 rtol: float = 1e-10, chunk: int = 200_000) -> np.ndarray:
    """
    Integrate func over a centered box, doubling the panel count until two
    successive rules agree to rtol.

    func maps an (M, d) array of nodes to an (M,) or (M, K) array.
    """
    nodes, weights = box_rule(d, half_width, panels, order)
    previous = _apply_rule(func, nodes, weights, chunk)
    while True:
        panels *= 2
        if (panels * order) ** d > MAX_RULE_POINTS:
            raise NumericError(
                f"box quadrature did not reach rtol={rtol:g} before {MAX_RULE_POINTS} points"
            )
        nodes, weights = box_rule(d, half_width, panels, order)
        current = _apply_rule(func, nodes, weights, chunk)
        scale = np.max(np.abs(current))
        if np.all(np.isfinite(current)) and np.max(np.abs(current - previous)) <= rtol * scale:
            return current
        previous = current


@dataclass(frozen=True)
class Domain:
    """Spatial domain: the flat torus [0, side)^d or the whole space."""

    kind: str = "torus"
    side: float = 1.0

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise ConfigError(f"unknown domain '{self.kind}'", "domain.kind", list(DOMAIN_KINDS))
        if not (np.isfinite(self.side) and self.side > 0):
            raise ConfigError("side must be a positive finite number", "domain.side")

    @property
    def is_torus(self) -> bool:
        return self.kind == "torus"

    def volume(self, d: int) -> float:
        return self.side ** d if self.is_torus else math.inf

    def minimal_image(self, dx: np.ndarray) -> np.ndarray:
        if not self.is_torus:
            return dx
        return dx - self.side * np.round(dx / self.side)

    def wrap(self, x: np.ndarray) -> np.ndarray:
        if not self.is_torus:
            return x
        wrapped = np.mod(x, self.side)
        return np.where(wrapped >= self.side, wrapped - self.side, wrapped)


@dataclass(frozen=True)
class KernelSet:
    """
    The pair (A, kappa) together with everything needed to evaluate them.

    Build instances with KernelSet.build so the spatial normalization k1 is
    computed for the configured domain.
    """

    dim: int
    gamma: float
    variant: str = "coulomb-power"
    kappa_kind: str = "exponential"
    kappa_k1: float = 1.0
    kappa_k2: float = 1.0
    kappa_sigma: float = 1.0
    domain: Domain = field(default_factory=Domain)
    soft_core_eps: float = 0.0
    flip_projection: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"dimension must be >= 1, got {self.dim}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}'", "kernel.variant", list(VARIANTS))
        if self.kappa_kind not in KAPPA_KINDS:
            raise ConfigError(f"unknown kappa '{self.kappa_kind}'", "kernel.kappa", list(KAPPA_KINDS))
        if not np.isfinite(self.gamma) or self.gamma > 1:
            raise DomainError(f"gamma must be finite and <= 1, got {self.gamma}")
        if self.variant == "coulomb-power" and self.gamma <= -self.gamma_d:
            raise DomainError(
                f"gamma must exceed -min(d,4) = {-self.gamma_d} for coulomb-power, got {self.gamma}"
            )
        if self.kappa_k1 <= 0 or self.kappa_k2 <= 0 or self.kappa_sigma <= 0:
            raise DomainError("kappa constants must be positive")
        if self.soft_core_eps < 0:
            raise DomainError("soft_core_eps must be >= 0")

    @classmethod
    def build(cls, dim: int, gamma: float, *, variant: str = "coulomb-power",
              kappa: str = "exponential", k2: float = 1.0, sigma: float = 1.0,
              kappa_const: float | None = None, domain: Domain | None = None,
              soft_core_eps: float = 0.0, flip_projection: bool = False) -> "KernelSet":
        domain = domain or Domain()
        draft = cls(dim=dim, gamma=gamma, variant=variant, kappa_kind=kappa, kappa_k2=k2,
                    kappa_sigma=sigma, domain=domain, soft_core_eps=soft_core_eps,
                    flip_projection=flip_projection)
        if kappa == "constant":
            if domain.is_torus:
                if kappa_const is not None and not math.isclose(kappa_const, 1.0 / domain.volume(dim)):
                    raise ConfigError(
                        "a constant kernel on the torus is fixed to 1/side^d", "kernel.kappa_const"
                    )
                k1 = 1.0 / domain.volume(dim)
            else:
                k1 = 1.0 if kappa_const is None else float(kappa_const)
        else:
            k1 = 1.0 / draft._unit_kappa_mass()
        kernel = replace(draft, kappa_k1=k1)
        logger.debug("kernel built: %s", kernel.describe())
        return kernel

    # --- derived constants ---

    @property
    def gamma_plus(self) -> float:
        return max(self.gamma, 0.0)

    @property
    def gamma_d(self) -> int:
        return min(self.dim, 4)

    @property
    def kappa_length(self) -> float:
        return math.sqrt(self.kappa_sigma) if self.kappa_kind == "scaled" else 1.0

    @property
    def kappa_max(self) -> float:
        if self.kappa_kind == "constant":
            return self.kappa_k1
        return self.kappa_k1 * math.exp(-self.kappa_k2)

    @property
    def kappa_min(self) -> float:
        """Lower bound of kappa on the torus (0 on the whole space)."""
        if self.kappa_kind == "constant":
            return self.kappa_k1
        if not self.domain.is_torus:
            return 0.0
        corner = np.full(self.dim, self.domain.side / 2)
        return float(self.spatial_weight(corner))

    def describe(self) -> dict:
        return {
            "dim": self.dim, "gamma": self.gamma, "variant": self.variant,
            "kappa": self.kappa_kind, "k1": self.kappa_k1, "k2": self.kappa_k2,
            "sigma": self.kappa_sigma, "domain": self.domain.kind, "side": self.domain.side,
            "soft_core_eps": self.soft_core_eps, "regime": potential_regime(self.gamma),
        }

    # --- interaction weight ---

    def weight_from_r2(self, r2: np.ndarray) -> np.ndarray:
        """A as a function of |z|^2."""
        r2 = np.asarray(r2, dtype=float)
        if self.variant == "coulomb-power":
            base = r2 + self.soft_core_eps ** 2
            with np.errstate(divide="ignore"):
                return base ** ((2.0 + self.gamma) / 2.0)
        return (1.0 + r2) ** ((self.gamma + 2.0) / 2.0) * r2

    def reduced_weight_from_r2(self, r2: np.ndarray) -> np.ndarray:
        """A(z)/|z|^2, the weight in front of the cross-product form; 0 at z = 0."""
        r2 = np.asarray(r2, dtype=float)
        positive = r2 > 0
        safe = np.where(positive, r2, 1.0)
        if self.variant == "generalized-hard":
            reduced = (1.0 + safe) ** ((self.gamma + 2.0) / 2.0)
        else:
            reduced = (safe + self.soft_core_eps ** 2) ** ((2.0 + self.gamma) / 2.0) / safe
        return np.where(positive, reduced, 0.0)

    def interaction_weight(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z)):
            raise DomainError("interaction_weight: non-finite velocity difference")
        return self.weight_from_r2(np.sum(z * z, axis=-1))

    # --- projector ---

    def project_perp(self, z: np.ndarray, y: np.ndarray, r2: np.ndarray | None = None) -> np.ndarray:
        """Apply the projector onto z-perp to y without forming matrices; 0 where z = 0."""
        if r2 is None:
            r2 = np.sum(z * z, axis=-1)
        positive = r2 > 0
        coef = np.sum(z * y, axis=-1) / np.where(positive, r2, 1.0)
        if self.flip_projection:
            out = y + coef[..., None] * z
        else:
            out = y - coef[..., None] * z
        return np.where(positive[..., None], out, 0.0)

    def projection_perp(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z)):
            raise DomainError("projection_perp: non-finite input")
        d = z.shape[-1]
        r2 = np.sum(z * z, axis=-1)
        positive = r2 > 0
        outer = z[..., :, None] * z[..., None, :] / np.where(positive, r2, 1.0)[..., None, None]
        eye = np.eye(d)
        proj = eye + outer if self.flip_projection else eye - outer
        return np.where(positive[..., None, None], proj, 0.0)

    def pair_matrix(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        proj = self.projection_perp(z)
        r2 = np.sum(z * z, axis=-1)
        weight = np.where(r2 > 0, self.weight_from_r2(np.where(r2 > 0, r2, 1.0)), 0.0)
        return weight[..., None, None] * proj

    # --- spatial kernel ---

    def spatial_weight(self, dx) -> np.ndarray:
        dx = np.asarray(dx, dtype=float)
        if self.kappa_kind == "constant":
            return np.full(dx.shape[:-1], self.kappa_k1)
        image = self.domain.minimal_image(dx)
        return self.kappa_k1 * np.exp(-self.kappa_k2 * japanese(image / self.kappa_length))

    def _unit_kappa_mass(self) -> float:
        """Integral of exp(-k2 <x/l>) over the domain."""
        if self.domain.is_torus:
            length, k2 = self.kappa_length, self.kappa_k2
            return float(box_integral(
                lambda x: np.exp(-k2 * japanese(x / length)), self.dim, self.domain.side / 2,
            ))
        scale = self.kappa_length ** self.dim
        return scale * radial_integral(lambda r: math.exp(-self.kappa_k2 * math.sqrt(1 + r * r)), self.dim)

    def kappa_mass(self) -> float:
        """Integral of kappa over the configured domain (1 when normalized)."""
        if self.kappa_kind == "constant":
            if self.domain.is_torus:
                return self.kappa_k1 * self.domain.volume(self.dim)
            return math.inf
        return self.kappa_k1 * self._unit_kappa_mass()


def interaction_weight(z, k: KernelSet) -> np.ndarray:
    return k.interaction_weight(z)


def projection_perp(z, k: KernelSet | None = None) -> np.ndarray:
    return (k or _PLAIN).projection_perp(z)


def pair_matrix(z, k: KernelSet) -> np.ndarray:
    return k.pair_matrix(z)


def spatial_weight(dx, k: KernelSet) -> np.ndarray:
    return k.spatial_weight(dx)


@lru_cache(maxsize=64)
def _mollifier_constant(width: float, dim: int, domain: Domain | None) -> float:
    if domain is not None and domain.is_torus and domain.side / 2 < 40 * width:
        mass = box_integral(lambda x: np.exp(-japanese(x / width)), dim, domain.side / 2)
        return float(width ** dim / mass)
    return 1.0 / radial_integral(lambda r: math.exp(-math.sqrt(1 + r * r)), dim)


@dataclass(frozen=True)
class Mollifier:
    """M_w(z) = C w^-d exp(-<z/w>), renormalized on the torus when a torus domain is attached."""

    width: float
    dim: int
    norm_const: float
    domain: Domain | None = None

    @classmethod
    def build(cls, width: float, dim: int, domain: Domain | None = None) -> "Mollifier":
        if not (np.isfinite(width) and width > 0):
            raise DomainError(f"mollifier width must be positive, got {width}")
        if domain is not None and not domain.is_torus:
            domain = None
        return cls(width=float(width), dim=dim, norm_const=_mollifier_constant(float(width), dim, domain),
                   domain=domain)

    def _image(self, z: np.ndarray) -> np.ndarray:
        return z if self.domain is None else self.domain.minimal_image(z)

    def __call__(self, z) -> np.ndarray:
        z = self._image(np.asarray(z, dtype=float))
        return self.norm_const * self.width ** (-self.dim) * np.exp(-japanese(z / self.width))

    def value_and_gradient(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = self._image(np.asarray(z, dtype=float))
        bracket = japanese(z / self.width)
        value = self.norm_const * self.width ** (-self.dim) * np.exp(-bracket)
        grad = -(value / (self.width ** 2 * bracket))[..., None] * z
        return value, grad


def mollify_eval(m: Mollifier, z) -> np.ndarray:
    return m(z)


def mollifier_mass(m: Mollifier) -> float:
    """Quadrature check of the mollifier mass over its domain."""
    if m.domain is not None:
        half = m.domain.side / 2
    else:
        half = 40.0 * m.width
    return float(box_integral(m, m.dim, half))


def peetre_bound_check(p: float, x, y) -> dict:
    """
    Largest ratio <x>^p / <y>^p / (2^{|p|/2} <x-y>^{|p|}) over the samples.

    Peetre's inequality guarantees the ratio never exceeds 1.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("peetre_bound_check: non-finite samples")
    lhs = (japanese(x) / japanese(y)) ** p
    rhs = 2.0 ** (abs(p) / 2) * japanese(x - y) ** abs(p)
    ratio = lhs / rhs
    return {
        "p": float(p),
        "samples": int(len(ratio)),
        "max_ratio": float(np.max(ratio)),
        "violations": int(np.sum(ratio > 1.0 + 1e-12)),
    }


def convolution_dominance_check(k: KernelSet, m: Mollifier, grid,
                                widths: tuple[float, ...] = (0.5, 0.1, 0.02),
                                rtol: float = 1e-6) -> dict:
    """
    Empirical max over grid points and widths of (kappa * M_w)/kappa and
    (kappa^-1 * M_w)/kappa^-1, the ratios the mollifier must keep bounded.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    all_widths = sorted({float(m.width), *map(float, widths)}, reverse=True)
    if any(not 0 < w < 1 for w in all_widths):
        raise DomainError(f"mollifier widths must lie in (0, 1), got {all_widths}")
    kappa_grid = k.spatial_weight(grid)
    unit = Mollifier.build(1.0, k.dim)
    half = 40.0
    per_width = {}
    for w in all_widths:
        def integrand(u, w=w):
            shifted = grid[None, :, :] - w * u[:, None, :]
            kap = k.spatial_weight(shifted)
            mol = unit(u)[:, None]
            return np.concatenate([mol * kap, mol / kap, mol], axis=1)

        try:
            values = box_integral(integrand, k.dim, half, panels=16, order=8, rtol=rtol,
                                  chunk=max(1, 2_000_000 // max(len(grid), 1)))
        except NumericError as exc:
            raise NumericError(f"convolution quadrature failed at width {w}: {exc}") from exc
        n = len(grid)
        mass = values[2 * n:]
        upper = values[:n] / mass / kappa_grid
        lower = values[n:2 * n] / mass * kappa_grid
        per_width[w] = {"kappa": float(np.max(upper)), "inverse_kappa": float(np.max(lower))}
    return {
        "widths": per_width,
        "max_ratio": max(max(v.values()) for v in per_width.values()),
    }


def sandwich_ratio(k: KernelSet, samples) -> float:
    """Smallest C with C^-1 <z>^{g+2} <= A(z)/|z|^2 <= C <z>^{g+2} on the samples."""
    if k.variant != "generalized-hard":
        raise ContractError("sandwich bound applies to the generalized-hard variant only")
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    r2 = np.sum(z * z, axis=-1)
    keep = r2 > 0
    ratio = k.reduced_weight_from_r2(r2[keep]) / japanese(z[keep]) ** (k.gamma + 2)
    return float(max(np.max(ratio), 1.0 / np.min(ratio)))


def potential_regime(gamma: float) -> str:
    if gamma > 0:
        return "hard"
    if gamma == 0:
        return "maxwellian"
    if gamma >= -2:
        return "moderately-soft"
    return "very-soft"


_PLAIN = KernelSet(dim=1, gamma=0.0)
