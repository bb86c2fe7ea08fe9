"""
Closed-form phase-space test functions with exact gradients.

A ScalarField is

    phi(x, v) = P(x, v) * exp(-|v|^2 / 2 s^2) * cos(2 pi k.x / L + theta)

with P a polynomial of degree <= 4; the envelope and the wave are optional.
Fields are written as text, e.g. ``0.5*v1^2 + x1*v2 ; gauss=1.5 ; wave=1,0``.
"""
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

MAX_DEGREE = 4
_TERM = re.compile(r"\s*([+-]?)\s*([^+-]+)")
_NUMBER = re.compile(r"^(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_FACTOR = re.compile(r"^([a-z]+)(\d*)(\^(\d+))?$")


def parse_polynomial(text: str, variables: dict[str, int]) -> list[tuple[float, tuple[int, ...]]]:
    """
    Parse a sum of monomials such as ``2*v1^2 - 0.5*x1*v2 + 3``.

    variables maps a symbol to its slot in the exponent tuple.
    """
    text = text.replace(" ", "")
    if not text:
        raise ConfigError("empty polynomial")
    # protect exponent signs like 1e-3 from the term splitter
    protected = re.sub(r"(\d[eE])([+-])", lambda m: m.group(1) + ("P" if m.group(2) == "+" else "M"), text)
    size = len(variables)
    terms: dict[tuple[int, ...], float] = {}
    pos = 0
    for match in _TERM.finditer(protected):
        if match.start() != pos:
            raise ConfigError(f"cannot parse polynomial '{text}'")
        pos = match.end()
        sign = -1.0 if match.group(1) == "-" else 1.0
        coef = sign
        exps = [0] * size
        for factor in match.group(2).replace("P", "+").replace("M", "-").split("*"):
            if _NUMBER.match(factor):
                coef *= float(factor)
                continue
            fm = _FACTOR.match(factor)
            name = fm.group(1) + fm.group(2) if fm else None
            if name not in variables:
                raise ConfigError(f"unknown factor '{factor}' in '{text}'", accepted=sorted(variables))
            exps[variables[name]] += int(fm.group(4) or 1)
        key = tuple(exps)
        terms[key] = terms.get(key, 0.0) + coef
    if pos != len(protected):
        raise ConfigError(f"cannot parse polynomial '{text}'")
    return [(c, e) for e, c in terms.items() if c != 0.0]


def phase_variables(d: int) -> dict[str, int]:
    names = {f"x{i + 1}": i for i in range(d)}
    names.update({f"v{i + 1}": d + i for i in range(d)})
    return names


@dataclass(frozen=True)
class ScalarField:
    """A test function phi(x, v) with analytic gradients."""

    dim: int
    terms: tuple[tuple[float, tuple[int, ...]], ...]
    gauss: float | None = None
    wave: tuple[int, ...] | None = None
    phase: float = 0.0
    side: float = 1.0
    label: str = ""

    def __post_init__(self):
        for _, exps in self.terms:
            if len(exps) != 2 * self.dim:
                raise DomainError("monomial exponents must cover x1..xd, v1..vd")
            if sum(exps) > MAX_DEGREE:
                raise ConfigError(f"polynomial degree exceeds {MAX_DEGREE}: '{self.label}'")
        if self.gauss is not None and self.gauss <= 0:
            raise ConfigError("gauss width must be positive")
        if self.wave is not None and len(self.wave) != self.dim:
            raise ConfigError(f"wave vector needs {self.dim} integers")

    @classmethod
    def parse(cls, text: str, dim: int, side: float = 1.0) -> "ScalarField":
        parts = [p.strip() for p in text.split(";") if p.strip()]
        if not parts:
            raise ConfigError("empty field expression")
        options = dict(_option(p) for p in parts[1:])
        unknown = set(options) - {"gauss", "wave", "phase"}
        if unknown:
            raise ConfigError(f"unknown field option(s) {sorted(unknown)}", accepted=["gauss", "wave", "phase"])
        wave = tuple(int(s) for s in options["wave"].split(",")) if "wave" in options else None
        return cls(
            dim=dim,
            terms=tuple(parse_polynomial(parts[0], phase_variables(dim))),
            gauss=float(options["gauss"]) if "gauss" in options else None,
            wave=wave,
            phase=float(options.get("phase", 0.0)),
            side=side,
            label=text.strip(),
        )

    @property
    def depends_on_x(self) -> bool:
        return any(any(exps[:self.dim]) for _, exps in self.terms)

    @property
    def periodic_in_x(self) -> bool:
        return not self.depends_on_x

    def _poly(self, xv: np.ndarray):
        value = np.zeros(xv.shape[:-1])
        grad = np.zeros(xv.shape)
        for coef, exps in self.terms:
            e = np.asarray(exps)
            mono = coef * np.prod(xv ** e, axis=-1)
            value = value + mono
            for slot in np.nonzero(e)[0]:
                lowered = e.copy()
                lowered[slot] -= 1
                grad[..., slot] += coef * e[slot] * np.prod(xv ** lowered, axis=-1)
        return value, grad

    def evaluate(self, x, v):
        """(phi, grad_x phi, grad_v phi) at (M, d) points."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        d = self.dim
        value, grad = self._poly(np.concatenate([x, v], axis=-1))
        gx, gv = grad[..., :d], grad[..., d:]
        if self.gauss is not None:
            env = np.exp(-np.sum(v * v, axis=-1) / (2 * self.gauss ** 2))
            gv = (gv - value[..., None] * v / self.gauss ** 2) * env[..., None]
            gx = gx * env[..., None]
            value = value * env
        if self.wave is not None:
            k = 2 * math.pi * np.asarray(self.wave, dtype=float) / self.side
            theta = x @ k + self.phase
            c, s = np.cos(theta), np.sin(theta)
            gx = gx * c[..., None] - (value * s)[..., None] * k
            gv = gv * c[..., None]
            value = value * c
        return value, gx, gv

    def __call__(self, x, v) -> np.ndarray:
        return self.evaluate(x, v)[0]

    def grad_x(self, x, v) -> np.ndarray:
        return self.evaluate(x, v)[1]

    def grad_v(self, x, v) -> np.ndarray:
        return self.evaluate(x, v)[2]

    def site_gradients(self, e, k=None, engine=None) -> tuple[np.ndarray, np.ndarray]:
        _, gx, gv = self.evaluate(e.positions, e.velocities)
        return gx, gv


def _option(part: str) -> tuple[str, str]:
    key, _, value = part.partition("=")
    return key.strip(), value.strip()


def energy_field(dim: int) -> ScalarField:
    """E = |v|^2 / 2."""
    return ScalarField.parse(" + ".join(f"0.5*v{i + 1}^2" for i in range(dim)), dim)


@dataclass(frozen=True)
class EntropyField:
    """
    S = log f~ + 1, the functional derivative of the entropy.

    score='blob' uses the discrete-entropy gradient the dynamics is built on;
    score='analytic' uses grad log f~ at the sites.
    """

    score: str = "blob"
    label: str = "S"

    def site_gradients(self, e, k=None, engine=None) -> tuple[np.ndarray, np.ndarray]:
        from .ensemble import blob_state
        from .pairs import PairEngine

        state = blob_state(e, engine or PairEngine())
        if self.score == "blob":
            return state.score_x, state.score_v
        return state.site_score_x, state.site_score_v


@dataclass(frozen=True)
class TimeDependentField:
    """
    phi(t, x, v) = field(x, v) * p(t), times (T - t) when vanish_at is set.
    """

    field: ScalarField
    time_coeffs: tuple[float, ...] = (1.0,)
    vanish_at: float | None = None
    label: str = ""

    @classmethod
    def parse(cls, text: str, dim: int, side: float = 1.0, horizon: float | None = None) -> "TimeDependentField":
        parts = [p.strip() for p in text.split(";") if p.strip()]
        spatial, coeffs, vanish = [], (1.0,), False
        for part in parts:
            key, _, value = part.partition("=")
            key = key.strip()
            if key == "time":
                terms = parse_polynomial(value, {"t": 0})
                degree = max(e[0] for _, e in terms)
                c = [0.0] * (degree + 1)
                for coef, (power,) in terms:
                    c[power] += coef
                coeffs = tuple(c)
            elif key == "vanish":
                vanish = True
            else:
                spatial.append(part)
        if vanish and horizon is None:
            raise ConfigError(f"'vanish' needs a time horizon: '{text}'")
        return cls(
            field=ScalarField.parse(" ; ".join(spatial), dim, side),
            time_coeffs=coeffs,
            vanish_at=horizon if vanish else None,
            label=text.strip(),
        )

    def time_factor(self, t: float) -> tuple[float, float]:
        """(tau(t), tau'(t))."""
        poly = np.polynomial.Polynomial(self.time_coeffs)
        if self.vanish_at is not None:
            poly = poly * np.polynomial.Polynomial([self.vanish_at, -1.0])
        return float(poly(t)), float(poly.deriv()(t))

    def evaluate(self, t: float, x, v):
        """(phi, d_t phi, grad_x phi, grad_v phi)."""
        tau, dtau = self.time_factor(t)
        value, gx, gv = self.field.evaluate(x, v)
        return value * tau, value * dtau, gx * tau, gv * tau


def parse_probe_list(text: str) -> list[str]:
    """Probe lists separate fields with '|'."""
    return [p.strip() for p in text.split("|") if p.strip()]
