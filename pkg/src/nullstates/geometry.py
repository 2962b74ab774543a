"""Spacetime charts, scale factors, Schwarzschild atlas and sphere grids.

Conventions: signature (-,+,+,+), G = c = hbar = 1.  Conformal-time FRW
metrics are a(tau)^2 * (flat), with scalar curvature R = 6 a''/a^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.special import sph_harm_y


class SingularCoordinateError(ValueError):
    """Raised when a chart is evaluated on a coordinate singularity."""


# ---------------------------------------------------------------------------
# cosmological scale factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CosmologyModel:
    """Scale factor a(tau) on an open conformal-time interval (alpha, beta).

    ``a``, ``a_prime`` and ``a_pprime`` are vectorised callables of conformal
    time.  ``proper_a`` (optional) is the scale factor as a function of
    proper time, used by :func:`conformal_time`.
    """

    kind: str
    a: Callable[[np.ndarray], np.ndarray]
    a_prime: Callable[[np.ndarray], np.ndarray]
    a_pprime: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float]
    H: Optional[float] = None
    proper_a: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def ricci_scalar(self, tau):
        """R(tau) = 6 a''/a^3 for a spatially flat conformal FRW metric."""
        tau = np.asarray(tau, dtype=float)
        return 6.0 * self.a_pprime(tau) / self.a(tau) ** 3

    def _check(self, tau):
        tau = np.asarray(tau, dtype=float)
        lo, hi = self.domain
        if np.any(tau <= lo) or np.any(tau >= hi):
            raise ValueError(f"conformal time outside open domain {self.domain}")
        return tau

    # -- presets ------------------------------------------------------------

    @staticmethod
    def de_sitter(H: float) -> "CosmologyModel":
        """a(tau) = -1/(H tau) on (-inf, 0), H > 0."""
        if H <= 0:
            raise ValueError("de Sitter preset needs H > 0")
        return CosmologyModel(
            kind="deSitter",
            a=lambda tau: -1.0 / (H * np.asarray(tau, float)),
            a_prime=lambda tau: 1.0 / (H * np.asarray(tau, float) ** 2),
            a_pprime=lambda tau: -2.0 / (H * np.asarray(tau, float) ** 3),
            domain=(-np.inf, 0.0),
            H=H,
            proper_a=lambda t: np.exp(H * np.asarray(t, float)),
        )

    @staticmethod
    def constant(a0: float = 1.0) -> "CosmologyModel":
        if a0 <= 0:
            raise ValueError("scale factor must be positive")
        return CosmologyModel(
            kind="constant",
            a=lambda tau: np.full_like(np.asarray(tau, float), a0),
            a_prime=lambda tau: np.zeros_like(np.asarray(tau, float)),
            a_pprime=lambda tau: np.zeros_like(np.asarray(tau, float)),
            domain=(-np.inf, np.inf),
            proper_a=lambda t: np.full_like(np.asarray(t, float), a0),
        )

    @staticmethod
    def power_law(exponent: float) -> "CosmologyModel":
        """a(tau) = (-tau)^q on (-inf, 0); q = -1 recovers de Sitter, H = 1."""
        q = float(exponent)
        return CosmologyModel(
            kind="powerLaw",
            a=lambda tau: (-np.asarray(tau, float)) ** q,
            a_prime=lambda tau: -q * (-np.asarray(tau, float)) ** (q - 1.0),
            a_pprime=lambda tau: q * (q - 1.0) * (-np.asarray(tau, float)) ** (q - 2.0),
            domain=(-np.inf, 0.0),
        )

    @staticmethod
    def from_table(tau_samples, a_samples) -> "CosmologyModel":
        """Custom a(tau) from a two-column sampled table, tau ascending."""
        tau_samples = np.asarray(tau_samples, dtype=float)
        a_samples = np.asarray(a_samples, dtype=float)
        if tau_samples.ndim != 1 or np.any(np.diff(tau_samples) <= 0):
            raise ValueError("tau samples must be strictly ascending")
        if np.any(a_samples <= 0):
            raise ValueError("scale factor must be positive")
        spl = CubicSpline(tau_samples, a_samples)
        return CosmologyModel(
            kind="custom",
            a=spl,
            a_prime=spl.derivative(1),
            a_pprime=spl.derivative(2),
            domain=(float(tau_samples[0]), float(tau_samples[-1])),
        )

    @staticmethod
    def from_callables(a, a_prime, a_pprime, domain, kind="custom",
                       H=None, proper_a=None) -> "CosmologyModel":
        return CosmologyModel(kind=kind, a=a, a_prime=a_prime,
                              a_pprime=a_pprime, domain=domain, H=H,
                              proper_a=proper_a)


def conformal_time(model, t, d: float = 0.0, t_ref: float = 0.0) -> float:
    """tau(t) = d + int_{t_ref}^{t} dt'/a(t') in proper time.

    ``model`` is a :class:`CosmologyModel` with a known proper-time scale
    factor, or directly a callable a(t).  The additive constant ``d`` is an
    explicit argument; the integration uses adaptive quadrature with
    absolute tolerance 1e-10.
    """
    if isinstance(model, CosmologyModel):
        if model.proper_a is None:
            raise ValueError(f"{model.kind!r} model has no proper-time scale factor")
        a_of_t = model.proper_a
    elif callable(model):
        a_of_t = model
    else:
        raise TypeError("model must be a CosmologyModel or a callable a(t)")
    val, _err = quad(lambda s: 1.0 / float(a_of_t(s)), t_ref, t,
                     epsabs=1e-10, epsrel=1e-12, limit=200)
    return d + val


# ---------------------------------------------------------------------------
# Schwarzschild atlas
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SchwarzschildChart:
    """Mass parameter in geometric units; r_s = 2M exactly."""

    M: float

    def __post_init__(self):
        if self.M <= 0:
            raise ValueError("mass must be positive")

    @property
    def r_s(self) -> float:
        return 2.0 * self.M

    @property
    def surface_gravity(self) -> float:
        return 1.0 / (4.0 * self.M)


def tortoise(chart: SchwarzschildChart, r):
    """r* = r + 2M ln|r/2M - 1|, on (0, 2M) and (2M, inf) separately.

    Radii within 1e-12*M of the horizon are rejected rather than mapped to
    +-inf, so downstream exponentials cannot silently overflow.
    """
    r = np.asarray(r, dtype=float)
    M = chart.M
    if np.any(r <= 0):
        raise ValueError("tortoise needs r > 0")
    if np.any(np.abs(r - 2.0 * M) < 1e-12 * M):
        raise SingularCoordinateError("r too close to the horizon r = 2M")
    out = r + 2.0 * M * np.log(np.abs(r / (2.0 * M) - 1.0))
    return out if out.ndim else float(out)


def kruskal_uv(chart: SchwarzschildChart, region: str, t, r):
    """Global null coordinates (U, V) of a point in the exterior or interior.

    Exterior 'W' (r > 2M):  U = -exp(-(t - r*)/4M) < 0, V = exp((t + r*)/4M) > 0.
    Interior 'B' (0 < r < 2M): the smooth continuation across the event
    horizon, U = exp((r* - t)/4M) > 0, V = exp((t + r*)/4M) > 0, for which
    U V = (1 - r/2M) e^{r/2M} lies in (0, 1) and tends to 1 at the r -> 0
    singularity.
    """
    M = chart.M
    rs = tortoise(chart, r)
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if region == "W":
        if np.any(r <= 2.0 * M):
            raise ValueError("exterior chart needs r > 2M")
        U = -np.exp(-(t - rs) / (4.0 * M))
        V = np.exp((t + rs) / (4.0 * M))
    elif region == "B":
        if np.any(r >= 2.0 * M):
            raise ValueError("interior chart needs 0 < r < 2M")
        U = np.exp((rs - t) / (4.0 * M))
        V = np.exp((t + rs) / (4.0 * M))
    else:
        raise ValueError(f"unknown region {region!r}; expected 'W' or 'B'")
    if U.ndim:
        return U, V
    return float(U), float(V)


# ---------------------------------------------------------------------------
# sphere points and stereographic chart
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpherePoint:
    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= np.pi):
            raise ValueError("theta outside [0, pi]")

    def unit_vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi),
                         np.cos(self.theta)])


def stereographic(p: SpherePoint) -> complex:
    """zeta = e^{i phi} cot(theta/2); the north pole maps to infinity."""
    if p.theta == 0.0:
        return complex(np.inf, 0.0)
    return np.exp(1j * p.phi) / np.tan(0.5 * p.theta)


def stereographic_inverse(zeta: complex) -> SpherePoint:
    if np.isinf(zeta):
        return SpherePoint(0.0, 0.0)
    mod = abs(zeta)
    theta = 2.0 * np.arctan2(1.0, mod)
    phi = float(np.angle(zeta)) % (2.0 * np.pi) if mod > 0 else 0.0
    return SpherePoint(theta, phi)


def point_from_vector(n) -> SpherePoint:
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    theta = float(np.arccos(np.clip(n[2], -1.0, 1.0)))
    phi = float(np.arctan2(n[1], n[0])) % (2.0 * np.pi)
    return SpherePoint(theta, phi)


# ---------------------------------------------------------------------------
# quadrature grid on S^2 with spherical-harmonic transforms
# ---------------------------------------------------------------------------

class SphereGrid:
    """Gauss-Legendre in cos(theta) x uniform phi quadrature on S^2.

    ``n_theta = l_max + 1`` Gauss nodes integrate products Y_lm Ybar_l'm'
    exactly up to l = l_max, and ``n_phi = 2 l_max + 2`` uniform azimuthal
    nodes resolve all |m - m'| <= 2 l_max.  Total weight is 4 pi.
    """

    def __init__(self, l_max: int, n_theta: Optional[int] = None,
                 n_phi: Optional[int] = None):
        if l_max < 0:
            raise ValueError("l_max must be >= 0")
        self.l_max = int(l_max)
        self.n_theta = int(n_theta) if n_theta else self.l_max + 1
        self.n_phi = int(n_phi) if n_phi else 2 * self.l_max + 2
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        self.theta = np.arccos(x[::-1])         # ascending theta
        self._w_theta = w[::-1]
        self.phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        self._w_phi = 2.0 * np.pi / self.n_phi
        # flattened (theta, phi) mesh, theta-major
        self.theta_grid, self.phi_grid = np.meshgrid(self.theta, self.phi,
                                                     indexing="ij")
        self.weights = np.repeat(self._w_theta, self.n_phi) * self._w_phi
        self._ylm_cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    def integrate(self, values) -> complex:
        values = np.asarray(values).reshape(self.size)
        out = np.sum(self.weights * values)
        return complex(out) if np.iscomplexobj(values) else float(out)

    def ylm(self, l: int, m: int) -> np.ndarray:
        """Orthonormal spherical harmonic sampled on the flattened grid."""
        key = (l, m)
        if key not in self._ylm_cache:
            vals = sph_harm_y(l, m, self.theta_grid, self.phi_grid)
            self._ylm_cache[key] = np.asarray(vals).reshape(self.size)
        return self._ylm_cache[key]

    def lm_pairs(self, l_max: Optional[int] = None):
        l_max = self.l_max if l_max is None else l_max
        return [(l, m) for l in range(l_max + 1) for m in range(-l, l + 1)]

    def analyze(self, values, l_max: Optional[int] = None) -> np.ndarray:
        """Harmonic coefficients alpha_lm = int values conj(Y_lm) dmu."""
        l_max = self.l_max if l_max is None else l_max
        values = np.asarray(values).reshape(self.size)
        coeffs = np.empty((l_max + 1) ** 2, dtype=complex)
        for i, (l, m) in enumerate(self.lm_pairs(l_max)):
            coeffs[i] = np.sum(self.weights * values * np.conj(self.ylm(l, m)))
        return coeffs

    def synthesize(self, coeffs, l_max: Optional[int] = None) -> np.ndarray:
        l_max = self.l_max if l_max is None else l_max
        coeffs = np.asarray(coeffs)
        out = np.zeros(self.size, dtype=complex)
        for i, (l, m) in enumerate(self.lm_pairs(l_max)):
            out += coeffs[i] * self.ylm(l, m)
        return out


def lm_index(l: int, m: int) -> int:
    """Position of (l, m) in the flat coefficient layout l^2 + l + m."""
    if abs(m) > l:
        raise ValueError("|m| must not exceed l")
    return l * l + l + m
