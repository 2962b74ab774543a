"""Asymptotic symmetry groups of null boundaries.

Two groups act on R x S^2: the Lorentz-plus-supertranslation group of null
infinity (elements (Lambda, f) with Lambda in SL(2,C) acting by Moebius maps
on the stereographic coordinate) and the horizon symmetry group (elements
(R, a, b) acting by u -> e^{a} u + b together with a rigid rotation).

Smooth angle functions are held in a truncated spherical-harmonic basis;
group products create functions outside the band, which stay exact as
closures and are projected back to l <= l_max only when a banded
representation (coefficients, serialisation) is requested.  The discarded
norm of such a projection is recorded on the result.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm
from scipy.spatial.transform import Rotation as _Rotation
from scipy.special import sph_harm_y

from .geometry import SphereGrid, SpherePoint, lm_index

_DET_TOL = 1e-12


# ---------------------------------------------------------------------------
# SL(2,C) double cover of the proper orthochronous Lorentz group
# ---------------------------------------------------------------------------

class LorentzElement:
    """2x2 complex unimodular matrix, identified with its negative."""

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=complex).reshape(2, 2)
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < 1e-14:
            raise ValueError("singular matrix is not a Lorentz element")
        m = m / np.sqrt(det)
        self.matrix = m
        if abs(np.linalg.det(m) - 1.0) > _DET_TOL:
            raise ValueError("could not normalise determinant to 1")

    @property
    def a(self):
        return self.matrix[0, 0]

    @property
    def b(self):
        return self.matrix[0, 1]

    @property
    def c(self):
        return self.matrix[1, 0]

    @property
    def d(self):
        return self.matrix[1, 1]

    def __matmul__(self, other: "LorentzElement") -> "LorentzElement":
        return LorentzElement(self.matrix @ other.matrix)

    def inverse(self) -> "LorentzElement":
        a, b, c, d = self.a, self.b, self.c, self.d
        return LorentzElement([[d, -b], [-c, a]])

    def is_close(self, other: "LorentzElement", tol: float = 1e-10) -> bool:
        """Equality up to the overall sign of the double cover."""
        d1 = np.max(np.abs(self.matrix - other.matrix))
        d2 = np.max(np.abs(self.matrix + other.matrix))
        return min(d1, d2) < tol

    def is_rotation(self, tol: float = 1e-10) -> bool:
        """True iff the element lies in the SU(2) (rotation) subgroup."""
        u = self.matrix
        return bool(np.max(np.abs(u @ u.conj().T - np.eye(2))) < tol)

    def mobius(self, zeta):
        """Fractional-linear action on the stereographic coordinate."""
        zeta = np.asarray(zeta, dtype=complex)
        a, b, c, d = self.a, self.b, self.c, self.d
        num = a * zeta + b
        den = c * zeta + d
        inf_in = np.isinf(zeta.real) | np.isinf(zeta.imag)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(inf_in,
                           (a / c) if c != 0 else np.inf,
                           np.where(den == 0, np.inf, num / den))
        return out if out.ndim else complex(out)

    # -- constructors ---------------------------------------------------

    @staticmethod
    def identity() -> "LorentzElement":
        return LorentzElement(np.eye(2))

    @staticmethod
    def rotation(axis, angle: float) -> "LorentzElement":
        """SU(2) element exp(-i angle/2 n.sigma)."""
        n = np.asarray(axis, dtype=float)
        n = n / np.linalg.norm(n)
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
        sz = np.array([[1, 0], [0, -1]], dtype=complex)
        h = n[0] * sx + n[1] * sy + n[2] * sz
        return LorentzElement(expm(-0.5j * angle * h))

    @staticmethod
    def boost_z(rapidity: float) -> "LorentzElement":
        return LorentzElement(np.diag([np.exp(0.5 * rapidity),
                                       np.exp(-0.5 * rapidity)]))

    @staticmethod
    def random(rng, scale: float = 0.5, rotations_only: bool = False) -> "LorentzElement":
        """exp of a random element of sl(2,C) (su(2) if rotations_only)."""
        x = rng.normal(size=3) * scale
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
        sz = np.array([[1, 0], [0, -1]], dtype=complex)
        gen = -0.5j * (x[0] * sx + x[1] * sy + x[2] * sz)
        if not rotations_only:
            y = rng.normal(size=3) * scale
            gen = gen + 0.5 * (y[0] * sx + y[1] * sy + y[2] * sz)
        return LorentzElement(expm(gen))


def k_factor(lam: LorentzElement, zeta) -> float | np.ndarray:
    """Conformal factor of the Moebius action on the Riemann sphere.

    K(zeta) = (1 + |zeta|^2) / (|a zeta + b|^2 + |c zeta + d|^2), with the
    projective limit 1/(|a|^2 + |c|^2) at zeta = infinity.  Identically 1
    exactly when the element is a rotation.
    """
    zeta = np.asarray(zeta, dtype=complex)
    a, b, c, d = lam.a, lam.b, lam.c, lam.d
    inf_in = np.isinf(zeta.real) | np.isinf(zeta.imag)
    z = np.where(inf_in, 0.0, zeta)
    num = 1.0 + np.abs(z) ** 2
    den = np.abs(a * z + b) ** 2 + np.abs(c * z + d) ** 2
    out = np.where(inf_in, 1.0 / (abs(a) ** 2 + abs(c) ** 2), num / den)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# functions on the sphere: banded coefficients and exact closures
# ---------------------------------------------------------------------------

class SphereFunction:
    """Real function on S^2, as harmonic coefficients and/or an exact closure.

    Group products produce functions outside any fixed band; those carry a
    closure (``fn``) evaluated exactly, while :meth:`projected` returns the
    band-limited representative and records the discarded L^2 norm.
    """

    def __init__(self, coeffs=None, l_max: Optional[int] = None,
                 fn: Optional[Callable] = None, discarded_norm: float = 0.0):
        if coeffs is None and fn is None:
            raise ValueError("need coefficients or a closure")
        self.l_max = l_max
        self.coeffs = None
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=complex)
            if l_max is None:
                l_max = int(round(np.sqrt(coeffs.size))) - 1
                self.l_max = l_max
            if coeffs.size != (l_max + 1) ** 2:
                raise ValueError("coefficient array size must be (l_max+1)^2")
            self.coeffs = coeffs
        self.fn = fn
        self.discarded_norm = discarded_norm

    # -- constructors ---------------------------------------------------

    @staticmethod
    def from_real_coeffs(coeffs, l_max: Optional[int] = None) -> "SphereFunction":
        """Build from coefficients, enforcing a_{l,-m} = (-1)^m conj(a_{lm})."""
        f = SphereFunction(coeffs=coeffs, l_max=l_max)
        c = f.coeffs.copy()
        for l in range(f.l_max + 1):
            for m in range(1, l + 1):
                hi = 0.5 * (c[lm_index(l, m)]
                            + (-1) ** m * np.conj(c[lm_index(l, -m)]))
                c[lm_index(l, m)] = hi
                c[lm_index(l, -m)] = (-1) ** m * np.conj(hi)
            c[lm_index(l, 0)] = c[lm_index(l, 0)].real
        return SphereFunction(coeffs=c, l_max=f.l_max)

    @staticmethod
    def constant(value: float, l_max: int) -> "SphereFunction":
        c = np.zeros((l_max + 1) ** 2, dtype=complex)
        c[0] = value * np.sqrt(4.0 * np.pi)   # Y_00 = 1/sqrt(4 pi)
        return SphereFunction(coeffs=c, l_max=l_max)

    @staticmethod
    def zero(l_max: int) -> "SphereFunction":
        return SphereFunction(coeffs=np.zeros((l_max + 1) ** 2, dtype=complex),
                              l_max=l_max)

    @staticmethod
    def single_harmonic(l: int, m: int, l_max: int, amplitude=1.0) -> "SphereFunction":
        """Real combination built from Y_lm (plus its reality partner)."""
        c = np.zeros((l_max + 1) ** 2, dtype=complex)
        c[lm_index(l, m)] = amplitude
        if m != 0:
            c[lm_index(l, -m)] = (-1) ** m * np.conj(amplitude)
        else:
            c[lm_index(l, 0)] = np.real(amplitude)
        return SphereFunction(coeffs=c, l_max=l_max)

    @staticmethod
    def random_real(rng, l_max: int, scale: float = 1.0) -> "SphereFunction":
        c = (rng.normal(size=(l_max + 1) ** 2)
             + 1j * rng.normal(size=(l_max + 1) ** 2)) * scale
        return SphereFunction.from_real_coeffs(c, l_max)

    # -- evaluation -------------------------------------------------------

    def __call__(self, theta, phi):
        if self.fn is not None:
            return self.fn(theta, phi)
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(np.broadcast(theta, phi).shape, dtype=complex)
        i = 0
        for l in range(self.l_max + 1):
            for m in range(-l, l + 1):
                if self.coeffs[i] != 0:
                    out = out + self.coeffs[i] * sph_harm_y(l, m, theta, phi)
                i += 1
        return out.real if out.ndim else float(out.real)

    def at_point(self, p: SpherePoint) -> float:
        return float(np.real(self(p.theta, p.phi)))

    def is_real_function(self, tol: float = 1e-10) -> bool:
        if self.coeffs is None:
            return True
        for l in range(self.l_max + 1):
            for m in range(0, l + 1):
                lhs = self.coeffs[lm_index(l, -m)]
                rhs = (-1) ** m * np.conj(self.coeffs[lm_index(l, m)])
                if abs(lhs - rhs) > tol:
                    return False
        return True

    # -- band projection ---------------------------------------------------

    def projected(self, grid: SphereGrid, l_max: Optional[int] = None) -> "SphereFunction":
        """Project onto l <= l_max; the discarded L^2 norm is recorded."""
        l_max = grid.l_max if l_max is None else l_max
        vals = self(grid.theta_grid, grid.phi_grid)
        vals = np.asarray(vals, dtype=complex).reshape(grid.size)
        coeffs = grid.analyze(vals.real, l_max=l_max)
        total = float(np.sum(grid.weights * np.abs(vals.real) ** 2))
        kept = float(np.sum(np.abs(coeffs) ** 2))
        discarded = float(np.sqrt(max(total - kept, 0.0)))
        return SphereFunction(coeffs=coeffs, l_max=l_max,
                              discarded_norm=discarded)

    def coefficient(self, l: int, m: int):
        if self.coeffs is None:
            raise ValueError("closure-backed function has no banded coefficients;"
                             " call projected() first")
        return self.coeffs[lm_index(l, m)]

    def norm_sq(self) -> float:
        if self.coeffs is None:
            raise ValueError("closure-backed function: project first")
        return float(np.sum(np.abs(self.coeffs) ** 2))

    # -- linear structure ---------------------------------------------------

    def __add__(self, other: "SphereFunction") -> "SphereFunction":
        if self.coeffs is not None and other.coeffs is not None \
                and self.l_max == other.l_max:
            return SphereFunction(coeffs=self.coeffs + other.coeffs,
                                  l_max=self.l_max)
        return SphereFunction(fn=lambda th, ph: self(th, ph) + other(th, ph),
                              l_max=self.l_max)

    def __neg__(self) -> "SphereFunction":
        if self.coeffs is not None:
            return SphereFunction(coeffs=-self.coeffs, l_max=self.l_max)
        return SphereFunction(fn=lambda th, ph: -self(th, ph), l_max=self.l_max)


Supertranslation = SphereFunction


def is_t4(f: SphereFunction, tol: float = 1e-6,
          grid: Optional[SphereGrid] = None) -> bool:
    """True iff the l >= 2 content is below tol (relative, in L^2).

    The l <= 1 harmonic sector is the ordinary four-parameter translation
    subgroup; the zero function counts as the trivial translation.
    """
    if f.coeffs is None:
        if grid is None:
            raise ValueError("closure-backed function needs a grid to test")
        f = f.projected(grid)
    total = f.norm_sq()
    if total == 0.0:
        return True
    high = float(np.sum(np.abs(f.coeffs[lm_index(2, -2):]) ** 2))
    high += f.discarded_norm ** 2
    return high < tol ** 2 * (total + f.discarded_norm ** 2)


# ---------------------------------------------------------------------------
# the asymptotic symmetry group at null infinity
# ---------------------------------------------------------------------------

@dataclass
class BMSElement:
    lorentz: LorentzElement
    f: SphereFunction

    @staticmethod
    def identity(l_max: int) -> "BMSElement":
        return BMSElement(LorentzElement.identity(), SphereFunction.zero(l_max))


def _zeta_of(theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    with np.errstate(divide="ignore"):
        return np.exp(1j * phi) / np.tan(0.5 * theta)


def _angles_of(zeta):
    zeta = np.asarray(zeta, dtype=complex)
    theta = 2.0 * np.arctan2(1.0, np.abs(zeta))
    phi = np.mod(np.angle(zeta), 2.0 * np.pi)
    return theta, phi


def bms_act(g: BMSElement, u, point):
    """Action (u, p) -> (K(zeta) (u + f(zeta)), Lambda zeta)."""
    if isinstance(point, SpherePoint):
        zeta = complex(np.exp(1j * point.phi) / np.tan(0.5 * point.theta)) \
            if point.theta > 0 else complex(np.inf)
    else:
        zeta = point
    K = k_factor(g.lorentz, zeta)
    th, ph = _angles_of(zeta)
    fval = np.real(g.f(th, ph))
    u_new = K * (np.asarray(u, dtype=float) + fval)
    zeta_new = g.lorentz.mobius(zeta)
    if isinstance(point, SpherePoint):
        th2, ph2 = _angles_of(zeta_new)
        return float(u_new), SpherePoint(float(th2), float(ph2))
    return u_new, zeta_new


def bms_compose(g2: BMSElement, g1: BMSElement) -> BMSElement:
    """Group product (Lambda2, f2) o (Lambda1, f1).

    The combined supertranslation  f1 + (K_{Lambda1^{-1}} o Lambda1)(f2 o Lambda1)
    is carried as an exact closure; project to a band when coefficients are
    needed.  Composing the actions of the factors reproduces the action of
    the product to rounding.
    """
    lam1, lam2 = g1.lorentz, g2.lorentz
    lam1_inv = lam1.inverse()
    f1, f2 = g1.f, g2.f

    def h(theta, phi):
        zeta = _zeta_of(theta, phi)
        zeta_m = lam1.mobius(zeta)
        th_m, ph_m = _angles_of(zeta_m)
        return (np.real(f1(theta, phi))
                + k_factor(lam1_inv, zeta_m) * np.real(f2(th_m, ph_m)))

    l_max = f1.l_max if f1.l_max is not None else f2.l_max
    return BMSElement(lam2 @ lam1, SphereFunction(fn=h, l_max=l_max))


def bms_inverse(g: BMSElement) -> BMSElement:
    lam = g.lorentz
    lam_inv = lam.inverse()
    f = g.f

    def h(theta, phi):
        zeta = _zeta_of(theta, phi)
        zeta_b = lam_inv.mobius(zeta)
        th_b, ph_b = _angles_of(zeta_b)
        return -k_factor(lam, zeta_b) * np.real(f(th_b, ph_b))

    return BMSElement(lam_inv, SphereFunction(fn=h, l_max=f.l_max))


# ---------------------------------------------------------------------------
# the horizon symmetry group
# ---------------------------------------------------------------------------

@dataclass
class HorizonSymElement:
    """(R, a, b): u -> e^{a(p)} u + b(p), p -> R p, with R in SO(3)."""

    rotation: np.ndarray
    a: SphereFunction
    b: SphereFunction

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        if np.max(np.abs(R @ R.T - np.eye(3))) > _DET_TOL * 10 \
                or abs(np.linalg.det(R) - 1.0) > _DET_TOL * 10:
            raise ValueError("rotation must be special orthogonal")
        self.rotation = R

    @staticmethod
    def identity(l_max: int) -> "HorizonSymElement":
        return HorizonSymElement(np.eye(3), SphereFunction.zero(l_max),
                                 SphereFunction.zero(l_max))

    @staticmethod
    def random(rng, l_max: int, scale: float = 0.3) -> "HorizonSymElement":
        R = _Rotation.random(random_state=np.random.RandomState(
            rng.integers(0, 2 ** 31 - 1))).as_matrix()
        return HorizonSymElement(R,
                                 SphereFunction.random_real(rng, l_max, scale),
                                 SphereFunction.random_real(rng, l_max, scale))


def _rotate_angles(R, theta, phi):
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    n = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)
    m = n @ np.asarray(R).T
    th2 = np.arccos(np.clip(m[..., 2], -1.0, 1.0))
    ph2 = np.mod(np.arctan2(m[..., 1], m[..., 0]), 2.0 * np.pi)
    return th2, ph2


def sg_act(F: HorizonSymElement, u, point: SpherePoint):
    a = F.a.at_point(point)
    b = F.b.at_point(point)
    n_new = F.rotation @ point.unit_vector()
    th2 = float(np.arccos(np.clip(n_new[2], -1.0, 1.0)))
    ph2 = float(np.arctan2(n_new[1], n_new[0])) % (2.0 * np.pi)
    return np.exp(a) * np.asarray(u, dtype=float) + b, SpherePoint(th2, ph2)


def sg_compose(F: HorizonSymElement, G: HorizonSymElement) -> HorizonSymElement:
    """(R, a, b) o (R', a', b') = (RR', a' + a o R', e^{a o R'} b' + b o R')."""
    R, a, b = F.rotation, F.a, F.b
    Rp, ap, bp = G.rotation, G.a, G.b

    def a_new(theta, phi):
        th_r, ph_r = _rotate_angles(Rp, theta, phi)
        return np.real(ap(theta, phi)) + np.real(a(th_r, ph_r))

    def b_new(theta, phi):
        th_r, ph_r = _rotate_angles(Rp, theta, phi)
        return (np.exp(np.real(a(th_r, ph_r))) * np.real(bp(theta, phi))
                + np.real(b(th_r, ph_r)))

    l_max = a.l_max if a.l_max is not None else ap.l_max
    return HorizonSymElement(R @ Rp, SphereFunction(fn=a_new, l_max=l_max),
                             SphereFunction(fn=b_new, l_max=l_max))


def sg_inverse(F: HorizonSymElement) -> HorizonSymElement:
    R_inv = F.rotation.T
    a, b = F.a, F.b

    def a_new(theta, phi):
        th_b, ph_b = _rotate_angles(R_inv, theta, phi)
        return -np.real(a(th_b, ph_b))

    def b_new(theta, phi):
        th_b, ph_b = _rotate_angles(R_inv, theta, phi)
        return -np.exp(-np.real(a(th_b, ph_b))) * np.real(b(th_b, ph_b))

    return HorizonSymElement(R_inv, SphereFunction(fn=a_new, l_max=a.l_max),
                             SphereFunction(fn=b_new, l_max=b.l_max))


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def _coeff_list(f: SphereFunction, grid: Optional[SphereGrid]):
    if f.coeffs is None:
        if grid is None:
            raise ValueError("closure-backed function needs a grid to serialise")
        f = f.projected(grid)
    out = []
    for l in range(f.l_max + 1):
        for m in range(-l, l + 1):
            c = f.coeffs[lm_index(l, m)]
            out.append([l, m, float(c.real), float(c.imag)])
    return out


def _coeffs_from_list(items):
    l_max = max(int(it[0]) for it in items) if items else 0
    c = np.zeros((l_max + 1) ** 2, dtype=complex)
    for l, m, re, im in items:
        c[lm_index(int(l), int(m))] = re + 1j * im
    return SphereFunction(coeffs=c, l_max=l_max)


def bms_to_json(g: BMSElement, grid: Optional[SphereGrid] = None) -> str:
    m = g.lorentz.matrix
    doc = {
        "kind": "bms",
        "lorentz": [[z.real, z.imag] for z in m.reshape(4)],
        "supertranslation": _coeff_list(g.f, grid),
    }
    return json.dumps(doc, sort_keys=True)


def bms_from_json(text: str) -> BMSElement:
    doc = json.loads(text)
    ent = [complex(re, im) for re, im in doc["lorentz"]]
    lam = LorentzElement(np.array(ent).reshape(2, 2))
    return BMSElement(lam, _coeffs_from_list(doc["supertranslation"]))


def sg_to_json(F: HorizonSymElement, grid: Optional[SphereGrid] = None) -> str:
    quat = _Rotation.from_matrix(F.rotation).as_quat()  # x, y, z, w
    doc = {
        "kind": "horizon",
        "rotation_quaternion": [float(q) for q in quat],
        "a": _coeff_list(F.a, grid),
        "b": _coeff_list(F.b, grid),
    }
    return json.dumps(doc, sort_keys=True)


def sg_from_json(text: str) -> HorizonSymElement:
    doc = json.loads(text)
    R = _Rotation.from_quat(doc["rotation_quaternion"]).as_matrix()
    return HorizonSymElement(R, _coeffs_from_list(doc["a"]),
                             _coeffs_from_list(doc["b"]))
