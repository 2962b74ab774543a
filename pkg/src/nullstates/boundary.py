"""Symplectic form, vacuum/thermal scalar products and two-point kernels on
null boundaries R x S^2, plus the black-hole horizon measure and detailed
balance diagnostics.

Fourier convention: psihat(k, s) = int e^{i k u} psi(u, s) du / sqrt(2 pi).
The vacuum pairing is <K psi | K psi'> = int_{k>0} 2k conj(psihat) psihat' dk dmu,
whose real part is the scalar product mu and whose imaginary part is sigma/2.
The equivalent position-space kernel is -(1/pi) / (u - u' - i eps)^2; the
-1/pi normalisation is pinned by the identity Im omega_2 = sigma/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .geometry import SphereGrid


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------

class BoundaryFunction:
    """Real samples psi(u_i, s_j) on a uniform u-grid times a sphere grid.

    Functions are required to be effectively compactly supported: the first
    and last 5% of u-samples must stay below 1e-12 of the peak.
    """

    def __init__(self, u: np.ndarray, values: np.ndarray, grid: SphereGrid,
                 check_support: bool = True):
        self.u = np.asarray(u, dtype=float)
        self.du = float(self.u[1] - self.u[0])
        if np.max(np.abs(np.diff(self.u) - self.du)) > 1e-10 * self.du:
            raise ValueError("u grid must be uniform")
        values = np.asarray(values, dtype=float)
        self.values = values.reshape(len(self.u), grid.size)
        self.grid = grid
        if check_support:
            peak = np.max(np.abs(self.values))
            edge = max(2, int(0.05 * len(self.u)))
            tail = max(np.max(np.abs(self.values[:edge])),
                       np.max(np.abs(self.values[-edge:])))
            if peak > 0 and tail > 1e-12 * peak:
                raise ValueError("boundary function is not supported inside "
                                 "the grid window")

    @staticmethod
    def from_profile(u, profile, grid: SphereGrid, angular=None) -> "BoundaryFunction":
        """Separable  psi(u, s) = profile(u) * angular(s); default angular
        part is the constant lowest harmonic (so that int |Y|^2 dmu = 1)."""
        u = np.asarray(u, dtype=float)
        p = np.asarray(profile(u) if callable(profile) else profile, dtype=float)
        if angular is None:
            ang = np.real(grid.ylm(0, 0))
        elif isinstance(angular, tuple):
            l, m = angular
            ang = np.real(grid.ylm(l, m)) if m == 0 else np.real(
                (grid.ylm(l, m) + np.conj(grid.ylm(l, m))) / np.sqrt(2.0))
        else:
            ang = np.asarray(angular, dtype=float).reshape(grid.size)
        return BoundaryFunction(u, np.outer(p, ang), grid)

    def _compatible(self, other: "BoundaryFunction"):
        if self.values.shape != other.values.shape or self.du != other.du \
                or self.u[0] != other.u[0]:
            raise ValueError("boundary functions live on different grids")


@dataclass
class SpectralDensity:
    """u-direction Fourier data psihat(k_i, s_j) on the fftshifted k grid."""

    k: np.ndarray
    values: np.ndarray
    grid: SphereGrid
    dk: float

    def reality_defect(self) -> float:
        """max |psihat(-k) - conj(psihat(k))| over matched bins."""
        v = self.values
        flipped = np.conj(v[::-1])
        # bin -k of index i is at index n-i for fftshifted even-length grids
        n = len(self.k)
        if n % 2 == 0:
            defect = np.abs(v[1:] - flipped[:-1])
        else:
            defect = np.abs(v - flipped)
        return float(np.max(defect))


def fourier_u(psi: BoundaryFunction) -> SpectralDensity:
    """Discrete transform with the e^{+iku}/sqrt(2 pi) convention; the
    discrete Plancherel identity holds to rounding."""
    n = len(psi.u)
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=psi.du)
    phase = np.exp(1j * k[:, None] * psi.u[0])
    vals = n * np.fft.ifft(psi.values, axis=0) * psi.du / np.sqrt(2.0 * np.pi)
    vals = vals * phase
    order = np.argsort(k)
    return SpectralDensity(k=k[order], values=vals[order], grid=psi.grid,
                           dk=2.0 * np.pi / (n * psi.du))


def plancherel_defect(psi: BoundaryFunction) -> float:
    hat = fourier_u(psi)
    a = np.sum(psi.values ** 2) * psi.du
    b = np.sum(np.abs(hat.values) ** 2) * hat.dk
    return float(abs(a - b) / max(abs(a), 1e-300))


def _du_spectral(psi: BoundaryFunction) -> np.ndarray:
    n = len(psi.u)
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=psi.du)
    vals = np.fft.ifft(psi.values, axis=0)
    # with psihat ~ e^{+iku}, d/du acts as -ik on the transform
    return np.real(np.fft.fft(-1j * k[:, None] * vals, axis=0))


def sigma_boundary(psi: BoundaryFunction, psi2: BoundaryFunction) -> float:
    """int (psi d_u psi' - psi' d_u psi) du dmu; antisymmetric by construction."""
    psi._compatible(psi2)
    d2 = _du_spectral(psi2)
    d1 = _du_spectral(psi)
    integrand = psi.values * d2 - psi2.values * d1
    return float(np.sum(integrand * psi.grid.weights[None, :]) * psi.du)


def _pairing(psi: BoundaryFunction, psi2: BoundaryFunction, weight,
             kink: bool = False) -> complex:
    """sum_k weight(k) conj(psihat) psihat' dk dmu over the full k grid.

    With ``kink=True`` the Euler-Maclaurin correction (dk^2/12) * [w'] at
    k = 0 is added; the positive-frequency weight 2k Theta(k) has slope
    jump 2 there, and without the correction the trapezoidal spectral sum
    carries an O(dk^2) bias.  The correction is real for real data, so the
    symplectic (imaginary) part is untouched.
    """
    h1 = fourier_u(psi)
    h2 = fourier_u(psi2)
    w = weight(h1.k)
    acc = np.einsum("k,ks,ks,s->", w, np.conj(h1.values), h2.values,
                    psi.grid.weights.astype(complex))
    out = complex(acc * h1.dk)
    if kink:
        i0 = int(np.argmin(np.abs(h1.k)))
        g0 = np.sum(np.conj(h1.values[i0]) * h2.values[i0]
                    * psi.grid.weights)
        out += complex(h1.dk ** 2 / 12.0 * 2.0 * g0)
    return out


def mu_vacuum(psi: BoundaryFunction, psi2: BoundaryFunction) -> float:
    """Re int_{k>0} 2k conj(psihat) psihat' dk dmu."""
    return float(np.real(_pairing(psi, psi2,
                                  lambda k: np.where(k > 0, 2.0 * k, 0.0),
                                  kink=True)))


def thermal_weight(k, beta: float):
    """2k/(1 - e^{-beta k}) on all of R, with the limit 2/beta at k = 0."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = np.where(k == 0.0, 2.0 / beta, -2.0 * k / np.expm1(-beta * k))
    return w


def mu_thermal(psi: BoundaryFunction, psi2: BoundaryFunction, beta: float) -> float:
    if beta <= 0:
        raise ValueError("inverse temperature must be positive")
    return float(np.real(_pairing(psi, psi2, lambda k: thermal_weight(k, beta))))


def boundary_two_point(psi: BoundaryFunction, psi2: BoundaryFunction) -> complex:
    """omega_2 = mu + (i/2) sigma = int_{k>0} 2k conj(psihat) psihat' dk dmu."""
    return _pairing(psi, psi2, lambda k: np.where(k > 0, 2.0 * k, 0.0),
                    kink=True)


# -- position-space kernel with epsilon continuation ------------------------
#
# The eps -> 0 limit cannot be taken by shrinking eps below the grid spacing
# (the discrete diagonal blows up as 1/eps^2 long before the sum resembles
# the integral).  Instead the kernel is evaluated at a resolvable eps of a
# few spacings and continued analytically to eps = 0 by its Taylor expansion
# in eps; residual O((eps/scale)^{order+1}).

EPS_SPACINGS = 6.0       # eps = EPS_SPACINGS * grid spacing
EPS_ORDER = 5            # Taylor-continuation order


def kernel_pair_value(u, wu, a, v, wv, b, eps, order: int = EPS_ORDER) -> complex:
    """(-1/pi) sum a(u) b(v) wu wv / (u - v - i0)^2, continued from i eps."""
    return -_kernels.eps_kernel_quad(np.asarray(a) * np.asarray(wu),
                                     np.asarray(b) * np.asarray(wv),
                                     u, v, eps, order) / np.pi


def boundary_two_point_kernel(psi: BoundaryFunction, psi2: BoundaryFunction,
                              eps: Optional[float] = None,
                              order: int = EPS_ORDER) -> complex:
    """Evaluation by smearing the regularised kernel and removing eps.

    omega_2(psi, psi') = lim_eps -(1/pi) int psi(u,s) psi'(u',s)
    / (u - u' - i eps)^2 du du' dmu(s), the limit taken by Taylor
    continuation from eps = 4h (h = u-grid spacing).
    """
    psi._compatible(psi2)
    if eps is None:
        eps = EPS_SPACINGS * psi.du
    w = np.full(len(psi.u), psi.du)
    acc = 0.0 + 0.0j
    for s in range(psi.grid.size):
        ws = psi.grid.weights[s]
        if ws == 0.0:
            continue
        acc += ws * kernel_pair_value(psi.u, w, psi.values[:, s],
                                      psi.u, w, psi2.values[:, s], eps, order)
    return acc


# ---------------------------------------------------------------------------
# horizon building blocks
# ---------------------------------------------------------------------------

def horizon_inner_product(f, f2, M: float, U=None, grid: Optional[SphereGrid] = None,
                          eps: Optional[float] = None,
                          order: int = EPS_ORDER) -> complex:
    """-(4 M^2 / pi) lim int f(U,s) conj(f'(U',s)) / (U - U' - i eps)^2.

    ``f``/``f2`` are BoundaryFunction-like samples on a common U-grid (the
    affine coordinate of the past horizon); the value is the Hermitian
    pairing of horizon data, positive for f = f'.
    """
    if isinstance(f, BoundaryFunction):
        f._compatible(f2)
        U = f.u
        grid = f.grid
        fv, gv = f.values, f2.values
        du = f.du
    else:
        U = np.asarray(U, dtype=float)
        fv = np.asarray(f).reshape(len(U), grid.size)
        gv = np.asarray(f2).reshape(len(U), grid.size)
        du = float(U[1] - U[0])
    if eps is None:
        eps = EPS_SPACINGS * du
    w = np.full(len(U), du)
    acc = 0.0 + 0.0j
    for s in range(grid.size):
        acc += grid.weights[s] * _kernels.eps_kernel_quad(
            fv[:, s] * w, np.conj(gv[:, s]) * w, U, U, eps, order)
    return -4.0 * M * M / np.pi * acc


def horizon_inner_product_fourier(f: BoundaryFunction, f2: BoundaryFunction,
                                  M: float) -> complex:
    """Independent transform-side evaluation 8 M^2 int_{K>0} K conj(fhat) fhat'.

    Valid for real horizon data; the r_s^2 = 4 M^2 area factor of the
    horizon measure is carried explicitly so mass scaling is exact.
    """
    return 4.0 * M * M * _pairing(f, f2, lambda k: np.where(k > 0, 2.0 * k, 0.0))


@dataclass(frozen=True)
class HorizonMeasure:
    """Spectral density 8 M^2 k e^{4 pi M k} / (e^{4 pi M k} - e^{-4 pi M k})."""

    M: float

    @property
    def beta(self) -> float:
        return 8.0 * np.pi * self.M

    def density(self, k):
        return horizon_thermal_density(self.M, k)


def horizon_thermal_density(M: float, k):
    """rho(k), evaluated in the overflow-safe form -8 M^2 k / expm1(-beta k)."""
    k = np.asarray(k, dtype=float)
    beta = 8.0 * np.pi * M
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(k == 0.0, M / np.pi, -8.0 * M * M * k / np.expm1(-beta * k))
    return rho if rho.ndim else float(rho)


# ---------------------------------------------------------------------------
# detailed-balance diagnostics
# ---------------------------------------------------------------------------

def kms_check(k, w, beta: float) -> dict:
    """Detailed-balance report: max_k |w(k)/w(-k) e^{-beta k} - 1|.

    ``k`` must be a symmetric grid (every k > 0 has its mirror).  Bins with
    w(-k) = 0 but w(k) != 0 are flagged as non-thermal instead of entering
    the maximum.
    """
    k = np.asarray(k, dtype=float)
    w = np.asarray(w, dtype=float)
    order = np.argsort(k)
    k, w = k[order], w[order]
    non_kms = False
    max_dev = 0.0
    tested = 0
    for i, ki in enumerate(k):
        if ki <= 0:
            continue
        j = np.argmin(np.abs(k + ki))
        if abs(k[j] + ki) > 1e-9 * max(ki, 1.0):
            continue
        if w[j] == 0.0:
            if w[i] != 0.0:
                non_kms = True
            continue
        dev = abs(w[i] / w[j] * np.exp(-beta * ki) - 1.0)
        max_dev = max(max_dev, float(dev))
        tested += 1
    return {
        "beta": float(beta),
        "maxDeviation": max_dev,
        "grid": int(tested),
        "nonKMS": bool(non_kms or tested == 0),
    }
