"""Bulk propagators, two-point kernels, bulk-to-boundary maps and quasi-free
state assembly for spherically reduced configurations.

Test functions are real, compactly supported and spherically symmetric,
sampled on a (time x radius) grid.  Smearing integrals reduce to radial
k-quadratures through the on-shell transform

    T_f(k) = int dt dr e^{i k t} r sin(k r) f(t, r),

in terms of which the flat massless vacuum is
omega_2(f, f') = 4 int_0^inf conj(T_f) T_f' dk / k.  On conformally flat
backgrounds the mode transform g_f(k) = int dtau dr a^3 T_k(tau) r sin(kr) f
replaces it, with Wronskian-normalised modes T_k; then
omega_2(f, f') = 8 int_0^inf g_f conj(g_f') dk, which reduces exactly to the
flat expression when a = 1, T_k = e^{-i k tau}/sqrt(2k).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .geometry import CosmologyModel
from .modes import ds_mode, ModeFunction


class AccuracyError(RuntimeError):
    pass


class LimitError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

class TestFunction:
    """Real spherically symmetric smearing function on a (t, r) grid."""

    def __init__(self, t, r, values, check_support: bool = True):
        self.t = np.asarray(t, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.values = np.asarray(values, dtype=float).reshape(len(self.t),
                                                              len(self.r))
        self.dt = float(self.t[1] - self.t[0])
        self.dr = float(self.r[1] - self.r[0])
        self.wt = np.full(len(self.t), self.dt)
        self.wr = np.full(len(self.r), self.dr)
        edge = max(1, int(0.03 * len(self.t)))
        peak = np.max(np.abs(self.values))
        if check_support and peak > 0:
            tail = max(np.max(np.abs(self.values[:edge])),
                       np.max(np.abs(self.values[-edge:])),
                       np.max(np.abs(self.values[:, -edge:])))
            if tail > 1e-10 * peak:
                raise ValueError("support must be strictly interior to the grid")

    @staticmethod
    def bump(t, r, t0, r0, st, sr, amplitude=1.0) -> "TestFunction":
        """Gaussian shell  A exp(-(t-t0)^2/2st^2 - (r-r0)^2/2sr^2)."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        vals = amplitude * np.exp(-0.5 * ((t[:, None] - t0) / st) ** 2
                                  - 0.5 * ((r[None, :] - r0) / sr) ** 2)
        vals[vals < 1e-14 * np.max(np.abs(vals))] = 0.0
        return TestFunction(t, r, vals)

    def scaled_values(self, weight_of_t) -> "TestFunction":
        """New test function with values multiplied by weight(t) per row."""
        w = np.asarray(weight_of_t(self.t), dtype=float)
        return TestFunction(self.t, self.r, self.values * w[:, None],
                            check_support=False)

    def support_radius(self) -> float:
        mask = np.any(np.abs(self.values) > 0, axis=0)
        return float(self.r[mask][-1]) if np.any(mask) else 0.0

    def time_span(self) -> tuple[float, float]:
        mask = np.any(np.abs(self.values) > 0, axis=1)
        tt = self.t[mask]
        return (float(tt[0]), float(tt[-1])) if tt.size else (0.0, 0.0)


# ---------------------------------------------------------------------------
# radial k-quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KQuadrature:
    """Gauss-Legendre panels on [k_min, k_max] with a per-panel phase cap."""

    k: np.ndarray
    w: np.ndarray

    @staticmethod
    def build(k_max: float, phase_scale: float, cap: float = np.pi / 4.0,
              nodes_per_panel: int = 4, k_min: float = 0.0) -> "KQuadrature":
        """Panel width limited so that (width * phase_scale) <= cap; the
        phase scale is the largest |t| + r reached by the smearing supports."""
        width = cap / max(phase_scale, 1e-12)
        n_panels = max(8, int(np.ceil((k_max - k_min) / width)))
        edges = np.linspace(k_min, k_max, n_panels + 1)
        x, w = np.polynomial.legendre.leggauss(nodes_per_panel)
        ks, ws = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            ks.append(0.5 * (b - a) * x + 0.5 * (a + b))
            ws.append(0.5 * (b - a) * w)
        return KQuadrature(np.concatenate(ks), np.concatenate(ws))


def onshell_transform(f: TestFunction, k: np.ndarray) -> np.ndarray:
    """T_f(k) = int dt dr e^{i k t} r sin(k r) f(t, r)."""
    E = np.exp(1j * np.outer(k, f.t)) * f.wt[None, :]
    S = np.sin(np.outer(k, f.r)) * (f.r * f.wr)[None, :]
    return np.einsum("kt,tr,kr->k", E, f.values, S, optimize=True)


def mode_transform(f: TestFunction, chi: np.ndarray, a_of_t,
                   k: np.ndarray) -> np.ndarray:
    """g_f(k) = int dtau dr a^3(tau) T_k(tau) r sin(k r) f(tau, r).

    ``chi`` holds the mode samples T_k(tau) with shape (len(k), len(f.t)).
    """
    a3 = np.asarray(a_of_t(f.t), dtype=float) ** 3
    E = chi * (a3 * f.wt)[None, :]
    S = np.sin(np.outer(k, f.r)) * (f.r * f.wr)[None, :]
    return np.einsum("kt,tr,kr->k", E, f.values, S, optimize=True)


def default_kquad(fs: Sequence[TestFunction], k_max: float = 40.0) -> KQuadrature:
    scale = max(max(abs(f.t[0]), abs(f.t[-1])) + f.r[-1] for f in fs)
    return KQuadrature.build(k_max, scale)


# ---------------------------------------------------------------------------
# flat-space states
# ---------------------------------------------------------------------------

@dataclass
class TwoPointKernel:
    """A state's two-point structure: pointwise kernel plus smearing rule.

    ``pointwise(x, xp, eps)`` takes 4-vectors (t, x, y, z) and the kernel
    regulator; ``smear(f, fp)`` integrates against two test functions.
    Swapping the points together with the regulator sign conjugates the
    value (Hermiticity).
    """

    name: str
    spacetime: str
    pointwise: Callable
    smear: Callable


def _mink_massless_point(dt, R, eps):
    return 1.0 / (4.0 * np.pi ** 2 * (R * R - (dt - 1j * eps) ** 2))


def minkowski_vacuum_2pt(kquad: Optional[KQuadrature] = None,
                         mass: float = 0.0) -> TwoPointKernel:
    """Flat vacuum; the massless kernel is 1/(4 pi^2 (|dx|^2 - (dt-i eps)^2)),
    equal to the d^3k/(2 pi)^3 e^{-i k dt + i k.dx}/(2k) mode integral."""

    def pointwise(x, xp, eps=0.0):
        x = np.asarray(x, dtype=float)
        xp = np.asarray(xp, dtype=float)
        dt = x[0] - xp[0]
        R = float(np.linalg.norm(x[1:] - xp[1:]))
        if mass == 0.0:
            return complex(_mink_massless_point(dt, R, eps))
        if abs(dt) > 1e-12:
            raise NotImplementedError("massive kernel sampled at equal time only")
        from scipy.special import kv
        return complex(mass * kv(1, mass * R) / (4.0 * np.pi ** 2 * R))

    def smear(f: TestFunction, fp: TestFunction, quad: Optional[KQuadrature] = None):
        q = quad or kquad or default_kquad([f, fp])
        if mass == 0.0:
            Tf = onshell_transform(f, q.k)
            Tp = onshell_transform(fp, q.k)
            return complex(np.sum(4.0 * q.w * np.conj(Tf) * Tp / q.k))
        # massive: e^{i omega t} in place of e^{i k t}, weight k/omega
        om = np.sqrt(q.k ** 2 + mass ** 2)
        Tf = _onshell_massive(f, q.k, om)
        Tp = _onshell_massive(fp, q.k, om)
        return complex(np.sum(4.0 * q.w * (q.k / om) * np.conj(Tf) * Tp / q.k))

    tag = "minkowskiVacuum" if mass == 0.0 else "minkowskiVacuumMassive"
    return TwoPointKernel(tag, "minkowski", pointwise, smear)


def _onshell_massive(f: TestFunction, k, om):
    E = np.exp(1j * np.outer(om, f.t)) * f.wt[None, :]
    S = np.sin(np.outer(k, f.r)) * (f.r * f.wr)[None, :]
    return np.einsum("kt,tr,kr->k", E, f.values, S, optimize=True)


def minkowski_vacuum_equal_time_quadrature(mass: float, R: float,
                                           eps_levels=(None, None)) -> float:
    """Mode-integral oracle for the massive equal-time kernel by damped
    radial quadrature with extrapolation of the damping."""
    vals = []
    eps_list = [R / 6.0, R / 8.0, R / 12.0]
    for eps in eps_list:
        q = KQuadrature.build(60.0 / eps, R + eps, nodes_per_panel=10)
        om = np.sqrt(q.k ** 2 + mass ** 2)
        integrand = (q.k / om) * np.sin(q.k * R) * np.exp(-om * eps)
        vals.append(np.sum(q.w * integrand) / (4.0 * np.pi ** 2 * R))
    # polynomial extrapolation in eps to 0
    e = eps_list
    v = vals
    for m in range(1, len(v)):
        v = [(e[i] * v[i + 1] - e[i + m] * v[i]) / (e[i] - e[i + m])
             for i in range(len(v) - 1)]
    return float(v[0])


def minkowski_thermal_2pt(beta: float,
                          kquad: Optional[KQuadrature] = None) -> TwoPointKernel:
    """Flat equilibrium state at inverse temperature beta (massless)."""
    if beta <= 0:
        raise ValueError("beta must be positive")

    def pointwise(x, xp, eps=0.0):
        raise NotImplementedError("thermal kernel exposed through smearing only")

    def smear(f: TestFunction, fp: TestFunction, quad: Optional[KQuadrature] = None):
        q = quad or kquad or default_kquad([f, fp])
        Tf = onshell_transform(f, q.k)
        Tp = onshell_transform(fp, q.k)
        wplus = 1.0 / (-np.expm1(-beta * q.k))
        wminus = np.exp(-beta * q.k) * wplus
        val = np.sum(4.0 * q.w / q.k * (np.conj(Tf) * Tp * wplus
                                        + Tf * np.conj(Tp) * wminus))
        return complex(val)

    return TwoPointKernel("minkowskiThermal", "minkowski", pointwise, smear)


# ---------------------------------------------------------------------------
# sharp causal propagator (flat): light-cone window reduction
# ---------------------------------------------------------------------------

def minkowski_causal_propagator(f: TestFunction, fp: TestFunction) -> float:
    """G(f, f') for the massless field from the sharp light-cone kernel.

    The delta functions reduce the 8-dimensional smearing to radial pair
    windows: G = 2 pi int dr ds r s [ C_{rs} mass in t'-t in (|r-s|, r+s)
    minus the reflected window ], with C the t-cross-correlation of the two
    profiles at fixed radii.
    """
    if len(f.t) != len(fp.t) or f.dt != fp.dt:
        raise ValueError("test functions must share the time grid")
    nt = len(f.t)
    npad = 1
    while npad < 2 * nt:
        npad *= 2
    F1 = np.fft.rfft(f.values, n=npad, axis=0)
    F2 = np.fft.rfft(fp.values, n=npad, axis=0)
    # C[r, s, Delta] = sum_t f(t, r) fp(t + Delta, s) dt, Delta = m*dt
    cross = np.einsum("ka,kb->abk", np.conj(F1), F2)
    corr = np.fft.irfft(cross, n=npad, axis=2) * f.dt
    # positive lags at indices 0..nt-1, negative at npad-1, ..., npad-nt+1
    pos = corr[:, :, :nt]
    neg = np.concatenate([corr[:, :, :1],
                          corr[:, :, npad - nt + 1:][:, :, ::-1]], axis=2)
    diff = pos - neg          # C(Delta) - C(-Delta), Delta >= 0
    # cumulative integral over Delta
    cum = np.zeros_like(diff)
    cum[:, :, 1:] = np.cumsum(0.5 * (diff[:, :, 1:] + diff[:, :, :-1]), axis=2) * f.dt
    dgrid = np.arange(nt) * f.dt
    a = np.abs(f.r[:, None] - fp.r[None, :])
    b = f.r[:, None] + fp.r[None, :]
    Ia = _interp_last(cum, dgrid, a)
    Ib = _interp_last(cum, dgrid, b)
    w = (f.wr * f.r)[:, None] * (fp.wr * fp.r)[None, :]
    return float(2.0 * np.pi * np.sum(w * (Ib - Ia)))


def _interp_last(cum, dgrid, x):
    """Linear interpolation of cum[r, s, :] at per-(r, s) abscissae x."""
    dd = dgrid[1] - dgrid[0]
    pos = np.clip(x / dd, 0.0, len(dgrid) - 1.0)
    k0 = np.floor(pos).astype(int)
    k1 = np.minimum(k0 + 1, len(dgrid) - 1)
    frac = pos - k0
    ii, jj = np.meshgrid(np.arange(cum.shape[0]), np.arange(cum.shape[1]),
                         indexing="ij")
    return cum[ii, jj, k0] * (1.0 - frac) + cum[ii, jj, k1] * frac


# ---------------------------------------------------------------------------
# conformally flat states from mode families
# ---------------------------------------------------------------------------

class ModeFamily:
    """Wronskian-normalised modes T_k(tau) sampled on (k-quadrature x tau grid)."""

    def __init__(self, kquad: KQuadrature, tau: np.ndarray, chi: np.ndarray,
                 a_of_tau, label: str = "modes"):
        self.kquad = kquad
        self.tau = np.asarray(tau, dtype=float)
        self.chi = np.asarray(chi, dtype=complex)
        self.a = a_of_tau
        self.label = label

    @staticmethod
    def de_sitter(nu: complex, H: float, kquad: KQuadrature,
                  tau: np.ndarray) -> "ModeFamily":
        """Exact family on a(tau) = -1/(H tau) for every quadrature node."""
        tau = np.asarray(tau, dtype=float)
        chi = np.empty((len(kquad.k), len(tau)), dtype=complex)
        for i, k in enumerate(kquad.k):
            chi[i], _ = ds_mode(float(k), tau, nu)
        return ModeFamily(kquad, tau, chi,
                          lambda t: -1.0 / (H * np.asarray(t, dtype=float)),
                          label=f"deSitter(nu={nu})")

    @staticmethod
    def flat(kquad: KQuadrature, tau: np.ndarray) -> "ModeFamily":
        tau = np.asarray(tau, dtype=float)
        k = kquad.k[:, None]
        chi = np.exp(-1j * k * tau[None, :]) / np.sqrt(2.0 * k)
        return ModeFamily(kquad, tau, chi,
                          lambda t: np.ones_like(np.asarray(t, dtype=float)),
                          label="flat")

    @staticmethod
    def from_modes(kquad: KQuadrature, modes: Sequence[ModeFunction],
                   a_of_tau, label: str = "solved") -> "ModeFamily":
        tau = modes[0].tau
        chi = np.stack([m.chi for m in modes])
        return ModeFamily(kquad, tau, chi, a_of_tau, label=label)

    def check_resolution(self, f: TestFunction):
        """Oscillation per k-step bounded by pi/4 over the support reach."""
        scale = max(abs(f.t[0]), abs(f.t[-1])) + f.r[-1]
        dk = np.max(np.diff(np.sort(self.kquad.k)))
        if dk * scale > np.pi / 2.0:
            raise AccuracyError(
                f"k-grid underresolved: dk*scale = {dk * scale:.3f} > pi/2")

    def transform(self, f: TestFunction) -> np.ndarray:
        if len(f.t) != len(self.tau) or abs(f.t[0] - self.tau[0]) > 1e-12:
            raise ValueError("test function must live on the family tau grid")
        return mode_transform(f, self.chi, self.a, self.kquad.k)


def frw_two_point(family: ModeFamily, f: TestFunction, fp: TestFunction,
                  gf: Optional[np.ndarray] = None,
                  gp: Optional[np.ndarray] = None) -> complex:
    """omega_2(f, f') = 8 int_0^inf g_f(k) conj(g_f'(k)) dk."""
    family.check_resolution(f)
    if gf is None:
        gf = family.transform(f)
    if gp is None:
        gp = family.transform(fp)
    return complex(np.sum(8.0 * family.kquad.w * gf * np.conj(gp)))


def frw_thermal_two_point(family: ModeFamily, beta: float, f: TestFunction,
                          fp: TestFunction, gf: Optional[np.ndarray] = None,
                          gp: Optional[np.ndarray] = None) -> complex:
    """Mode sum with weights 1/(1-e^{-beta k}) and 1/(e^{beta k}-1)."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    family.check_resolution(f)
    if gf is None:
        gf = family.transform(f)
    if gp is None:
        gp = family.transform(fp)
    k = family.kquad.k
    wplus = 1.0 / (-np.expm1(-beta * k))
    wminus = np.exp(-beta * k) * wplus
    val = np.sum(8.0 * family.kquad.w * (gf * np.conj(gp) * wplus
                                         + np.conj(gf) * gp * wminus))
    return complex(val)


def ds_conformal_vacuum_pointwise(model: CosmologyModel, x, xp, eps=0.0) -> complex:
    """(a a')^{-1} x flat massless kernel; the nu = 1/2 closed form."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    dt = x[0] - xp[0]
    R = float(np.linalg.norm(x[1:] - xp[1:]))
    pref = 1.0 / (float(model.a(x[0])) * float(model.a(xp[0])))
    return complex(pref * _mink_massless_point(dt, R, eps))


# ---------------------------------------------------------------------------
# conformal rescaling of Green structures
# ---------------------------------------------------------------------------

def conformal_rescale_bilinear(smear: Callable, omega_of_t) -> Callable:
    """Bilinear form of the conformally rescaled Green structure.

    For Gtilde = Omega^{-1} G (Omega^3 .), the smeared bilinear with the
    rescaled volume element is Gtilde(f, f') = G(Omega^3 f, Omega^3 f').
    ``omega_of_t`` is the conformal factor as a function of the time
    coordinate (spatially homogeneous charts).
    """
    def rescaled(f: TestFunction, fp: TestFunction, *args, **kwargs):
        w = lambda t: np.asarray(omega_of_t(t), dtype=float) ** 3
        return smear(f.scaled_values(w), fp.scaled_values(w), *args, **kwargs)

    return rescaled


def conformal_operator_residual(model: CosmologyModel, h: Callable,
                                tau: np.ndarray, r: np.ndarray) -> float:
    """Finite-difference residual of P(a^{-1} h) = a^{-3} Ptilde(h).

    P is the conformally coupled operator of the a^2(eta)-rescaled metric
    and Ptilde the flat one; h(tau, r) is a smooth spherically symmetric
    sample.  Both sides are evaluated by central stencils away from the
    grid edges; the sup of the difference over interior points is returned,
    normalised by the sup of either side.
    """
    tau = np.asarray(tau, dtype=float)
    r = np.asarray(r, dtype=float)
    T, Rm = np.meshgrid(tau, r, indexing="ij")
    H = h(T, Rm)
    a = model.a(tau)[:, None]
    Ric = model.ricci_scalar(tau)[:, None]
    ap = model.a_prime(tau)[:, None]
    dt = tau[1] - tau[0]
    dr = r[1] - r[0]

    def d2t(u):
        return (u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]) / dt ** 2

    def d1t(u):
        return (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * dt)

    def lap_r(u):
        urr = (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / dr ** 2
        ur = (u[1:-1, 2:] - u[1:-1, :-2]) / (2 * dr)
        return urr + 2.0 * ur / Rm[1:-1, 1:-1]

    # flat side: Ptilde h = -h_tt + lap h  (signature -+++)
    flat = -d2t(H) + lap_r(H)
    lhs_field = H / a
    ai = a[1:-1]
    curved = (1.0 / ai ** 2) * (-d2t(lhs_field) - 2.0 * (ap[1:-1] / ai) * d1t(lhs_field)
                                + lap_r(lhs_field)) - (Ric[1:-1] / 6.0) * lhs_field[1:-1, 1:-1]
    rhs = flat / ai ** 3
    scale = max(np.max(np.abs(curved)), np.max(np.abs(rhs)), 1e-300)
    return float(np.max(np.abs(curved - rhs)) / scale)


# ---------------------------------------------------------------------------
# Cauchy-surface symplectic form and evolution oracle
# ---------------------------------------------------------------------------

def sigma_bulk(data1, data2, r, a_slice: float = 1.0) -> float:
    """int_Sigma (phi grad_n phi' - phi' grad_n phi) dSigma for radial data.

    ``data1``/``data2`` are pairs (phi(r), normal derivative(r)); the slice
    measure is 4 pi r^2 a^3 dr with the scale factor at the slice.
    """
    phi1, pi1 = (np.asarray(x, dtype=float) for x in data1)
    phi2, pi2 = (np.asarray(x, dtype=float) for x in data2)
    r = np.asarray(r, dtype=float)
    dr = r[1] - r[0]
    integrand = (phi1 * pi2 - phi2 * pi1) * r ** 2
    return float(4.0 * np.pi * a_slice ** 3 * np.sum(integrand) * dr)


@dataclass
class RadialEvolution:
    """Leapfrog solution psi(tau, r) = r * chi of the half-line reduction."""

    tau: np.ndarray
    r: np.ndarray
    psi: np.ndarray

    def chi(self) -> np.ndarray:
        out = np.zeros_like(self.psi)
        out[:, 1:] = self.psi[:, 1:] / self.r[None, 1:]
        # regular centre by quadratic extrapolation
        out[:, 0] = (4.0 * out[:, 1] - out[:, 2]) / 3.0
        return out


def evolve_radial(pot_samples, tau: np.ndarray, r: np.ndarray,
                  psi0, psi1, source=None) -> RadialEvolution:
    """psi'' = psi_rr - V(tau) psi + src leapfrog evolution, CFL = dtau/dr."""
    tau = np.asarray(tau, dtype=float)
    r = np.asarray(r, dtype=float)
    nt, nr = len(tau), len(r)
    pot = np.asarray(pot_samples, dtype=float)
    src = np.zeros((nt, nr)) if source is None else np.asarray(source, dtype=float)
    psi = _kernels.leapfrog_radial(np.asarray(psi0, dtype=float),
                                   np.asarray(psi1, dtype=float),
                                   pot, src, tau[1] - tau[0], r[1] - r[0])
    return RadialEvolution(tau, r, psi)


def causal_propagator_evolution(model: Optional[CosmologyModel], m: float,
                                xi: float, f: TestFunction, fp: TestFunction,
                                refine: int = 4) -> float:
    """G(f, f') by advanced-minus-retarded leapfrog evolution (oracle path).

    Independent of the mode-sum route: the field of f' is evolved on a
    radial grid (CFL 0.5) with the chi-form source +a^3 f', and
    G(f, f') = 4 pi int dtau dr r a^3 f psi_G with psi_G = psi_adv - psi_ret.
    ``model=None`` means flat space.
    """
    if model is None:
        a_fn = lambda t: np.ones_like(np.asarray(t, dtype=float))
        V_fn = lambda t: np.full_like(np.asarray(t, dtype=float), m * m)
    else:
        a_fn = model.a
        V_fn = lambda t: model.a(t) ** 2 * (m * m + (xi - 1.0 / 6.0)
                                            * model.ricci_scalar(t))
    t_lo = min(f.t[0], fp.t[0])
    t_hi = max(f.t[-1], fp.t[-1])
    r_max = max(f.r[-1], fp.r[-1]) + (t_hi - t_lo) + 2.0
    dr = min(f.dr, fp.dr) / refine
    dtau = 0.5 * dr
    tau = np.arange(t_lo, t_hi + dtau, dtau)
    r = np.arange(0.0, r_max + dr, dr)
    pot = V_fn(tau)

    # source r a^3 f' interpolated onto the fine grid
    src = _interp_tf(fp, tau, r) * (a_fn(tau) ** 3)[:, None] * r[None, :]
    zero = np.zeros(len(r))
    ret = evolve_radial(pot, tau, r, zero, zero, src).psi
    # advanced solution: evolve the time-reversed problem and flip back
    adv = evolve_radial(pot[::-1], tau, r, zero, zero, src[::-1]).psi[::-1]
    psi_g = adv - ret
    fv = _interp_tf(f, tau, r)
    integrand = fv * psi_g * (a_fn(tau) ** 3)[:, None] * r[None, :]
    return float(4.0 * np.pi * np.sum(integrand) * dtau * dr)


def _interp_tf(f: TestFunction, tau, r):
    """Bilinear interpolation of a test function onto a finer grid."""
    from scipy.interpolate import RegularGridInterpolator
    itp = RegularGridInterpolator((f.t, f.r), f.values, bounds_error=False,
                                  fill_value=0.0)
    T, R = np.meshgrid(tau, r, indexing="ij")
    return itp(np.stack([T.ravel(), R.ravel()], axis=-1)).reshape(T.shape)


# ---------------------------------------------------------------------------
# bulk-to-boundary traces
# ---------------------------------------------------------------------------

def gamma_scri_minkowski(g: Callable, u: np.ndarray,
                         v_levels=(1e2, 3e2, 1e3)) -> np.ndarray:
    """Null-infinity trace of the spherical wave (g(t-r) - g(t+r))/r.

    The limit lim_{v->inf} (v/2) phi(u, v) is taken by evaluating at the
    configured v levels and extrapolating polynomially in 1/v; for compactly
    supported g the exact limit is g(u).
    """
    u = np.asarray(u, dtype=float)
    vals = []
    for v in v_levels:
        rr = 0.5 * (v - u)
        tt = 0.5 * (v + u)
        phi = (g(tt - rr) - g(tt + rr)) / rr
        vals.append(0.5 * v * phi)
    x = [1.0 / v for v in v_levels]
    out = vals
    for m in range(1, len(out)):
        out = [(x[i] * out[i + 1] - x[i + m] * out[i]) / (x[i] - x[i + m])
               for i in range(len(out) - 1)]
    return out[0]


@dataclass
class BoundaryModeProfile:
    """Plane-wave trace of a cosmological mode on the past horizon."""

    k: float
    amplitude: complex
    gamma_scale: float     # the -1/H prefactor of the full boundary map

    def u_profile(self, u) -> np.ndarray:
        return self.amplitude * np.exp(-1j * self.k * np.asarray(u, dtype=float))


def gamma_cosmo(mode: ModeFunction, model: CosmologyModel,
                tail_fraction: float = 0.1, tol: float = 1e-3) -> BoundaryModeProfile:
    """Extract the tau -> -inf plane-wave datum of a mode.

    The limit of e^{i k tau} chi_k(tau) is monitored over the early-time
    decade of the grid (a Cauchy criterion on its variation); absence of a
    horizon (no decay of the residual oscillation) raises LimitError.
    """
    if model.kind not in ("deSitter", "powerLaw", "custom"):
        raise LimitError(f"{model.kind!r} background has no null horizon "
                         "in the far past")
    tau = mode.tau
    n = max(8, int(tail_fraction * len(tau)))
    head = np.exp(1j * mode.k * tau[:n]) * mode.chi[:n]
    spread = float(np.max(np.abs(head - np.mean(head))))
    if spread > tol * max(float(np.mean(np.abs(head))), 1e-300):
        raise LimitError(
            f"no convergent boundary limit: early-time variation {spread:.2e}")
    if model.H is None:
        raise LimitError("model does not define the expansion rate of the map")
    return BoundaryModeProfile(k=mode.k, amplitude=complex(np.mean(head)),
                               gamma_scale=-1.0 / model.H)


# ---------------------------------------------------------------------------
# quasi-free assembly
# ---------------------------------------------------------------------------

def ordered_pair_partitions(n: int):
    """All pairings {(i1,i2),...} with i_{2k-1} < i_{2k} and ascending firsts."""
    idx = list(range(n))

    def rec(rest):
        if not rest:
            yield []
            return
        first = rest[0]
        for j in range(1, len(rest)):
            pair = (first, rest[j])
            remainder = rest[1:j] + rest[j + 1:]
            for tail in rec(remainder):
                yield [pair] + tail

    return list(rec(idx))


class QuasiFreeState:
    """n-point functionals generated from a two-point bilinear by pairings."""

    def __init__(self, two_point: Callable, name: str = "quasifree"):
        self.two_point = two_point
        self.name = name

    def npoint(self, args: Sequence) -> complex:
        n = len(args)
        if n % 2 == 1:
            return 0.0 + 0.0j
        if n == 0:
            return 1.0 + 0.0j
        cache: dict[tuple[int, int], complex] = {}

        def w2(i, j):
            if (i, j) not in cache:
                cache[(i, j)] = complex(self.two_point(args[i], args[j]))
            return cache[(i, j)]

        total = 0.0 + 0.0j
        for pairing in ordered_pair_partitions(n):
            term = 1.0 + 0.0j
            for i, j in pairing:
                term *= w2(i, j)
            total += term
        return total

    @staticmethod
    def pairing_count(n: int) -> int:
        if n % 2 == 1:
            return 0
        out = 1
        for m in range(n - 1, 0, -2):
            out *= m
        return out
