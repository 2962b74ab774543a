"""Cosmological mode functions: chi'' + (k^2 + V(tau)) chi = 0.

The potential is V = a^2 [m^2 + (xi - 1/6) R]; on the exponentially
expanding background a = -1/(H tau) it becomes (1/4 - nu^2)/tau^2 with
nu^2 = 9/4 - (m^2/H^2 + 12 xi).  Modes are normalised by the Wronskian
condition chi' conj(chi) - chi conj(chi') = -i and carry positive-frequency
data e^{i k tau} chi -> 1/sqrt(2k) in the far past.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.special import hankel1

from .geometry import CosmologyModel


class NumericEvaluationError(RuntimeError):
    pass


class IntegrationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# the index of the exponentially-expanding-background solutions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NuParameter:
    nu: complex

    def __post_init__(self):
        if self.nu.real < -1e-15 or self.nu.imag < -1e-15:
            raise ValueError("branch convention requires Re nu >= 0, Im nu >= 0")


def nu_parameter(m: float, xi: float, H: float) -> NuParameter:
    """nu = sqrt(9/4 - (m^2/H^2 + 12 xi)) on the branch Re, Im >= 0."""
    if H == 0:
        raise ValueError("H must be nonzero")
    arg = 2.25 - (m * m / (H * H) + 12.0 * xi)
    nu = np.sqrt(complex(arg))
    if nu.real < 0 or (nu.real == 0 and nu.imag < 0):
        nu = -nu
    return NuParameter(complex(nu))


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass
class ModePotential:
    """V(tau) with an optional split V = V_ref + dV about the -1/(H tau) case.

    ``decay_exponent`` declares the power-law fall-off of dV; the series
    construction checks it against its convergence hypotheses.
    """

    V: Callable[[np.ndarray], np.ndarray]
    nu: Optional[complex] = None
    dV: Optional[Callable[[np.ndarray], np.ndarray]] = None
    decay_exponent: Optional[float] = None
    domain: tuple[float, float] = (-np.inf, 0.0)
    model: Optional[CosmologyModel] = None
    m: float = 0.0
    xi: float = 0.0

    @staticmethod
    def from_model(model: CosmologyModel, m: float = 0.0, xi: float = 0.0) -> "ModePotential":
        def V(tau):
            tau = np.asarray(tau, dtype=float)
            return model.a(tau) ** 2 * (m * m + (xi - 1.0 / 6.0) * model.ricci_scalar(tau))

        nu = None
        dV = None
        if model.kind == "deSitter":
            nu = nu_parameter(m, xi, model.H).nu
            dV = lambda tau: np.zeros_like(np.asarray(tau, dtype=float))
        return ModePotential(V=V, nu=nu, dV=dV, decay_exponent=np.inf
                             if dV else None, domain=model.domain,
                             model=model, m=m, xi=xi)

    @staticmethod
    def free() -> "ModePotential":
        z = lambda tau: np.zeros_like(np.asarray(tau, dtype=float))
        return ModePotential(V=z, nu=0.5, dV=z, decay_exponent=np.inf,
                             domain=(-np.inf, np.inf))

    @staticmethod
    def reference(nu: complex) -> "ModePotential":
        """The pure (1/4 - nu^2)/tau^2 potential on (-inf, 0)."""
        c = 0.25 - complex(nu) ** 2
        if abs(c.imag) > 1e-12:
            raise ValueError("nu must give a real potential (real or imaginary nu)")
        cr = c.real
        z = lambda tau: np.zeros_like(np.asarray(tau, dtype=float))
        return ModePotential(V=lambda tau: cr / np.asarray(tau, float) ** 2,
                             nu=complex(nu), dV=z, decay_exponent=np.inf)

    @staticmethod
    def perturbed_reference(nu: complex, amplitude: float,
                            decay_exponent: float) -> "ModePotential":
        """(1/4 - nu^2)/tau^2 + amplitude * (-tau)^(-p) on (-inf, 0)."""
        c = (0.25 - complex(nu) ** 2).real
        p = float(decay_exponent)

        def dV(tau):
            return amplitude * (-np.asarray(tau, dtype=float)) ** (-p)

        return ModePotential(
            V=lambda tau: c / np.asarray(tau, float) ** 2 + dV(tau),
            nu=complex(nu), dV=dV, decay_exponent=p)


# ---------------------------------------------------------------------------
# mode container
# ---------------------------------------------------------------------------

@dataclass
class ModeFunction:
    k: float
    tau: np.ndarray
    chi: np.ndarray
    dchi: np.ndarray
    meta: dict = field(default_factory=dict)

    def wronskian(self) -> np.ndarray:
        return self.dchi * np.conj(self.chi) - self.chi * np.conj(self.dchi)

    def max_wronskian_defect(self) -> float:
        return float(np.max(np.abs(self.wronskian() + 1j)))

    def table(self):
        """Columns (tau, Re chi, Im chi, Re chi', Im chi', |W + i|)."""
        w = np.abs(self.wronskian() + 1j)
        names = ["tau", "re_chi", "im_chi", "re_dchi", "im_dchi", "wronskian_defect"]
        cols = [self.tau, self.chi.real, self.chi.imag,
                self.dchi.real, self.dchi.imag, w]
        return names, cols


def wronskian(mode: ModeFunction) -> np.ndarray:
    return mode.wronskian()


# ---------------------------------------------------------------------------
# exact solutions on the exponentially expanding background
# ---------------------------------------------------------------------------

def _hankel1_pair(nu: complex, z: np.ndarray):
    """H^(1)_nu(z) and H^(1)_{nu-1}(z) for real or imaginary order."""
    if abs(complex(nu).imag) < 1e-14:
        v = complex(nu).real
        return hankel1(v, z), hankel1(v - 1.0, z)
    h0 = np.empty(z.shape, dtype=complex)
    h1 = np.empty(z.shape, dtype=complex)
    nu_mp = mpmath.mpc(complex(nu).real, complex(nu).imag)
    flat = z.ravel()
    f0 = h0.ravel()
    f1 = h1.ravel()
    for i, zi in enumerate(flat):
        try:
            f0[i] = complex(mpmath.hankel1(nu_mp, zi))
            f1[i] = complex(mpmath.hankel1(nu_mp - 1, zi))
        except (ValueError, mpmath.libmp.NoConvergence) as exc:
            raise NumericEvaluationError(
                f"Hankel evaluation failed at z={zi}, nu={nu}") from exc
    return h0, h1


def ds_mode(k: float, tau, nu: complex) -> tuple[np.ndarray, np.ndarray]:
    """Positive-frequency mode on a = -1/(H tau) backgrounds.

    chi = (sqrt(pi)/2) e^{i pi (2 nu + 1)/4} sqrt(-tau) H^(1)_nu(-k tau);
    the constant phase is fixed so that e^{i k tau} chi -> 1/sqrt(2k) as
    tau -> -inf, which for nu = 1/2 collapses to exactly e^{-i k tau}/sqrt(2k).
    The derivative uses the exact Bessel recurrence.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    tau = np.asarray(tau, dtype=float)
    scalar = tau.ndim == 0
    tau = np.atleast_1d(tau)
    if np.any(tau >= 0):
        raise ValueError("modes live at conformal time tau < 0")
    z = -k * tau
    nu = complex(nu)
    C = 0.5 * np.sqrt(np.pi) * np.exp(0.25j * np.pi * (2.0 * nu + 1.0))
    h_nu, h_num1 = _hankel1_pair(nu, z)
    if not np.all(np.isfinite(h_nu)) or not np.all(np.isfinite(h_num1)):
        raise NumericEvaluationError(f"Hankel evaluation failed for k={k}, nu={nu}")
    chi = C * np.sqrt(-tau) * h_nu
    dchi = -C * np.sqrt(k) * (np.sqrt(z) * h_num1 + (0.5 - nu) * h_nu / np.sqrt(z))
    if scalar:
        return complex(chi[0]), complex(dchi[0])
    return chi, dchi


# ---------------------------------------------------------------------------
# direct integration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticVacuum:
    """Positive-frequency data imposed at finite tau0 with a first-order
    phase-integral correction for the residual potential."""

    tau0: float


@dataclass(frozen=True)
class ExplicitData:
    chi0: complex
    dchi0: complex
    tau0: float


def _wkb_data(potential: ModePotential, k: float, tau0: float):
    V = potential.V
    w0 = np.sqrt(k * k + float(V(tau0)))
    h = 1e-6 * max(abs(tau0), 1.0)
    dV0 = (float(V(tau0 + h)) - float(V(tau0 - h))) / (2.0 * h)
    dw0 = dV0 / (2.0 * w0)
    # accumulated phase int_{-inf}^{tau0} (omega - k), mapped to s = -1/tau
    def integrand(s):
        t = -1.0 / s
        return (np.sqrt(k * k + float(V(t))) - k) / (s * s)

    s0 = -1.0 / tau0
    phase_corr, _ = quad(integrand, 0.0, s0, epsabs=1e-12, epsrel=1e-10,
                         limit=200)
    phase = k * tau0 + phase_corr
    chi0 = np.exp(-1j * phase) / np.sqrt(2.0 * w0)
    dchi0 = (-1j * w0 - 0.5 * dw0 / w0) * chi0
    return complex(chi0), complex(dchi0)


def solve_mode(potential: ModePotential, k: float, grid, init,
               rtol: float = 1e-10, atol: float = 1e-12) -> ModeFunction:
    """Integrate the mode equation over an ascending conformal-time grid.

    ``init`` is :class:`AsymptoticVacuum` (normalised positive-frequency
    data at its tau0, which must satisfy |dV(tau0)| < 1e-8 k^2 when a
    reference split is declared) or :class:`ExplicitData`.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly ascending")
    if isinstance(init, AsymptoticVacuum):
        tau0 = float(init.tau0)
        if tau0 > grid[0]:
            raise ValueError("asymptotic data must be set at or before the grid start")
        if potential.dV is not None:
            if abs(float(potential.dV(tau0))) >= 1e-8 * k * k:
                raise ValueError(
                    f"tau0={tau0} too shallow: |dV(tau0)| >= 1e-8 k^2")
        chi0, dchi0 = _wkb_data(potential, k, tau0)
    elif isinstance(init, ExplicitData):
        tau0, chi0, dchi0 = float(init.tau0), init.chi0, init.dchi0
        if tau0 > grid[0]:
            raise ValueError("explicit data must be set at or before the grid start")
    else:
        raise TypeError("init must be AsymptoticVacuum or ExplicitData")

    V = potential.V

    def rhs(tau, y):
        return [y[1], -(k * k + float(V(tau))) * y[0]]

    sol = solve_ivp(rhs, (tau0, grid[-1]), np.array([chi0, dchi0], dtype=complex),
                    t_eval=grid if tau0 == grid[0] else None, method="DOP853",
                    rtol=rtol, atol=atol, dense_output=(tau0 != grid[0]))
    if not sol.success:
        raise IntegrationError(f"mode integration failed: {sol.message}")
    if tau0 == grid[0]:
        chi, dchi = sol.y[0], sol.y[1]
    else:
        y = sol.sol(grid)
        chi, dchi = y[0], y[1]
    mode = ModeFunction(k=k, tau=grid, chi=chi, dchi=dchi,
                        meta={"init": type(init).__name__, "tau0": tau0,
                              "rtol": rtol})
    w0 = mode.wronskian()[0]
    drift = float(np.max(np.abs(mode.wronskian() - w0)))
    mode.meta["wronskian_drift"] = drift
    if drift > 1e-6 * max(1.0, abs(w0)):
        raise IntegrationError(
            f"Wronskian drift {drift:.3e} exceeds budget; max residual report: "
            f"k={k}, window=({grid[0]}, {grid[-1]})")
    return mode


# ---------------------------------------------------------------------------
# iterated-integral (perturbative) construction
# ---------------------------------------------------------------------------

def duhamel_series(potential: ModePotential, nu: complex, k: float, grid,
                   order: int) -> tuple[ModeFunction, list[float]]:
    """Partial sum of the iterated-integral solution about the exact
    (1/4 - nu^2)/tau^2 background, with per-order correction norms.

    Convergence requires the declared dV decay: either Re(nu) < 1/2 with
    dV = O(tau^-3), or Re(nu) < 3/2 with dV = O(tau^-5).
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    if potential.dV is None or potential.decay_exponent is None:
        raise ValueError("potential lacks a declared reference split dV")
    p = potential.decay_exponent
    re_nu = complex(nu).real
    case_i = re_nu < 0.5 and p >= 3.0
    case_ii = re_nu < 1.5 and p >= 5.0
    if not (case_i or case_ii or p == np.inf):
        raise ValueError(
            f"series hypotheses violated: neither case (i) [Re nu < 1/2, "
            f"decay >= 3; got Re nu = {re_nu}, decay = {p}] nor case (ii) "
            f"[Re nu < 3/2, decay >= 5] holds")

    grid = np.asarray(grid, dtype=float)
    chi0, dchi0 = ds_mode(k, grid, nu)
    y1, dy1 = chi0, dchi0
    y2, dy2 = np.conj(chi0), np.conj(dchi0)
    dv = np.asarray(potential.dV(grid), dtype=float)

    chi = chi0.copy()
    dchi = dchi0.copy()
    cur = chi0.copy()
    norms = [float(np.max(np.abs(cur)))]
    for _ in range(order):
        s = -dv * cur
        i1 = _cumtrapz(y1 * s, grid)
        i2 = _cumtrapz(y2 * s, grid)
        # variation of parameters about (y1, y2); y1 y2' - y1' y2 = i
        nxt = (y2 * i1 - y1 * i2) / 1j
        dnxt = (dy2 * i1 - dy1 * i2) / 1j
        chi = chi + nxt
        dchi = dchi + dnxt
        cur = nxt
        norms.append(float(np.max(np.abs(nxt))))
    mode = ModeFunction(k=k, tau=grid, chi=chi, dchi=dchi,
                        meta={"init": "duhamel", "order": order,
                              "per_order_norms": norms})
    return mode, norms


def _cumtrapz(y, x):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out
