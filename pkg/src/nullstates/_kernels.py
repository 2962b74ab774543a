"""Hot numeric kernels with a numba lane and a pure-numpy fallback.

Every kernel exists twice: ``*_numpy`` (vectorised numpy, always available)
and an ``@njit`` version compiled on import when numba is usable.  The env
variable ``NULLSTATES_DISABLE_NUMBA=1`` forces the numpy lane; this is also
what the benchmark in ``benchmarks/bench_kernels.py`` flips to compare both.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("NULLSTATES_DISABLE_NUMBA", "0") not in ("0", "", "false")

try:  # pragma: no cover - exercised implicitly through the public wrappers
    if _DISABLED:
        raise ImportError("numba disabled by NULLSTATES_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # fall back to the numpy lane
    HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# regularised 1/(u - v - i eps)^2 double smearing, Taylor-continued to eps = 0
# ---------------------------------------------------------------------------
#
# The distributional kernel 1/(u - v - i0)^2 is evaluated by expanding
# 1/x^2 = sum_j (j+1) (-i eps)^j / (x - i eps)^{j+2} about the grid-resolvable
# distance eps (a few grid spacings); ``order`` truncates the expansion, so
# the residual scales like (eps/|x|)^{order+1} while each retained term stays
# resolvable on the grid.  order = 0 is the plain eps-regularised sum.

def eps_kernel_quad_numpy(a, b, u, v, eps, order=0):
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    out = 0.0 + 0.0j
    step = max(1, int(2_000_000 // max(len(v), 1)))
    for lo in range(0, len(u), step):
        hi = min(lo + step, len(u))
        z = u[lo:hi, None] - v[None, :] - 1j * eps
        ker = 1.0 / (z * z)
        if order > 0:
            zp = z * z
            fac = 1.0 + 0.0j
            for j in range(1, order + 1):
                zp = zp * z
                fac = fac * (-1j * eps)
                ker = ker + (j + 1) * fac / zp
        out += np.einsum("i,ij,j->", a[lo:hi], ker, b)
    return complex(out)


@njit(cache=True)
def _eps_kernel_quad_numba(a, b, u, v, eps, order):  # pragma: no cover
    out = 0.0 + 0.0j
    for i in range(u.shape[0]):
        acc = 0.0 + 0.0j
        for j in range(v.shape[0]):
            z = complex(u[i] - v[j], -eps)
            zp = z * z
            ker = 1.0 / zp
            fac = 1.0 + 0.0j
            for m in range(1, order + 1):
                zp = zp * z
                fac = fac * complex(0.0, -eps)
                ker = ker + (m + 1) * fac / zp
            acc += ker * b[j]
        out += a[i] * acc
    return out


def eps_kernel_quad(a, b, u, v, eps, order=0):
    """sum_ij a_i b_j K(u_i - v_j), K the (Taylor-continued) i-eps kernel."""
    if not HAVE_NUMBA:
        return eps_kernel_quad_numpy(a, b, u, v, eps, order)
    return complex(_eps_kernel_quad_numba(
        np.ascontiguousarray(a, dtype=np.complex128),
        np.ascontiguousarray(b, dtype=np.complex128),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64), float(eps), int(order)))


# ---------------------------------------------------------------------------
# radial leapfrog for psi'' = psi_rr - V(tau) psi + src, psi(tau, r=0) = 0
# ---------------------------------------------------------------------------

def leapfrog_radial_numpy(psi0, psi1, pot, src, dtau, dr):
    """Evolve the half-line wave equation by leapfrog, returning all slices.

    ``psi0``/``psi1`` are the first two time slices (shape Nr), ``pot`` the
    potential samples per time step (shape Nt), ``src`` the source (Nt x Nr).
    CFL dtau/dr <= 0.5 is the caller's responsibility.  Dirichlet at r = 0
    and at the outer edge (domain must be large enough that nothing returns).
    """
    nt, nr = src.shape
    lam = (dtau / dr) ** 2
    out = np.empty((nt, nr))
    out[0] = psi0
    out[1] = psi1
    for n in range(1, nt - 1):
        cur = out[n]
        lap = np.zeros(nr)
        lap[1:-1] = cur[2:] - 2.0 * cur[1:-1] + cur[:-2]
        nxt = (2.0 * cur - out[n - 1] + lam * lap
               + dtau * dtau * (src[n] - pot[n] * cur))
        nxt[0] = 0.0
        nxt[-1] = 0.0
        out[n + 1] = nxt
    return out


@njit(cache=True)
def _leapfrog_radial_numba(psi0, psi1, pot, src, dtau, dr):  # pragma: no cover
    nt, nr = src.shape
    lam = (dtau / dr) ** 2
    out = np.empty((nt, nr))
    for j in range(nr):
        out[0, j] = psi0[j]
        out[1, j] = psi1[j]
    for n in range(1, nt - 1):
        for j in range(1, nr - 1):
            lap = out[n, j + 1] - 2.0 * out[n, j] + out[n, j - 1]
            out[n + 1, j] = (2.0 * out[n, j] - out[n - 1, j] + lam * lap
                             + dtau * dtau * (src[n, j] - pot[n] * out[n, j]))
        out[n + 1, 0] = 0.0
        out[n + 1, nr - 1] = 0.0
    return out


def leapfrog_radial(psi0, psi1, pot, src, dtau, dr):
    if not HAVE_NUMBA:
        return leapfrog_radial_numpy(psi0, psi1, pot, src, dtau, dr)
    return _leapfrog_radial_numba(
        np.ascontiguousarray(psi0, dtype=np.float64),
        np.ascontiguousarray(psi1, dtype=np.float64),
        np.ascontiguousarray(pot, dtype=np.float64),
        np.ascontiguousarray(src, dtype=np.float64), float(dtau), float(dr))


# ---------------------------------------------------------------------------
# light-cone window integral for the sharp causal propagator
# ---------------------------------------------------------------------------

def lightcone_window_sum_numpy(cum, dgrid, r, wr, s, ws):
    """sum_{r,s} wr r ws s [ I(|r-s|) .. I(r+s) ] with I from a cumulative table.

    ``cum`` is the cumulative integral of a correlation C(Delta) sampled on
    the uniform grid ``dgrid``; the bracket is interp(cum, r+s) -
    interp(cum, |r-s|), i.e. the correlation mass inside the light-cone
    window of the radial pair (r, s).
    """
    a = np.abs(r[:, None] - s[None, :])
    b = r[:, None] + s[None, :]
    ia = np.interp(a, dgrid, cum)
    ib = np.interp(b, dgrid, cum)
    w = (wr * r)[:, None] * (ws * s)[None, :]
    return float(np.sum(w * (ib - ia)))


@njit(cache=True)
def _lightcone_window_sum_numba(cum, d0, dd, nd, r, wr, s, ws):  # pragma: no cover
    total = 0.0
    for i in range(r.shape[0]):
        for j in range(s.shape[0]):
            a = abs(r[i] - s[j])
            b = r[i] + s[j]
            xa = (a - d0) / dd
            xb = (b - d0) / dd
            if xa <= 0.0:
                ia = cum[0]
            elif xa >= nd - 1:
                ia = cum[nd - 1]
            else:
                ka = int(xa)
                fa = xa - ka
                ia = cum[ka] * (1.0 - fa) + cum[ka + 1] * fa
            if xb <= 0.0:
                ib = cum[0]
            elif xb >= nd - 1:
                ib = cum[nd - 1]
            else:
                kb = int(xb)
                fb = xb - kb
                ib = cum[kb] * (1.0 - fb) + cum[kb + 1] * fb
            total += wr[i] * r[i] * ws[j] * s[j] * (ib - ia)
    return total


def lightcone_window_sum(cum, dgrid, r, wr, s, ws):
    if not HAVE_NUMBA:
        return lightcone_window_sum_numpy(cum, dgrid, r, wr, s, ws)
    return float(_lightcone_window_sum_numba(
        np.ascontiguousarray(cum, dtype=np.float64),
        float(dgrid[0]), float(dgrid[1] - dgrid[0]), len(dgrid),
        np.ascontiguousarray(r, dtype=np.float64),
        np.ascontiguousarray(wr, dtype=np.float64),
        np.ascontiguousarray(s, dtype=np.float64),
        np.ascontiguousarray(ws, dtype=np.float64)))
