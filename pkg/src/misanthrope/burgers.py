"""Inviscid Burgers solvers on the torus: characteristics and Godunov.

The conservation law is du/dt + (c0/2) d(u^2)/dx = 0.  Pre-shock the method
of characteristics is exact: u is constant along x0 + c0 u0(x0) t, and that
map stays an increasing circle map until the classical horizon T*.  The
first-order Godunov scheme is the independent cross-check (and stays sane
slightly past shocks).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .profiles import Profile, TrigPoly

__all__ = [
    "HorizonError",
    "CharacteristicsSolution",
    "shock_time",
    "solve_characteristics",
    "solve_godunov",
]

InitialData = Union[Profile, TrigPoly]

# fraction of the classical horizon beyond which the smooth solver refuses
PRESHOCK_MARGIN = 0.95


class HorizonError(ValueError):
    """Requested time too close to (or past) the classical shock time."""


def _as_callables(u0: InitialData) -> tuple[Callable, Callable]:
    if isinstance(u0, TrigPoly):
        return u0, u0.derivative()
    if isinstance(u0, Profile):
        return u0, u0.derivative()
    raise TypeError("u0 must be a Profile or TrigPoly")


def shock_time(u0: InitialData, c0: float) -> float:
    """Classical horizon T* = 1 / max_x(-c0 u0'(x)), +inf if no compression."""
    _, du = _as_callables(u0)
    xs = np.arange(1 << 13) / (1 << 13)
    comp = -c0 * np.asarray(du(xs))
    i = int(np.argmax(comp))
    peak = float(comp[i])
    if peak <= 0.0:
        return float("inf")
    # refine around the grid argmax
    dx = 1.0 / (1 << 13)
    res = minimize_scalar(lambda x: float(c0 * du(np.mod(x, 1.0))),
                          bounds=(xs[i] - dx, xs[i] + dx), method="bounded",
                          options={"xatol": 1e-12})
    peak = max(peak, float(-res.fun))
    return 1.0 / peak


@dataclass(frozen=True)
class CharacteristicsSolution:
    """Pre-shock smooth solution evaluated by inverting the foot-point map."""

    u0: InitialData
    c0: float

    @property
    def t_star(self) -> float:
        return shock_time(self.u0, self.c0)

    def _check_time(self, t: float):
        if t < 0:
            raise HorizonError("negative time")
        ts = self.t_star
        if t > PRESHOCK_MARGIN * ts:
            raise HorizonError(
                f"t = {t} beyond the enforced pre-shock margin "
                f"{PRESHOCK_MARGIN} * T* with T* = {ts:.6g}")

    def _feet(self, t: float, x: np.ndarray) -> np.ndarray:
        """Solve x0 + c0 u0(x0) t = x (mod 1) for each requested x."""
        f, df = _as_callables(self.u0)
        x = np.asarray(x, dtype=float)
        if t == 0.0:
            return np.mod(x, 1.0)

        def g(s):
            return s + self.c0 * np.asarray(f(np.mod(s, 1.0))) * t

        def dg(s):
            return 1.0 + self.c0 * np.asarray(df(np.mod(s, 1.0))) * t

        # monotone sweep on a fine grid gives brackets for every target
        F = 1 << 13
        s_grid = np.arange(F + 1) / F
        g_grid = g(s_grid)  # increasing, g(1) = g(0) + 1
        y = g_grid[0] + np.mod(x - g_grid[0], 1.0)
        idx = np.clip(np.searchsorted(g_grid, y) - 1, 0, F - 1)
        lo_s, hi_s = s_grid[idx], s_grid[idx + 1]
        s = 0.5 * (lo_s + hi_s)
        for _ in range(60):
            res = g(s) - y
            lo_s = np.where(res < 0, s, lo_s)
            hi_s = np.where(res > 0, s, hi_s)
            step = res / dg(s)
            nxt = s - step
            bad = (nxt <= lo_s) | (nxt >= hi_s)
            nxt = np.where(bad, 0.5 * (lo_s + hi_s), nxt)
            if np.allclose(nxt, s, rtol=0, atol=1e-16):
                s = nxt
                break
            s = nxt
        resid = np.abs(g(s) - y)
        rough = resid > 1e-12
        if np.any(rough):  # safeguarded scalar fallback for stragglers
            for i in np.nonzero(rough)[0]:
                s[i] = brentq(lambda ss: float(g(ss) - y[i]),
                              float(lo_s[i]), float(hi_s[i]), xtol=1e-15)
        return np.mod(s, 1.0)

    def u(self, t: float, x) -> np.ndarray:
        self._check_time(t)
        f, _ = _as_callables(self.u0)
        return np.asarray(f(self._feet(t, np.atleast_1d(x))))

    def u_x(self, t: float, x) -> np.ndarray:
        """du/dx along characteristics: u0'(x0) / (1 + c0 u0'(x0) t)."""
        self._check_time(t)
        _, df = _as_callables(self.u0)
        feet = self._feet(t, np.atleast_1d(x))
        d0 = np.asarray(df(feet))
        return d0 / (1.0 + self.c0 * d0 * t)


def solve_characteristics(u0: InitialData, c0: float, t: float,
                          M_out: int) -> Profile:
    """Smooth solution sampled on M_out uniform points."""
    sol = CharacteristicsSolution(u0=u0, c0=c0)
    xs = np.arange(M_out) / M_out
    return Profile(sol.u(t, xs))


def _godunov_flux(c0: float, ul: np.ndarray, ur: np.ndarray) -> np.ndarray:
    """Exact Riemann flux for f(u) = (c0/2) u^2.

    min of f over [ul, ur] when ul <= ur, max over [ur, ul] otherwise; the
    only interior extremum of the quadratic sits at u = 0.
    """

    def f(u):
        return 0.5 * c0 * u * u

    fl, fr = f(ul), f(ur)
    lo = np.minimum(ul, ur)
    hi = np.maximum(ul, ur)
    inside = (lo <= 0.0) & (0.0 <= hi)
    mn = np.where(inside & (c0 > 0), 0.0, np.minimum(fl, fr))
    mx = np.where(inside & (c0 < 0), 0.0, np.maximum(fl, fr))
    return np.where(ul <= ur, mn, mx)


def solve_godunov(u0: InitialData, c0: float, t: float, M: int,
                  cfl: float = 0.45) -> Profile:
    """First-order finite-volume reference solution at time t."""
    if not 0.0 < cfl < 1.0:
        raise ValueError(f"cfl must be in (0, 1), got {cfl}")
    if t < 0:
        raise ValueError("negative time")
    # cells are centered on the Profile grid points i/M so both solvers
    # report values at the same abscissae
    f, _ = _as_callables(u0)
    dx = 1.0 / M
    centers = np.arange(M) / M
    u = np.asarray(f(centers), dtype=float).copy()
    now = 0.0
    while now < t:
        speed = float(np.max(np.abs(c0 * u)))
        if speed <= 1e-300:
            break
        dt = min(cfl * dx / speed, t - now)
        ur = np.roll(u, -1)
        flux = _godunov_flux(c0, u, ur)  # flux[i] = F_{i+1/2}
        u = u - (dt / dx) * (flux - np.roll(flux, 1))
        now += dt
    return Profile(u)
