"""One-site equilibrium family: tilted measures, F(theta), flux and entropies.

The single-site measure has pi(x) proportional to prod_{k<=x} 1/r(k) above the
anchor and prod 1/r backwards below it; exponential tilting by theta gives the
one-parameter family whose mean v(theta) = F'(theta) is inverted numerically.
Everything is accumulated in the log domain on a finite support window chosen
by a tail-mass criterion, so unbounded alphabets are handled uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .model import RateModel, derive_r

__all__ = [
    "EquilibriumFamily",
    "FluxCurve",
    "DivergentSeriesError",
    "DomainError",
    "RangeError",
    "build_family",
    "flux_curve",
]


class DivergentSeriesError(ValueError):
    """The normalising series for pi does not converge."""


class DomainError(ValueError):
    """theta outside the numeric domain of the family."""


class RangeError(ValueError):
    """density outside the attainable open range of F'."""


@dataclass(frozen=True)
class EquilibriumFamily:
    """Tilted one-site family on a finite support window.

    log_pi is normalised (logsumexp = 0) so that F(0) = 0 exactly.
    """

    model: RateModel
    z: np.ndarray            # int64 support window, contiguous
    log_pi: np.ndarray       # float64, normalised
    r_values: np.ndarray     # r on the window (same indexing as z)
    theta_min: float
    theta_max: float
    eps_tail: float

    # -- tilted measures -----------------------------------------------------

    def _check_domain(self, theta: float):
        if not (self.theta_min <= theta <= self.theta_max):
            raise DomainError(
                f"theta = {theta} outside numeric domain "
                f"[{self.theta_min}, {self.theta_max}]")

    def log_pmf(self, theta: float) -> np.ndarray:
        self._check_domain(theta)
        lw = self.log_pi + theta * self.z
        return lw - logsumexp(lw)

    def pmf(self, theta: float) -> np.ndarray:
        return np.exp(self.log_pmf(theta))

    def F(self, theta: float) -> float:
        """Log moment generating function of the spin under pi."""
        self._check_domain(theta)
        return float(logsumexp(self.log_pi + theta * self.z))

    def F1(self, theta) -> np.ndarray | float:
        """F'(theta) = mean spin under the tilted measure; vectorised."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        lw = self.log_pi[None, :] + th[:, None] * self.z[None, :]
        lw -= logsumexp(lw, axis=1, keepdims=True)
        p = np.exp(lw)
        out = p @ self.z.astype(float)
        return out if np.ndim(theta) else float(out[0])

    def F2(self, theta) -> np.ndarray | float:
        """F''(theta) = spin variance under the tilted measure; vectorised."""
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        lw = self.log_pi[None, :] + th[:, None] * self.z[None, :]
        lw -= logsumexp(lw, axis=1, keepdims=True)
        p = np.exp(lw)
        zf = self.z.astype(float)
        m = p @ zf
        out = p @ zf**2 - m**2
        return out if np.ndim(theta) else float(out[0])

    # -- density <-> tilt ----------------------------------------------------

    @property
    def v_range(self) -> tuple[float, float]:
        """Open attainable density interval over the numeric theta domain."""
        return (float(self.F1(self.theta_min)), float(self.F1(self.theta_max)))

    def theta_of_v(self, v) -> np.ndarray | float:
        """Invert F' by safeguarded Newton; |F'(theta) - v| <= 1e-12."""
        vs = np.atleast_1d(np.asarray(v, dtype=float))
        lo, hi = self.v_range
        if np.any(vs <= lo) or np.any(vs >= hi):
            bad = vs[(vs <= lo) | (vs >= hi)][0]
            raise RangeError(
                f"density {bad} outside attainable range ({lo:.12g}, {hi:.12g})")
        th = np.zeros_like(vs)
        t_lo = np.full_like(vs, self.theta_min)
        t_hi = np.full_like(vs, self.theta_max)
        for _ in range(200):
            f1 = np.asarray(self.F1(th))
            res = f1 - vs
            if np.all(np.abs(res) <= 1e-13):
                break
            t_lo = np.where(res < 0, th, t_lo)
            t_hi = np.where(res > 0, th, t_hi)
            f2 = np.maximum(np.asarray(self.F2(th)), 1e-300)
            step = res / f2
            nxt = th - step
            # bisection fallback when Newton leaves the bracket
            outside = (nxt <= t_lo) | (nxt >= t_hi)
            nxt = np.where(outside, 0.5 * (t_lo + t_hi), nxt)
            if np.all(nxt == th):
                break
            th = nxt
        resid = np.abs(np.asarray(self.F1(th)) - vs)
        if np.any(resid > 1e-12):
            raise RangeError(
                f"theta_of_v did not converge: max residual {resid.max():.3g}")
        return th if np.ndim(v) else float(th[0])

    def v_of_theta(self, theta) -> np.ndarray | float:
        return self.F1(theta)

    def theta_prime_of_v(self, v) -> np.ndarray | float:
        """theta'(v) = 1 / F''(theta(v)) by the inverse-function rule."""
        th = self.theta_of_v(v)
        return 1.0 / self.F2(th)

    # -- flux ------------------------------------------------------------------

    def flux_hat(self, v: float) -> float:
        """Equilibrium bond-jump rate at density v.

        Two-site product expectation of c over the support window; the
        degenerate endpoints (point mass at an alphabet edge) return the exact
        boundary value 0.
        """
        lo, hi = self.v_range
        b = self.model.bounds
        if v == b.z_min or v == b.z_max:
            return 0.0  # point mass at the edge; c vanishes there
        if not (lo < v < hi):
            raise RangeError(
                f"density {v} outside attainable range ({lo:.12g}, {hi:.12g})")
        p = self.pmf(self.theta_of_v(v))
        kind = self.model.kind
        if kind == "zero-range":
            return float(p @ self.r_values)
        if kind == "bricklayers":
            r_neg = self.r_values[::-1]  # r(-z) over the symmetric window
            return float(p @ self.r_values + p @ r_neg)
        ctab = self.model.rate_table(int(self.z[0]), int(self.z[-1]))
        return float(p @ ctab @ p)

    def flux_derivatives(self, v0: float, h: Optional[float] = None
                         ) -> "FluxTriple":
        """Flux value and first two density derivatives at v0.

        Fourth-order central differences, evaluated at h and h/2 with the
        disagreement kept as an error estimate.  Flags |c0| < 1e-8 as a
        degenerate nonlinearity.
        """
        lo, hi = self.v_range
        if not (lo < v0 < hi):
            raise RangeError(f"v0 = {v0} outside attainable range ({lo}, {hi})")
        if h is None:
            h = min(1e-2, 0.2 * min(v0 - lo, hi - v0))
        if h <= 0 or v0 - 2 * h <= lo or v0 + 2 * h >= hi:
            raise RangeError(f"stencil width {h} leaves the attainable range")

        def stencil(hh: float):
            f = [self.flux_hat(v0 + k * hh) for k in (-2, -1, 0, 1, 2)]
            d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * hh)
            d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * hh**2)
            return f[2], d1, d2

        a0, b_h, c_h = stencil(h)
        _, b_h2, c_h2 = stencil(h / 2)
        return FluxTriple(v0=v0, a0=a0, b0=b_h2, c0=c_h2,
                          b0_err=abs(b_h2 - b_h), c0_err=abs(c_h2 - c_h),
                          degenerate=abs(c_h2) < 1e-8)

    # -- entropies -------------------------------------------------------------

    def site_entropy(self, theta2, theta1) -> np.ndarray | float:
        """Relative entropy H(pi_theta2 | pi_theta1) of one site.

        Exponential-family identity: (t2 - t1) F'(t2) - F(t2) + F(t1) >= 0.
        """
        t2 = np.asarray(theta2, dtype=float)
        t1 = np.asarray(theta1, dtype=float)
        for t in (t2.ravel(), t1.ravel()):
            if t.size and (t.min() < self.theta_min or t.max() > self.theta_max):
                raise DomainError("theta outside numeric domain")
        th = np.unique(np.concatenate([np.atleast_1d(t2).ravel(),
                                       np.atleast_1d(t1).ravel()]))
        lw = self.log_pi[None, :] + th[:, None] * self.z[None, :]
        Fv = logsumexp(lw, axis=1)
        F2v = dict(zip(th.tolist(), Fv.tolist()))
        Fa = np.vectorize(F2v.__getitem__)(t2)
        Fb = np.vectorize(F2v.__getitem__)(t1)
        out = (t2 - t1) * np.asarray(self.F1(t2)) - Fa + Fb
        out = np.maximum(out, 0.0)  # clip the -1e-17 rounding residue at t2 = t1
        return out if (np.ndim(theta2) or np.ndim(theta1)) else float(out)


@dataclass(frozen=True)
class FluxTriple:
    v0: float
    a0: float
    b0: float
    c0: float
    b0_err: float
    c0_err: float
    degenerate: bool


@dataclass(frozen=True)
class FluxCurve:
    """Sampled flux curve with derivatives, plus the reference triple at v0."""

    v: np.ndarray
    flux: np.ndarray
    b: np.ndarray
    c: np.ndarray
    at_v0: FluxTriple


def _window_log_weights(model: RateModel, half_width: int) -> np.ndarray:
    """Unnormalised log pi on the window, anchored at log pi(0) = 0."""
    b = model.bounds
    lo = int(max(b.z_min, -half_width if not b.bounded_below else b.z_min))
    hi = int(min(b.z_max, half_width if not b.bounded_above else b.z_max))
    if not b.bounded_below:
        lo = -half_width
    if not b.bounded_above:
        hi = half_width
    zs = np.arange(lo, hi + 1, dtype=np.int64)
    if model.kind == "generic-table":
        r = derive_r(model)
        r_vals = np.array([r[int(x)] for x in zs])
    else:
        r_vals = np.array([model.r(int(x)) for x in zs])
    lw = np.empty(len(zs))
    anchor = int(np.searchsorted(zs, 0))
    if zs[anchor] != 0:
        raise ValueError("support window must contain 0")
    lw[anchor] = 0.0
    for i in range(anchor + 1, len(zs)):       # pi(x) = pi(x-1) / r(x)
        lw[i] = lw[i - 1] - math.log(r_vals[i])
    for i in range(anchor - 1, -1, -1):        # pi(x) = pi(x+1) * r(x+1)
        lw[i] = lw[i + 1] + math.log(r_vals[i + 1])
    return zs, lw, r_vals


def build_family(model: RateModel, eps_tail: float = 1e-13,
                 theta_range: tuple[float, float] = (-3.0, 3.0),
                 max_window: int = 4096, r_scale: float = 1.0
                 ) -> EquilibriumFamily:
    """Construct the tilted family, growing the window to the tail target.

    eps_tail must lie in (0, 1e-6]; the support window is enlarged until the
    tilted edge mass is below eps_tail for every theta in theta_range.
    r_scale rescales the weight function r by a positive gauge factor lambda
    (a pure exponential tilt of pi); it exists so the gauge-invariance tests
    can show that downstream observables do not depend on the normalisation
    choice made in the r recursion.
    """
    if not (0 < eps_tail <= 1e-6):
        raise ValueError("eps_tail must be in (0, 1e-6]")
    if r_scale <= 0:
        raise ValueError("r_scale must be positive")
    b = model.bounds
    if b.bounded:
        zs, lw, r_vals = _window_log_weights(model, 0)
        if r_scale != 1.0:
            lw = lw - np.log(r_scale) * zs
            r_vals = r_vals * r_scale
        lw = lw - logsumexp(lw)
        return EquilibriumFamily(model=model, z=zs, log_pi=lw, r_values=r_vals,
                                 theta_min=-60.0, theta_max=60.0,
                                 eps_tail=eps_tail)

    t_lo, t_hi = theta_range
    if not t_lo < t_hi:
        raise ValueError("empty theta range")
    half = 16
    while True:
        zs, lw, r_vals = _window_log_weights(model, half)
        if r_scale != 1.0:
            lw = lw - np.log(r_scale) * zs
            r_vals = r_vals * r_scale
        ok = True
        for theta in (t_lo, 0.0, t_hi):
            tw = lw + theta * zs
            tw = tw - logsumexp(tw)
            p = np.exp(tw)
            edge = p[:2].sum() if not b.bounded_below else 0.0
            edge = max(edge, p[-2:].sum())
            if edge >= eps_tail:
                ok = False
                break
        if ok:
            lw = lw - logsumexp(lw)
            return EquilibriumFamily(model=model, z=zs, log_pi=lw,
                                     r_values=r_vals, theta_min=t_lo,
                                     theta_max=t_hi, eps_tail=eps_tail)
        if half >= max_window:
            raise DivergentSeriesError(
                f"partial sums for Z not Cauchy within window growth limit "
                f"{max_window} (theta range {theta_range})")
        half *= 2


def flux_curve(family: EquilibriumFamily, v0: float,
               grid: np.ndarray) -> FluxCurve:
    """Sample (flux, first, second derivative) on a density grid."""
    grid = np.asarray(grid, dtype=float)
    flux = np.array([family.flux_hat(float(v)) for v in grid])
    trips = [family.flux_derivatives(float(v)) for v in grid]
    return FluxCurve(v=grid, flux=flux,
                     b=np.array([t.b0 for t in trips]),
                     c=np.array([t.c0 for t in trips]),
                     at_v0=family.flux_derivatives(v0))
