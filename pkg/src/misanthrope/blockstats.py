"""Scaling-limit statistics in the characteristic frame.

The moving-frame pairing statistic, the tilt-profile calculus on the lattice,
the relative entropy between two slowly varying product measures (exact sum
against its leading-order expansion), and a Monte Carlo probe of the
exponential-moment bound for block averages of centred i.i.d. variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .burgers import CharacteristicsSolution
from .equilibrium import EquilibriumFamily
from .profiles import Profile, TrigPoly

__all__ = [
    "corollary_statistic",
    "entropy_between_profiles",
    "theta_profile",
    "ThetaProfile",
    "ZetaSpec",
    "CappedG",
    "GBoundError",
    "KurschakEstimate",
    "kurschak_probe",
    "kurschak_limit",
]

ProfileLike = Union[Profile, TrigPoly]


def _lattice_values(u: ProfileLike, N: int) -> np.ndarray:
    return np.asarray(u(np.arange(N) / N), dtype=float)


def corollary_statistic(z: np.ndarray, phi: TrigPoly, N: int, beta: float,
                        v0: float, b0: float, t: float) -> float:
    """Frame-shifted pairing N^{beta-1} sum_j phi((j - s)/N) (z_j - v0).

    s = N^{1+beta} b0 t is the exact real-valued characteristic shift; it
    enters phi directly, with no rounding to lattice sites.
    """
    z = np.asarray(z)
    if z.shape != (N,):
        raise ValueError(f"configuration has {z.shape}, expected ({N},)")
    s = N ** (1.0 + beta) * b0 * t
    x = np.mod((np.arange(N) - s) / N, 1.0)
    return float(N ** (beta - 1.0) * np.sum(phi(x) * (z - v0)))


def entropy_between_profiles(family: EquilibriumFamily, N: int, beta: float,
                             v0: float, u1: ProfileLike, u2: ProfileLike
                             ) -> tuple[float, float]:
    """Relative entropy of two slowly varying product measures on the ring.

    exact: lattice sum of one-site relative entropies between the tilts at
    density v0 + N^{-beta} u_i(j/N).  expansion: the leading-order formula
    N^{1-2beta} theta0' int (u2-u1)(u2 - (F0'' theta0'/2)(u2+u1)) dx with the
    integral taken as the lattice Riemann sum (exact for trigonometric
    profiles).  Both are returned for comparison.
    """
    eps = N ** (-beta)
    w1 = _lattice_values(u1, N)
    w2 = _lattice_values(u2, N)
    th1 = np.asarray(family.theta_of_v(v0 + eps * w1))
    th2 = np.asarray(family.theta_of_v(v0 + eps * w2))
    exact = float(np.sum(family.site_entropy(th2, th1)))

    theta0 = family.theta_of_v(v0)
    f0pp = float(family.F2(theta0))
    theta0p = 1.0 / f0pp
    integrand = (w2 - w1) * (w2 - 0.5 * f0pp * theta0p * (w2 + w1))
    expansion = N ** (1.0 - 2.0 * beta) * theta0p * float(integrand.mean())
    return exact, expansion


@dataclass(frozen=True)
class ThetaProfile:
    """Lattice tilt perturbation field and its space derivative at time t."""

    N: int
    beta: float
    v0: float
    t: float
    theta: np.ndarray       # N^beta (theta(v0 + N^-beta u) - theta0) at j/N
    theta_x: np.ndarray     # d/dx of the same field
    u: np.ndarray           # u(t, j/N - N^beta b0 t)
    b0: float
    c0: float

    def time_derivative_rhs(self) -> np.ndarray:
        """-theta_x (c0 u + N^beta b0): what d/dt of the field must equal."""
        return -self.theta_x * (self.c0 * self.u + self.N**self.beta * self.b0)


def theta_profile(family: EquilibriumFamily, sol: CharacteristicsSolution,
                  N: int, beta: float, v0: float, b0: float, t: float
                  ) -> ThetaProfile:
    """Evaluate the tilt field on the lattice from a smooth solution.

    The defining identity theta(v0 + N^-beta u) = theta0 + N^-beta theta^N is
    verified pointwise to 1e-10 before returning.
    """
    eps = N ** (-beta)
    x = np.arange(N) / N
    y = np.mod(x - N**beta * b0 * t, 1.0)
    u = np.asarray(sol.u(t, y))
    ux = np.asarray(sol.u_x(t, y))
    v = v0 + eps * u
    th = np.asarray(family.theta_of_v(v))
    theta0 = family.theta_of_v(v0)
    field = (th - theta0) / eps
    theta_x = ux / np.asarray(family.F2(th))  # theta'(v) = 1/F''(theta(v))
    recon = theta0 + eps * field
    if np.max(np.abs(recon - th)) > 1e-10:
        raise RuntimeError("tilt field inconsistent with its definition")
    return ThetaProfile(N=N, beta=beta, v0=v0, t=t, theta=field,
                        theta_x=theta_x, u=u, b0=b0, c0=sol.c0)


# -- exponential moments of block averages ---------------------------------------


class GBoundError(ValueError):
    """G fails the capped quadratic/linear growth bound."""


@dataclass(frozen=True)
class ZetaSpec:
    """Centred i.i.d. summand: rademacher, finite table, or normal."""

    name: str = "rademacher"
    values: tuple = ()
    probs: tuple = ()
    sigma: float = 1.0

    def __post_init__(self):
        if self.name == "table":
            v = np.asarray(self.values, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if v.size == 0 or v.shape != p.shape:
                raise ValueError("table spec needs matching values and probs")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("table probs must be a distribution")
            mean = float(p @ v)
            if abs(mean) > 1e-12 * max(1.0, float(np.abs(v).max())):
                raise ValueError(f"table distribution has mean {mean} != 0")
        elif self.name == "normal":
            if self.sigma <= 0:
                raise ValueError("normal spec needs sigma > 0")
        elif self.name != "rademacher":
            raise ValueError(f"unknown zeta spec {self.name!r}")

    def variance(self) -> float:
        if self.name == "rademacher":
            return 1.0
        if self.name == "normal":
            return self.sigma**2
        v = np.asarray(self.values)
        p = np.asarray(self.probs)
        return float(p @ v**2)

    def block_means(self, rng: np.random.Generator, l: int,
                    n: int) -> np.ndarray:
        """n independent copies of (zeta_1 + ... + zeta_l) / l."""
        if self.name == "rademacher":
            heads = rng.binomial(l, 0.5, size=n)
            return (2.0 * heads - l) / l
        if self.name == "normal":
            return rng.normal(0.0, self.sigma * math.sqrt(l), size=n) / l
        counts = rng.multinomial(l, np.asarray(self.probs), size=n)
        return (counts @ np.asarray(self.values, dtype=float)) / l


@dataclass(frozen=True)
class CappedG:
    """Nonnegative G with G(x) <= c1 (|x| ∧ x^2/2), checked on a grid."""

    fn: Callable[[np.ndarray], np.ndarray]
    c1: float = 1.0
    name: str = "abs-quad-cap"

    @classmethod
    def abs_quad_cap(cls) -> "CappedG":
        return cls(fn=lambda x: np.minimum(np.abs(x), 0.5 * x * x), c1=1.0)

    def check_bound(self, x_max: float = 10.0, n: int = 4001):
        xs = np.linspace(-x_max, x_max, n)
        g = np.asarray(self.fn(xs), dtype=float)
        cap = self.c1 * np.minimum(np.abs(xs), 0.5 * xs * xs)
        if np.any(g < -1e-12):
            raise GBoundError(f"G takes negative values ({self.name})")
        worst = float(np.max(g - cap))
        if worst > 1e-12:
            raise GBoundError(
                f"G exceeds c1 (|x| ∧ x^2/2) by {worst:.3g} on the check grid")

    def curvature_at_zero(self, h: float = 1e-4) -> float:
        g = self.fn(np.array([-h, 0.0, h]))
        return float((g[0] - 2 * g[1] + g[2]) / h**2)


def kurschak_limit(zeta: ZetaSpec, g: CappedG, gamma: float) -> float:
    """Large-block limit (1 - gamma Lambda''(0) G''(0))^{-1/2}."""
    prod = gamma * zeta.variance() * g.curvature_at_zero()
    if prod >= 1.0:
        return float("inf")
    return (1.0 - prod) ** -0.5


@dataclass(frozen=True)
class KurschakEstimate:
    l: int
    gamma: float
    estimate: float
    stderr: float
    n_samples: int
    limit: float


def kurschak_probe(zeta: ZetaSpec, g: CappedG, gamma: float, l: int,
                   n_samples: int, rng: np.random.Generator,
                   gamma0: float = 0.9,
                   target_stderr: Optional[float] = None) -> KurschakEstimate:
    """Plain Monte Carlo estimate of E exp{gamma l G(S_l / l)}.

    Batched sampling; stops early once the standard error drops below
    target_stderr (when given).  Requires gamma < gamma0 and l >= 1/gamma0.
    """
    if not 0 <= gamma < gamma0:
        raise ValueError(f"gamma = {gamma} outside [0, gamma0 = {gamma0})")
    if l < 1.0 / gamma0:
        raise ValueError(f"block length {l} below 1/gamma0 = {1.0/gamma0}")
    g.check_bound()
    if gamma == 0.0:
        return KurschakEstimate(l=l, gamma=gamma, estimate=1.0, stderr=0.0,
                                n_samples=0, limit=1.0)
    total = 0.0
    total_sq = 0.0
    done = 0
    batch = 1 << 19
    while done < n_samples:
        take = min(batch, n_samples - done)
        means = zeta.block_means(rng, l, take)
        vals = np.exp(gamma * l * np.asarray(g.fn(means), dtype=float))
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        done += take
        if target_stderr is not None and done >= 4096:
            m = total / done
            var = max(total_sq / done - m * m, 0.0)
            if math.sqrt(var / done) <= target_stderr:
                break
    m = total / done
    var = max(total_sq / done - m * m, 0.0)
    return KurschakEstimate(l=l, gamma=gamma, estimate=m,
                            stderr=math.sqrt(var / done), n_samples=done,
                            limit=kurschak_limit(zeta, g, gamma))
