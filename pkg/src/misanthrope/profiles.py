"""Periodic grid profiles and trigonometric polynomials on the unit torus."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = ["Profile", "TrigPoly"]


@dataclass(frozen=True)
class Profile:
    """Periodic grid function sampled at x_i = i/M, i = 0..M-1."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=float))
        if self.values.ndim != 1 or self.values.size < 4:
            raise ValueError("Profile needs a 1-d array of at least 4 samples")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Profile contains non-finite samples")

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    @classmethod
    def from_callable(cls, f, M: int) -> "Profile":
        xs = np.arange(M) / M
        return cls(np.asarray(f(xs), dtype=float))

    def integral(self) -> float:
        """Torus integral; the periodic trapezoid rule is exact here."""
        return float(self.values.mean())

    def spline(self) -> CubicSpline:
        xs = np.arange(self.M + 1) / self.M
        ys = np.concatenate([self.values, self.values[:1]])
        return CubicSpline(xs, ys, bc_type="periodic")

    def __call__(self, x) -> np.ndarray:
        return self.spline()(np.mod(x, 1.0))

    def derivative(self):
        ds = self.spline().derivative()
        return lambda x: ds(np.mod(x, 1.0))


@dataclass(frozen=True)
class TrigPoly:
    """a0 + sum_m a_m cos(2 pi m x) + b_m sin(2 pi m x), degree <= 8."""

    a0: float = 0.0
    cos: tuple = field(default_factory=tuple)
    sin: tuple = field(default_factory=tuple)

    MAX_DEGREE = 8

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))
        if max(len(self.cos), len(self.sin)) > self.MAX_DEGREE:
            raise ValueError(f"degree above {self.MAX_DEGREE}")

    @classmethod
    def sine(cls, mode: int = 1, amplitude: float = 1.0) -> "TrigPoly":
        s = [0.0] * mode
        s[mode - 1] = amplitude
        return cls(sin=tuple(s))

    @classmethod
    def cosine(cls, mode: int = 1, amplitude: float = 1.0) -> "TrigPoly":
        c = [0.0] * mode
        c[mode - 1] = amplitude
        return cls(cos=tuple(c))

    @classmethod
    def constant(cls, value: float) -> "TrigPoly":
        return cls(a0=value)

    @property
    def degree(self) -> int:
        return max(len(self.cos), len(self.sin))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.a0, dtype=float)
        for m, c in enumerate(self.cos, start=1):
            if c:
                out = out + c * np.cos(2 * np.pi * m * x)
        for m, s in enumerate(self.sin, start=1):
            if s:
                out = out + s * np.sin(2 * np.pi * m * x)
        return out

    def derivative(self) -> "TrigPoly":
        deg = self.degree
        cos = [0.0] * deg
        sin = [0.0] * deg
        for m, c in enumerate(self.cos, start=1):
            sin[m - 1] += -2 * np.pi * m * c
        for m, s in enumerate(self.sin, start=1):
            cos[m - 1] += 2 * np.pi * m * s
        return TrigPoly(a0=0.0, cos=tuple(cos), sin=tuple(sin))

    def l2_norm(self) -> float:
        sq = self.a0**2
        sq += 0.5 * sum(c * c for c in self.cos)
        sq += 0.5 * sum(s * s for s in self.sin)
        return float(np.sqrt(sq))

    def sample(self, M: int) -> Profile:
        return Profile.from_callable(self, M)

    def scaled(self, factor: float) -> "TrigPoly":
        return TrigPoly(a0=self.a0 * factor,
                        cos=tuple(c * factor for c in self.cos),
                        sin=tuple(s * factor for s in self.sin))
