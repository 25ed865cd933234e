"""Spin spaces, misanthrope rate functions and the built-in model catalog.

A model is a rate function c(x, y) on a spin alphabet S = [z_min, z_max] ∩ Z.
A unit of spin jumps from site j to j+1 at rate c(z_j, z_{j+1}).  The
structural conditions checked here (boundary degeneracy, cyclic rate balance,
and the ratio condition that defines the single-site weight function r) are
exactly what downstream modules need for product-form equilibria.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SpinBounds",
    "RateModel",
    "ConditionReport",
    "ValidationReport",
    "StructuralError",
    "InconsistentRatesError",
    "validate_conditions",
    "derive_r",
    "catalog",
    "model_from_dict",
]

INF = float("inf")

# relative tolerance for the algebraic identities on user-supplied tables
_IDENTITY_RTOL = 1e-9


class StructuralError(ValueError):
    """Malformed model: empty table, negative rate, bad bounds."""


class InconsistentRatesError(ValueError):
    """The ratio condition admits no single-site weight function r."""


@dataclass(frozen=True)
class SpinBounds:
    """Closed integer spin interval, either end possibly infinite."""

    z_min: float
    z_max: float

    def __post_init__(self):
        for v in (self.z_min, self.z_max):
            if math.isfinite(v) and v != int(v):
                raise StructuralError(f"spin bound {v} is not an integer")
        if not self.z_min < self.z_max:
            raise StructuralError(
                f"need z_min < z_max, got [{self.z_min}, {self.z_max}]"
            )

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.z_min) and math.isfinite(self.z_max)

    @property
    def bounded_below(self) -> bool:
        return math.isfinite(self.z_min)

    @property
    def bounded_above(self) -> bool:
        return math.isfinite(self.z_max)

    def alphabet(self) -> np.ndarray:
        """Full alphabet for bounded S; raises otherwise."""
        if not self.bounded:
            raise StructuralError("alphabet of an unbounded spin space")
        return np.arange(int(self.z_min), int(self.z_max) + 1, dtype=np.int64)

    def window(self, half_width: int) -> np.ndarray:
        """Alphabet clipped to |z| <= half_width."""
        lo = int(max(self.z_min, -half_width))
        hi = int(min(self.z_max, half_width))
        return np.arange(lo, hi + 1, dtype=np.int64)

    def contains(self, z: int) -> bool:
        return self.z_min <= z <= self.z_max


@dataclass(frozen=True)
class RateModel:
    """A misanthrope rate function together with its r-function.

    kind "generic-table" stores the full |S| x |S| table (bounded S only).
    kind "zero-range" uses c(x, y) = 1{x > 0} r(x); kind "bricklayers" uses
    c(x, y) = r(x) + r(-y) with the constraint r(z) r(-z+1) = 1.
    """

    name: str
    bounds: SpinBounds
    kind: str  # generic-table | zero-range | bricklayers
    c_table: Optional[np.ndarray] = None  # indexed [x - z_min, y - z_min]
    r_func: Optional[Callable[[int], float]] = None
    # analytic knowledge about the r family, set by the catalog
    condition_d_analytic: Optional[bool] = None

    def __post_init__(self):
        if self.kind not in ("generic-table", "zero-range", "bricklayers"):
            raise StructuralError(f"unknown model kind {self.kind!r}")
        if self.kind == "generic-table":
            if not self.bounds.bounded:
                raise StructuralError("generic-table requires bounded spins")
            if self.c_table is None or self.c_table.size == 0:
                raise StructuralError("empty rate table")
            n = len(self.bounds.alphabet())
            if self.c_table.shape != (n, n):
                raise StructuralError(
                    f"rate table shape {self.c_table.shape} != ({n}, {n})"
                )
            if np.any(self.c_table < 0) or not np.all(np.isfinite(self.c_table)):
                raise StructuralError("negative or non-finite rate in table")
        else:
            if self.r_func is None:
                raise StructuralError(f"{self.kind} model needs an r function")
            if self.kind == "zero-range" and self.bounds.z_min != 0:
                raise StructuralError("zero-range models have z_min = 0")
            if self.kind == "bricklayers" and (
                self.bounds.bounded_below or self.bounds.bounded_above
            ):
                raise StructuralError("bricklayers models have unbounded spins")

    # -- rates ---------------------------------------------------------------

    def r(self, x: int) -> float:
        """Single-site weight function, extended by 0 below and inf above S."""
        if x < self.bounds.z_min:
            return 0.0
        if x > self.bounds.z_max:
            return INF
        if self.kind == "generic-table":
            # ratio condition with y = z_min + 1, normalised so that
            # r(z_min + 1) = c(z_min + 1, z_min)
            z_min = int(self.bounds.z_min)
            if x == z_min:
                return 0.0
            base = self.rate(z_min + 1, z_min)
            if x == z_min + 1:
                return base
            denom = self.rate(z_min + 1, x - 1)
            if base <= 0.0 or denom <= 0.0:
                raise InconsistentRatesError(
                    f"zero rate in the r recursion at x = {x}")
            return base * self.rate(x, z_min) / denom
        val = float(self.r_func(x))
        if val < 0 or (val == 0 and x != self.bounds.z_min):
            raise StructuralError(f"r({x}) = {val} is not admissible")
        return val

    def rate(self, x: int, y: int) -> float:
        """Jump rate c(x, y) for the move (x, y) -> (x-1, y+1).

        Generic tables are reported verbatim (the validator must see raw
        entries); the boundary zeros of a valid model live in the table.
        """
        if not (self.bounds.contains(x) and self.bounds.contains(y)):
            raise StructuralError(f"spins ({x}, {y}) outside S")
        if self.kind == "generic-table":
            off = int(self.bounds.z_min)
            return float(self.c_table[x - off, y - off])
        if self.kind == "zero-range":
            return self.r(x) if x > 0 else 0.0
        return self.r(x) + self.r(-y)

    def rate_table(self, z_lo: int, z_hi: int) -> np.ndarray:
        """Dense c(x, y) on the spin window [z_lo, z_hi]^2."""
        zs = np.arange(z_lo, z_hi + 1)
        out = np.empty((len(zs), len(zs)))
        for i, x in enumerate(zs):
            for j, y in enumerate(zs):
                out[i, j] = self.rate(int(x), int(y))
        return out


# -- condition checks ---------------------------------------------------------


@dataclass
class ConditionReport:
    name: str
    passed: bool
    counterexample: Optional[tuple] = None
    detail: str = ""

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        extra = f" at {self.counterexample}" if self.counterexample else ""
        tail = f"  [{self.detail}]" if self.detail else ""
        return f"{self.name}: {status}{extra}{tail}"


@dataclass
class ValidationReport:
    model: str
    window: int
    conditions: list = field(default_factory=list)

    def __getitem__(self, name: str) -> ConditionReport:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def structural_ok(self) -> bool:
        """Conditions A-C (and the bricklayers constraint) all pass."""
        gating = {"A", "B", "C", "bricklayers-constraint"}
        return all(c.passed for c in self.conditions if c.name in gating)

    def __str__(self):
        head = f"model {self.model} (window {self.window})"
        return "\n".join([head] + ["  " + str(c) for c in self.conditions])


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _IDENTITY_RTOL * max(1.0, abs(a), abs(b))


def validate_conditions(model: RateModel, window: int = 6) -> ValidationReport:
    """Check the structural conditions on a finite spin window.

    Bounded alphabets are checked exhaustively; unbounded ones on
    [-window, window] ∩ S.  The growth condition on r is only ever
    window-verified (no finite procedure can check it globally); built-in
    families carry an analytic flag instead.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    zs = model.bounds.alphabet() if model.bounds.bounded else model.bounds.window(window)
    if len(zs) == 0:
        raise StructuralError("empty spin window")
    c = model.rate_table(int(zs[0]), int(zs[-1]))
    if np.any(c < 0):
        raise StructuralError("negative rate")
    report = ValidationReport(model=model.name, window=window)
    n = len(zs)
    z_min, z_max = model.bounds.z_min, model.bounds.z_max

    # A: boundary rates vanish, interior rates are positive
    cond_a = ConditionReport("A", True)
    for i, x in enumerate(zs):
        for j, y in enumerate(zs):
            must_vanish = (x == z_min) or (y == z_max)
            if must_vanish and c[i, j] != 0.0:
                cond_a = ConditionReport("A", False, (int(x), int(y)),
                                         f"c({x},{y}) = {c[i, j]} != 0")
                break
            if (not must_vanish) and c[i, j] <= 0.0:
                cond_a = ConditionReport("A", False, (int(x), int(y)),
                                         f"c({x},{y}) = 0 in the interior")
                break
        if not cond_a.passed:
            break
    report.conditions.append(cond_a)

    # B: cyclic sums agree
    cond_b = ConditionReport("B", True)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                lhs = c[i, j] + c[j, k] + c[k, i]
                rhs = c[j, i] + c[k, j] + c[i, k]
                if not _close(lhs, rhs):
                    cond_b = ConditionReport(
                        "B", False, (int(zs[i]), int(zs[j]), int(zs[k])),
                        f"{lhs} != {rhs}")
                    break
            if not cond_b.passed:
                break
        if not cond_b.passed:
            break
    report.conditions.append(cond_b)

    # C: cyclic products over S \ {z_min} agree
    cond_c = ConditionReport("C", True)
    lo = 1 if zs[0] == z_min else 0
    for i in range(lo, n):
        for j in range(lo, n):
            for k in range(lo, n):
                x, y, z = int(zs[i]), int(zs[j]), int(zs[k])
                lhs = model.rate(x, y - 1) * model.rate(y, z - 1) * model.rate(z, x - 1)
                rhs = model.rate(y, x - 1) * model.rate(z, y - 1) * model.rate(x, z - 1)
                if not _close(lhs, rhs):
                    cond_c = ConditionReport("C", False, (x, y, z), f"{lhs} != {rhs}")
                    break
            if not cond_c.passed:
                break
        if not cond_c.passed:
            break
    report.conditions.append(cond_c)

    if model.kind == "bricklayers":
        ok, bad = True, None
        for z in range(-window, window + 1):
            if not _close(model.r(z) * model.r(-z + 1), 1.0):
                ok, bad = False, (z,)
                break
        report.conditions.append(
            ConditionReport("bricklayers-constraint", ok, bad,
                            "" if ok else "r(z) r(-z+1) != 1"))

    if model.kind in ("zero-range", "bricklayers"):
        sides = [("+", np.arange(0, window + 1))]
        if model.kind == "bricklayers":
            sides.append(("-", np.arange(-window, 1)))
        for tag, xs in sides:
            r = np.array([model.r(int(x)) for x in xs])
            incr = np.abs(np.diff(r))
            a1 = float(incr.max()) if incr.size else 0.0
            report.conditions.append(ConditionReport(
                f"D(i){tag}", True, None,
                f"window-verified sup|r(x+1)-r(x)| = {a1:.6g}"))
            # D(ii): some gap x0 with min increment bounded away from 0
            best_x0, best_a2 = None, 0.0
            for x0 in range(1, max(2, len(xs) // 2)):
                gaps = r[x0:] - r[:-x0]
                a2 = float(gaps.min())
                if a2 > best_a2:
                    best_x0, best_a2 = x0, a2
            passed = best_a2 > 1e-9
            report.conditions.append(ConditionReport(
                f"D(ii){tag}", passed,
                None if passed else None,
                f"window-verified x0 = {best_x0}, a2 = {best_a2:.6g}"
                if passed else "no x0 with r(x)-r(y) bounded below on window"))
    return report


def derive_r(model: RateModel, window: int = 64) -> dict:
    """Recover the r-function from the rate table via the ratio condition.

    Normalisation: r(z_min + 1) := c(z_min + 1, z_min).  The function is only
    defined up to a positive multiple; the gauge tests downstream make this
    choice consequence-free.  Bounded-above alphabets get r(x) = inf above
    z_max.  Raises InconsistentRatesError when two recursion paths disagree.
    """
    if model.kind in ("zero-range", "bricklayers"):
        zs = model.bounds.window(window)
        return {int(z): model.r(int(z)) for z in zs}

    zs = model.bounds.alphabet()
    z_min = int(model.bounds.z_min)
    z_max = int(model.bounds.z_max)
    m1 = z_min + 1
    r = {z_min: 0.0}
    base = model.rate(m1, z_min)
    if base <= 0.0:
        raise InconsistentRatesError(
            f"c({m1},{z_min}) = 0: nondegeneracy (condition A) violated")
    r[m1] = base
    for x in range(z_min + 2, z_max + 1):
        denom = model.rate(m1, x - 1)
        if denom == 0.0:
            raise InconsistentRatesError(
                f"c({m1},{x-1}) = 0: nondegeneracy (condition A) violated")
        r[x] = r[m1] * model.rate(x, z_min) / denom
    # consistency across all ratio pairs: c(x,y-1) r(y) == c(y,x-1) r(x)
    for x in range(m1, z_max + 1):
        for y in range(m1, z_max + 1):
            lhs = model.rate(x, y - 1) * r[y]
            rhs = model.rate(y, x - 1) * r[x]
            if not _close(lhs, rhs):
                raise InconsistentRatesError(
                    f"ratio condition inconsistent on the cycle "
                    f"({x},{y}): c({x},{y-1}) r({y}) = {lhs} but "
                    f"c({y},{x-1}) r({x}) = {rhs}")
    r[z_max + 1] = INF  # formal extension above a bounded alphabet
    return r


# -- catalog -------------------------------------------------------------------


def _tasep() -> RateModel:
    c = np.zeros((2, 2))
    c[1, 0] = 1.0
    return RateModel(name="tasep", bounds=SpinBounds(0, 1),
                     kind="generic-table", c_table=c)


def _k_exclusion(K: int, params) -> RateModel:
    if K < 1:
        raise ValueError(f"K-exclusion needs K >= 1, got {K}")
    if K == 1:
        return _tasep()
    if K == 2:
        p, q, s = params if params is not None else (1.0, 1.0, 1.0)
        if min(p, q, s) <= 0:
            raise ValueError("K=2 exclusion parameters must be positive")
        c = np.zeros((3, 3))
        c[1, 0], c[1, 1] = p, q
        c[2, 0], c[2, 1] = p + s, s
        return RateModel(name="k-exclusion-2", bounds=SpinBounds(0, 2),
                         kind="generic-table", c_table=c)
    if K == 3:
        # one valid point of the three-parameter family; rows are c(x, .)
        c = np.zeros((4, 4))
        c[1, 0], c[1, 1], c[1, 2] = 1.0, 1.0, 1.0
        c[2, 0], c[2, 1], c[2, 2] = 2.0, 2.0, 4.0 / 3.0
        c[3, 0], c[3, 1], c[3, 2] = 3.0, 2.0, 1.0
        return RateModel(name="k-exclusion-3", bounds=SpinBounds(0, 3),
                         kind="generic-table", c_table=c)
    raise ValueError(
        f"no built-in K={K} exclusion table; pass an explicit generic table")


def _zero_range(r_family: str, r_params: Optional[dict],
                r_table: Optional[list]) -> RateModel:
    if r_table is not None:
        table = [0.0] + [float(v) for v in r_table]
        if any(v <= 0 for v in table[1:]):
            raise ValueError("zero-range r table must be positive for x >= 1")

        def r_of(x: int, _t=tuple(table)) -> float:
            if x < len(_t):
                return _t[x]
            raise StructuralError(
                f"zero-range r table too short for spin {x}")

        return RateModel(name="zero-range-table", bounds=SpinBounds(0, INF),
                         kind="zero-range", r_func=r_of,
                         condition_d_analytic=None)
    p = r_params or {}
    if r_family == "linear":
        slope = float(p.get("slope", 1.0))
        if slope <= 0:
            raise ValueError("linear r needs positive slope")
        return RateModel(name="zero-range-linear", bounds=SpinBounds(0, INF),
                         kind="zero-range",
                         r_func=lambda x, s=slope: s * x,
                         condition_d_analytic=True)
    if r_family == "affine-capped":
        a = float(p.get("a", 1.0))
        b = float(p.get("b", 1.0))
        cap = float(p.get("cap", 8.0))
        if a <= 0 or b < 0 or cap <= max(1.0, a):
            raise ValueError("affine-capped r needs a > 0, b >= 0, cap > max(1, a)")

        def r_of(x: int, _a=a, _b=b, _cap=cap) -> float:
            return 0.0 if x <= 0 else min(_a + _b * (x - 1), _cap)

        # r is bounded, so the essential-linearity part of the growth
        # condition fails globally even though every window check of (i) passes
        return RateModel(name="zero-range-affine-capped",
                         bounds=SpinBounds(0, INF), kind="zero-range",
                         r_func=r_of, condition_d_analytic=False)
    raise ValueError(f"unknown zero-range r family {r_family!r}")


def _bricklayers(r_family: str, r_params: Optional[dict],
                 r_table: Optional[dict]) -> RateModel:
    if r_table is not None:
        table = {int(k): float(v) for k, v in r_table.items()}
        for z, v in table.items():
            mate = table.get(-z + 1)
            if mate is None or not _close(v * mate, 1.0):
                raise ValueError(
                    f"bricklayers table violates r({z}) r({-z+1}) = 1")

        def r_of(x: int, _t=dict(table)) -> float:
            if x in _t:
                return _t[x]
            raise StructuralError(f"bricklayers r table has no entry for {x}")

        return RateModel(name="bricklayers-table",
                         bounds=SpinBounds(-INF, INF), kind="bricklayers",
                         r_func=r_of, condition_d_analytic=None)
    p = r_params or {}
    if r_family == "linear":
        slope = float(p.get("slope", p.get("r1", 1.0)))
        if slope <= 0:
            raise ValueError("bricklayers linear family needs positive r(1)")

        # r(z) = slope * z for z >= 1; the constraint r(z) r(-z+1) = 1 then
        # pins the nonpositive branch to r(z) = 1 / (slope * (1 - z))
        def r_of(x: int, s=slope) -> float:
            return s * x if x >= 1 else 1.0 / (s * (1.0 - x))

        return RateModel(name="bricklayers-linear",
                         bounds=SpinBounds(-INF, INF), kind="bricklayers",
                         r_func=r_of, condition_d_analytic=True)
    if r_family == "constant":
        # illegal as an equilibrium family (the single-site weights do not
        # sum); kept so the divergence error path is exercised end to end
        return RateModel(name="bricklayers-constant",
                         bounds=SpinBounds(-INF, INF), kind="bricklayers",
                         r_func=lambda x: 1.0, condition_d_analytic=False)
    raise ValueError(f"unknown bricklayers r family {r_family!r}")


def catalog(name: str, K: int = 2, params=None, r_family: str = "linear",
            r_params: Optional[dict] = None, r_table=None) -> RateModel:
    """Built-in models: tasep, k-exclusion(K), zero-range, bricklayers."""
    if name == "tasep":
        return _tasep()
    if name == "k-exclusion":
        return _k_exclusion(K, params)
    if name == "zero-range":
        return _zero_range(r_family, r_params, r_table)
    if name == "bricklayers":
        return _bricklayers(r_family, r_params, r_table)
    raise ValueError(f"unknown catalog model {name!r}")


def model_from_dict(spec: dict) -> RateModel:
    """Build a model from a parsed model-spec mapping.

    Recognised keys: kind, z_min, z_max, K, params, c_table (row-major),
    r_table, r_family, r_params.
    """
    known = {"kind", "z_min", "z_max", "K", "params", "c_table", "r_table",
             "r_family", "r_params"}
    unknown = set(spec) - known
    if unknown:
        raise ValueError(f"unknown model keys: {sorted(unknown)}")
    kind = spec.get("kind")
    if kind is None:
        raise ValueError("model spec needs a 'kind'")
    if kind in ("tasep", "k-exclusion", "zero-range", "bricklayers"):
        return catalog(kind, K=int(spec.get("K", 2)),
                       params=tuple(spec["params"]) if "params" in spec else None,
                       r_family=spec.get("r_family", "linear"),
                       r_params=spec.get("r_params"),
                       r_table=spec.get("r_table"))
    if kind == "generic-table":
        z_min, z_max = int(spec["z_min"]), int(spec["z_max"])
        n = z_max - z_min + 1
        flat = np.asarray(spec["c_table"], dtype=float).reshape(n, n)
        return RateModel(name="generic-table", bounds=SpinBounds(z_min, z_max),
                         kind="generic-table", c_table=flat)
    raise ValueError(f"unknown model kind {kind!r}")
