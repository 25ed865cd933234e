"""Event-driven kinetic Monte Carlo for the ring dynamics.

One unit of spin hops j -> j+1 at rate c(z_j, z_{j+1}).  Events are drawn by
a prefix-sum (segment) tree over bond rates: total-rate queries, proportional
selection and single-bond updates are all O(log N).  The hot loop is a numba
kernel fed with pre-drawn exponential/uniform blocks, so trajectories are
deterministic functions of their generator stream.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from numba import njit

from .equilibrium import EquilibriumFamily, RangeError
from .model import RateModel
from .profiles import Profile, TrigPoly

__all__ = [
    "Configuration",
    "RateIndex",
    "ExperimentConfig",
    "ReplicaTrajectory",
    "default_block_size",
    "block_window_report",
    "sample_initial",
    "run_until",
    "measure_density",
    "run_replicas",
]

_CHUNK = 1 << 20


@dataclass
class Configuration:
    """Spin configuration on the N-ring with its microscopic clock."""

    z: np.ndarray
    micro_time: float = 0.0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int64)

    @property
    def N(self) -> int:
        return self.z.size

    @property
    def total(self) -> int:
        return int(self.z.sum())

    def copy(self) -> "Configuration":
        return Configuration(z=self.z.copy(), micro_time=self.micro_time)


@njit(cache=True, nogil=True)
def _rebuild_tree(z, tree, P, n, rate_flat, nS, z_lo):
    for j in range(P):
        if j < n:
            jn = j + 1 if j + 1 < n else 0
            tree[P + j] = rate_flat[(z[j] - z_lo) * nS + (z[jn] - z_lo)]
        else:
            tree[P + j] = 0.0
    for i in range(P - 1, 0, -1):
        tree[i] = tree[2 * i] + tree[2 * i + 1]


@njit(cache=True, nogil=True)
def _kmc_chunk(z, tree, P, n, rate_flat, nS, z_lo, z_hi, t, comp, t_target,
               exps, unis):
    """Run events until the target time, the rng block, or the window ends.

    Returns (t, comp, events, used, status) with status 0 = reached target,
    1 = rng block exhausted, 2 = spin window boundary hit (no draw consumed).
    """
    used = 0
    events = 0
    m = exps.shape[0]
    while True:
        W = tree[1]
        if W <= 1e-300:
            return t_target, 0.0, events, used, 0
        if used >= m:
            return t, comp, events, used, 1
        dt = exps[used] / W
        # crossing the target: the chain is piecewise constant, so the state
        # now is exactly the state at t_target
        y = dt - comp
        t_new = t + y
        if t_new > t_target:
            return t_target, 0.0, events, used + 1, 0
        # proportional bond selection by tree descent
        r = unis[used] * W
        i = 1
        while i < P:
            i <<= 1
            if r >= tree[i]:
                r -= tree[i]
                i += 1
        j = i - P
        if j >= n or tree[P + j] <= 0.0:
            # rounding pushed the descent onto a dead leaf; take the next
            # live bond (measure-zero event, any tie-break is fine)
            j = j % n
            for _ in range(n):
                j = j + 1 if j + 1 < n else 0
                if tree[P + j] > 0.0:
                    break
        jp = j + 1 if j + 1 < n else 0
        if z[j] - 1 < z_lo or z[jp] + 1 > z_hi:
            return t, comp, events, used, 2
        comp = (t_new - t) - y
        t = t_new
        used += 1
        z[j] -= 1
        z[jp] += 1
        events += 1
        b0 = j - 1 if j > 0 else n - 1
        for b in (b0, j, jp):
            bn = b + 1 if b + 1 < n else 0
            w = rate_flat[(z[b] - z_lo) * nS + (z[bn] - z_lo)]
            k = P + b
            delta = w - tree[k]
            while k >= 1:
                tree[k] += delta
                k >>= 1


@dataclass
class RateIndex:
    """Bond rates with a prefix-sum tree and a dense rate window."""

    tree: np.ndarray
    P: int
    rate_flat: np.ndarray
    z_lo: int
    z_hi: int

    @property
    def nS(self) -> int:
        return self.z_hi - self.z_lo + 1

    @classmethod
    def build(cls, model: RateModel, config: Configuration,
              pad: int = 12) -> "RateIndex":
        b = model.bounds
        if b.bounded:
            z_lo, z_hi = int(b.z_min), int(b.z_max)
        else:
            z_lo = int(config.z.min()) - pad
            z_hi = int(config.z.max()) + pad
            if b.bounded_below:
                z_lo = max(z_lo, int(b.z_min))
            if b.bounded_above:
                z_hi = min(z_hi, int(b.z_max))
        rate_flat = model.rate_table(z_lo, z_hi).ravel()
        n = config.N
        P = 1
        while P < n:
            P <<= 1
        tree = np.zeros(2 * P)
        idx = cls(tree=tree, P=P, rate_flat=rate_flat, z_lo=z_lo, z_hi=z_hi)
        idx.rebuild(config)
        return idx

    def rebuild(self, config: Configuration):
        _rebuild_tree(config.z, self.tree, self.P, config.N, self.rate_flat,
                      self.nS, self.z_lo)

    def total_rate(self) -> float:
        return float(self.tree[1])

    def widen(self, model: RateModel, config: Configuration) -> "RateIndex":
        grow = max(16, (self.z_hi - self.z_lo) // 2)
        return RateIndex.build(model, config, pad=grow)


def run_until(config: Configuration, rates: RateIndex, model: RateModel,
              t_micro_target: float, rng: np.random.Generator,
              chunk: int = _CHUNK) -> int:
    """Advance the jump chain to the target microscopic time in place.

    Waiting times are exponential in the total bond rate, the bond is chosen
    proportionally, and only the three affected bonds are re-rated per event.
    The clock uses compensated summation; the tree is rebuilt from the state
    at every chunk boundary, which bounds accumulated rounding.  Returns the
    number of executed events.
    """
    if t_micro_target < config.micro_time:
        raise ValueError(
            f"target {t_micro_target} before current time {config.micro_time}")
    events = 0
    t = config.micro_time
    comp = 0.0
    rates.rebuild(config)
    while True:
        # block size ~ expected remaining events, so short runs stay cheap
        expect = rates.total_rate() * max(t_micro_target - t, 0.0)
        block = min(chunk, max(256, int(1.25 * expect) + 64))
        exps = rng.standard_exponential(block)
        unis = rng.random(block)
        used_base = 0
        while True:
            t, comp, ev, used, status = _kmc_chunk(
                config.z, rates.tree, rates.P, config.N, rates.rate_flat,
                rates.nS, rates.z_lo, rates.z_hi, t, comp, t_micro_target,
                exps[used_base:], unis[used_base:])
            events += ev
            used_base += used
            if status == 0:
                config.micro_time = t_micro_target
                return events
            if status == 2:
                widened = rates.widen(model, config)
                rates.tree = widened.tree
                rates.P = widened.P
                rates.rate_flat = widened.rate_flat
                rates.z_lo = widened.z_lo
                rates.z_hi = widened.z_hi
                continue
            break  # rng block exhausted; draw a fresh one


def sample_initial(family: EquilibriumFamily, N: int, beta: float, v0: float,
                   u0: Optional[Union[Profile, TrigPoly]],
                   rng: np.random.Generator) -> Configuration:
    """Independent draws z_j from the tilt at density v0 + N^-beta u0(j/N).

    Inverse-CDF sampling over the family's support window; deterministic for
    a given generator state.
    """
    x = np.arange(N) / N
    v = np.full(N, float(v0)) if u0 is None else v0 + N ** (-beta) * np.asarray(u0(x))
    lo, hi = family.v_range
    bad = np.nonzero((v <= lo) | (v >= hi))[0]
    if bad.size:
        j = int(bad[0])
        raise RangeError(
            f"initial density {v[j]:.6g} at site {j} outside the attainable "
            f"range ({lo:.6g}, {hi:.6g})")
    unif = rng.random(N)
    z = np.empty(N, dtype=np.int64)
    zf = family.z.astype(float)
    for start in range(0, N, 16384):
        sl = slice(start, min(start + 16384, N))
        th = np.asarray(family.theta_of_v(v[sl]))
        lw = family.log_pi[None, :] + th[:, None] * zf[None, :]
        lw -= lw.max(axis=1, keepdims=True)
        p = np.exp(lw)
        cdf = np.cumsum(p, axis=1)
        cdf /= cdf[:, -1:]
        z[sl] = family.z[(cdf < unif[sl, None]).sum(axis=1)]
    return Configuration(z=z, micro_time=0.0)


def default_block_size(N: int, beta: float) -> int:
    """ceil(N^{2 beta} log N): comfortably above the mesoscopic scale."""
    return int(math.ceil(N ** (2 * beta) * math.log(N)))


def block_window_report(N: int, beta: float, l: int) -> dict:
    """Where l sits relative to the mesoscopic window (N^{2b}, N^{(1+b)/3})."""
    lower = N ** (2 * beta)
    upper = N ** ((1 + beta) / 3.0)
    return {"l": l, "lower_scale": lower, "upper_scale": upper,
            "above_lower": l > lower, "below_upper": l < upper}


def measure_density(config: Configuration, N: int, beta: float, v0: float,
                    b0: float, t_macro: float, l: int, M: int) -> Profile:
    """Empirical perturbation field in the characteristic frame.

    Block averages of length l are read off at the frame-shifted positions;
    the real-valued shift s = N^{1+beta} b0 t is handled by linear
    interpolation between the two neighbouring integer shifts.  This grid
    field is the plotting observable; the pairing statistic keeps the exact
    real shift instead.
    """
    if config.N != N:
        raise ValueError("configuration size mismatch")
    if l < 1 or l > N // 8:
        raise ValueError(f"block size {l} incompatible with N = {N}")
    z = config.z.astype(float)
    csum = np.concatenate([[0.0], np.cumsum(np.concatenate([z, z[: l - 1]]))])
    bm = (csum[l:l + N] - csum[:N]) / l  # mean over [j, j+l-1], periodic
    s = N ** (1.0 + beta) * b0 * t_macro
    base = np.floor(np.arange(M) / M * N).astype(np.int64)
    s_int = int(math.floor(s))
    frac = s - s_int
    lo = bm[(base + s_int) % N]
    hi = bm[(base + s_int + 1) % N]
    u_hat = N**beta * ((1.0 - frac) * lo + frac * hi - v0)
    return Profile(u_hat)


@dataclass(frozen=True)
class ExperimentConfig:
    """Moving-frame perturbation experiment on one (N, beta) cell."""

    N: int
    beta: float
    v0: float
    u0_amplitude: float
    u0_mode: int
    T: float
    times: tuple
    replicas: int
    seed: int
    l: Optional[int] = None
    M: int = 128

    def __post_init__(self):
        if not 0.0 < self.beta < 0.2:
            raise ValueError(f"beta = {self.beta} outside (0, 1/5)")
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if self.N < 16:
            raise ValueError("ring too small")
        if not self.times:
            raise ValueError("no measurement times")
        if any(t < 0 for t in self.times) or max(self.times) > self.T:
            raise ValueError("measurement times must lie in [0, T]")
        if self.u0_mode < 1:
            raise ValueError("u0 mode must be >= 1")
        object.__setattr__(self, "times", tuple(sorted(self.times)))

    @property
    def block_size(self) -> int:
        l = self.l if self.l is not None else default_block_size(self.N, self.beta)
        if l > self.N // 8:
            raise ValueError(f"block size {l} > N/8 = {self.N // 8}")
        return l

    def u0(self) -> TrigPoly:
        return TrigPoly.sine(self.u0_mode, self.u0_amplitude)

    def micro_time(self, t_macro: float) -> float:
        return self.N ** (1.0 + self.beta) * t_macro


@dataclass
class ReplicaTrajectory:
    """Snapshots and frame-shifted density profiles of one replica."""

    replica: int
    snapshots: dict = field(default_factory=dict)   # t_macro -> z array
    profiles: dict = field(default_factory=dict)    # t_macro -> Profile
    events: int = 0


def _run_one_replica(replica: int, model: RateModel,
                     family: EquilibriumFamily, exp: ExperimentConfig,
                     b0: float, rng: np.random.Generator) -> ReplicaTrajectory:
    config = sample_initial(family, exp.N, exp.beta, exp.v0, exp.u0(), rng)
    rates = RateIndex.build(model, config)
    out = ReplicaTrajectory(replica=replica)
    l = exp.block_size
    for t in exp.times:
        out.events += run_until(config, rates, model, exp.micro_time(t), rng)
        out.snapshots[t] = config.z.copy()
        out.profiles[t] = measure_density(config, exp.N, exp.beta, exp.v0,
                                          b0, t, l, exp.M)
    return out


def run_replicas(model: RateModel, family: EquilibriumFamily,
                 exp: ExperimentConfig, b0: float,
                 rng_factory: Callable[[int], np.random.Generator],
                 threads: int = 1) -> list:
    """Independent replicas, deterministic per replica and scheduling-free.

    rng_factory maps the replica index to its private generator stream; the
    result list is ordered by replica index regardless of completion order.
    """
    indices = range(exp.replicas)
    if threads <= 1:
        return [_run_one_replica(r, model, family, exp, b0, rng_factory(r))
                for r in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_run_one_replica, r, model, family, exp, b0,
                               rng_factory(r)) for r in indices]
        return [f.result() for f in futures]
