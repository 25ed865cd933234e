"""Exact linear algebra on canonical spin blocks.

Everything here is finite and exact up to floating point: sectors of fixed
total spin are enumerated, the block generator (forward moves on interior
bonds) and its time reversal are built as sparse matrices, and the
symmetrised operator is diagonalised in the measure-weighted inner product
via the similarity transform by diag(sqrt(pi)).  Unbounded alphabets enter
only through spin-window clipping, i.e. moves that would leave the window are
censored; censoring preserves reversibility of the symmetrised dynamics for
the window-restricted canonical measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .equilibrium import EquilibriumFamily
from .model import RateModel

__all__ = [
    "EmptySectorError",
    "BlockEnsemble",
    "BlockOperator",
    "Cylinder",
    "enumerate_sector",
    "build_operator",
    "dirichlet",
    "spectral_gap",
    "sigma_bar",
    "check_gappert",
    "GappertCheck",
    "canonical_expectation",
    "psi_hat",
    "ensembles_sweep",
    "check_dirsum_convex",
    "observed_order",
    "z_cylinder",
    "flux_cylinder",
]

_SECTOR_GUARD_L = 10
_STATE_GUARD = 2_000_000


class EmptySectorError(ValueError):
    """No block configuration attains the requested total spin."""


class ReducibleSectorError(RuntimeError):
    """Symmetrised block dynamics do not connect the sector."""


def observed_order(sizes, errors) -> float:
    """Mean of successive pairwise log-log slopes (observed order)."""
    sizes = np.asarray(sizes, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0):
        raise ValueError("observed_order needs strictly positive errors")
    slopes = np.diff(np.log(errors)) / np.diff(np.log(sizes))
    return float(slopes.mean())


def _enumerate_full(spins: np.ndarray, l: int) -> np.ndarray:
    """All of spins^l in lexicographic order, shape (len(spins)^l, l)."""
    if len(spins) ** l > _STATE_GUARD:
        raise ValueError(
            f"{len(spins)}^{l} states exceed the enumeration guard")
    grids = np.meshgrid(*([spins] * l), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


@dataclass
class BlockEnsemble:
    """Canonical sector: states of an l-block with fixed total spin k."""

    model: RateModel
    l: int
    k: int
    spins: np.ndarray          # allowed one-site spin values (window)
    states: np.ndarray         # (n, l) lexicographic
    pi_k: np.ndarray           # canonical weights, sums to 1
    m_k: float                 # grand-canonical mass of the sector
    _index: dict = field(repr=False, default_factory=dict)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    def index_of(self, state: np.ndarray) -> int:
        return self._index[tuple(int(v) for v in state)]


def enumerate_sector(family: EquilibriumFamily, l: int, k: int,
                     spins: Optional[np.ndarray] = None) -> BlockEnsemble:
    """Enumerate the sector and compute canonical weights in the log domain."""
    if not 1 <= l <= _SECTOR_GUARD_L:
        raise ValueError(f"block length {l} outside [1, {_SECTOR_GUARD_L}]")
    if spins is None:
        spins = family.z
    spins = np.asarray(spins, dtype=np.int64)
    if int(spins.min()) * l > k or int(spins.max()) * l < k:
        raise EmptySectorError(
            f"no states with total spin {k} on an l = {l} block "
            f"(window [{spins.min()}, {spins.max()}])")
    full = _enumerate_full(spins, l)
    sector = full[full.sum(axis=1) == k]
    if sector.shape[0] == 0:
        raise EmptySectorError(f"empty sector (l = {l}, k = {k})")
    site_lw = dict(zip(family.z.tolist(), family.log_pi.tolist()))
    lw = np.array([sum(site_lw[int(v)] for v in s) for s in sector])
    log_mk = logsumexp(lw)
    pi_k = np.exp(lw - log_mk)
    ens = BlockEnsemble(model=family.model, l=l, k=k, spins=spins,
                        states=sector, pi_k=pi_k, m_k=float(np.exp(log_mk)))
    ens._index = {tuple(int(v) for v in s): i for i, s in enumerate(sector)}
    return ens


@dataclass
class BlockOperator:
    """Forward generator, its reversal, and the symmetrised matrix."""

    ensemble: BlockEnsemble
    boundary: str                  # free | periodic
    forward: sp.csr_matrix         # generator matrix (rows sum to 0)
    reversed_: sp.csr_matrix
    sym: np.ndarray                # dense symmetric matrix, pi-weighted basis
    irreducible: bool

    @property
    def n(self) -> int:
        return self.ensemble.n


def _moves(ensemble: BlockEnsemble, direction: str, boundary: str):
    """Yield (src, dst, rate) triples for the requested move family."""
    model = ensemble.model
    l = ensemble.l
    lo, hi = int(ensemble.spins.min()), int(ensemble.spins.max())
    bonds = range(l if boundary == "periodic" else l - 1)
    for s_idx in range(ensemble.n):
        s = ensemble.states[s_idx]
        for b in bonds:
            i, j = b, (b + 1) % l
            if direction == "forward":
                x, y = int(s[i]), int(s[j])
                rate = model.rate(x, y)
                new_i, new_j = x - 1, y + 1
            else:
                # time reversal: spin moves from the right site to the left
                x, y = int(s[i]), int(s[j])
                rate = model.rate(y, x)
                new_i, new_j = x + 1, y - 1
            if rate <= 0.0:
                continue
            if new_i < lo or new_i > hi or new_j < lo or new_j > hi:
                continue  # censored at the clipping window
            t = s.copy()
            t[i], t[j] = new_i, new_j
            yield s_idx, ensemble.index_of(t), rate


def build_operator(ensemble: BlockEnsemble,
                   boundary: str = "free") -> BlockOperator:
    """Assemble generator matrices and the symmetrised dense operator."""
    if boundary not in ("free", "periodic"):
        raise ValueError(f"unknown boundary {boundary!r}")
    n = ensemble.n

    def build(direction: str) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        diag = np.zeros(n)
        for i, j, rate in _moves(ensemble, direction, boundary):
            rows.append(i)
            cols.append(j)
            vals.append(rate)
            diag[i] -= rate
        rows += list(range(n))
        cols += list(range(n))
        vals += diag.tolist()
        return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

    fwd = build("forward")
    rev = build("reversed")
    half = 0.5 * (fwd + rev)
    sq = np.sqrt(ensemble.pi_k)
    with np.errstate(divide="ignore"):
        m = half.toarray() * sq[:, None] / sq[None, :]
    sym = 0.5 * (m + m.T)  # kills the ~1e-16 similarity-transform residue

    adj = (half.toarray() > 0) | np.eye(n, dtype=bool)
    reach = np.zeros(n, dtype=bool)
    reach[0] = True
    frontier = np.array([0])
    while frontier.size:
        nxt = np.unique(np.nonzero(adj[frontier])[1])
        nxt = nxt[~reach[nxt]]
        reach[nxt] = True
        frontier = nxt
    return BlockOperator(ensemble=ensemble, boundary=boundary, forward=fwd,
                         reversed_=rev, sym=sym, irreducible=bool(reach.all()))


def dirichlet(op: BlockOperator, f: np.ndarray,
              variant: str = "forward") -> float:
    """Block Dirichlet form (1/2) sum over moves of pi * rate * (df)^2."""
    f = np.asarray(f, dtype=float)
    if f.shape != (op.n,):
        raise ValueError(f"f has shape {f.shape}, sector has {op.n} states")
    q = op.forward if variant == "forward" else op.reversed_
    coo = q.tocoo()
    mask = coo.row != coo.col
    rows, cols, vals = coo.row[mask], coo.col[mask], coo.data[mask]
    pi = op.ensemble.pi_k
    return float(0.5 * np.sum(pi[rows] * vals * (f[cols] - f[rows]) ** 2))


def _variance(pi: np.ndarray, f: np.ndarray) -> float:
    m = float(pi @ f)
    return float(pi @ (f - m) ** 2)


def _top_eigs(sym: np.ndarray, k: int = 2):
    n = sym.shape[0]
    if n <= 2048:
        vals, vecs = np.linalg.eigh(sym)
        return vals[::-1][:k], vecs[:, ::-1][:, :k]
    vals, vecs = sp.linalg.eigsh(sp.csr_matrix(sym), k=k, which="LA")
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def spectral_gap(op: BlockOperator) -> float:
    """Smallest nonzero eigenvalue of minus the symmetrised generator.

    Single-state sectors carry no Dirichlet form; the gap is reported as the
    +inf sentinel there.  The variational identity gap = inf D/Var is verified
    on the computed eigenvector.
    """
    n = op.n
    if n == 1:
        return float("inf")
    if not op.irreducible:
        raise ReducibleSectorError(
            f"sector (l={op.ensemble.l}, k={op.ensemble.k}) is not connected")
    vals, vecs = _top_eigs(op.sym, k=2)
    if abs(vals[0]) > 1e-9:
        raise RuntimeError(f"top eigenvalue {vals[0]} is not 0")
    gap = -float(vals[1])
    f = vecs[:, 1] / np.sqrt(op.ensemble.pi_k)
    ratio = dirichlet(op, f) / _variance(op.ensemble.pi_k, f)
    if abs(ratio - gap) > 1e-8 * max(1.0, gap):
        raise RuntimeError(
            f"variational identity violated: D/Var = {ratio}, gap = {gap}")
    return gap


def sigma_bar(op: BlockOperator, V: np.ndarray) -> float:
    """Top of the spectrum of the symmetrised generator plus a potential.

    Cross-checked against the variational form sup_h (int V h dpi - D(sqrt h))
    evaluated at the density induced by the top eigenvector.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != (op.n,):
        raise ValueError("potential has wrong length")
    mat = op.sym + np.diag(V)
    vals, vecs = _top_eigs(mat, k=1)
    top = float(vals[0])
    psi = vecs[:, 0]
    if psi.sum() < 0:
        psi = -psi
    psi = np.abs(psi)  # Perron vector of an irreducible Metzler matrix
    psi /= np.linalg.norm(psi)
    h_sqrt = psi / np.sqrt(op.ensemble.pi_k)
    variational = float(V @ psi**2) - dirichlet(op, h_sqrt)
    if abs(variational - top) > 1e-8 * max(1.0, abs(top)):
        raise RuntimeError(
            f"variational check failed: {variational} vs eigenvalue {top}")
    return top


@dataclass(frozen=True)
class GappertCheck:
    lhs: float
    rhs: float
    eps: float
    eps_max: float
    projected: bool
    ok: bool


def check_gappert(op: BlockOperator, V: np.ndarray, eps: float,
                  tol: float = 1e-10) -> GappertCheck:
    """Perturbative top-of-spectrum bound for a mean-zero potential.

    lhs = sigma_bar(L + eps V); rhs = eps^2 rho / (1 - 2 ||V||_inf eps rho)
    times Var(V), with rho the inverse spectral gap.  Requires eps below
    (2 ||V||_inf rho)^{-1}.
    """
    V = np.asarray(V, dtype=float)
    pi = op.ensemble.pi_k
    mean = float(pi @ V)
    projected = abs(mean) > 1e-13 * max(1.0, float(np.abs(V).max()))
    if projected:
        V = V - mean
    rho = 1.0 / spectral_gap(op)
    vinf = float(np.abs(V).max())
    if vinf == 0.0:
        return GappertCheck(lhs=sigma_bar(op, 0.0 * V), rhs=0.0, eps=eps,
                            eps_max=float("inf"), projected=projected, ok=True)
    eps_max = 1.0 / (2.0 * vinf * rho)
    if not 0 < eps < eps_max:
        raise ValueError(f"eps = {eps} outside admissible (0, {eps_max})")
    lhs = sigma_bar(op, eps * V)
    rhs = eps**2 * rho / (1.0 - 2.0 * vinf * eps * rho) * _variance(pi, V)
    return GappertCheck(lhs=lhs, rhs=rhs, eps=eps, eps_max=eps_max,
                        projected=projected, ok=lhs <= rhs + tol)


# -- cylinder observables -------------------------------------------------------


@dataclass(frozen=True)
class Cylinder:
    """Finite-base observable evaluated on m consecutive sites."""

    name: str
    m: int
    fn: Callable[[np.ndarray], np.ndarray]  # (n, m) spins -> (n,) values


def z_cylinder() -> Cylinder:
    return Cylinder(name="z", m=1, fn=lambda w: w[:, 0].astype(float))


def flux_cylinder(model: RateModel) -> Cylinder:
    """Bond jump-rate observable c(z_{j+1}, z_j)."""

    def fn(w: np.ndarray) -> np.ndarray:
        return np.array([model.rate(int(b), int(a)) for a, b in w])

    return Cylinder(name="flux", m=2, fn=fn)


def canonical_expectation(ensemble: BlockEnsemble,
                          psi: Cylinder) -> tuple[float, float]:
    """Exact mean and variance of the in-block average of a cylinder.

    The block average runs over the l - m + 1 positions where the base fits
    inside the block (no wrap-around), normalised by the position count.
    """
    l, m = ensemble.l, psi.m
    if m > l:
        raise ValueError(f"cylinder base {m} exceeds block length {l}")
    positions = l - m + 1
    total = np.zeros(ensemble.n)
    for p in range(positions):
        total += psi.fn(ensemble.states[:, p:p + m])
    avg = total / positions
    mean = float(ensemble.pi_k @ avg)
    var = float(ensemble.pi_k @ (avg - mean) ** 2)
    return mean, var


def psi_hat(family: EquilibriumFamily, psi: Cylinder, v: float) -> float:
    """Grand-canonical expectation of the cylinder at density v."""
    if psi.name == "flux":
        return family.flux_hat(v)
    p = family.pmf(family.theta_of_v(v))
    if psi.m == 1:
        vals = psi.fn(family.z[:, None])
        return float(p @ vals)
    if psi.m > 3:
        raise ValueError("grand-canonical reference only for base <= 3")
    grids = np.meshgrid(*([family.z] * psi.m), indexing="ij")
    block = np.stack([g.ravel() for g in grids], axis=1)
    vals = psi.fn(block)
    weights = np.ones(block.shape[0])
    for col in range(psi.m):
        weights *= p[np.searchsorted(family.z, block[:, col])]
    return float(weights @ vals)


def ensembles_sweep(family: EquilibriumFamily, psi: Cylinder, density: float,
                    ls, spins: Optional[np.ndarray] = None):
    """Equivalence-of-ensembles decay |E^l_k(psi^l) - psi_hat(k/l)| over l.

    k is the sector closest to the requested density; the reference value is
    evaluated at the sector's own density k/l.  Returns (rows, fitted_slope)
    where rows are (l, k, mean, var, reference, abs_error).
    """
    rows = []
    for l in ls:
        k = int(round(density * l))
        ens = enumerate_sector(family, l, k, spins=spins)
        mean, var = canonical_expectation(ens, psi)
        ref = psi_hat(family, psi, k / l)
        rows.append((l, k, mean, var, ref, abs(mean - ref)))
    errs = [r[5] for r in rows]
    slope = observed_order([r[0] for r in rows], errs) if min(errs) > 0 else float("-inf")
    return rows, slope


# -- Dirichlet-form identities on small tori ------------------------------------


class _FullSpace:
    """Product space S^n with precomputed move tables for fast quadratic forms."""

    def __init__(self, family: EquilibriumFamily, n: int, periodic: bool):
        self.n = n
        spins = family.z
        self.states = _enumerate_full(spins, n)
        site_lw = dict(zip(family.z.tolist(), family.log_pi.tolist()))
        lw = np.array([sum(site_lw[int(v)] for v in s) for s in self.states])
        self.log_w = lw  # normalised product measure: logsumexp(lw) ~ 0
        self.pi = np.exp(lw)
        index = {tuple(int(v) for v in s): i for i, s in enumerate(self.states)}
        model = family.model
        lo, hi = int(spins.min()), int(spins.max())
        bonds = range(n if periodic else n - 1)
        src, dst, rate = [], [], []
        for s_idx, s in enumerate(self.states):
            for b in bonds:
                i, j = b, (b + 1) % n
                x, y = int(s[i]), int(s[j])
                r = model.rate(x, y)
                if r <= 0.0 or x - 1 < lo or y + 1 > hi:
                    continue
                t = s.copy()
                t[i], t[j] = x - 1, y + 1
                src.append(s_idx)
                dst.append(index[tuple(int(v) for v in t)])
                rate.append(r)
        self.src = np.array(src, dtype=np.int64)
        self.dst = np.array(dst, dtype=np.int64)
        self.rate = np.array(rate)

    def dirichlet(self, f: np.ndarray) -> float:
        df = f[self.dst] - f[self.src]
        return float(0.5 * np.sum(self.pi[self.src] * self.rate * df**2))


def check_dirsum_convex(family: EquilibriumFamily, N_small: int, l: int,
                        n_density: int = 50, seed: int = 0) -> dict:
    """Exhaustive check of the two block-decomposition facts.

    For random densities h on the N_small-torus: (i) for every l-window
    marginal, the free-block Dirichlet form of sqrt(h^l) equals the
    sector-weighted sum of canonical Dirichlet forms; (ii) the periodic
    N-torus form dominates (1/l) times the sum of window forms.
    """
    if N_small > 8:
        raise ValueError("exhaustive check capped at N_small = 8")
    if l > N_small:
        raise ValueError("window longer than the torus")
    torus = _FullSpace(family, N_small, periodic=True)
    block = _FullSpace(family, l, periodic=False)

    # sector decomposition of the l-block
    ksum = block.states.sum(axis=1)
    sectors = {}
    for k in np.unique(ksum):
        sel = np.nonzero(ksum == k)[0]
        mk = float(torus_pi_sum := np.exp(logsumexp(block.log_w[sel])))
        sectors[int(k)] = (sel, mk)

    rng = np.random.default_rng(seed)
    max_dirsum_gap = 0.0
    min_convex_margin = float("inf")
    for _ in range(n_density):
        g = rng.lognormal(sigma=1.0, size=torus.states.shape[0])
        h = g / float(torus.pi @ g)  # density: E_pi h = 1

        lhs_convex = torus.dirichlet(np.sqrt(h))
        rhs_convex = 0.0
        for j in range(N_small):
            cols = [(j + i) % N_small for i in range(l)]
            # exact l-window marginal of the measure h dpi
            mu = np.zeros(block.states.shape[0])
            keys = {tuple(int(v) for v in s): i
                    for i, s in enumerate(block.states)}
            for s_idx, s in enumerate(torus.states):
                key = tuple(int(s[c]) for c in cols)
                mu[keys[key]] += h[s_idx] * torus.pi[s_idx]
            h_l = mu / block.pi

            d_l = block.dirichlet(np.sqrt(h_l))
            rhs_convex += d_l / l

            # sector decomposition of the same marginal
            total = 0.0
            for k, (sel, mk) in sectors.items():
                w_k = float(mu[sel].sum())
                if w_k <= 0.0:
                    continue
                h_lk = np.zeros_like(h_l)
                h_lk[sel] = (mk / w_k) * h_l[sel]
                # canonical Dirichlet form = block form under pi(.|k) weights
                df = np.sqrt(h_lk)[block.dst] - np.sqrt(h_lk)[block.src]
                in_k = np.isin(block.src, sel)
                d_lk = float(0.5 * np.sum(
                    (block.pi[block.src[in_k]] / mk) * block.rate[in_k]
                    * df[in_k]**2))
                total += w_k * d_lk
            max_dirsum_gap = max(max_dirsum_gap, abs(total - d_l))
        min_convex_margin = min(min_convex_margin, lhs_convex - rhs_convex)

    return {
        "n_density": n_density,
        "max_dirsum_violation": max_dirsum_gap,
        "min_convex_margin": min_convex_margin,
        "dirsum_ok": max_dirsum_gap <= 1e-10,
        "convex_ok": min_convex_margin >= -1e-12,
    }
