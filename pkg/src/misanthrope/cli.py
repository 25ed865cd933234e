"""Experiment orchestration: configs, seeds, replica scheduling, CSV artifacts.

Config files are YAML with a strict key schema; every run emits a manifest
from which its data files are bit-exactly reproducible (telemetry like wall
seconds is reported separately in events.json and is not covered by that
contract).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .blockstats import (CappedG, ZetaSpec, corollary_statistic,
                         kurschak_probe)
from .burgers import CharacteristicsSolution, shock_time
from .equilibrium import build_family
from .model import model_from_dict, validate_conditions
from .profiles import TrigPoly
from .simulate import (ExperimentConfig, block_window_report, run_replicas)
from .spectral import (build_operator, enumerate_sector, ensembles_sweep,
                       flux_cylinder, spectral_gap, z_cylinder,
                       EmptySectorError)

SUMMARY_SCHEMA_VERSION = 1

_CONFIG_KEYS = {"model", "N", "beta", "v0", "u0", "T", "times", "replicas",
                "l", "seed", "phi"}
_U0_KEYS = {"amplitude", "mode"}
_PHI_KEYS = {"degree"}


class ConfigError(ValueError):
    pass


# -- seeds ---------------------------------------------------------------------


def seed_plan(base_seed: int, replica: int, cell: int) -> np.random.SeedSequence:
    """Stream identifier for one replica of one sweep cell.

    Injective over (replica, cell) by construction: the pair is the spawn key
    of the root sequence.
    """
    return np.random.SeedSequence(base_seed, spawn_key=(cell, replica))


def _rng_factory(base_seed: int, cell: int):
    return lambda replica: np.random.Generator(
        np.random.Philox(seed_plan(base_seed, replica, cell)))


# -- config parsing --------------------------------------------------------------


def _require_keys(mapping: dict, allowed: set, context: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {context}: {sorted(unknown)}")


def load_yaml(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return data


def parse_experiment(raw: dict) -> dict:
    """Validate the experiment config schema and normalise values."""
    _require_keys(raw, _CONFIG_KEYS, "config")
    for key in ("model", "N", "beta", "v0", "u0", "T", "times", "replicas",
                "seed"):
        if key not in raw:
            raise ConfigError(f"config missing required key {key!r}")
    u0 = raw["u0"]
    if not isinstance(u0, dict):
        raise ConfigError("u0 must be a mapping with amplitude and mode")
    _require_keys(u0, _U0_KEYS, "u0")
    phi = raw.get("phi", {"degree": 2})
    _require_keys(phi, _PHI_KEYS, "phi")
    degree = int(phi.get("degree", 2))
    if not 1 <= degree <= TrigPoly.MAX_DEGREE:
        raise ConfigError(f"phi.degree must be in [1, {TrigPoly.MAX_DEGREE}]")
    out = {
        "model": raw["model"],
        "N": raw["N"],
        "beta": float(raw["beta"]),
        "v0": float(raw["v0"]),
        "u0_amplitude": float(u0.get("amplitude", 0.5)),
        "u0_mode": int(u0.get("mode", 1)),
        "T": float(raw["T"]),
        "times": [float(t) for t in raw["times"]],
        "replicas": int(raw["replicas"]),
        "l": raw.get("l"),
        "seed": int(raw["seed"]),
        "phi_degree": degree,
    }
    return out


def _experiment_for_cell(cfg: dict, N: int, beta: float) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            N=int(N), beta=float(beta), v0=cfg["v0"],
            u0_amplitude=cfg["u0_amplitude"], u0_mode=cfg["u0_mode"],
            T=cfg["T"], times=tuple(cfg["times"]), replicas=cfg["replicas"],
            seed=cfg["seed"],
            l=None if cfg["l"] is None else int(cfg["l"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _phis(degree: int) -> list:
    out = []
    for m in range(1, degree + 1):
        out.append((f"sin_{m}", TrigPoly.sine(m, 1.0)))
        out.append((f"cos_{m}", TrigPoly.cosine(m, 1.0)))
    return out


# -- deterministic file output -----------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v} would leak into a CSV")
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list, rows: list):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


# -- pipelines ---------------------------------------------------------------------


def _build_validated_model(spec: dict):
    model = model_from_dict(spec)
    report = validate_conditions(model, window=6)
    if not report.structural_ok:
        raise ConfigError(f"model fails structural conditions:\n{report}")
    return model


def _family_for(model):
    if model.kind == "zero-range":
        return build_family(model, theta_range=(-3.5, 1.5))
    if model.kind == "bricklayers":
        return build_family(model, theta_range=(-1.5, 1.5))
    return build_family(model)


def _quadrature_integral(phi: TrigPoly, sol: CharacteristicsSolution,
                         t: float, M: int = 2048) -> float:
    xs = np.arange(M) / M
    return float(np.mean(phi(xs) * sol.u(t, xs)))


def _compare_cell(cfg: dict, exp: ExperimentConfig, cell: int, out: Path,
                  threads: int) -> dict:
    """Run one (N, beta) cell end to end; returns summary fragments."""
    model = _build_validated_model(cfg["model"])
    family = _family_for(model)
    trip = family.flux_derivatives(exp.v0)
    if trip.degenerate:
        raise ConfigError(
            f"flux second derivative degenerate at v0 = {exp.v0} "
            f"(c0 = {trip.c0:.3g}); refusing the perturbation experiment")
    u0 = exp.u0()
    t_star = shock_time(u0, trip.c0)
    if exp.T >= 0.95 * t_star:
        raise ConfigError(
            f"horizon T = {exp.T} at or beyond 0.95 T* with T* = {t_star:.6g}")
    sol = CharacteristicsSolution(u0=u0, c0=trip.c0)

    t0 = time.time()
    trajectories = run_replicas(model, family, exp, trip.b0,
                                _rng_factory(exp.seed, cell), threads=threads)
    wall = time.time() - t0

    phis = _phis(cfg["phi_degree"])
    targets = {(pid, t): _quadrature_integral(phi, sol, t)
               for pid, phi in phis for t in exp.times}

    corollary_rows = []
    for traj in trajectories:
        for t in exp.times:
            z = traj.snapshots[t]
            for pid, phi in phis:
                s_n = corollary_statistic(z, phi, exp.N, exp.beta, exp.v0,
                                          trip.b0, t)
                corollary_rows.append((traj.replica, t, pid, s_n,
                                       targets[(pid, t)]))
    write_csv(out / "corollary.csv",
              ["replica", "t", "phi_id", "S_N", "target_integral"],
              corollary_rows)

    profile_rows = []
    for traj in trajectories:
        for t in exp.times:
            prof = traj.profiles[t]
            for x, u in zip(prof.x, prof.values):
                profile_rows.append((traj.replica, t, x, u))
    write_csv(out / "density_profile.csv",
              ["replica", "t_macro", "x", "u_hat"], profile_rows)

    burgers_rows = []
    m_grid = 512
    xs = np.arange(m_grid) / m_grid
    for t in exp.times:
        for x, u in zip(xs, sol.u(t, xs)):
            burgers_rows.append((t, x, u))
    write_csv(out / "burgers.csv", ["t", "x", "u"], burgers_rows)

    total_events = sum(traj.events for traj in trajectories)
    write_json(out / "events.json", {
        "N": exp.N, "beta": exp.beta, "total_events": total_events,
        "wall_seconds": wall,
        "events_per_second": total_events / wall if wall > 0 else 0.0,
    })

    per_time_l2 = {}
    for t in exp.times:
        mean_prof = np.mean([traj.profiles[t].values for traj in trajectories],
                            axis=0)
        xs_m = np.arange(exp.M) / exp.M
        ref = sol.u(t, xs_m)
        per_time_l2[str(t)] = float(
            np.sqrt(np.mean((mean_prof - ref) ** 2)))

    z_scores = {}
    stats = {}
    for pid, phi in phis:
        for t in exp.times:
            vals = np.array([corollary_statistic(
                traj.snapshots[t], phi, exp.N, exp.beta, exp.v0, trip.b0, t)
                for traj in trajectories])
            dev = vals - targets[(pid, t)]
            se = float(dev.std(ddof=1) / math.sqrt(len(dev))) if len(dev) > 1 else 0.0
            z = float(dev.mean() / se) if se > 0 else 0.0
            z_scores[f"{pid}@{t}"] = z
            stats[f"{pid}@{t}"] = {
                "mean_abs_err": float(np.abs(dev).mean()),
                "stderr": se,
                "target": targets[(pid, t)],
            }

    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "N": exp.N, "beta": exp.beta, "v0": exp.v0,
        "flux": {"a0": trip.a0, "b0": trip.b0, "c0": trip.c0},
        "t_star": t_star,
        "block": block_window_report(exp.N, exp.beta, exp.block_size),
        "per_time_l2_profile_error": per_time_l2,
        "corollary_z_scores": z_scores,
        "corollary_stats": stats,
        "total_events": total_events,
    }
    write_json(out / "summary.json", summary)
    return summary


def _manifest(subcommand: str, cfg: dict, exp: ExperimentConfig, cell: int,
              out: Path, wall: float, extra: dict | None = None):
    payload = {
        "experiment": subcommand,
        "version": __version__,
        "config": cfg,
        "cell": cell,
        "seeds": {
            "base": exp.seed,
            "streams": [
                {"replica": r, "spawn_key": [cell, r]}
                for r in range(exp.replicas)
            ],
        },
        "block": block_window_report(exp.N, exp.beta, exp.block_size),
        "wall_seconds": wall,
    }
    if extra:
        payload.update(extra)
    write_json(out / "manifest.json", payload)


# -- subcommands -------------------------------------------------------------------


def cmd_validate_model(args) -> int:
    spec = load_yaml(args.spec)
    model = model_from_dict(spec)
    report = validate_conditions(model, window=args.window)
    print(report)
    return 0 if report.structural_ok else 1


def cmd_flux(args) -> int:
    cfg = parse_experiment(load_yaml(args.config))
    model = _build_validated_model(cfg["model"])
    family = _family_for(model)
    lo, hi = family.v_range
    vmin = args.vmin if args.vmin is not None else lo + 0.05 * (hi - lo)
    vmax = args.vmax if args.vmax is not None else hi - 0.05 * (hi - lo)
    grid = np.linspace(vmin, vmax, args.grid)
    rows = []
    for v in grid:
        trip = family.flux_derivatives(float(v))
        rows.append((float(v), family.flux_hat(float(v)), trip.b0, trip.c0))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "flux.csv", ["v", "flux_hat", "b", "c"], rows)
    trip = family.flux_derivatives(cfg["v0"])
    print(f"a0 = {trip.a0!r}, b0 = {trip.b0!r}, c0 = {trip.c0!r}"
          f"{'  [degenerate]' if trip.degenerate else ''}")
    return 0


def cmd_burgers(args) -> int:
    cfg = parse_experiment(load_yaml(args.config))
    model = _build_validated_model(cfg["model"])
    family = _family_for(model)
    trip = family.flux_derivatives(cfg["v0"])
    u0 = TrigPoly.sine(cfg["u0_mode"], cfg["u0_amplitude"])
    sol = CharacteristicsSolution(u0=u0, c0=trip.c0)
    t_star = sol.t_star
    print(f"c0 = {trip.c0!r}, T* = {t_star!r}")
    rows = []
    xs = np.arange(args.grid) / args.grid
    for t in cfg["times"]:
        if t >= 0.95 * t_star:
            print(f"refusing t = {t}: beyond 0.95 T* (T* = {t_star:.6g})",
                  file=sys.stderr)
            return 2
        for x, u in zip(xs, sol.u(t, xs)):
            rows.append((t, x, u))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "burgers.csv", ["t", "x", "u"], rows)
    return 0


def cmd_simulate(args) -> int:
    cfg = parse_experiment(load_yaml(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    exp = _experiment_for_cell(cfg, cfg["N"], cfg["beta"])
    model = _build_validated_model(cfg["model"])
    family = _family_for(model)
    trip = family.flux_derivatives(exp.v0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    trajectories = run_replicas(model, family, exp, trip.b0,
                                _rng_factory(exp.seed, 0), threads=args.threads)
    wall = time.time() - t0
    rows = []
    for traj in trajectories:
        for t in exp.times:
            prof = traj.profiles[t]
            for x, u in zip(prof.x, prof.values):
                rows.append((traj.replica, t, x, u))
    write_csv(out / "density_profile.csv",
              ["replica", "t_macro", "x", "u_hat"], rows)
    total_events = sum(t.events for t in trajectories)
    write_json(out / "events.json", {
        "N": exp.N, "beta": exp.beta, "total_events": total_events,
        "wall_seconds": wall,
        "events_per_second": total_events / wall if wall > 0 else 0.0,
    })
    _manifest("simulate", cfg, exp, 0, out, wall)
    return 0


def cmd_compare(args) -> int:
    cfg = parse_experiment(load_yaml(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    if isinstance(cfg["N"], list) or isinstance(cfg["beta"], list):
        raise ConfigError("compare runs a single cell; use sweep for lists")
    exp = _experiment_for_cell(cfg, cfg["N"], cfg["beta"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    _compare_cell(cfg, exp, 0, out, args.threads)
    _manifest("compare", cfg, exp, 0, out, time.time() - t0)
    return 0


def cmd_sweep(args) -> int:
    cfg = parse_experiment(load_yaml(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    ns = cfg["N"] if isinstance(cfg["N"], list) else [cfg["N"]]
    betas = cfg["beta"] if isinstance(cfg["beta"], list) else [cfg["beta"]]
    if len(ns) * len(betas) < 2:
        raise ConfigError("sweep needs a list of at least 2 cells over N or beta")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    cell = 0
    for N in ns:
        for beta in betas:
            exp = _experiment_for_cell(cfg, N, beta)
            cell_dir = out / f"cell_{cell:03d}_N{N}_beta{beta}"
            cell_dir.mkdir(parents=True, exist_ok=True)
            t0 = time.time()
            summary = _compare_cell(cfg, exp, cell, cell_dir, args.threads)
            _manifest("sweep", cfg, exp, cell, cell_dir, time.time() - t0)
            for key, stat in summary["corollary_stats"].items():
                pid, t = key.split("@")
                rows.append((cell, N, beta, pid, float(t),
                             stat["mean_abs_err"], stat["stderr"]))
            cell += 1
    write_csv(out / "sweep_summary.csv",
              ["cell", "N", "beta", "phi_id", "t", "mean_abs_err", "stderr"],
              rows)
    return 0


def cmd_gap(args) -> int:
    model = _build_validated_model(load_yaml(args.spec))
    family = _family_for(model)
    if not model.bounds.bounded:
        raise ConfigError("gap sweep needs a bounded alphabet "
                          "(clip unbounded models to a window first)")
    rows = []
    for l in range(2, args.lmax + 1):
        k_lo = int(model.bounds.z_min) * l
        k_hi = int(model.bounds.z_max) * l
        for k in range(k_lo, k_hi + 1):
            try:
                ens = enumerate_sector(family, l, k)
            except EmptySectorError:
                continue
            if ens.n == 1:
                continue  # +inf sentinel has no place in a finite CSV
            gap = spectral_gap(build_operator(ens))
            rows.append((model.name, l, k, ens.n, gap, gap * l * l))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "gap.csv",
              ["model", "l", "k", "sector_size", "gap", "gap_times_l2"], rows)
    return 0


def cmd_ensembles(args) -> int:
    model = _build_validated_model(load_yaml(args.spec))
    family = _family_for(model)
    psi = flux_cylinder(model) if args.psi == "flux" else z_cylinder()
    ls = [int(v) for v in args.ls.split(",")]
    rows, slope = ensembles_sweep(family, psi, args.density, ls)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "ensembles.csv",
              ["model", "l", "density", "psi", "abs_error", "fitted_slope"],
              [(model.name, l, k / l, psi.name, err, slope)
               for (l, k, _, _, _, err) in rows])
    print(f"fitted slope: {slope!r}")
    return 0


def cmd_kurschak(args) -> int:
    zeta = ZetaSpec(name="rademacher")
    g = CappedG.abs_quad_cap()
    rng = np.random.Generator(np.random.Philox(
        seed_plan(args.seed, 0, 0)))
    rows = []
    for l in [int(v) for v in args.ls.split(",")]:
        est = kurschak_probe(zeta, g, args.gamma, l, args.samples, rng)
        rows.append((l, args.gamma, est.estimate, est.stderr, est.limit))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "kurschak.csv",
              ["l", "gamma", "estimate", "stderr", "limit_formula"], rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="misanthrope",
        description="misanthrope-class lattice gas experiments")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add_common(sp):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")

    sp = sub.add_parser("validate-model", help="check conditions A-D")
    sp.add_argument("spec", help="model spec YAML")
    sp.add_argument("--window", type=int, default=6)
    sp.set_defaults(fn=cmd_validate_model)

    sp = sub.add_parser("flux", help="flux curve and derivatives")
    sp.add_argument("config")
    sp.add_argument("--grid", type=int, default=21)
    sp.add_argument("--vmin", type=float, default=None)
    sp.add_argument("--vmax", type=float, default=None)
    add_common(sp)
    sp.set_defaults(fn=cmd_flux)

    sp = sub.add_parser("burgers", help="smooth reference solution")
    sp.add_argument("config")
    sp.add_argument("--grid", type=int, default=512)
    add_common(sp)
    sp.set_defaults(fn=cmd_burgers)

    sp = sub.add_parser("simulate", help="replica trajectories and profiles")
    sp.add_argument("config")
    add_common(sp)
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("compare", help="flagship: statistic vs Burgers")
    sp.add_argument("config")
    add_common(sp)
    sp.set_defaults(fn=cmd_compare)

    sp = sub.add_parser("sweep", help="Cartesian sweep over N and/or beta")
    sp.add_argument("config")
    add_common(sp)
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("gap", help="sector spectral gaps")
    sp.add_argument("spec", help="model spec YAML")
    sp.add_argument("--lmax", type=int, default=8)
    add_common(sp)
    sp.set_defaults(fn=cmd_gap)

    sp = sub.add_parser("ensembles", help="equivalence-of-ensembles decay")
    sp.add_argument("spec", help="model spec YAML")
    sp.add_argument("--density", type=float, default=0.5)
    sp.add_argument("--ls", default="2,3,4,5,6,7,8")
    sp.add_argument("--psi", choices=["flux", "z"], default="flux")
    add_common(sp)
    sp.set_defaults(fn=cmd_ensembles)

    sp = sub.add_parser("kurschak", help="exponential block-moment probe")
    sp.add_argument("--gamma", type=float, default=0.3)
    sp.add_argument("--ls", default="64,256,1024")
    sp.add_argument("--samples", type=int, default=1_000_000)
    sp.add_argument("--out", default="out")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_kurschak)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
