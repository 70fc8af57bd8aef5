"""Command line driver: one subcommand per experiment, each writing a run bundle.

Exit codes: 0 converged and all invariants hold, 2 solver failure,
3 invariant violation (e.g. causality), 1 usage or input errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bundle
from .noether import UnconvergedSolutionError, charge_series, refinement_balance
from .particle import ParticleConfig, convergence_study, particle_operators, solve_particle
from .sbp import Grid1D, build_sbp, regularize
from .solver import SolverError
from .spectral import null_space, pi_mode_overlap, spectrum
from .wave import CausalityError, WaveConfig, WaveOperators, solve_wave

log = logging.getLogger("actionibvp")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SOLVER = 2
EXIT_INVARIANT = 3

BRANCH_TOL = 1e-7
CHARGE_TOL = 1e-8
DEFAULT_STUDY_GRIDS = (16, 32, 64, 128)


def _load_json_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    # accept a bundle's config.json as well as a bare config
    return data.get("config", data)


def _check_keys(data: dict, cls) -> None:
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known - {"schema_version", "command", "study_grids"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")


# ---------------------------------------------------------------- spectrum


def cmd_spectrum(args) -> int:
    grid = Grid1D.from_span(args.n, 0.0, 1.0)
    pair = build_sbp(args.order, grid)
    if args.regularized:
        opr = regularize(pair, 0, args.target)
        matrix = opr.extended if args.unscaled else opr.dimensionless_extended()
    else:
        matrix = np.asarray(pair.d) if args.unscaled else grid.spacing * np.asarray(pair.d)

    rep = spectrum(matrix)
    ns = null_space(matrix)
    ev = rep.eigenvalues
    scale = np.max(np.abs(ev)) if ev.size else 1.0
    near_zero = int(np.sum(np.abs(ev) < args.zero_tol * max(scale, 1.0)))

    out = bundle.resolve_out_dir(args.out, "spectrum")
    bundle.write_csv(out / "spectrum.csv", ["re", "im"], [ev.real, ev.imag])
    if args.export_matrix:
        np.savetxt(out / "matrix.csv", matrix, fmt="%.17g", delimiter=",")
    config = {
        "order_tag": pair.order_tag,
        "n": args.n,
        "regularized": args.regularized,
        "target": args.target,
        "scaled": not args.unscaled,
    }
    bundle.write_json(out / "config.json", {"command": "spectrum", "config": config})
    bundle.write_json(
        out / "report.json",
        {
            "command": "spectrum",
            "n_eigenvalues": int(ev.size),
            "min_abs": rep.min_abs,
            "min_real_part": rep.min_real_part,
            "unit_count": rep.unit_count,
            "near_zero_count": near_zero,
            "zero_tolerance": args.zero_tol,
            "null_space": {
                "dim_right": ns.dim_right,
                "dim_left": ns.dim_left,
                "generalized_dim": ns.generalized_dim,
                "singular_values": ns.singular_values,
            },
        },
    )
    print(
        f"spectrum: {ev.size} eigenvalues, min|lambda|={rep.min_abs:.3e}, "
        f"near-zero={near_zero}, unit={rep.unit_count} -> {out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- particle


_PARTICLE_FLAGS = {
    "mass": "mass",
    "g": "g",
    "x_init": "x_init",
    "v_init": "v_init",
    "n_t": "n_t",
    "order": "order_tag",
    "tol": "grad_tolerance",
    "max_iter": "max_iterations",
    "jacobian": "jacobian_mode",
}


def _particle_config(args) -> tuple[ParticleConfig, list[int]]:
    data = _load_json_config(args.config)
    _check_keys(data, ParticleConfig)
    grids = list(data.pop("study_grids", DEFAULT_STUDY_GRIDS))
    data.pop("schema_version", None)
    data.pop("command", None)
    if "t_span" in data:
        data["t_span"] = tuple(data["t_span"])
    for flag, key in _PARTICLE_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    if args.t_span is not None:
        data["t_span"] = tuple(args.t_span)
    if args.regularized is not None:
        data["regularized"] = args.regularized
    if getattr(args, "grids", None):
        grids = list(args.grids)
    return ParticleConfig(**data), grids


def _pi_mode_diagnosis(cfg: ParticleConfig) -> dict:
    """Does the kinetic operator admit a pi-mode zero direction?"""
    h, a, _ = particle_operators(cfg)
    ns = null_space(a, weights=h)
    overlaps = [pi_mode_overlap(v) for v in ns.left_basis]
    return {
        "operator_nullity": ns.dim_right,
        "left_null_pi_overlap": max(overlaps) if overlaps else 0.0,
        "detected": bool(overlaps) and max(overlaps) >= 0.99,
    }


def _particle_payload(cfg: ParticleConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["t_span"] = list(cfg.t_span)
    return d


def cmd_particle(args) -> int:
    cfg, grids = _particle_config(args)
    out = bundle.resolve_out_dir(args.out, "particle")
    started = time.perf_counter()
    try:
        sol = solve_particle(cfg)
        study = None if args.no_study else convergence_study(cfg, grids)
    except SolverError as exc:
        bundle.write_json(
            out / "report.json",
            {"command": "particle", "status": "solver_failure", "error": str(exc)},
        )
        print(f"particle: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    elapsed = time.perf_counter() - started

    bundle.write_json(
        out / "config.json",
        {"command": "particle", "config": {**_particle_payload(cfg), "study_grids": grids}},
    )
    bundle.write_csv(
        out / "trajectory.csv", ["t", "x1", "x2", "x_analytic"], [sol.t, sol.x1, sol.x2, sol.analytic()]
    )
    pi = _pi_mode_diagnosis(cfg)
    mismatch = sol.branch_mismatch()
    invariants = {"converged": sol.report.converged, "branch_symmetry": mismatch <= BRANCH_TOL}
    report = {
        "command": "particle",
        "status": "ok" if all(invariants.values()) else "invariant_violation",
        "solver": sol.report.to_dict(),
        "max_error": sol.max_error(),
        "residual_pi_overlap": sol.pi_overlap(),
        "branch_mismatch": mismatch,
        "pi_mode_detected": pi["detected"],
        "pi_mode": pi,
        "exact_linear": cfg.g == 0.0 and sol.max_error() <= 1e-10 * (1.0 + abs(cfg.v_init)),
        "invariants": invariants,
        "timings": {"solve_and_study_s": elapsed},
    }
    if study is not None:
        report["convergence"] = study.to_dict()
        bundle.write_csv(
            out / "convergence.csv", ["n_t", "dt", "max_error"], [study.grids, study.spacings, study.errors]
        )
    bundle.write_json(out / "report.json", report)
    order = "n/a" if study is None or study.order is None else f"{study.order:.3f}"
    flag = " [pi-mode detected]" if pi["detected"] else ""
    print(f"particle: max error {sol.max_error():.3e}, order {order}{flag} -> {out}")
    return EXIT_OK if all(invariants.values()) else EXIT_INVARIANT


def cmd_converge(args) -> int:
    cfg, grids = _particle_config(args)
    out = bundle.resolve_out_dir(args.out, "converge")
    try:
        study = convergence_study(cfg, grids)
    except SolverError as exc:
        print(f"converge: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    bundle.write_json(
        out / "config.json",
        {"command": "converge", "config": {**_particle_payload(cfg), "study_grids": grids}},
    )
    bundle.write_csv(
        out / "convergence.csv", ["n_t", "dt", "max_error"], [study.grids, study.spacings, study.errors]
    )
    bundle.write_json(out / "report.json", {"command": "converge", "convergence": study.to_dict()})
    order = "degenerate" if study.order is None else f"{study.order:.3f}"
    print(f"converge: order {order} over {grids} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------- wave


def _wave_config(args) -> WaveConfig:
    data = _load_json_config(args.config)
    data.pop("schema_version", None)
    data.pop("command", None)
    overrides = {
        "n_tau": args.n_tau,
        "n_sigma": args.n_sigma,
        "tension": args.tension,
        "grad_tolerance": args.tol,
        "max_iterations": args.max_iter,
        "jacobian_mode": args.jacobian,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    return WaveConfig.from_dict(data)


def wave_invariants(sol, ops) -> tuple[dict, dict]:
    """Invariant checks and diagnostics recorded in a wave report."""
    mismatch = sol.branch_mismatch()
    series = charge_series(sol, sol.config)
    rate = sol.derivatives(ops)[0]
    balance = refinement_balance(sol, sol.config)
    k, j = np.unravel_index(np.argmin(rate), rate.shape)
    checks = {
        "converged": sol.report.converged,
        "branch_symmetry": max(mismatch.values()) <= BRANCH_TOL,
        "causality": bool(np.all(rate > 0)),
        "charge_conservation": series.max_abs_deviation <= CHARGE_TOL * abs(series.initial_value),
    }
    diagnostics = {
        "branch_mismatch": mismatch,
        "charge_initial": series.initial_value,
        "charge_max_abs_deviation": series.max_abs_deviation,
        "charge_max_rel_deviation": series.max_rel_deviation,
        "charge_endpoint_terms": list(series.endpoint_terms),
        "min_t_dot": float(rate[k, j]),
        "argmin_t_dot": [int(k), int(j)],
        "refinement_correlation": balance.correlation,
        "refinement_degenerate": balance.degenerate,
    }
    return checks, diagnostics


def write_charge_csv(path, series) -> None:
    k = np.arange(series.values.size)
    bundle.write_csv(path, ["k", "tau", "Q", "deviation"], [k, series.tau, series.values, series.deviation])


def cmd_wave(args) -> int:
    cfg = _wave_config(args)
    out = bundle.resolve_out_dir(args.out, "wave")
    ops = WaveOperators(cfg)
    started = time.perf_counter()
    try:
        sol = solve_wave(cfg)
    except CausalityError as exc:
        bundle.write_wave_bundle(out, exc.solution, ops)
        bundle.write_json(
            out / "report.json",
            {
                "command": "wave",
                "status": "invariant_violation",
                "error": str(exc),
                "solver": exc.report.to_dict(),
                "invariants": {"causality": False},
            },
        )
        print(f"wave: causality violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except SolverError as exc:
        payload = {"command": "wave", "status": "solver_failure", "error": str(exc)}
        if exc.report is not None:
            payload["solver"] = exc.report.to_dict()
        bundle.write_json(out / "report.json", payload)
        print(f"wave: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    elapsed = time.perf_counter() - started

    checks, diagnostics = wave_invariants(sol, ops)
    bundle.write_wave_bundle(out, sol, ops)
    write_charge_csv(out / "charge.csv", charge_series(sol, cfg))
    ok = all(checks.values())
    bundle.write_json(
        out / "report.json",
        {
            "command": "wave",
            "status": "ok" if ok else "invariant_violation",
            "solver": sol.report.to_dict(),
            "invariants": checks,
            "diagnostics": diagnostics,
            "timings": {"solve_s": elapsed},
        },
    )
    failed = [name for name, passed in checks.items() if not passed]
    state = "all invariants pass" if ok else f"FAILED: {', '.join(failed)}"
    print(
        f"wave {cfg.n_tau}x{cfg.n_sigma}: {sol.report.iterations} iterations, "
        f"charge rel. deviation {diagnostics['charge_max_rel_deviation']:.2e}, {state} -> {out}"
    )
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_noether(args) -> int:
    src = Path(args.bundle)
    sol = bundle.load_wave_bundle(src)
    out = bundle.resolve_out_dir(args.out, "noether") if args.out else src
    try:
        series = charge_series(sol, require_converged=not args.allow_unconverged)
    except UnconvergedSolutionError as exc:
        print(f"noether: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_charge_csv(out / "charge.csv", series)
    ok = series.max_abs_deviation <= CHARGE_TOL * abs(series.initial_value)
    print(f"noether: Q0={series.initial_value:.12g}, max rel. deviation {series.max_rel_deviation:.2e} -> {out}")
    return EXIT_OK if ok else EXIT_INVARIANT


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actionibvp",
        description="Action-level solvers for initial-boundary-value problems.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help=f"output directory (default ${bundle.OUT_ENV}/<command> or runs/<command>)")
        p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("spectrum", help="eigenvalues of an SBP derivative operator")
    common(p)
    p.add_argument("--order", default="121", help="121 or 424")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--regularized", action="store_true", help="extended regularized operator")
    p.add_argument("--target", type=float, default=0.0)
    p.add_argument("--unscaled", action="store_true", help="keep the 1/spacing prefactor")
    p.add_argument("--zero-tol", type=float, default=1e-6, help="relative threshold for near-zero eigenvalues")
    p.add_argument("--export-matrix", action="store_true", help="also write the dense matrix as CSV")
    p.set_defaults(func=cmd_spectrum)

    def particle_flags(p):
        common(p)
        p.add_argument("--mass", type=float)
        p.add_argument("--g", type=float)
        p.add_argument("--x-init", type=float)
        p.add_argument("--v-init", type=float)
        p.add_argument("--t-span", type=float, nargs=2, metavar=("T_I", "T_F"))
        p.add_argument("--n-t", type=int)
        p.add_argument("--order")
        p.add_argument("--regularize", dest="regularized", action="store_true", default=None)
        p.add_argument("--no-regularize", dest="regularized", action="store_false")
        p.add_argument("--tol", type=float, help="gradient tolerance")
        p.add_argument("--max-iter", type=int)
        p.add_argument("--jacobian", choices=("fd", "analytic"))
        p.add_argument("--grids", type=int, nargs="+", help="grid sizes for the order fit")

    p = sub.add_parser("particle", help="doubled point particle in a constant force")
    particle_flags(p)
    p.add_argument("--no-study", action="store_true", help="skip the convergence-order fit")
    p.set_defaults(func=cmd_particle)

    p = sub.add_parser("converge", help="convergence-order study of the particle solve")
    particle_flags(p)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("wave", help="scalar wave with a dynamical temporal map")
    common(p)
    p.add_argument("--n-tau", type=int)
    p.add_argument("--n-sigma", type=int)
    p.add_argument("--tension", "-T", type=float)
    p.add_argument("--tol", type=float, help="gradient tolerance")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--jacobian", choices=("fd", "analytic"))
    p.set_defaults(func=cmd_wave)

    p = sub.add_parser("noether", help="time-translation charge of a stored wave bundle")
    p.add_argument("bundle", help="wave bundle directory")
    p.add_argument("--out", help="output directory (default: the bundle itself)")
    p.add_argument("--allow-unconverged", action="store_true")
    p.set_defaults(func=cmd_noether)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
