"""Run bundles: a directory holding the config snapshot, CSV results and a JSON report."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .solver import SolverReport
from .wave import MULTIPLIER_GROUPS, FieldSolution, WaveConfig, WaveOperators

SCHEMA_VERSION = 1
OUT_ENV = "ACTIONIBVP_OUT"

__all__ = [
    "SCHEMA_VERSION",
    "OUT_ENV",
    "resolve_out_dir",
    "write_csv",
    "read_csv",
    "write_json",
    "read_json",
    "write_wave_bundle",
    "load_wave_bundle",
]


def resolve_out_dir(cli_value, command: str) -> Path:
    """``--out`` wins, then ``$ACTIONIBVP_OUT/<command>``, then ``runs/<command>``."""
    if cli_value:
        path = Path(cli_value)
    elif os.environ.get(OUT_ENV):
        path = Path(os.environ[OUT_ENV]) / command
    else:
        path = Path("runs") / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, header: Sequence[str], columns: Sequence[np.ndarray]) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    body = {"schema_version": SCHEMA_VERSION, **payload}
    with open(path, "w") as fh:
        json.dump(_jsonable(body), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_wave_bundle(out: Path, sol: FieldSolution, ops: WaveOperators | None = None) -> None:
    """Config, fields and multipliers; enough to rebuild the solution exactly."""
    cfg = sol.config
    ops = ops or WaveOperators(cfg)
    write_json(out / "config.json", {"command": "wave", "config": cfg.to_dict()})
    nt, ns = cfg.shape
    kk, jj = np.meshgrid(np.arange(nt), np.arange(ns), indexing="ij")
    tau, sig = np.meshgrid(cfg.grid_tau.points, cfg.grid_sigma.points, indexing="ij")
    t_dot = sol.derivatives(ops)[0]
    write_csv(
        out / "fields.csv",
        ["k", "j", "tau", "sigma", "phi1", "phi2", "t1", "t2", "t_dot"],
        [kk.ravel(), jj.ravel(), tau.ravel(), sig.ravel(), sol.phi1, sol.phi2,
         sol.tmap1, sol.tmap2, t_dot.ravel()],
    )
    names, index, values = [], [], []
    for gi, name in enumerate(MULTIPLIER_GROUPS):
        v = sol.multipliers[name]
        names.append(np.full(v.size, gi))
        index.append(np.arange(v.size))
        values.append(v)
    write_csv(
        out / "multipliers.csv",
        ["group", "index", "value"],
        [np.concatenate(names), np.concatenate(index), np.concatenate(values)],
    )


def load_wave_bundle(path) -> FieldSolution:
    path = Path(path)
    cfg = WaveConfig.from_dict(read_json(path / "config.json")["config"])
    report_data = read_json(path / "report.json")["solver"]
    report = SolverReport(
        converged=bool(report_data["converged"]),
        iterations=int(report_data["iterations"]),
        final_grad_norm=float(report_data["final_grad_norm"]),
        residual_history=[float(v) for v in report_data["residual_history"]],
        message=report_data.get("message", ""),
    )
    header, data = read_csv(path / "fields.csv")
    col = {name: data[:, i] for i, name in enumerate(header)}
    nt, ns = cfg.shape
    if data.shape[0] != nt * ns:
        raise ValueError(f"fields.csv has {data.shape[0]} rows, expected {nt * ns}")
    order = np.lexsort((col["j"], col["k"]))
    _, mult = read_csv(path / "multipliers.csv")
    multipliers = {}
    for gi, name in enumerate(MULTIPLIER_GROUPS):
        rows = mult[mult[:, 0] == gi]
        multipliers[name] = rows[np.argsort(rows[:, 1]), 2]
    return FieldSolution(
        phi1=col["phi1"][order],
        phi2=col["phi2"][order],
        tmap1=col["t1"][order],
        tmap2=col["t2"][order],
        multipliers=multipliers,
        report=report,
        config=cfg,
    )
