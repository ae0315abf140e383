"""Deterministic serialization: CSV snapshots, JSON reports, JSON configs.

Floats in snapshot files are rendered with 17 significant digits so a
write/read round trip reproduces every 64-bit value exactly. Report JSON
uses a fixed key order; identical reports serialize to identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from typing import Sequence, Union

from .analysis import ExperimentReport, StatLine
from .errors import BranchingOUError, ConfigurationError, SnapshotParseError
from .model import Bounded, Generation, Linear, ModelParams
from .simulate import StepperConfig

import numpy as np

__all__ = [
    "write_snapshot",
    "read_snapshot",
    "write_report",
    "load_config",
    "save_config",
]

_FLOAT_FMT = "%.17g"


def write_snapshot(trajectory: Sequence[Generation], path: Union[str, os.PathLike],
                   run_id: str = "run") -> None:
    """Write a trajectory as CSV, one row per particle per recorded time.

    Header: run_id,generation,t,particle_index,coord_0,...; rows are
    ordered by (generation, t, particle_index).
    """
    trajectory = list(trajectory)
    d = trajectory[0].d if trajectory else 1
    header = "run_id,generation,t,particle_index," + ",".join(
        f"coord_{k}" for k in range(d))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for g in sorted(trajectory, key=lambda g: (g.m, g.t)):
                tstr = _FLOAT_FMT % g.t
                for i in range(g.n):
                    coords = ",".join(_FLOAT_FMT % v for v in g.positions[i])
                    fh.write(f"{run_id},{g.m},{tstr},{i + 1},{coords}\n")
    except OSError as exc:
        raise BranchingOUError(f"cannot write snapshot to {path}: {exc}") from exc


def read_snapshot(path: Union[str, os.PathLike]) -> list[Generation]:
    """Inverse of :func:`write_snapshot`; raises on any malformed row with
    its line number."""
    groups: dict[tuple[int, float], list[tuple[int, list[float]]]] = {}
    order: list[tuple[int, float]] = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise BranchingOUError(f"cannot read snapshot from {path}: {exc}") from exc
    with fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        if cols[:4] != ["run_id", "generation", "t", "particle_index"]:
            raise SnapshotParseError(f"unexpected header {header!r}", 1)
        d = len(cols) - 4
        if d < 1 or cols[4:] != [f"coord_{k}" for k in range(d)]:
            raise SnapshotParseError("malformed coordinate columns", 1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4 + d:
                raise SnapshotParseError(
                    f"expected {4 + d} fields, got {len(parts)}", lineno)
            try:
                m = int(parts[1])
                t = float(parts[2])
                idx = int(parts[3])
                coords = [float(v) for v in parts[4:]]
            except ValueError as exc:
                raise SnapshotParseError(str(exc), lineno) from None
            if not all(math.isfinite(c) for c in coords):
                raise SnapshotParseError("non-finite coordinate", lineno)
            key = (m, t)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append((idx, coords))
    trajectory = []
    for (m, t) in order:
        rows = sorted(groups[(m, t)])
        positions = np.array([c for _, c in rows], dtype=float)
        trajectory.append(Generation(m, t, positions))
    return trajectory


def _stat_dict(s: StatLine) -> dict:
    opt = lambda v: None if v is None else float(v)
    return {"name": s.name, "observed": float(s.observed),
            "theoretical": opt(s.theoretical), "se": opt(s.se), "z": opt(s.z),
            "pass": bool(s.passed)}


def write_report(report: ExperimentReport, path: Union[str, os.PathLike]) -> None:
    """Serialize an experiment report with a fixed key order."""
    doc = {
        "experiment": report.experiment,
        "params": report.params,
        "replicates": report.replicates,
        "statistics": [_stat_dict(s) for s in report.statistics],
        "runtime_seconds": report.runtime_seconds,
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=False)
            fh.write("\n")
    except OSError as exc:
        raise BranchingOUError(f"cannot write report to {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def save_config(params: ModelParams, cfg: StepperConfig,
                path: Union[str, os.PathLike]) -> None:
    doc = {
        "d": params.d, "b": params.b, "gamma": params.gamma,
        "horizon_m": params.horizon_m, "seed": params.seed,
        "mode": cfg.mode, "h": cfg.h,
    }
    if params.start is not None:
        doc["start"] = list(params.start)
    if isinstance(params.drift_mode, Bounded):
        doc["drift_mode"] = {"bounded": {
            "lower": params.drift_mode.lower,
            "upper": params.drift_mode.upper,
            "fn_id": params.drift_mode.fn_id}}
    else:
        doc["drift_mode"] = "linear"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_config(path: Union[str, os.PathLike]) -> tuple[ModelParams, StepperConfig]:
    """Read a JSON config whose keys mirror ModelParams and StepperConfig."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise BranchingOUError(f"cannot read config from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    mode_doc = doc.get("drift_mode", "linear")
    if mode_doc == "linear":
        drift_mode = Linear()
    elif isinstance(mode_doc, dict) and "bounded" in mode_doc:
        b = mode_doc["bounded"]
        drift_mode = Bounded(float(b["lower"]), float(b["upper"]), str(b["fn_id"]))
    else:
        raise ConfigurationError(f"unknown drift_mode entry: {mode_doc!r}")
    params = ModelParams(
        d=int(doc.get("d", 1)),
        b=float(doc.get("b", 0.0)),
        gamma=float(doc.get("gamma", 0.0)),
        horizon_m=int(doc.get("horizon_m", 0)),
        drift_mode=drift_mode,
        seed=int(doc.get("seed", 0)),
        start=tuple(doc["start"]) if "start" in doc else None,
    )
    cfg = StepperConfig(mode=str(doc.get("mode", "exact")),
                        h=float(doc.get("h", 2.0**-8)))
    return params, cfg
