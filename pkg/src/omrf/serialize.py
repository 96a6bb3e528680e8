"""CSV/JSON file formats for datasets, chains, simulated data and reports.

Every writer goes through :func:`atomic_write` (temporary file + rename) so an
interrupted run never leaves a truncated output behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .estimate import GraphStructure
from .exceptions import ValidationError
from .model import Dataset, ModelSpec
from .samplers import Chain


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serialisable")


def write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _matrix_csv(header, rows, fmt) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_dataset(path, data: Dataset) -> Path:
    header = [f"x{i}" for i in range(data.p)]
    return atomic_write(path, _matrix_csv(header, data.values.tolist(), str))


def read_dataset(path, m: int | None = None) -> Dataset:
    """Read an integer CSV with a header row; ``m`` defaults to the largest observed code."""
    try:
        values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise ValidationError(f"{path}: {exc}") from exc
    if values.size == 0:
        raise ValidationError(f"{path}: no data rows")
    if m is None:
        m = max(1, int(np.nanmax(values)))
    return Dataset(values, ModelSpec(values.shape[1], m))


def write_structure(path, structure: GraphStructure) -> Path:
    return atomic_write(path, _matrix_csv(["i", "j"], structure.sorted_edges(), str))


def read_structure(path, p: int) -> GraphStructure:
    edges = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.int64)
    return GraphStructure(p, [tuple(e) for e in edges.reshape(-1, 2)])


def write_chain(path, chain: Chain, names, extra: dict | None = None) -> tuple[Path, Path]:
    """Retained draws as CSV (one column per parameter) plus a JSON sidecar."""
    path = Path(path)
    csv_path = atomic_write(path, _matrix_csv(list(names), chain.retained.tolist(), repr))
    sidecar = {
        "method": chain.method,
        "burn_in": chain.burn_in,
        "iterations": int(chain.draws.shape[0]),
        "acceptance_rate": chain.acceptance_rate,
        "wall_time_seconds": chain.wall_time_seconds,
        "sigma2": {
            "initial": float(chain.sigma2_trace[0]),
            "final": float(chain.sigma2_trace[-1]),
            "min": float(chain.sigma2_trace.min()),
            "max": float(chain.sigma2_trace.max()),
        },
        "meta": chain.meta,
        **(extra or {}),
    }
    json_path = write_json(path.with_suffix(".json"), sidecar)
    return csv_path, json_path


def read_chain(path) -> tuple[Chain, list[str], dict]:
    """Inverse of :func:`write_chain`; the chain holds retained draws only."""
    path = Path(path)
    with open(path) as fh:
        names = next(csv.reader(fh))
    draws = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side_path = path.with_suffix(".json")
    side = read_json(side_path) if side_path.exists() else {}
    s = draws.shape[0]
    # per-iteration acceptances are not stored; rebuild a trace with the recorded rate
    rate = float(side.get("acceptance_rate", 0.0))
    accept = np.arange(s) < round(rate * s)
    sigma2 = np.full(s, side.get("sigma2", {}).get("final", np.nan))
    chain = Chain(draws, accept, sigma2, float(side.get("wall_time_seconds", np.nan)),
                  side.get("method", path.stem), 0, meta=side.get("meta", {}))
    return chain, names, side


def write_simulated(directory, sim, stem: str) -> tuple[Path, Path]:
    directory = Path(directory)
    data_path = write_dataset(directory / f"{stem}.csv", sim.data)
    spec = sim.data.spec
    prov = {
        "p": spec.p,
        "m": spec.m,
        "true_theta": dict(zip(spec.names(), sim.true_theta.tolist())),
        "edges": [list(e) for e in sim.structure.sorted_edges()],
        **sim.provenance,
    }
    return data_path, write_json(directory / f"{stem}.json", prov)
