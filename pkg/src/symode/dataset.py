"""Dataset persistence: a manifest plus raw little-endian float arrays.

A dataset directory contains ``manifest.json`` (system, grid, times, seeds,
config echo) and, per trajectory, ``states_XXXX.f64`` / ``params_XXXX.f64``
raw arrays of little-endian 64-bit floats, each with a ``.shape`` sidecar
listing the dimensions.  Round trips are bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .spectral import Grid
from .systems import Dataset, SystemSpec, Trajectory

MANIFEST_NAME = "manifest.json"
FORMAT_NAME = "symode-dataset"
FORMAT_VERSION = 1


def write_array(path: Path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    path.write_bytes(arr.tobytes())
    path.with_suffix(path.suffix + ".shape").write_text(
        " ".join(str(n) for n in arr.shape) + "\n"
    )


def read_array(path: Path) -> np.ndarray:
    shape_text = path.with_suffix(path.suffix + ".shape").read_text().strip()
    shape = tuple(int(tok) for tok in shape_text.split()) if shape_text else ()
    data = np.frombuffer(path.read_bytes(), dtype="<f8")
    expected = int(np.prod(shape)) if shape else data.size
    if data.size != expected:
        raise ValueError(f"{path}: {data.size} values do not match shape {shape}")
    return data.reshape(shape).astype(float)


def _spec_to_dict(spec: SystemSpec) -> dict:
    return dataclasses.asdict(spec)


def _spec_from_dict(d: dict) -> SystemSpec:
    d = dict(d)
    d["t_span"] = tuple(d["t_span"])
    d["lengths"] = tuple(d["lengths"])
    return SystemSpec(**d)


def save_dataset(ds: Dataset, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "system": _spec_to_dict(ds.spec),
        "grid": {"shape": list(ds.grid.shape), "lengths": list(ds.grid.lengths)},
        "times": [float(t) for t in ds.times],
        "param_times": [float(t) for t in ds.trajectories[0].param_times],
        "n_trajectories": len(ds.trajectories),
        "meta": ds.meta,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for i, tr in enumerate(ds.trajectories):
        write_array(directory / f"states_{i:04d}.f64", tr.states)
        write_array(directory / f"params_{i:04d}.f64", tr.param_knots)


def load_dataset(directory: str | Path) -> Dataset:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST_NAME).read_text())
    if manifest.get("format") != FORMAT_NAME:
        raise ValueError(f"{directory}: not a {FORMAT_NAME} directory")
    spec = _spec_from_dict(manifest["system"])
    grid = Grid(
        shape=tuple(manifest["grid"]["shape"]), lengths=tuple(manifest["grid"]["lengths"])
    )
    times = np.array(manifest["times"], dtype=float)
    param_times = np.array(manifest["param_times"], dtype=float)
    trajectories = []
    for i in range(manifest["n_trajectories"]):
        states = read_array(directory / f"states_{i:04d}.f64")
        knots = read_array(directory / f"params_{i:04d}.f64")
        trajectories.append(
            Trajectory(times=times.copy(), states=states, param_times=param_times.copy(), param_knots=knots)
        )
    return Dataset(spec=spec, grid=grid, trajectories=trajectories, meta=manifest.get("meta", {}))
