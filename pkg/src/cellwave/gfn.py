"""Reading and writing grid functions as a JSON manifest plus raw float64 samples."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import CellwaveError
from .grid import GridFunction, grid_dims


def write_gfn(f: GridFunction, manifest_path: str | Path, data_name: str | None = None) -> Path:
    manifest_path = Path(manifest_path)
    if data_name is None:
        data_name = manifest_path.with_suffix(".f64").name
    data_path = manifest_path.parent / data_name
    np.ascontiguousarray(f.values, dtype="<f8").tofile(data_path)
    manifest = {
        "n": f.n,
        "bbox": [list(f.lower), list(f.upper)],
        "J": f.J,
        "dims": list(f.dims),
        "data": data_name,
    }
    manifest_path.write_text(json.dumps(manifest, sort_keys=True), encoding="utf-8")
    return manifest_path


def read_gfn(manifest_path: str | Path) -> GridFunction:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        n = int(manifest["n"])
        lower, upper = manifest["bbox"]
        J = int(manifest["J"])
        dims = [int(d) for d in manifest["dims"]]
        data_name = manifest["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CellwaveError(f"malformed GFN manifest: {exc}") from exc
    if len(lower) != n or len(upper) != n or len(dims) != n:
        raise CellwaveError("GFN manifest dimension mismatch")
    if tuple(dims) != grid_dims(lower, upper, J):
        raise CellwaveError("GFN dims disagree with bbox and J")
    raw = np.fromfile(manifest_path.parent / data_name, dtype="<f8")
    expected = int(np.prod(dims, dtype=np.int64))
    if raw.size != expected:
        raise CellwaveError(f"GFN sample count {raw.size} != {expected}")
    return GridFunction(lower, upper, J, raw.reshape(dims))
