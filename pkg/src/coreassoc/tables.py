"""CSV/JSON serialization shared by the pipeline and the CLI."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError
from .linalg import AssociationMatrix

FLOAT_FORMAT = "%.17g"


def write_frame(df: pd.DataFrame, path):
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_assoc_csv(a: AssociationMatrix, path):
    ids = list(a.grid_ids) if a.grid_ids else [f"c{i}" for i in range(a.p)]
    df = pd.DataFrame(a.m, columns=ids)
    df.insert(0, "grid_id", ids)
    write_frame(df, path)


def read_assoc_csv(path, method: str = "pearson") -> AssociationMatrix:
    df = pd.read_csv(path, dtype={"grid_id": str})
    if df.columns[0] != "grid_id":
        raise DataError(f"{path}: first header field must be 'grid_id'")
    ids = [str(c) for c in df.columns[1:]]
    if list(df["grid_id"]) != ids:
        raise DataError(f"{path}: row and column grid ids differ")
    m = df.iloc[:, 1:].to_numpy(dtype=float)
    return AssociationMatrix(m, method, grid_ids=tuple(ids))


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
