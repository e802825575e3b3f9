"""Deterministic JSON artifacts and schema checks."""

from __future__ import annotations

import json
import math
from fractions import Fraction
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .metric import WeightedNet


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return _float(float(obj))
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float):
        return _float(obj)
    if isinstance(obj, (Fraction, Decimal)):
        return str(obj)
    return obj


def _float(v):
    # non-finite floats are not valid JSON
    if math.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")


def dumps(obj):
    """Canonical text: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(_plain(obj), sort_keys=True, indent=1, ensure_ascii=True, allow_nan=False) + "\n"


def dump(obj, path):
    Path(path).write_text(dumps(obj))
    return str(path)


def load(path, schema=None):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError("cannot parse JSON input", path=str(path), detail=str(exc)) from None
    if schema is not None:
        got = data.get("schema") if isinstance(data, dict) else None
        wanted = (schema,) if isinstance(schema, str) else tuple(schema)
        if got not in wanted:
            raise SchemaError("unexpected schema", path=str(path), expected=list(wanted), found=got)
    return data


def load_net(path):
    data = load(path, "regset.net/1")
    try:
        return WeightedNet.from_dict(data)
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError("malformed net file", path=str(path), detail=str(exc)) from None


def load_points(path):
    """Points from a net file or a ``regset.probe/1`` file."""
    data = load(path, ("regset.net/1", "regset.probe/1"))
    pts = np.asarray(data["points"], dtype=float)
    return pts.reshape(pts.shape[0], -1)


def correspondence_dict(src, dst, **extra):
    out = {"schema": "regset.correspondence/1", "source": np.asarray(src).tolist(),
           "target": np.asarray(dst).tolist()}
    out.update(extra)
    return out


def load_correspondence(path):
    data = load(path, "regset.correspondence/1")
    src = np.asarray(data["source"], dtype=float)
    dst = np.asarray(data["target"], dtype=float)
    if src.shape[0] != dst.shape[0]:
        raise SchemaError("source and target lists differ in length", path=str(path))
    return src.reshape(src.shape[0], -1), dst.reshape(dst.shape[0], -1)


def write_points_csv(points, path, header=None):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in pts:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return str(path)
