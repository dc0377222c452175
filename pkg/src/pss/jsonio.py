"""Deterministic JSON output with floats at 17 significant digits.

17 digits uniquely identify a float64, so load(dump(x)) is bit-exact and two
dumps of equal objects are byte-identical. The stdlib encoder uses shortest
repr for floats, which round-trips in Python but is not pinned across
languages; this writer fixes the byte format instead.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite value in serialized output: {x!r}")
    s = f"{x:.17g}"
    if "e" not in s and "E" not in s and "." not in s:
        s += ".0"  # keep float-typed on reload
    return s


def dumps(value, sort_keys: bool = False) -> str:
    out: list[str] = []
    _write(value, out, sort_keys)
    return "".join(out)


def _write(v, out: list[str], sort_keys: bool) -> None:
    if v is None:
        out.append("null")
    elif isinstance(v, (bool, np.bool_)):
        out.append("true" if v else "false")
    elif isinstance(v, (int, np.integer)):
        out.append(str(int(v)))
    elif isinstance(v, (float, np.floating)):
        out.append(format_float(float(v)))
    elif isinstance(v, str):
        out.append(json.dumps(v, ensure_ascii=False))
    elif isinstance(v, np.ndarray):
        _write(v.tolist(), out, sort_keys)
    elif isinstance(v, (list, tuple)):
        out.append("[")
        for i, item in enumerate(v):
            if i:
                out.append(",")
            _write(item, out, sort_keys)
        out.append("]")
    elif isinstance(v, dict):
        out.append("{")
        keys = sorted(v) if sort_keys else list(v)
        for i, k in enumerate(keys):
            if i:
                out.append(",")
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {type(k).__name__}")
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(":")
            _write(v[k], out, sort_keys)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(v).__name__}")


def canonical_hash(value) -> str:
    """sha256 of the canonical (sorted-key) serialization."""
    return hashlib.sha256(dumps(value, sort_keys=True).encode("utf-8")).hexdigest()
