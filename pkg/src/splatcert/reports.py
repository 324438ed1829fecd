"""Deterministic report rendering: 17-digit floats, hashes, CSV tables.

Every artifact written by the package goes through these helpers so that a
repeated run with the same configuration produces byte-identical files.
Floats are rendered with 17 significant digits, which is enough to
reconstruct the exact double on parse.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Iterable, Sequence


def format_float(x: float) -> str:
    if x != x:
        return "NaN"
    if x == float("inf"):
        return "Infinity"
    if x == float("-inf"):
        return "-Infinity"
    return format(float(x), ".17g")


def dumps_17g(obj: Any, indent: int = 2) -> str:
    """JSON text with every float rendered at 17 significant digits."""
    return _render(obj, indent, 0) + "\n"


def _render(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    close_pad = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{json.dumps(str(k))}: {_render(v, indent, level + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + close_pad + "}"
    if isinstance(obj, (list, tuple)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{pad}{_render(v, indent, level + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + close_pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, (int, str)) or obj is None:
        return json.dumps(obj)
    # numpy scalars and arrays
    if hasattr(obj, "item") and getattr(obj, "shape", None) == ():
        return _render(obj.item(), indent, level)
    if hasattr(obj, "tolist"):
        return _render(obj.tolist(), indent, level)
    raise TypeError(f"cannot serialise {type(obj)!r}")


def short_hash(values: Iterable[Any]) -> str:
    """12-hex-digit digest of a value list, stable across runs."""
    blob = "|".join(
        format_float(v) if isinstance(v, float) else str(v) for v in values
    ).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def file_hash(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """CSV with deterministic float formatting (no locale, no padding)."""
    lines = [",".join(header)]
    for row in rows:
        cells = [format_float(v) if isinstance(v, float) else str(v) for v in row]
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
