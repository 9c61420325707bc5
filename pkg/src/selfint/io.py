"""CSV artifacts and run manifests.

CSV files are RFC 4180 (CRLF line endings, minimal quoting) with a header row.
Floats are written with 17 significant digits so they parse back to the same
double, which makes outputs byte-comparable across runs.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


@dataclass(frozen=True)
class Schema:
    name: str
    columns: tuple[tuple[str, str], ...]  # (column, type name)
    version: int = 1

    @property
    def names(self) -> list[str]:
        return [c for c, _ in self.columns]

    def describe(self) -> dict:
        return {"version": self.version, "columns": [list(c) for c in self.columns]}


def schema(name: str, *columns: tuple[str, str], version: int = 1) -> Schema:
    for col, kind in columns:
        if kind not in _TYPES:
            raise ValueError(f"column {col}: unknown type {kind!r}")
    return Schema(name, tuple(columns), version)


def format_value(value, kind: str) -> str:
    if kind == "float":
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    if kind == "int":
        if isinstance(value, float) and not value.is_integer():
            raise TypeError(f"{value!r} is not an integer")
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    text = str(value)
    if "\x00" in text:
        raise ValueError("NUL characters cannot be stored in a CSV field")
    return text


def parse_value(text: str, kind: str):
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "bool":
        if text not in ("true", "false"):
            raise ValueError(f"not a boolean: {text!r}")
        return text == "true"
    return text


def render_csv(rows: Iterable[Mapping], sch: Schema) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(sch.names)
    for i, row in enumerate(rows):
        if set(row) != set(sch.names):
            missing = set(sch.names) - set(row)
            extra = set(row) - set(sch.names)
            raise ValueError(f"row {i} does not match schema {sch.name}: missing {missing}, extra {extra}")
        writer.writerow([format_value(row[c], k) for c, k in sch.columns])
    return buf.getvalue()


def emit_csv(rows: Iterable[Mapping], sch: Schema, path) -> Path:
    path = Path(path)
    text = render_csv(rows, sch)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return path


def read_csv(path, sch: Schema) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != sch.names:
            raise ValueError(f"header {header} does not match schema {sch.names}")
        return [{c: parse_value(v, k) for (c, k), v in zip(sch.columns, rec)} for rec in reader]


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "selfint": __version__,
    }


def write_manifest(out_dir, config: Mapping, files: Sequence[tuple[Path, Schema]],
                   wall_time: float, status: str, extra: Mapping | None = None) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "config": dict(config),
        "seed": config.get("seed"),
        "argv": sys.argv,
        "versions": versions(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_time_seconds": wall_time,
        "status": status,
        "files": {
            p.name: {"schema": sch.name, **sch.describe(), "sha256": sha256_file(p)}
            for p, sch in files
        },
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path
