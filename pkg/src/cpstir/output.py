"""Tabular output with a provenance header.

CSV files start with one comment line::

    # schema=<name>/v<version> build=<hash> seed=<seed>

followed by a header row and data rows sorted by the table's key columns.
JSON output carries the same three fields next to the rows.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from functools import lru_cache
from pathlib import Path

SCHEMA_VERSION = 1


@lru_cache(maxsize=None)
def build_hash() -> str:
    """Digest of the package sources; identical sources give identical output headers."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:12]


def _fmt(v):
    # repr round-trips floats exactly
    return repr(v) if isinstance(v, float) else v


def render(schema: str, columns: list[str], rows: list[dict], seed: int,
           fmt: str = "csv", sort_keys: list[str] | None = None) -> str:
    if fmt not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    missing = [c for r in rows for c in columns if c not in r]
    if missing:
        raise KeyError(f"rows are missing columns: {sorted(set(missing))}")
    if sort_keys:
        rows = sorted(rows, key=lambda r: tuple(r[k] for k in sort_keys))
    if fmt == "json":
        doc = {"schema": f"{schema}/v{SCHEMA_VERSION}", "build": build_hash(), "seed": seed,
               "rows": [{c: r[c] for c in columns} for r in rows]}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema={schema}/v{SCHEMA_VERSION} build={build_hash()} seed={seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_table(path, schema: str, columns: list[str], rows: list[dict], seed: int,
                fmt: str = "csv", sort_keys: list[str] | None = None) -> str:
    text = render(schema, columns, rows, seed, fmt, sort_keys)
    if path is None or str(path) == "-":
        return text
    Path(path).write_text(text)
    return text


def read_csv(path) -> tuple[dict, list[dict]]:
    """Parse a file written by :func:`write_table`; returns ``(header fields, rows)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("missing provenance header")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split())
    rows = list(csv.DictReader(lines[1:]))
    return meta, rows


def write_event_log(path, log: list, seed: int) -> None:
    """Event log of a coupled run: time, kind, address, site."""
    rows = []
    for i, (t, kind, a, x) in enumerate(log):
        addr = "" if a is None else ("o" if a == () else ".".join(map(str, a)))
        if kind == "ring":
            site = f"{x[0]}|{x[1]}"
        else:
            site = ",".join(map(str, x))
        rows.append({"seq": i, "time": t, "kind": kind, "address": addr, "site": site})
    write_table(path, "event-log", ["seq", "time", "kind", "address", "site"], rows, seed)
