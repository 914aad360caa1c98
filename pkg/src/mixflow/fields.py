"""Field snapshots on disk: one CSV or JSON file per time level plus a manifest."""
from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import IoError

FORMATS = ("csv", "json")
MANIFEST = "manifest.json"


def _columns(n):
    return (["x"] + [f"rho_{k + 1}" for k in range(n)] + ["u"]
            + [f"h_{k + 1}" for k in range(n - 1)] + ["p"])


def _table(snap, j):
    n = snap["rho_k"].shape[-1]
    cols = [snap["x"]] + [snap["rho_k"][j, :, k] for k in range(n)] + [snap["u"][j]]
    cols += [snap["h"][j, :, k] for k in range(n - 1)] + [snap["p"][j]]
    return _columns(n), np.column_stack(cols)


def format_row(values) -> list:
    return ["%.17g" % v for v in values]


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(format_row(row))
    Path(path).write_text(buf.getvalue())


def write_fields(snapshots: dict, out_dir, fmt: str = "csv", config_hash: str | None = None,
                 diagnostics: dict | None = None, every: int = 1) -> dict:
    """Write every ``every``-th level of ``snapshots`` and a manifest.

    ``snapshots`` maps t (L,), x (M,), rho_k (L, M, n), u (L, M),
    h (L, M, n-1) and p (L, M).
    """
    if fmt not in FORMATS:
        raise IoError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = []
        t = np.asarray(snapshots["t"], dtype=float)
        levels = list(range(0, t.size, every))
        if levels[-1] != t.size - 1:
            levels.append(t.size - 1)
        for j in levels:
            header, data = _table(snapshots, j)
            name = f"snapshot_{j:05d}.{fmt}"
            if fmt == "csv":
                write_csv(out / name, header, data)
            else:
                payload = {"t": float(t[j]), "columns": {c: data[:, i].tolist() for i, c in enumerate(header)}}
                (out / name).write_text(json.dumps(payload))
            files.append({"file": name, "t": float(t[j]), "level": j})
        manifest = {
            "format": fmt,
            "files": files,
            "config_hash": config_hash,
            "diagnostics": diagnostics or {},
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        (out / MANIFEST).write_text(json.dumps(manifest, indent=2, default=float))
    except OSError as exc:
        raise IoError(f"cannot write fields to {out}: {exc}") from exc
    return manifest


def read_fields(out_dir) -> dict:
    """Read snapshots written by :func:`write_fields` back into arrays."""
    out = Path(out_dir)
    try:
        manifest = json.loads((out / MANIFEST).read_text())
        tables = []
        for entry in manifest["files"]:
            path = out / entry["file"]
            if manifest["format"] == "csv":
                with open(path, newline="") as fh:
                    rows = list(csv.reader(fh))
                header = rows[0]
                data = np.array([[float(v) for v in r] for r in rows[1:]])
            else:
                payload = json.loads(path.read_text())
                header = list(payload["columns"])
                data = np.column_stack([np.array(payload["columns"][c], dtype=float) for c in header])
            tables.append(data)
    except (OSError, KeyError, ValueError) as exc:
        raise IoError(f"cannot read fields from {out}: {exc}") from exc
    n = sum(1 for c in header if c.startswith("rho_"))
    stack = np.stack(tables)
    return {
        "t": np.array([e["t"] for e in manifest["files"]]),
        "x": stack[0, :, 0],
        "rho_k": stack[:, :, 1:1 + n],
        "u": stack[:, :, 1 + n],
        "h": stack[:, :, 2 + n:1 + 2 * n],
        "p": stack[:, :, 1 + 2 * n],
    }
