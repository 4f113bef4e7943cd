"""Writing run outputs: series CSV, JSON summary, snapshots and a hashed manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .. import __version__
from ..diagnostics import EnergyReport
from ..solver import RunResult

MANIFEST = "manifest.json"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def series_csv(series) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    cols = EnergyReport.columns()
    writer.writerow(cols)
    for rep in series:
        row = rep.as_row()
        writer.writerow([_cell(row[c]) for c in cols])
    return buf.getvalue()


def read_series_csv(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({k: (None if v == "" else float(v)) for k, v in row.items()})
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write(path: Path, data: str | bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def build_manifest(out: Path) -> dict:
    files = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != MANIFEST:
            rel = p.relative_to(out).as_posix()
            files[rel] = {"bytes": p.stat().st_size, "sha256": sha256(p)}
    return {"code_version": __version__, "files": files}


def persist(run: RunResult, out: str | Path, summary: dict | None = None,
            snapshot_format: str = "npy") -> dict:
    """Write ``series.csv``, ``summary.json``, optional snapshots and ``manifest.json``.

    Returns the manifest: every written file with its size and SHA-256.
    """
    out = Path(out)
    _write(out / "series.csv", series_csv(run.series))
    body = {
        "termination": run.termination,
        "t_end": run.t_end,
        "blowup_time_estimate": run.blowup_time_estimate,
        "steps": run.steps,
        "rejected_steps": run.rejected_steps,
        "boundary_max": run.boundary_max,
        "constraint_max": run.constraint_max,
        "message": run.message,
        "code_version": __version__,
    }
    body.update(summary or {})
    _write(out / "summary.json", json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")
    for t, s in sorted(run.snapshots.items()):
        stem = f"snapshots/t_{t:012.6f}"
        stack = np.stack([s.u, s.p, s.q])
        if snapshot_format == "csv":
            x_rows = stack.reshape(-1, stack.shape[-1]).T
            buf = io.StringIO()
            np.savetxt(buf, x_rows, delimiter=",", fmt="%.17g")
            _write(out / f"{stem}.csv", buf.getvalue())
        else:
            buf = io.BytesIO()
            np.save(buf, stack)
            _write(out / f"{stem}.npy", buf.getvalue())
    manifest = build_manifest(out)
    _write(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def write_table(path: str | Path, rows: list[dict]) -> None:
    """Small CSV table (sweep, convergence, scatter outputs)."""
    path = Path(path)
    cols = list(rows[0]) if rows else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow([_cell(r[c]) for c in cols])
    _write(path, buf.getvalue())


def write_json(path: str | Path, obj) -> None:
    _write(Path(path), json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
