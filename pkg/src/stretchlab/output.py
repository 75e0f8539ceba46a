"""Deterministic CSV, JSON and SVG writers."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = {
    "blowup_scan": ("r", "sup_B", "envelope", "skipped"),
    "line": ("snapshot_t", "vertex_index", "x", "y", "z"),
    "ensemble": ("replicate", "seed", "metric"),
    "trajectories": ("point", "t", "x", "y", "z"),
    "reconstruct": ("x", "y", "z", "Bx", "By", "Bz", "skipped", "exact_Bx", "exact_By", "exact_Bz"),
    "weakcheck": ("replicate", "seed", "residual"),
}

VIEWBOX = (-1.5, 1.5)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def fmt(x) -> str:
    """Shortest round-trip text for numbers; keeps CSV bytes reproducible."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.write_bytes(csv_text(columns, rows).encode())
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def write_json(path, record) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True) + "\n")
    return path


def render_svg(geometry, style=None) -> str:
    """Standalone SVG of 2D polylines (x, y taken from the first two columns).

    ``geometry`` is a sequence of (k, >=2) arrays.  ``style`` may set
    ``colors`` (cycled per polyline), ``stroke_width`` and ``title``.
    """
    geometry = [np.asarray(g, dtype=float) for g in geometry]
    if not geometry or all(len(g) == 0 for g in geometry):
        raise ValueError("nothing to draw")
    style = dict(style or {})
    colors = style.get("colors", PALETTE)
    width = style.get("stroke_width", 0.006)
    lo, hi = VIEWBOX
    size = hi - lo
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{lo:g} {lo:g} {size:g} {size:g}" width="600" height="600">',
    ]
    if style.get("title"):
        out.append(f"<title>{style['title']}</title>")
    out.append(f'<rect x="{lo:g}" y="{lo:g}" width="{size:g}" height="{size:g}" fill="white"/>')
    out.append(f'<g fill="none" stroke-width="{width:g}" stroke-linejoin="round">')
    for i, g in enumerate(geometry):
        # screen y points down; flip so the plot reads with y up
        pts = " ".join(f"{x:.5f},{-y:.5f}" for x, y in g[:, :2])
        out.append(f'<polyline stroke="{colors[i % len(colors)]}" points="{pts}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(geometry, path, style=None) -> Path:
    path = Path(path)
    path.write_bytes(render_svg(geometry, style).encode())
    return path
