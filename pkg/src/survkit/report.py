"""Plain-text tables shaped like the published ones, plus JSON helpers."""

from __future__ import annotations

import json
import math

import numpy as np

P_FLOOR = 2e-16


def fmt_num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def fmt_p(p) -> str:
    if p is None or math.isnan(p):
        return "-"
    return f"<{P_FLOOR:.0e}" if p < P_FLOOR else f"{p:.6g}"


def render(header: list[list[str]], rows: list[list[str]], title: str | None = None) -> str:
    """Left-aligned first column, right-aligned others; header may span several lines."""
    width = max(len(r) for r in header + rows)
    grid = [list(r) + [""] * (width - len(r)) for r in header + rows]
    widths = [max(len(str(r[j])) for r in grid) for j in range(width)]
    lines = []
    if title:
        lines.append(title)
    rule = "  ".join("-" * w for w in widths)

    def line(r):
        cells = [str(r[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(r[1:], widths[1:])]
        return "  ".join(cells).rstrip()

    lines.append(rule)
    lines += [line(r) for r in grid[:len(header)]]
    lines.append(rule)
    lines += [line(r) for r in grid[len(header):]]
    lines.append(rule)
    return "\n".join(lines) + "\n"


def clean(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=2, allow_nan=False) + "\n"
