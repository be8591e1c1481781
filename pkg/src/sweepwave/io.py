"""File formats: CSV tables, JSON reports and SVG line charts.

CSV files use ``,`` delimiters, LF line endings, UTF-8 and a header row.
Floats are written with ``repr`` (shortest string that round-trips).
"""
from __future__ import annotations

import bisect
import csv
import json
import math
import os
from importlib import metadata

from .errors import InvalidParams, OutOfHorizon
from .limit import BIRTH, PiecewisePath, birth_times, init_state
from .params import ModelParams, lambda_growth

OUT_DIR_ENV = "SWEEPWAVE_OUT"


def version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# limit paths -----------------------------------------------------------

LIMIT_HEADER = ["event_index", "s_n", "kind", "new_dominant_or_new_type"]


def limit_path_rows(path: PiecewisePath) -> tuple:
    """Header and rows: one row per wave event with the levels just after it."""
    width = max((len(s.y) for s in path.snapshots[1:]), default=0)
    header = LIMIT_HEADER + [f"y_{j}" for j in range(width)]
    rows = []
    for ev, snap in zip(path.events, path.snapshots[1:]):
        ys = list(snap.y) + [0.0] * (width - len(snap.y))
        rows.append([ev.index + 1, ev.time, ev.kind, ev.label] + ys)
    return header, rows


def write_limit_csv(path: PiecewisePath, filename) -> None:
    header, rows = limit_path_rows(path)
    _write_rows(filename, header, rows)


def write_birth_times_csv(path: PiecewisePath, filename) -> None:
    """Rows ``k, b_k, gap_k`` for every type born during the run."""
    rows = [(b.k, b.b, b.gap) for b in birth_times(path) if b.b > 0]
    _write_rows(filename, ["k", "b_k", "gap_k"], rows)


class CsvLimitPath:
    """Limit path rebuilt from its CSV export and the model parameters.

    Waves are linear with slopes ``lambda_{j-m}/gamma`` (clamped at zero)
    from the levels recorded at each event, which reproduces
    :func:`sweepwave.limit.eval_path` exactly.
    """

    def __init__(self, filename, params: ModelParams):
        self.params = params
        first = init_state(params)
        starts = [0.0]
        levels = [list(first.y)]
        dominant = [0]
        with open(filename, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:4] != LIMIT_HEADER:
                raise InvalidParams(f"unexpected header {header[:4]}")
            for row in reader:
                s = float(row[1])
                ys = [float(v) for v in row[4:]]
                m = int(row[3]) if row[2] != BIRTH else dominant[-1]
                starts.append(s)
                levels.append(ys)
                dominant.append(m)
        self.starts = starts
        self.levels = levels
        self.dominant = dominant
        self.end_time = starts[-1]

    def __call__(self, j: int, t: float) -> float:
        if not 0 <= t <= self.end_time:
            raise OutOfHorizon(f"t={t} outside [0, {self.end_time}]")
        i = bisect.bisect_right(self.starts, t) - 1
        ys = self.levels[i]
        v0 = ys[j] if j < len(ys) else 0.0
        if i == len(self.starts) - 1:
            return v0
        k = max(jj for jj, v in enumerate(ys) if v > 0)
        k_star = k + 1 if ys[k] == 1.0 else k
        if j > k_star or (v0 == 0.0 and j != k_star):
            return 0.0
        p = self.params
        slope = lambda_growth(p, j - self.dominant[i]) / p.gamma
        return max(v0 + slope * (t - self.starts[i]), 0.0)


# trajectories ----------------------------------------------------------

def write_trajectory_csv(traj, filename, max_types: int = 8) -> None:
    """``t, N, counts`` (quoted ``type:count`` pairs) and ``x_0..x_{max_types-1}``."""
    header = ["t", "N", "counts"] + [f"x_{j}" for j in range(max_types)]
    with open(filename, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for s in traj.samples:
            sparse = " ".join(f"{j}:{c}" for j, c in sorted(s.counts.items()))
            cols = [fmt(s.counts.get(j, 0)) for j in range(max_types)]
            fh.write(",".join([fmt(float(s.t)), fmt(s.N), f'"{sparse}"'] + cols) + "\n")


def read_trajectory_csv(filename) -> list:
    """Return ``[(t, N, {type: count}), ...]``."""
    out = []
    with open(filename, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            counts = {}
            for pair in row[2].split():
                j, c = pair.split(":")
                counts[int(j)] = int(c)
            out.append((float(row[0]), int(row[1]), counts))
    return out


def write_ensemble_csv(summaries, filename, types) -> None:
    header = ["replicate", "status", "event_count", "final_t"] + [f"T_{k}" for k in types]
    rows = []
    for s in summaries:
        rows.append([s.replicate, s.status, s.event_count, s.final_t]
                    + [s.first_appearance.get(k) for k in types])
    _write_rows(filename, header, rows)


def write_snapshot_csv(times, snaps, filename) -> None:
    rows = [(t, j, p) for t, snap in zip(times, snaps) for j, p in snap.items()]
    _write_rows(filename, ["t", "type", "probability"], rows)


# reports ---------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


def write_report(filename, command: str, params: dict | None, seed, payload, config=None) -> dict:
    report = {
        "params": params,
        "seed": seed,
        "version": version(),
        "command": command,
        "payload": payload,
    }
    if config is not None:
        report["config"] = config
    report = _jsonable(report)
    with open(filename, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=False)
        fh.write("\n")
    return report


# SVG -------------------------------------------------------------------

_COLOURS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def write_svg(series: dict, filename, width: int = 640, height: int = 400) -> None:
    """One polyline per entry of ``series`` (``name -> (t array, y array)``)."""
    pad = 30
    xs = [x for t, _ in series.values() for x in t]
    ys = [y for _, v in series.values() for y in v]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = 0.0, (max(ys) if ys else 1.0)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    for i, (name, (t, v)) in enumerate(series.items()):
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, v))
        colour = _COLOURS[i % len(_COLOURS)]
        parts.append(f'<polyline fill="none" stroke="{colour}" points="{pts}"><title>{name}</title></polyline>')
    parts.append("</svg>")
    with open(filename, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def limit_series(path: PiecewisePath) -> dict:
    """Breakpoints of every ``y_j`` as ``{"y_j": (t, y)}`` for plotting."""
    times = sorted({0.0, path.end_time, *path.event_times,
                    *(s[0] for segs in path.segments.values() for s in segs)})
    times = [t for t in times if t <= path.end_time]
    return {f"y_{j}": (times, [path(j, t) for t in times]) for j in sorted(path.segments)}


def output_dir(flag: str | None) -> str:
    d = flag or os.environ.get(OUT_DIR_ENV) or "."
    os.makedirs(d, exist_ok=True)
    if not os.access(d, os.W_OK):
        raise PermissionError(f"output directory {d!r} is not writable")
    return d
