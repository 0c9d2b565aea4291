"""CSV/JSON serialisation and a dependency-free SVG polyline plotter."""
from __future__ import annotations

import csv
import json
import xml.etree.ElementTree as ET
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .fluid import FluidSolution, eval_solution
from .lab import ConvergenceReport, DeviationSample
from .simulate import Trajectory

__all__ = [
    "fmt",
    "dump_rows",
    "trajectory_rows",
    "write_trajectory_csv",
    "fluid_rows",
    "write_fluid_csv",
    "read_csv_columns",
    "write_samples_csv",
    "report_json",
    "write_report",
    "read_report",
    "svg_plot",
    "step_series",
]


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def dump_rows(fh, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    writer = csv.writer(fh)
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])


def _write_rows(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        dump_rows(fh, header, rows)


def _with_extra(header, times, values, extra):
    extra = extra or {}
    header = list(header) + list(extra)
    cols = [times] + [values[:, i] for i in range(values.shape[1])] + [np.asarray(v) for v in extra.values()]
    return header, list(zip(*cols))


def trajectory_rows(traj: Trajectory, extra: Optional[Mapping[str, np.ndarray]] = None):
    """Header and rows: one per jump time plus a final row at the horizon.

    ``extra`` maps column names to per-state arrays (aligned with ``traj.states``).
    """
    times = traj.jump_times
    states = traj.states
    extra = dict(extra or {})
    if traj.horizon > times[-1]:
        times = np.append(times, traj.horizon)
        states = np.vstack([states, states[-1:]])
        extra = {k: np.append(v, np.asarray(v)[-1:]) for k, v in extra.items()}
    header = ["t"] + [f"x{i}" for i in range(traj.dim)]
    return _with_extra(header, times, states, extra)


def write_trajectory_csv(path: str, traj: Trajectory, extra=None) -> None:
    _write_rows(path, *trajectory_rows(traj, extra))


def fluid_rows(sol: FluidSolution, derived=None):
    """Grid rows up to the end of the solution (the exit time if it exited).

    ``derived(states) -> {name: array}`` adds model-specific columns.
    """
    t_end = sol.t_end
    times = sol.grid_times[sol.grid_times <= t_end]
    if times[-1] < t_end:
        times = np.append(times, t_end)
    states = eval_solution(sol, times)
    header = ["t"] + [f"y{i}" for i in range(sol.dim)]
    return _with_extra(header, times, states, derived(states) if derived else None)


def write_fluid_csv(path: str, sol: FluidSolution, derived=None) -> None:
    _write_rows(path, *fluid_rows(sol, derived))


def read_csv_columns(path: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_samples_csv(path: str, samples: Sequence[DeviationSample]) -> None:
    rows = (
        (s.N, s.replicate, s.sup_dev, "" if s.sigma_N is None else s.sigma_N, int(s.exited))
        for s in samples
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "replicate", "sup_dev", "sigma_N", "exited"])
        for row in rows:
            writer.writerow([v if v == "" else fmt(v) for v in row])


def report_json(report: ConvergenceReport) -> str:
    # repr-based float output round-trips exactly
    return json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"


def write_report(path: str, report: ConvergenceReport) -> None:
    with open(path, "w") as fh:
        fh.write(report_json(report))


def read_report(path: str) -> ConvergenceReport:
    with open(path) as fh:
        return ConvergenceReport.from_dict(json.load(fh))


# -- SVG ----------------------------------------------------------------------

WIDTH, HEIGHT = 800, 600
MARGIN = 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def step_series(times: np.ndarray, values: np.ndarray, horizon: Optional[float] = None):
    """Vertices of the right-continuous step path through (times, values)."""
    t = np.repeat(times, 2)[1:]
    v = np.repeat(values, 2)[:-1]
    if horizon is not None and horizon > times[-1]:
        t = np.append(t, horizon)
        v = np.append(v, values[-1])
    return t, v


def svg_plot(path: str, series: Sequence[dict], title: str = "", xlabel: str = "t") -> None:
    """Write a self-contained 800x600 SVG of polylines.

    Each series is a dict with ``t``, ``y``, ``label`` and optional ``color``
    and ``dashed``.
    """
    ts = np.concatenate([np.asarray(s["t"], float) for s in series])
    ys = np.concatenate([np.asarray(s["y"], float) for s in series])
    x0, x1 = float(ts.min()), float(ts.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(t):
        return MARGIN + (np.asarray(t) - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def py(y):
        return HEIGHT - MARGIN - (np.asarray(y) - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(WIDTH),
        height=str(HEIGHT),
        viewBox=f"0 0 {WIDTH} {HEIGHT}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(WIDTH), height=str(HEIGHT), fill="white")
    ET.SubElement(
        svg, "rect", x=str(MARGIN), y=str(MARGIN),
        width=str(WIDTH - 2 * MARGIN), height=str(HEIGHT - 2 * MARGIN),
        fill="none", stroke="black",
    )
    if title:
        ET.SubElement(svg, "text", x=str(WIDTH // 2), y="30", **{"text-anchor": "middle"}).text = title
    ET.SubElement(svg, "text", x=str(WIDTH // 2), y=str(HEIGHT - 15), **{"text-anchor": "middle"}).text = xlabel
    for frac in (0.0, 0.5, 1.0):
        tx, ty = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        ET.SubElement(svg, "text", x=f"{px(tx):.1f}", y=str(HEIGHT - MARGIN + 18),
                      **{"text-anchor": "middle", "font-size": "12"}).text = f"{tx:.3g}"
        ET.SubElement(svg, "text", x=str(MARGIN - 6), y=f"{py(ty):.1f}",
                      **{"text-anchor": "end", "font-size": "12"}).text = f"{ty:.3g}"
    for i, s in enumerate(series):
        color = s.get("color", PALETTE[i % len(PALETTE)])
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(s["t"]), py(s["y"])))
        attrs = {"points": pts, "fill": "none", "stroke": color, "stroke-width": "1.5"}
        if s.get("dashed"):
            attrs["stroke-dasharray"] = "6,4"
        ET.SubElement(svg, "polyline", **attrs)
        ly = MARGIN + 16 + 16 * i
        ET.SubElement(svg, "line", x1=str(WIDTH - MARGIN - 150), x2=str(WIDTH - MARGIN - 125),
                      y1=str(ly - 4), y2=str(ly - 4), stroke=color,
                      **({"stroke-dasharray": "6,4"} if s.get("dashed") else {}))
        ET.SubElement(svg, "text", x=str(WIDTH - MARGIN - 120), y=str(ly),
                      **{"font-size": "12"}).text = s.get("label", "")
    ET.ElementTree(svg).write(path, encoding="utf-8", xml_declaration=True)
