"""Flat-file output: CSV tables, JSON reports and single-polyline SVG charts.

Everything here is deterministic: numbers are written with 17 significant
digits and JSON keys are sorted, so equal inputs give byte-identical files."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .desing import DesingularizationMap
from .dynamics import CatchingUpSequence, Orbit, orbit_table, sequence_table
from .process import SweepingProcess
from .suite import VerificationReport
from .talweg import TalwegTable

FORMATS = ("csv", "json", "svg-polyline")


class EmitError(OSError):
    pass


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return buf.getvalue()


def talweg_csv(table: TalwegTable) -> str:
    rows = ((t, u, s, "1" if c else "0")
            for t, u, s, c in zip(table.grid, table.phi_up, table.phi_sym, table.critical_flags))
    return csv_text(["t", "phi_up", "phi_sym", "critical"], rows)


def _coords(n: int) -> list[str]:
    return [f"x{i + 1}" for i in range(n)]


def orbit_csv(S: SweepingProcess, orbit: Orbit) -> str:
    return csv_text(["t", *_coords(orbit.points.shape[1]), "speed_est", "asym_modulus"], orbit_table(S, orbit))


def sequence_csv(seq: CatchingUpSequence) -> str:
    return csv_text(["t", *_coords(seq.points.shape[1]), "step_displacement"], sequence_table(seq))


def psi_csv(dmap: DesingularizationMap, count: int = 257) -> str:
    return csv_text(["r", "psi", "psi_prime"], dmap.samples(count))


def report_json(report: VerificationReport | Sequence[VerificationReport]) -> str:
    if isinstance(report, VerificationReport):
        payload = report.to_json()
    else:
        payload = [r.to_json() for r in report]
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def svg_polyline(x, y, width: int = 640, height: int = 400, margin: int = 40) -> str:
    """One polyline of the finite ``(x, y)`` pairs with two axes and their ranges."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    if x.size == 0:
        raise ValueError("no finite points to plot")
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(min(y.min(), 0.0)), float(y.max())
    sx = (width - 2 * margin) / (x1 - x0 if x1 > x0 else 1.0)
    sy = (height - 2 * margin) / (y1 - y0 if y1 > y0 else 1.0)
    px = margin + (x - x0) * sx
    py = height - margin - (y - y0) * sy
    pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in zip(px, py))
    base = height - margin
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<line x1="{margin}" y1="{base}" x2="{width - margin}" y2="{base}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{base}" stroke="black"/>',
        f'<text x="{margin}" y="{height - 10}" font-size="11">{fmt(x0)}</text>',
        f'<text x="{width - margin}" y="{height - 10}" font-size="11" text-anchor="end">{fmt(x1)}</text>',
        f'<text x="4" y="{base}" font-size="11">{fmt(y0)}</text>',
        f'<text x="4" y="{margin}" font-size="11">{fmt(y1)}</text>',
        f'<polyline fill="none" stroke="black" points="{pts}"/>',
        "</svg>",
    ]
    return "\n".join(lines) + "\n"


def _series(obj, process: SweepingProcess | None):
    if isinstance(obj, TalwegTable):
        return obj.grid, obj.phi_up
    if isinstance(obj, DesingularizationMap):
        s = obj.samples()
        return s[:, 0], s[:, 1]
    if isinstance(obj, Orbit):
        return obj.times, obj.speeds()
    if isinstance(obj, CatchingUpSequence):
        return obj.times, np.concatenate([[0.0], np.cumsum(obj.displacements)])
    raise TypeError(f"cannot plot {type(obj).__name__}")


def render(obj, fmt_: str = "csv", process: SweepingProcess | None = None) -> str:
    """Text of ``obj`` in one of ``FORMATS``.

    Orbits need their ``process`` for the modulus column. SVG charts plot
    ``phi_up`` for talweg tables, ``Psi`` for maps, speed for orbits and the
    cumulative length for sequences."""
    if fmt_ not in FORMATS:
        raise ValueError(f"unknown format {fmt_!r}; expected one of {', '.join(FORMATS)}")
    if fmt_ == "json":
        if isinstance(obj, VerificationReport) or (
                isinstance(obj, (list, tuple)) and all(isinstance(r, VerificationReport) for r in obj)):
            return report_json(obj)
        raise TypeError(f"json output is for verification reports, not {type(obj).__name__}")
    if fmt_ == "svg-polyline":
        return svg_polyline(*_series(obj, process))
    if isinstance(obj, TalwegTable):
        return talweg_csv(obj)
    if isinstance(obj, DesingularizationMap):
        return psi_csv(obj)
    if isinstance(obj, Orbit):
        if process is None:
            raise ValueError("orbit CSV needs the process for the asym_modulus column")
        return orbit_csv(process, obj)
    if isinstance(obj, CatchingUpSequence):
        return sequence_csv(obj)
    raise TypeError(f"csv output is not defined for {type(obj).__name__}")


def emit(obj, path, fmt_: str = "csv", process: SweepingProcess | None = None) -> Path:
    text = render(obj, fmt_, process)
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as exc:
        raise EmitError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
