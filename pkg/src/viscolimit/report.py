"""Report emission: ``report.csv``, ``report.json`` and ``plotdata/*.dat``.

``report.csv`` holds only deterministic quantities, so repeated sweeps with
fixed seeds produce identical bytes. Wall-clock timings go to ``report.json``.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .sweep import COLUMNS, COLUMNS_VERSION, ConvergenceReport


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.17g}"


def csv_text(report: ConvergenceReport) -> str:
    lines = [
        f"# viscolimit report columns v{COLUMNS_VERSION}; mode={report.mode}; "
        f"velocity index={report.velocity_index:g}; stress index={report.norm_index:g}",
        ",".join(COLUMNS),
    ]
    lines += [",".join(_fmt(float(row[c])) for c in COLUMNS) for row in report.rows]
    return "\n".join(lines) + "\n"


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def json_text(report: ConvergenceReport) -> str:
    doc = {
        "version": report.version,
        "columns_version": COLUMNS_VERSION,
        "mode": report.mode,
        "norm_index": report.norm_index,
        "velocity_index": report.velocity_index,
        "rows": report.rows,
        "slopes": report.slopes,
        "monotone": report.monotone,
        "empirical_eps0": report.empirical_eps0,
        "reference": report.reference,
        "wall_times": dict(zip((_fmt(r["eps"]) for r in report.rows), report.wall_times)),
        "config": report.config,
    }
    return json.dumps(_json_safe(doc), indent=2, sort_keys=True) + "\n"


def _write_dat(path: Path, x, y, header: str):
    body = "".join(f"{_fmt(float(a))} {_fmt(float(b))}\n" for a, b in zip(x, y))
    path.write_text(f"# {header}\n" + body)


def write_report(report: ConvergenceReport, out_dir: str | Path) -> Path:
    """Write all report files below ``out_dir`` and return it."""
    out = Path(out_dir)
    try:
        plot = out / "plotdata"
        plot.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(csv_text(report))
        (out / "report.json").write_text(json_text(report))
        eps = [r["eps"] for r in report.rows]
        for name in COLUMNS[1:-2]:
            _write_dat(plot / f"eps_{name}.dat", eps, [r[name] for r in report.rows], f"eps {name}")
        for i, (row, series) in enumerate(zip(report.rows, report.series)):
            for name, s in series.items():
                _write_dat(plot / f"run{i}_{name}.dat", s.times, s.values, f"t {name} (eps={_fmt(row['eps'])})")
        for name, s in report.reference_series.items():
            _write_dat(plot / f"reference_{name}.dat", s.times, s.values, f"t {name} (Navier-Stokes reference)")
    except OSError as exc:
        raise OSError(f"{exc.filename or out}: cannot write report: {exc.strerror}") from None
    return out


def read_csv(path: str | Path) -> list[dict[str, float]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    head = lines[0].split(",")
    return [dict(zip(head, map(float, ln.split(",")))) for ln in lines[1:]]


def read_dat(path: str | Path) -> np.ndarray:
    """Two-column plot file as an ``(n, 2)`` array."""
    return np.loadtxt(path, comments="#", ndmin=2)
