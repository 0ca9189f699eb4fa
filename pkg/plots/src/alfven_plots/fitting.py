"""Study-table reading and power-law fitting.

The CSV contract: header ``study,kind,eps,observable,value,seed,N,L,dt,
wall_ms``, one observable per row, floats printed with 17 significant
digits.  The slope fit mirrors the producer's convention — natural-log
least squares, r² of the log residuals, nonpositive or non-finite values
excluded as below the measurement floor — so annotations agree with the
producer's own fits to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

CSV_HEADER = "study,kind,eps,observable,value,seed,N,L,dt,wall_ms"


class Row(NamedTuple):
    study: str
    kind: str
    eps: float
    observable: str
    value: float
    seed: int
    n_points: int
    box_length: float
    dt: float
    wall_ms: float


@dataclass(frozen=True)
class PowerFit:
    """Least-squares line through (log x, log y)."""

    slope: float
    intercept: float
    r_squared: float
    n_used: int
    excluded: tuple


def read_records(path) -> list[Row]:
    """Parse a study table; malformed lines are reported by number."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0].rstrip("\r") != CSV_HEADER:
        raise ValueError(f"{path}: missing header {CSV_HEADER!r}")
    rows, problems = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if line == "":
            continue
        parts = line.rstrip("\r").split(",")
        if len(parts) != 10:
            problems.append(f"line {lineno}: expected 10 fields, got {len(parts)}")
            continue
        try:
            rows.append(Row(
                study=parts[0], kind=parts[1], eps=float(parts[2]),
                observable=parts[3], value=float(parts[4]),
                seed=int(parts[5]), n_points=int(parts[6]),
                box_length=float(parts[7]), dt=float(parts[8]),
                wall_ms=float(parts[9]),
            ))
        except ValueError as err:
            problems.append(f"line {lineno}: {err}")
    if problems:
        raise ValueError(f"{path}: " + "; ".join(problems))
    return rows


def select(rows, observable: str, study: str | None = None) -> list[Row]:
    """Rows for one observable (optionally one study); must be nonempty."""
    picked = [r for r in rows
              if r.observable == observable
              and (study is None or r.study == study)]
    if not picked:
        available = sorted({r.observable for r in rows})
        raise ValueError(
            f"no rows with observable {observable!r}"
            + (f" in study {study!r}" if study else "")
            + f"; table has: {', '.join(available) or '(empty table)'}"
        )
    return picked


def fit_powerlaw(rows, observable: str, x: str = "eps",
                 study: str | None = None) -> PowerFit:
    """Fit value ≈ C·x^slope over the selected rows (natural logs)."""
    if x not in ("eps", "dt"):
        raise ValueError(f"abscissa must be 'eps' or 'dt', got {x!r}")
    xs, ys, excluded = [], [], []
    for row in select(rows, observable, study):
        xv = row.eps if x == "eps" else row.dt
        if not (math.isfinite(xv) and xv > 0):
            raise ValueError(f"abscissa {x}={xv!r} is not positive finite")
        if math.isfinite(row.value) and row.value > 0:
            xs.append(xv)
            ys.append(row.value)
        else:
            excluded.append(xv)
    if len(xs) < 4:
        raise ValueError(
            f"need >= 4 usable points to fit {observable!r} vs {x}, "
            f"have {len(xs)}"
            + (f" ({len(excluded)} below floor)" if excluded else "")
        )
    lx = np.log(np.asarray(xs))
    ly = np.log(np.asarray(ys))
    mx = lx.mean()
    denom = float(np.sum((lx - mx) ** 2))
    if denom == 0.0:
        raise ValueError(f"all abscissae equal ({xs[0]}); cannot fit a slope")
    slope = float(np.sum((lx - mx) * (ly - ly.mean())) / denom)
    intercept = float(ly.mean() - slope * mx)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerFit(slope, intercept, r_squared, len(xs), tuple(excluded))
