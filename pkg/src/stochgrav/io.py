"""CSV and JSON emitters with a fixed, platform-independent byte layout."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .background import BackgroundEnsemble


def format_float(x: float) -> str:
    return "%.17g" % x


def csv_text(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    """Header row plus one row per sample, 17 significant digits, ``\\n`` endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([format_float(float(v)) for v in row])
    return buf.getvalue()


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def json_text(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def trajectory_csv(traj) -> str:
    return csv_text(("tau", "ell", "ell_rate"), (traj.tau, traj.ell, traj.ell_rate))


def phase_csv(trace) -> str:
    return csv_text(("t", "phi"), (trace.times, trace.phi))


def profile_csv(profile) -> str:
    return csv_text(("x_m", "intensity"), (profile.positions, profile.intensity))


def load_ensemble(path: str | Path) -> BackgroundEnsemble:
    return BackgroundEnsemble.loads(Path(path).read_text())
