# ===================================
# utils/csv_io.py
# ===================================
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Union

import numpy as np

from gpe_solver.models.solver import Trace
from gpe_solver.models.spectral import RateSample

logger = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "n",
    "energy",
    "energy_error",
    "residual",
    "tau",
    "gamma",
    "mass_intermediate",
    "identity_gap",
    "residual_max",
    "lam",
    "h1_error",
    "density_error",
]


def format_value(value: Any) -> str:
    """Round-trip decimal text: 17 significant digits for floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    logger.debug(f"Wrote {path}")
    return path


def read_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def trace_rows(trace: Trace) -> List[list]:
    rows = []
    for r in trace.records:
        rows.append([
            r.n + 1,
            r.energy,
            r.energy_error,
            r.residual,
            r.tau,
            r.gamma,
            r.mass_intermediate,
            r.energy_identity_gap,
            r.residual_max,
            r.lam,
            r.h1_error,
            r.density_error,
        ])
    return rows


def write_trace(path: Union[str, Path], trace: Trace) -> Path:
    return write_csv(path, TRACE_COLUMNS, trace_rows(trace))


def write_rates(path: Union[str, Path], samples: List[RateSample]) -> Path:
    return write_csv(path, ["n", "rate", "omega", "h1_error"], [[s.n, s.rate, s.omega, s.h1_error] for s in samples])


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
    return path


def _json_default(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")
