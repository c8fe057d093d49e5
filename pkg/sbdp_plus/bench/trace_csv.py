import csv
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from sbdp_plus.core.problem import PrimalDualPoint
from sbdp_plus.engine.runner import IterationTrace
from sbdp_plus.logging import get_logger_loguru
from sbdp_plus.models import RateCertificate

logger = get_logger_loguru(__name__)

COLUMNS = ("iter", "err2", "errP", "bound_Cq", "lyapunov_V", "s_inf", "comm_floats", "wall_ms")


@dataclass
class TraceRow:
    iter: int
    err2: float
    errP: Optional[float]
    bound_Cq: Optional[float]
    lyapunov_V: Optional[float]
    s_inf: float
    comm_floats: int
    wall_ms: Optional[float]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12e}"


def trace_rows(
    trace: IterationTrace,
    p_star: PrimalDualPoint,
    certificate: Optional[RateCertificate] = None,
    wall_time: bool = True,
) -> List[TraceRow]:
    """
    One row per recorded iterate p^q, q ≥ 1. Errors are against p_star; the
    P̄-weighted columns stay empty without a certificate.
    """
    start = trace.p0.vector - p_star.vector
    errP0 = certificate.weighted_norm(start) if certificate is not None else None
    rows = []
    for record in trace.records:
        q = record.q + 1
        delta = record.point.vector - p_star.vector
        errP = bound = V = None
        if certificate is not None:
            errP = certificate.weighted_norm(delta)
            V = errP ** 2
            bound = certificate.C ** q * errP0
        rows.append(TraceRow(
            iter=q,
            err2=float(np.linalg.norm(delta)),
            errP=errP,
            bound_Cq=bound,
            lyapunov_V=V,
            s_inf=record.s_inf,
            comm_floats=record.comm_floats,
            wall_ms=record.wall_ms if wall_time else None,
        ))
    return rows


def write_trace_csv(path: Path, rows: List[TraceRow]) -> Path:
    """Header row, '.' decimals, '\\n' line endings, fixed float format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, column)) for column in COLUMNS])
    logger.info(f"Trace with {len(rows)} rows written to {path}")
    return path


def write_admm_csv(path: Path, errors: List[float]) -> Path:
    """ADMM trace: iter and ‖x^q - x*‖, same number format as the engine trace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(("iter", "err_x"))
        for q, error in enumerate(errors, start=1):
            writer.writerow([str(q), _fmt(error)])
    logger.info(f"ADMM trace with {len(errors)} rows written to {path}")
    return path
