"""Tracking-error evaluation and plot-ready artifact serialization.

The trace CSV schema (one row per controller period) is part of the
package contract:

``t,p_mx,dp_mx,p_mz,dp_mz,beta_m,dbeta_m,th_a2,dth_a2,th_a3,dth_a3,
T1..T12,L01,L02,u_T3,u_T4,u_ta2,u_ta3,x_e,z_e,KE,VE,ref_p_mx..ref_dth_a3,
ref_x_e,ref_z_e``

Floats are written with shortest round-trip formatting, so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError
from .sim import SimTrace

_STATE_COLS = ["p_mx", "dp_mx", "p_mz", "dp_mz", "beta_m", "dbeta_m",
               "th_a2", "dth_a2", "th_a3", "dth_a3"]

TRACE_HEADER = (
    ["t"]
    + _STATE_COLS
    + [f"T{i}" for i in range(1, 13)]
    + ["L01", "L02", "u_T3", "u_T4", "u_ta2", "u_ta3", "x_e", "z_e", "KE", "VE"]
    + [f"ref_{c}" for c in _STATE_COLS]
    + ["ref_x_e", "ref_z_e"]
)


@dataclass(frozen=True)
class EvalReport:
    """Root-mean-square tracking errors and tension extremes of one run."""

    rmse_x: float
    rmse_z: float
    rmse_2d: float
    min_tension: float
    max_tension: float

    def as_dict(self) -> dict:
        return {
            "rmse_x_m": self.rmse_x,
            "rmse_z_m": self.rmse_z,
            "rmse_2d_m": self.rmse_2d,
            "min_tension_N": self.min_tension,
            "max_tension_N": self.max_tension,
        }


def rmse(p_e: np.ndarray, p_e_ref: np.ndarray, tensions: np.ndarray | None = None) -> EvalReport:
    """RMSE of the end-effector path against its reference.

    The 2-D value is sqrt(mean(e_x^2 + e_z^2)); per-axis values use the
    same samples, so rmse_2d^2 == rmse_x^2 + rmse_z^2.  Raises
    AlignmentError on mismatched sample counts.
    """
    p_e = np.asarray(p_e, dtype=float)
    p_e_ref = np.asarray(p_e_ref, dtype=float)
    if p_e.shape != p_e_ref.shape:
        raise AlignmentError(
            f"sample mismatch: {p_e.shape} observed vs {p_e_ref.shape} reference"
        )
    err = p_e - p_e_ref
    rx = float(np.sqrt(np.mean(err[:, 0] ** 2)))
    rz = float(np.sqrt(np.mean(err[:, 1] ** 2)))
    r2 = float(np.sqrt(np.mean(np.sum(err**2, axis=1))))
    tmin = float(np.min(tensions)) if tensions is not None else float("nan")
    tmax = float(np.max(tensions)) if tensions is not None else float("nan")
    return EvalReport(rmse_x=rx, rmse_z=rz, rmse_2d=r2, min_tension=tmin, max_tension=tmax)


def evaluate_trace(trace: SimTrace) -> EvalReport:
    return rmse(trace.p_e, trace.p_e_ref, trace.tensions)


def trace_to_csv(trace: SimTrace) -> str:
    """Serialize a trace with the documented column contract."""
    K = len(trace.t)
    cols = np.column_stack(
        [
            trace.t,
            trace.x,
            trace.tensions,
            trace.L0,
            trace.u,
            trace.p_e,
            trace.ke,
            trace.ve,
            trace.x_ref,
            trace.p_e_ref,
        ]
    )
    if cols.shape[1] != len(TRACE_HEADER):
        raise AssertionError("trace column layout drifted from the documented header")
    buf = io.StringIO()
    buf.write(",".join(TRACE_HEADER) + "\n")
    for i in range(K):
        buf.write(",".join(repr(float(v)) for v in cols[i]) + "\n")
    return buf.getvalue()


def trace_from_csv(text: str) -> dict:
    """Parse a trace CSV back into column arrays keyed by header name."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    if header != TRACE_HEADER:
        raise AlignmentError("trace header does not match the documented contract")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return {name: data[:, j] for j, name in enumerate(header)}


def summary_dict(trace: SimTrace) -> dict:
    """Run summary with the documented key set."""
    report = evaluate_trace(trace)
    out = report.as_dict()
    out["seed"] = trace.seed
    out["config_hash"] = trace.config_hash
    return out
