"""Prediction-error statistics.

The per-step error is ``e(t) = |v(t) - u(t)| / u_rms`` with ``u_rms`` the
root-mean-square norm of the truth over the evaluation window.  The scalar
``delta_e`` is the mean of ``e`` and the horizon is the first time ``e`` stays
above a tolerance for ``confirm`` consecutive steps.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .dynsys import TrajectoryBuffer

__all__ = [
    "TOLERANCE",
    "CONFIRM",
    "ErrorSeries",
    "error_series",
    "error_field",
    "horizon",
    "horizon_steps",
    "lyapunov_time_steps",
    "mean_period",
    "write_error_series",
    "write_error_field",
]

TOLERANCE = 0.05
CONFIRM = 10


def horizon_steps(e, tol: float = TOLERANCE, confirm: int = CONFIRM) -> int | None:
    """Index of the first step opening a run of ``confirm`` steps with ``e > tol``."""
    above = np.asarray(e) > tol
    if confirm < 1:
        raise ValueError("confirm must be >= 1")
    if len(above) < confirm:
        return None
    # run[i] = number of consecutive exceedances ending at i
    run = np.zeros(len(above), dtype=np.int64)
    count = 0
    for i, a in enumerate(above):
        count = count + 1 if a else 0
        run[i] = count
    hits = np.flatnonzero(run >= confirm)
    if hits.size == 0:
        return None
    return int(hits[0] - confirm + 1)


@dataclass
class ErrorSeries:
    e: np.ndarray
    dt: float
    lambda_max: float
    tol: float = TOLERANCE
    confirm: int = CONFIRM

    @property
    def delta_e(self) -> float:
        return float(np.mean(self.e))

    @property
    def horizon_steps(self) -> int | None:
        return horizon_steps(self.e, self.tol, self.confirm)

    def __len__(self) -> int:
        return len(self.e)


def _arrays(pred, truth):
    P = pred.data if isinstance(pred, TrajectoryBuffer) else np.asarray(pred, dtype=float)
    U = truth.data if isinstance(truth, TrajectoryBuffer) else np.asarray(truth, dtype=float)
    if P.shape != U.shape:
        raise ValueError(f"shape mismatch: prediction {P.shape} vs truth {U.shape}")
    if isinstance(pred, TrajectoryBuffer) and isinstance(truth, TrajectoryBuffer):
        if not math.isclose(pred.dt, truth.dt, rel_tol=1e-12):
            raise ValueError("prediction and truth have different dt")
    return P, U


def error_series(pred, truth, lambda_max: float = math.nan, dt: float | None = None,
                 tol: float = TOLERANCE, confirm: int = CONFIRM) -> ErrorSeries:
    """Normalised error per step between ``pred`` and ``truth``."""
    P, U = _arrays(pred, truth)
    if dt is None:
        dt = truth.dt if isinstance(truth, TrajectoryBuffer) else 1.0
    u_rms = math.sqrt(np.mean(np.sum(U * U, axis=1)))
    if u_rms == 0:
        raise ValueError("truth is identically zero; normalised error undefined")
    e = np.linalg.norm(P - U, axis=1) / u_rms
    return ErrorSeries(e, dt, lambda_max, tol, confirm)


def error_field(pred, truth, channels_per_site: int = 1) -> np.ndarray:
    """Per-site error (rows = time, cols = sites) on the same normalisation.

    With two interleaved channels per site the entry is the modulus of the
    complex difference.
    """
    P, U = _arrays(pred, truth)
    u_rms = math.sqrt(np.mean(np.sum(U * U, axis=1)))
    diff = (P - U).reshape(P.shape[0], -1, channels_per_site)
    return np.sqrt(np.sum(diff * diff, axis=2)) / u_rms


def horizon(series: ErrorSeries, tol: float | None = None, confirm: int | None = None) -> float:
    """Valid-prediction time in Lyapunov times; ``inf`` if the tolerance is never breached.

    The step index ``t`` (0-based, one step after the warmup) maps to elapsed
    time ``(t + 1) dt``.
    """
    if not series.lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    k = horizon_steps(series.e, series.tol if tol is None else tol,
                      series.confirm if confirm is None else confirm)
    if k is None:
        return math.inf
    return (k + 1) * series.dt * series.lambda_max


def lyapunov_time_steps(lambda_max: float, dt: float) -> float:
    """Number of integration steps in one Lyapunov time."""
    return 1.0 / (lambda_max * dt)


def mean_period(signal, dt: float) -> float:
    """Mean spacing between upward crossings of the signal's mean level."""
    x = np.asarray(signal, dtype=float)
    x = x - x.mean()
    up = np.flatnonzero((x[:-1] < 0) & (x[1:] >= 0))
    if up.size < 2:
        return math.nan
    return float(np.mean(np.diff(up)) * dt)


def write_error_series(path, series: ErrorSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "e"])
        for i, e in enumerate(series.e):
            w.writerow([repr((i + 1) * series.dt), repr(float(e))])


def write_error_field(path, field: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"site{j}" for j in range(field.shape[1])])
        for row in field:
            w.writerow([repr(float(x)) for x in row])
