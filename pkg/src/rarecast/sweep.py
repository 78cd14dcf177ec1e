"""Grids of prediction experiments over update-schedule parameters.

A sweep trains one reservoir and then, for every grid cell, runs the same
closed-loop prediction a standalone ``predict`` would, with only the schedule
changed.  Regular grids span ``(T0, T)`` with cells ``T0 > T`` masked; random
grids span ``(p_t, p_s)`` and average each cell over several schedule seeds.

Masked cells hold NaN in memory, an empty field in CSV and ``null`` in JSON.
Cells whose prediction diverged, or whose ``delta_e`` exceeds the ceiling,
are clamped to the ceiling and flagged.
"""
from __future__ import annotations

import csv
import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, SweepConfig, config_hash
from .dynsys import IntegrationBlowUp
from .reservoir import ReservoirDivergence
from .updating import UpdateSchedule

__all__ = [
    "SweepGrid",
    "run_sweep",
    "cell_schedules",
    "export_heatmap",
    "import_heatmap",
    "write_ppm",
]


@dataclass
class SweepGrid:
    x_name: str
    x_values: list
    y_name: str
    y_values: list
    cells: np.ndarray
    flags: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=float)
        self.flags = np.asarray(self.flags, dtype=bool)
        shape = (len(self.y_values), len(self.x_values))
        if self.cells.shape != shape or self.flags.shape != shape:
            raise ValueError(f"cells must have shape {shape} (rows = {self.y_name})")

    @property
    def masked(self) -> np.ndarray:
        return np.isnan(self.cells)

    def value(self, x, y) -> float:
        return float(self.cells[self.y_values.index(y), self.x_values.index(x)])

    def equals(self, other: "SweepGrid") -> bool:
        return (
            self.x_name == other.x_name
            and self.y_name == other.y_name
            and list(self.x_values) == list(other.x_values)
            and list(self.y_values) == list(other.y_values)
            and np.array_equal(self.cells, other.cells, equal_nan=True)
            and np.array_equal(self.flags, other.flags)
            and self.metadata == other.metadata
        )


def cell_schedules(exp_cfg: ExperimentConfig, sweep: SweepConfig, x, y) -> list[UpdateSchedule] | None:
    """Schedules evaluated for cell ``(x, y)``; ``None`` if the cell is masked."""
    s = exp_cfg.schedule
    if sweep.kind == "regular":
        if x > y:
            return None
        return [UpdateSchedule.regular(int(y), int(x), s.c, s.n_coupled, s.sites)]
    base = exp_cfg.seeds.schedule
    return [UpdateSchedule.random(x, y, s.c, base + k) for k in range(sweep.schedule_seeds)]


# Worker state: inherited through fork, so the model and data are not pickled.
_STATE: dict = {}


def _cell(job):
    idx, schedules = job
    exp = _STATE["experiment"]
    model = _STATE["model"]
    ceiling = _STATE["ceiling"]
    vals = []
    for sch in schedules:
        try:
            vals.extend(s.delta_e for s in exp.evaluate(model, sch))
        except (ReservoirDivergence, IntegrationBlowUp, FloatingPointError):
            return idx, ceiling, True
    de = float(np.mean(vals))
    if not math.isfinite(de) or de > ceiling:
        return idx, ceiling, True
    return idx, de, False


def run_sweep(
    exp_cfg: ExperimentConfig,
    sweep: SweepConfig | None = None,
    reuse_model: bool = True,
    workers: int = 1,
    experiment=None,
    model=None,
) -> SweepGrid:
    """Evaluate ``delta_e`` on every cell of the configured grid.

    With ``reuse_model`` the reservoir is trained once and shared; otherwise it
    is retrained for each cell (identical result, since training is
    deterministic, but slower).  Results are placed by cell index, so the
    worker count never changes the output.
    """
    from .experiment import Experiment

    sweep = sweep or exp_cfg.sweep or SweepConfig()
    exp = experiment if experiment is not None else Experiment(exp_cfg)
    if sweep.kind == "regular":
        xs, ys, xn, yn = list(sweep.active), list(sweep.period), "T0", "T"
    else:
        xs, ys, xn, yn = list(sweep.p_t), list(sweep.p_s), "p_t", "p_s"

    cells = np.full((len(ys), len(xs)), np.nan)
    flags = np.zeros(cells.shape, dtype=bool)
    jobs = []
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            sch = cell_schedules(exp_cfg, sweep, x, y)
            if sch is not None:
                jobs.append(((i, j), sch))

    if reuse_model and model is None:
        model, _ = exp.train()
    _STATE.update(experiment=exp, model=model, ceiling=sweep.ceiling)
    exp.data()
    exp.lambda_max()
    try:
        if not reuse_model:
            results = []
            for job in jobs:
                _STATE["model"], _ = exp.train()
                results.append(_cell(job))
        elif workers > 1 and len(jobs) > 1:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
                results = list(pool.map(_cell, jobs, chunksize=1))
        else:
            results = [_cell(job) for job in jobs]
    finally:
        _STATE.clear()

    for (i, j), de, flag in results:
        cells[i, j] = de
        flags[i, j] = flag

    meta = {
        "quantity": "delta_e",
        "system": exp_cfg.system.name,
        "config_sha256": config_hash(exp_cfg),
        "seeds": {"data": exp_cfg.seeds.data, "reservoir": exp_cfg.seeds.reservoir,
                  "schedule": exp_cfg.seeds.schedule},
        "kind": sweep.kind,
        "c": exp_cfg.schedule.c,
        "ceiling": sweep.ceiling,
        "lambda_max": exp.lambda_max(),
        "window_steps": exp.window(),
        "n_segments": exp_cfg.prediction.n_segments,
    }
    if sweep.kind == "random":
        meta["schedule_seeds"] = [exp_cfg.seeds.schedule + k for k in range(sweep.schedule_seeds)]
    else:
        meta["n_coupled"] = exp_cfg.schedule.n_coupled
        meta["sites"] = exp_cfg.schedule.sites
    return SweepGrid(xn, xs, yn, ys, cells, flags, meta)


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _parse_axis(tokens: list[str]) -> list:
    out = []
    for t in tokens:
        try:
            out.append(int(t))
        except ValueError:
            out.append(float(t))
    return out


def export_heatmap(grid: SweepGrid, out_dir, stem: str = "grid", ppm: bool = True) -> dict:
    """Write ``<stem>.csv``, ``<stem>.json`` and optionally ``<stem>.ppm``.

    The CSV has one row per y value; the first row lists the x values after a
    ``y\\x`` corner cell, the first column the y values.  Masked cells are
    empty fields.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out_dir / f"{stem}.csv", "json": out_dir / f"{stem}.json"}
    with open(paths["csv"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"{grid.y_name}\\{grid.x_name}"] + [_fmt(x) for x in grid.x_values])
        for y, row in zip(grid.y_values, grid.cells):
            w.writerow([_fmt(y)] + ["" if math.isnan(v) else repr(float(v)) for v in row])
    doc = {
        "x_name": grid.x_name,
        "x_values": list(grid.x_values),
        "y_name": grid.y_name,
        "y_values": list(grid.y_values),
        "cells": [[None if math.isnan(v) else float(v) for v in row] for row in grid.cells],
        "flags": [[int(i), int(j)] for i, j in zip(*np.nonzero(grid.flags))],
        "masked_sentinel": "empty CSV field / null: cell outside the grid domain (T0 > T)",
        "flag_meaning": "prediction diverged or delta_e above ceiling; value clamped to ceiling",
        "metadata": grid.metadata,
    }
    if ppm:
        paths["ppm"] = out_dir / f"{stem}.ppm"
        doc["ppm_colormap"] = write_ppm(grid, paths["ppm"])
    with open(paths["json"], "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def import_heatmap(csv_path) -> SweepGrid:
    """Read a grid written by :func:`export_heatmap` (the JSON sits beside the CSV)."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    yn, xn = rows[0][0].split("\\", 1)
    xs = _parse_axis(rows[0][1:])
    ys = _parse_axis([r[0] for r in rows[1:]])
    cells = np.array([[float(v) if v != "" else np.nan for v in r[1:]] for r in rows[1:]])
    cells = cells.reshape(len(ys), len(xs))
    flags = np.zeros(cells.shape, dtype=bool)
    meta = {}
    side = csv_path.with_suffix(".json")
    if side.exists():
        doc = json.loads(side.read_text())
        for i, j in doc["flags"]:
            flags[i, j] = True
        meta = doc["metadata"]
    return SweepGrid(xn, xs, yn, ys, cells, flags, meta)


def write_ppm(grid: SweepGrid, path) -> str:
    """One pixel per cell, first y value on the top row.  Returns the colormap note.

    Values are mapped to ``t`` in [0, 1] between the finite minimum and
    maximum (log10 scale when all are positive) and coloured
    ``(255 t, 64, 255 (1 - t))``: blue is small, red is large.  Masked cells
    are mid grey.
    """
    vals = grid.cells
    finite = vals[np.isfinite(vals)]
    use_log = finite.size > 0 and bool(np.all(finite > 0))
    scaled = np.log10(vals) if use_log else vals.copy()
    lo = float(np.nanmin(scaled)) if finite.size else 0.0
    hi = float(np.nanmax(scaled)) if finite.size else 1.0
    span = hi - lo if hi > lo else 1.0
    h, w = vals.shape
    pix = bytearray()
    for i in range(h):
        for j in range(w):
            v = scaled[i, j]
            if math.isnan(v):
                pix += bytes((128, 128, 128))
            else:
                t = (v - lo) / span
                pix += bytes((int(round(255 * t)), 64, int(round(255 * (1 - t)))))
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(bytes(pix))
    scale = "log10" if use_log else "linear"
    return f"{scale} scale from {lo!r} to {hi!r}; rgb=(255t, 64, 255(1-t)); masked=(128,128,128)"
