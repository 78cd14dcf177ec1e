"""Train-predict-measure pipeline driven by an :class:`ExperimentConfig`.

One generated trajectory holds the training rows followed, after a gap, by
``n_segments`` test segments of ``warmup + window`` rows each.  The truth for
a segment starts on the row right after its warmup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynsys, lyapunov, metrics, reservoir
from .config import ExperimentConfig
from .dynsys import OdeSystem, PdeSystem, TrajectoryBuffer
from .updating import UpdateSchedule

__all__ = ["Experiment", "Segment", "make_system"]


def make_system(cfg: ExperimentConfig) -> OdeSystem | PdeSystem:
    s = cfg.system
    name = s.name.lower()
    if name in ("kse", "kuramoto_sivashinsky"):
        kw = {k: v for k, v in (("L", s.L), ("M", s.M), ("dt", s.dt)) if v is not None}
        return dynsys.kse(**kw)
    if name == "cgle":
        kw = {
            k: v
            for k, v in (("L", s.L), ("M", s.M), ("dt", s.dt), ("alpha", s.alpha), ("beta", s.beta))
            if v is not None
        }
        return dynsys.cgle(**kw)
    return dynsys.ode_system(name, s.dt, s.substeps)


@dataclass
class Segment:
    warmup: TrajectoryBuffer
    truth: TrajectoryBuffer
    start: int


class Experiment:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.system = make_system(cfg)
        self._data: TrajectoryBuffer | None = None
        self._lambda: float | None = cfg.evaluation.lambda_max

    @property
    def dt(self) -> float:
        return self.system.dt

    @property
    def is_pde(self) -> bool:
        return isinstance(self.system, PdeSystem)

    @property
    def n_channels(self) -> int:
        return self.system.n_channels if self.is_pde else 3

    @property
    def n_sites(self) -> int:
        return self.system.M if self.is_pde else 3

    @property
    def channels_per_site(self) -> int:
        return self.system.channels_per_site if self.is_pde else 1

    def lambda_max(self) -> float:
        if self._lambda is None:
            est = lyapunov.max_lyapunov(self.system, self.cfg.evaluation.lyapunov_steps,
                                        seed=self.cfg.seeds.data)
            self._lambda = est.value
        return self._lambda

    def window(self) -> int:
        p = self.cfg.prediction
        if p.n_steps is not None:
            return p.n_steps
        return int(math.ceil(p.lyapunov_times / (self.lambda_max() * self.dt)))

    def total_rows(self) -> int:
        p = self.cfg.prediction
        return self.cfg.training.n_steps + p.gap + p.n_segments * (p.warmup + self.window())

    def data(self) -> TrajectoryBuffer:
        if self._data is None:
            x0 = dynsys.default_initial_state(self.system, self.cfg.seeds.data)
            self._data = dynsys.integrate(self.system, x0, self.total_rows(),
                                          discard=self.cfg.training.discard)
        return self._data

    def use_data(self, traj: TrajectoryBuffer) -> None:
        """Adopt an externally stored trajectory (same layout as :meth:`data`)."""
        if traj.n_channels != self.n_channels:
            raise ValueError(f"data has {traj.n_channels} channels, expected {self.n_channels}")
        if abs(traj.dt - self.dt) > 1e-12 * self.dt:
            raise ValueError(f"data dt {traj.dt} differs from system dt {self.dt}")
        self._data = traj

    def params(self) -> reservoir.ReservoirParams:
        r = self.cfg.reservoir
        return reservoir.ReservoirParams(
            n_reservoir=r.n_reservoir,
            n_in=self.n_channels,
            sigma=r.sigma,
            rho=r.rho,
            eta=r.eta,
            degree=r.degree,
            density=r.density,
            seed=self.cfg.seeds.reservoir,
            input_coupling=r.input_coupling,
        )

    def train(self) -> tuple[reservoir.ReservoirModel, reservoir.TrainReport]:
        model = reservoir.build(self.params())
        t = self.cfg.training
        report = reservoir.train(model, self.data().segment(0, t.n_steps), t.washout)
        return model, report

    def segments(self) -> list[Segment]:
        p = self.cfg.prediction
        data = self.data()
        n = self.window()
        if len(data) < self.total_rows():
            raise ValueError(f"trajectory has {len(data)} rows, need {self.total_rows()}")
        out = []
        for k in range(p.n_segments):
            s = self.cfg.training.n_steps + p.gap + k * (p.warmup + n)
            out.append(Segment(data.segment(s, s + p.warmup),
                               data.segment(s + p.warmup, s + p.warmup + n), s + p.warmup))
        return out

    def schedule(self, seed: int | None = None) -> UpdateSchedule | None:
        s = self.cfg.schedule
        if s.mode == "none":
            return None
        if s.mode == "random":
            return UpdateSchedule.random(s.p_t, s.p_s, s.c,
                                         self.cfg.seeds.schedule if seed is None else seed)
        return UpdateSchedule.regular(s.period, s.active, s.c, s.n_coupled, s.sites)

    def predict(self, model, segment: Segment, schedule: UpdateSchedule | None) -> TrajectoryBuffer:
        return reservoir.predict_closed_loop(
            model, segment.warmup, len(segment.truth), schedule,
            segment.truth if schedule is not None else None, n_sites=self.n_sites,
        )

    def errors(self, pred: TrajectoryBuffer, segment: Segment) -> metrics.ErrorSeries:
        ev = self.cfg.evaluation
        return metrics.error_series(pred, segment.truth, self.lambda_max(), self.dt,
                                    ev.tolerance, ev.confirm)

    def evaluate(self, model, schedule: UpdateSchedule | None = None) -> list[metrics.ErrorSeries]:
        return [self.errors(self.predict(model, seg, schedule), seg) for seg in self.segments()]


def summarize(series: list[metrics.ErrorSeries]) -> dict:
    """JSON-ready per-segment delta_e and horizon (``null`` horizon = never breached)."""
    rows = []
    for s in series:
        k = s.horizon_steps
        rows.append({
            "delta_e": s.delta_e,
            "horizon_steps": k,
            "horizon_time": None if k is None else (k + 1) * s.dt,
            "horizon_lyapunov": None if k is None else metrics.horizon(s),
        })
    return {
        "lambda_max": series[0].lambda_max if series else None,
        "segments": rows,
        "delta_e_mean": float(np.mean([r["delta_e"] for r in rows])) if rows else None,
    }
