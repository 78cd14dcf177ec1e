"""Maximum Lyapunov exponents and the transverse exponent of on-off coupling.

For the ODEs the tangent flow is integrated alongside the trajectory with the
analytic Jacobian.  Coupling a reduced model to the true system through
``eps(t) * (y_true - y_model)`` adds ``-eps(t) * delta`` to the coupled
components of the variational equation; with ``eps = 0`` the transverse
exponent is simply the maximum Lyapunov exponent.  Many coupling schedules
share one base trajectory, so :func:`stability_map` integrates all grid cells
in a single pass.

PDE exponents use two trajectories separated by a renormalised 1e-7 offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .dynsys import (
    ODE_DISCARD,
    PDE_DISCARD,
    OdeSystem,
    PdeSystem,
    _jac,
    _rhs,
    default_initial_state,
    integrate,
)

__all__ = [
    "LyapunovEstimate",
    "OnOffCoupling",
    "max_lyapunov",
    "transverse_lyapunov",
    "stability_map",
]

PDE_SEPARATION = 1e-7


@dataclass(frozen=True)
class LyapunovEstimate:
    """Exponent (1/time) plus the two half-run estimates used to judge convergence."""

    value: float
    first_half: float
    second_half: float
    n_steps: int
    renorm_interval: int

    @property
    def converged(self) -> bool:
        scale = max(abs(self.value), 1e-12)
        return abs(self.first_half - self.second_half) <= 0.2 * scale

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class OnOffCoupling:
    """Continuous-time coupling ``eps(t) = epsilon`` during the first ``active``
    steps of every ``period``-step window, zero otherwise.

    ``channels`` lists the variational components that feel ``-eps(t) * delta``.
    """

    epsilon: float
    period: int
    active: int
    dt: float
    channels: tuple[int, ...] = (1,)

    def __post_init__(self):
        if not 1 <= self.active <= self.period:
            raise ValueError("need 1 <= active <= period")
        if self.epsilon < 0 or self.dt <= 0:
            raise ValueError("epsilon must be >= 0 and dt > 0")

    @classmethod
    def from_discrete(cls, c, period, active, dt, channels=(1,)) -> "OnOffCoupling":
        """Translate a discrete update strength ``c`` via ``epsilon = c / dt``."""
        return cls(c / dt, int(period), int(active), dt, tuple(channels))

    def epsilon_at(self, step: int) -> float:
        return self.epsilon if step % self.period < self.active else 0.0


@njit(cache=True)
def _tangent_rhs(k, x, D, on, cmask):
    J = _jac(k, x)
    n = D.shape[1]
    out = np.empty_like(D)
    for j in range(n):
        for a in range(3):
            acc = J[a, 0] * D[0, j] + J[a, 1] * D[1, j] + J[a, 2] * D[2, j]
            out[a, j] = acc - on[j] * cmask[a] * D[a, j]
    return out


@njit(cache=True)
def _variational(k, x0, D0, eps, period, active, cmask, h, substeps, n_steps, renorm):
    x = x0.copy()
    D = D0.copy()
    n = D.shape[1]
    logs = np.zeros((2, n))
    on = np.zeros(n)
    half = n_steps // 2
    for i in range(n_steps):
        for j in range(n):
            on[j] = eps[j] if (i % period[j]) < active[j] else 0.0
        for _ in range(substeps):
            k1x = _rhs(k, x)
            k1d = _tangent_rhs(k, x, D, on, cmask)
            x2 = x + 0.5 * h * k1x
            k2x = _rhs(k, x2)
            k2d = _tangent_rhs(k, x2, D + 0.5 * h * k1d, on, cmask)
            x3 = x + 0.5 * h * k2x
            k3x = _rhs(k, x3)
            k3d = _tangent_rhs(k, x3, D + 0.5 * h * k2d, on, cmask)
            x4 = x + h * k3x
            k4x = _rhs(k, x4)
            k4d = _tangent_rhs(k, x4, D + h * k3d, on, cmask)
            x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            D = D + (h / 6.0) * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        if (i + 1) % renorm == 0 or i == n_steps - 1:
            slot = 0 if i < half else 1
            for j in range(n):
                nrm = math.sqrt(D[0, j] ** 2 + D[1, j] ** 2 + D[2, j] ** 2)
                logs[slot, j] += math.log(nrm)
                for a in range(3):
                    D[a, j] /= nrm
    return logs


def _estimate(logs: np.ndarray, n_steps: int, dt: float, renorm: int) -> list[LyapunovEstimate]:
    half = n_steps // 2
    # renormalisations in the first half end at multiples of renorm below half
    t1 = (((half - 1) // renorm) + 1) * renorm * dt if half > 0 else 0.0
    t1 = min(t1, n_steps * dt)
    t2 = n_steps * dt - t1
    res = []
    for j in range(logs.shape[1]):
        total = (logs[0, j] + logs[1, j]) / (n_steps * dt)
        a = logs[0, j] / t1 if t1 > 0 else total
        b = logs[1, j] / t2 if t2 > 0 else total
        res.append(LyapunovEstimate(float(total), float(a), float(b), n_steps, renorm))
    return res


def _ode_cells(system, eps, period, active, cmask, n_steps, renorm, x0, discard):
    if x0 is None:
        x0 = default_initial_state(system, 0)
    start = integrate(system, x0, 1, discard=discard).data[-1]
    n = len(eps)
    D0 = np.full((3, n), 1.0 / math.sqrt(3.0))
    h = system.dt / system.substeps
    logs = _variational(
        system.kind,
        start,
        D0,
        np.asarray(eps, dtype=float),
        np.asarray(period, dtype=np.int64),
        np.asarray(active, dtype=np.int64),
        np.asarray(cmask, dtype=float),
        h,
        system.substeps,
        int(n_steps),
        int(renorm),
    )
    return _estimate(logs, n_steps, system.dt, renorm)


def _pde_lyapunov(system: PdeSystem, n_steps, renorm, x0, discard, seed):
    if x0 is None:
        x0 = default_initial_state(system, seed)
    base = integrate(system, x0, 1, discard=discard).data[-1]
    if system.name == "cgle":
        base = base[0::2] + 1j * base[1::2]
    rng = np.random.default_rng(seed + 1)
    pert = rng.standard_normal(system.M)
    if system.name == "cgle":
        pert = pert + 1j * rng.standard_normal(system.M)
    pert *= PDE_SEPARATION / np.linalg.norm(pert)
    st = system.stepper()
    v = st.to_spec(np.stack([base, base + pert]))
    logs = np.zeros(2)
    half = n_steps // 2
    for i in range(n_steps):
        v = st.step(v)
        if (i + 1) % renorm == 0 or i == n_steps - 1:
            u = st.to_phys(v)
            diff = u[1] - u[0]
            nrm = np.linalg.norm(diff)
            logs[0 if i < half else 1] += math.log(nrm / PDE_SEPARATION)
            u[1] = u[0] + diff * (PDE_SEPARATION / nrm)
            v = st.to_spec(u)
    return _estimate(logs[:, None], n_steps, system.dt, renorm)[0]


def max_lyapunov(
    system: OdeSystem | PdeSystem,
    n_steps: int,
    renorm_interval: int = 10,
    x0=None,
    discard: int | None = None,
    seed: int = 0,
) -> LyapunovEstimate:
    """Benettin estimate of the largest Lyapunov exponent (per unit time)."""
    if isinstance(system, OdeSystem):
        d = ODE_DISCARD if discard is None else discard
        return _ode_cells(system, [0.0], [1], [1], np.zeros(3), n_steps, renorm_interval, x0, d)[0]
    d = PDE_DISCARD if discard is None else discard
    return _pde_lyapunov(system, n_steps, renorm_interval, x0, d, seed)


def _channel_mask(channels: Sequence[int]) -> np.ndarray:
    m = np.zeros(3)
    m[list(channels)] = 1.0
    return m


def transverse_lyapunov(
    system: OdeSystem,
    coupling: OnOffCoupling,
    n_steps: int,
    renorm_interval: int = 10,
    x0=None,
    discard: int = ODE_DISCARD,
) -> LyapunovEstimate:
    """Largest exponent of perturbations off the synchronization manifold.

    Negative values mean the on-off coupled copy synchronizes with the target.
    """
    if not isinstance(system, OdeSystem):
        raise TypeError("transverse analysis needs an ODE system with a Jacobian")
    if abs(system.dt - coupling.dt) > 1e-15:
        raise ValueError("coupling dt does not match the system step")
    return _ode_cells(
        system,
        [coupling.epsilon],
        [coupling.period],
        [coupling.active],
        _channel_mask(coupling.channels),
        n_steps,
        renorm_interval,
        x0,
        discard,
    )[0]


def stability_map(
    system: OdeSystem,
    c: float,
    active_values: Sequence[int],
    period_values: Sequence[int],
    n_steps: int,
    channels: Sequence[int] = (1,),
    renorm_interval: int = 10,
    x0=None,
    discard: int = ODE_DISCARD,
):
    """Transverse exponent over a ``(T0, T)`` grid with ``epsilon = c / dt``.

    Cells with ``T0 > T`` are masked.  Every cell shares the same base
    trajectory, so the whole grid is one integration.
    """
    from .sweep import SweepGrid

    active_values = [int(a) for a in active_values]
    period_values = [int(p) for p in period_values]
    cells = [(i, j) for i, p in enumerate(period_values) for j, a in enumerate(active_values) if a <= p]
    eps = [c / system.dt] * len(cells)
    per = [period_values[i] for i, _ in cells]
    act = [active_values[j] for _, j in cells]
    est = _ode_cells(system, eps, per, act, _channel_mask(channels), n_steps, renorm_interval, x0, discard)
    values = np.full((len(period_values), len(active_values)), np.nan)
    flags = np.zeros(values.shape, dtype=bool)
    for (i, j), e in zip(cells, est):
        values[i, j] = e.value
        flags[i, j] = not e.converged
    return SweepGrid(
        x_name="T0",
        x_values=list(active_values),
        y_name="T",
        y_values=list(period_values),
        cells=values,
        flags=flags,
        metadata={
            "quantity": "transverse_lyapunov",
            "system": system.name,
            "c": c,
            "epsilon": c / system.dt,
            "channels": list(channels),
            "n_steps": n_steps,
            "renorm_interval": renorm_interval,
        },
    )
