"""When and where true measurements are fed back into the closed loop.

A schedule decides, for prediction step ``t`` and each of ``M`` measurement
sites, whether the true value is available.  Where it is, the fed-back input
becomes ``v + c * (u - v)``.

Regular schedules are active for the first ``T0`` steps of every ``T``-step
window (window 0 starts at prediction step 0) on ``M_c`` equally spaced sites,
or on an explicit site list.  Random schedules draw the site set once per run
with probability ``p_s`` and activate each step with probability ``p_t``.
"""
from __future__ import annotations

from dataclasses import dataclass
import numpy as np

__all__ = ["UpdateSchedule", "active_mask", "apply_update"]


@dataclass(frozen=True)
class UpdateSchedule:
    mode: str
    c: float
    period: int = 1
    active: int = 1
    n_coupled: int | None = None
    sites: tuple[int, ...] | None = None
    p_t: float = 1.0
    p_s: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("regular", "random"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if not 0.0 <= self.c <= 2.0:
            raise ValueError(f"coupling c={self.c} outside [0, 2]")
        if self.mode == "regular":
            if not 1 <= self.active <= self.period:
                raise ValueError(f"need 1 <= T0 <= T, got T0={self.active}, T={self.period}")
            if self.n_coupled is not None and self.n_coupled < 1:
                raise ValueError("M_c must be >= 1")
            if self.sites is not None:
                object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
                if not self.sites or min(self.sites) < 0:
                    raise ValueError("explicit sites must be a non-empty list of indices")
        else:
            for name in ("p_t", "p_s"):
                p = getattr(self, name)
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"{name}={p} outside [0, 1]")

    @classmethod
    def regular(cls, period, active=1, c=1.0, n_coupled=None, sites=None) -> "UpdateSchedule":
        return cls("regular", float(c), int(period), int(active), n_coupled,
                   None if sites is None else tuple(sites))

    @classmethod
    def random(cls, p_t, p_s, c=1.0, seed=0) -> "UpdateSchedule":
        return cls("random", float(c), p_t=float(p_t), p_s=float(p_s), seed=int(seed))

    def with_seed(self, seed: int) -> "UpdateSchedule":
        return UpdateSchedule(self.mode, self.c, self.period, self.active, self.n_coupled,
                              self.sites, self.p_t, self.p_s, int(seed))

    def _streams(self):
        site_ss, time_ss = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(site_ss), np.random.default_rng(time_ss)

    def site_mask(self, M: int) -> np.ndarray:
        """Which of the ``M`` sites ever receive data."""
        if self.mode == "random":
            return self._streams()[0].random(M) < self.p_s
        mask = np.zeros(M, dtype=bool)
        if self.sites is not None:
            if max(self.sites) >= M:
                raise ValueError(f"site index {max(self.sites)} out of range for M={M}")
            mask[list(self.sites)] = True
            return mask
        mc = M if self.n_coupled is None else self.n_coupled
        if mc > M or M % mc:
            raise ValueError(f"M={M} is not divisible by M_c={mc}")
        mask[:: M // mc] = True
        return mask

    def step_active(self, n_steps: int) -> np.ndarray:
        """Whether each of the first ``n_steps`` prediction steps is an update step.

        The random stream is consumed one draw per step, so the result for step
        ``t`` does not depend on ``n_steps``.
        """
        if self.mode == "random":
            return self._streams()[1].random(n_steps) < self.p_t
        return (np.arange(n_steps) % self.period) < self.active

    def mask_table(self, n_steps: int, M: int) -> np.ndarray:
        """Boolean ``(n_steps, M)`` table of active (step, site) pairs."""
        return np.outer(self.step_active(n_steps), self.site_mask(M))

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "c": self.c}
        if self.mode == "regular":
            d.update(period=self.period, active=self.active)
            if self.n_coupled is not None:
                d["n_coupled"] = self.n_coupled
            if self.sites is not None:
                d["sites"] = list(self.sites)
        else:
            d.update(p_t=self.p_t, p_s=self.p_s, seed=self.seed)
        return d


def active_mask(schedule: UpdateSchedule, t: int, M: int) -> np.ndarray:
    """Site mask for prediction step ``t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return schedule.mask_table(t + 1, M)[t]


def apply_update(v, u_true, mask, c: float) -> np.ndarray:
    """Return ``v`` with masked components pulled toward ``u_true`` by ``c``.

    ``mask`` may be per site while ``v`` is per channel: with ``k`` interleaved
    channels per site (k=2 for real/imaginary pairs) each site's flag covers
    its ``k`` consecutive channels.
    """
    v = np.asarray(v, dtype=float)
    u_true = np.asarray(u_true, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if v.shape != u_true.shape:
        raise ValueError("v and u_true must have equal length")
    if mask.shape[-1] != v.shape[-1]:
        k, rem = divmod(v.shape[-1], mask.shape[-1])
        if rem:
            raise ValueError("mask length must divide the channel count")
        mask = np.repeat(mask, k, axis=-1)
    # (1 - c) v + c u equals v + c (u - v) and is exact at c = 0 and c = 1
    return np.where(mask, (1.0 - c) * v + c * u_true, v)


def expand_sites(mask: np.ndarray, channels_per_site: int) -> np.ndarray:
    if channels_per_site == 1:
        return mask
    return np.repeat(mask, channels_per_site, axis=-1)
