"""Ground-truth data for the six target systems.

Four three-variable ODEs (Rossler, Lorenz, Hindmarsh-Rose, a food web) are
integrated with fixed-step RK4; the Kuramoto-Sivashinsky equation and the 1D
complex Ginzburg-Landau equation are integrated pseudospectrally with ETDRK4.
Everything here is deterministic: the same inputs give bit-identical output.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from . import _binfmt

__all__ = [
    "IntegrationBlowUp",
    "TrajectoryBuffer",
    "OdeSystem",
    "PdeSystem",
    "ode_system",
    "kse",
    "cgle",
    "integrate_ode",
    "integrate_kse",
    "integrate_cgle",
    "integrate",
    "default_initial_state",
    "Etdrk4",
]

BLOWUP_LIMIT = 1e6
ODE_DISCARD = 5000
PDE_DISCARD = 2000


class IntegrationBlowUp(RuntimeError):
    """Raised when a trajectory leaves the bounded region or turns non-finite."""

    def __init__(self, step: int, system: str = ""):
        self.step = step
        where = f" ({system})" if system else ""
        super().__init__(f"integration blew up at step {step}{where}")


@dataclass
class TrajectoryBuffer:
    """Time-major matrix of states, one row per step of size ``dt``."""

    data: np.ndarray
    dt: float
    channel_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("trajectory data must be 2-D (steps x channels)")
        if not self.channel_names:
            self.channel_names = tuple(f"c{i}" for i in range(self.data.shape[1]))
        self.channel_names = tuple(self.channel_names)
        if len(self.channel_names) != self.data.shape[1]:
            raise ValueError("channel_names length does not match data width")
        if not np.isfinite(self.data).all():
            raise ValueError("trajectory contains NaN or Inf")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def segment(self, start: int, stop: int | None = None) -> "TrajectoryBuffer":
        return TrajectoryBuffer(self.data[start:stop], self.dt, self.channel_names)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.channel_names)
            for row in self.data:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, dt: float) -> "TrajectoryBuffer":
        # CSV carries no step size; callers supply it from the config.
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        names = tuple(rows[0])
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
        return cls(data.reshape(-1, len(names)), dt, names)

    def to_bin(self, path) -> None:
        header = {
            "dims": list(self.data.shape),
            "dt": self.dt,
            "channels": list(self.channel_names),
        }
        _binfmt.write(path, header, {"data": self.data})

    @classmethod
    def from_bin(cls, path) -> "TrajectoryBuffer":
        header, arrays = _binfmt.read(path)
        return cls(arrays["data"], header["dt"], tuple(header["channels"]))

    def save(self, path, fmt: str = "csv") -> None:
        if fmt == "csv":
            self.to_csv(path)
        elif fmt == "bin":
            self.to_bin(path)
        else:
            raise ValueError(f"unknown trajectory format {fmt!r}")

    @classmethod
    def load(cls, path, dt: float | None = None) -> "TrajectoryBuffer":
        path = Path(path)
        if path.suffix == ".csv":
            if dt is None:
                raise ValueError("dt is required to load a CSV trajectory")
            return cls.from_csv(path, dt)
        return cls.from_bin(path)


# ---------------------------------------------------------------------------
# ODE systems

_ODE_IDS = {"rossler": 0, "lorenz": 1, "hindmarsh_rose": 2, "food_web": 3}
_ODE_DT = {"rossler": 0.05, "lorenz": 0.01, "hindmarsh_rose": 0.1, "food_web": 0.1}
_ODE_BASE = {
    "rossler": (1.0, 1.0, 0.0),
    "lorenz": (1.0, 1.0, 1.0),
    "hindmarsh_rose": (-1.0, -5.0, 3.0),
    "food_web": (10.0, 5.0, 0.01),
}
_ALIASES = {
    "hr": "hindmarsh_rose",
    "hindmarshrose": "hindmarsh_rose",
    "foodweb": "food_web",
}


@njit(cache=True)
def _rhs(k, s):
    x, y, z = s[0], s[1], s[2]
    out = np.empty(3)
    if k == 0:
        out[0] = -y - z
        out[1] = x + 0.2 * y
        out[2] = 0.2 + (x - 9.0) * z
    elif k == 1:
        out[0] = 10.0 * (y - x)
        out[1] = x * (28.0 - z) - y
        out[2] = x * y - 8.0 / 3.0 * z
    elif k == 2:
        out[0] = y + 3.0 * x * x - x * x * x - z + 3.2
        out[1] = 1.0 - 5.0 * x * x - y
        out[2] = -0.006 * z + 0.024 * (x + 1.6)
    else:
        q = 1.0 + 0.05 * x
        out[0] = x - 0.2 * x * y / q
        out[1] = -y + 0.2 * x * y / q - y * z
        out[2] = -10.0 * (z - 0.006) + y * z
    return out


@njit(cache=True)
def _jac(k, s):
    x, y, z = s[0], s[1], s[2]
    J = np.zeros((3, 3))
    if k == 0:
        J[0, 1] = -1.0
        J[0, 2] = -1.0
        J[1, 0] = 1.0
        J[1, 1] = 0.2
        J[2, 0] = z
        J[2, 2] = x - 9.0
    elif k == 1:
        J[0, 0] = -10.0
        J[0, 1] = 10.0
        J[1, 0] = 28.0 - z
        J[1, 1] = -1.0
        J[1, 2] = -x
        J[2, 0] = y
        J[2, 1] = x
        J[2, 2] = -8.0 / 3.0
    elif k == 2:
        J[0, 0] = 6.0 * x - 3.0 * x * x
        J[0, 1] = 1.0
        J[0, 2] = -1.0
        J[1, 0] = -10.0 * x
        J[1, 1] = -1.0
        J[2, 0] = 0.024
        J[2, 2] = -0.006
    else:
        q = 1.0 + 0.05 * x
        dfx = 0.2 * y / (q * q)  # d/dx [0.2 x y / q]
        fy = 0.2 * x / q
        J[0, 0] = 1.0 - dfx
        J[0, 1] = -fy
        J[1, 0] = dfx
        J[1, 1] = -1.0 + fy - z
        J[1, 2] = -y
        J[2, 1] = z
        J[2, 2] = -10.0 + y
    return J


@njit(cache=True)
def _rk4_ode(k, x0, h, substeps, n_total, keep_from):
    """Returns (states kept from step ``keep_from`` on, blow-up step or -1)."""
    x = x0.copy()
    out = np.empty((n_total - keep_from, 3))
    if keep_from == 0:
        out[0] = x
    for i in range(1, n_total):
        for _ in range(substeps):
            k1 = _rhs(k, x)
            k2 = _rhs(k, x + 0.5 * h * k1)
            k3 = _rhs(k, x + 0.5 * h * k2)
            k4 = _rhs(k, x + h * k3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for j in range(3):
            if not (abs(x[j]) <= 1e6):
                return out, i
        if i >= keep_from:
            out[i - keep_from] = x
    return out, -1


@dataclass(frozen=True)
class OdeSystem:
    """One of the four three-variable chaotic flows, with its standard chaotic parameters.

    ``dt`` is the sampling step; each sample is reached with ``substeps`` RK4
    steps of size ``dt / substeps``.
    """

    name: str
    dt: float
    substeps: int = 5
    dimension: int = 3
    channel_names: tuple[str, ...] = ("x", "y", "z")

    def __post_init__(self):
        if self.name not in _ODE_IDS:
            raise ValueError(f"unknown ODE system {self.name!r}")
        if self.dt <= 0 or self.substeps < 1:
            raise ValueError("dt must be positive and substeps >= 1")

    @property
    def kind(self) -> int:
        return _ODE_IDS[self.name]

    def rhs(self, state) -> np.ndarray:
        return _rhs(self.kind, np.asarray(state, dtype=float))

    def jacobian(self, state) -> np.ndarray:
        return _jac(self.kind, np.asarray(state, dtype=float))


def _canonical(name: str) -> str:
    key = name.lower().replace("-", "_").replace(" ", "_").replace("ö", "o")
    return _ALIASES.get(key.replace("_", ""), _ALIASES.get(key, key))


def ode_system(name: str, dt: float | None = None, substeps: int = 5) -> OdeSystem:
    name = _canonical(name)
    if name not in _ODE_IDS:
        raise ValueError(f"unknown ODE system {name!r}")
    return OdeSystem(name, _ODE_DT[name] if dt is None else float(dt), substeps)


def integrate_ode(
    system: OdeSystem, x0, n_steps: int, discard: int = ODE_DISCARD
) -> TrajectoryBuffer:
    """Integrate ``system`` from ``x0``; row ``j`` holds the state at step ``discard + j``."""
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    if discard < 0:
        raise ValueError("discard must be non-negative")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (3,) or not np.isfinite(x0).all():
        raise ValueError("x0 must be a finite 3-vector")
    h = system.dt / system.substeps
    out, bad = _rk4_ode(system.kind, x0, h, system.substeps, discard + n_steps, discard)
    if bad >= 0:
        raise IntegrationBlowUp(bad, system.name)
    return TrajectoryBuffer(out, system.dt, system.channel_names)


# ---------------------------------------------------------------------------
# PDE systems


@dataclass(frozen=True)
class PdeSystem:
    """Periodic 1D field on ``M`` grid points.

    KSE: ``y_t + y y_x + y_xx + y_xxxx = 0`` on ``(0, L)``.
    CGLE: ``A_t = (1 + i alpha) A_xx + A - (1 + i beta) |A|^2 A`` on ``(-L/2, L/2)``.
    ``nonlinear=False`` keeps only the linear part (used for checks).
    """

    name: str
    L: float
    M: int
    dt: float
    alpha: float = 0.0
    beta: float = 0.0
    nonlinear: bool = True

    def __post_init__(self):
        if self.name not in ("kse", "cgle"):
            raise ValueError(f"unknown PDE system {self.name!r}")
        if self.M < 4 or self.M & (self.M - 1):
            raise ValueError(f"M must be a power of two, got {self.M}")
        if self.L <= 0 or self.dt <= 0:
            raise ValueError("L and dt must be positive")

    @property
    def x(self) -> np.ndarray:
        start = 0.0 if self.name == "kse" else -self.L / 2
        return start + self.L * np.arange(self.M) / self.M

    @property
    def channel_names(self) -> tuple[str, ...]:
        if self.name == "kse":
            return tuple(f"y{j}" for j in range(self.M))
        return tuple(n for j in range(self.M) for n in (f"re{j}", f"im{j}"))

    @property
    def n_channels(self) -> int:
        return self.M if self.name == "kse" else 2 * self.M

    @property
    def channels_per_site(self) -> int:
        return 1 if self.name == "kse" else 2

    def stepper(self) -> "Etdrk4":
        M = self.M
        cut = M // 3
        if self.name == "kse":
            n = np.arange(M // 2 + 1)
            k = 2 * np.pi * n / self.L
            lin = k**2 - k**4
            ik = 1j * k
            ik[-1] = 0.0  # Nyquist mode carries no odd derivative
            keep = n <= cut

            def nonlin(v):
                y = np.fft.irfft(v, n=M, axis=-1)
                return keep * (-0.5 * ik) * np.fft.rfft(y * y, axis=-1)

            to_phys = lambda v: np.fft.irfft(v, n=M, axis=-1)
            to_spec = lambda y: np.fft.rfft(y, axis=-1)
        else:
            n = np.fft.fftfreq(M, 1.0 / M)
            k = 2 * np.pi * n / self.L
            lin = 1.0 - (1.0 + 1j * self.alpha) * k**2
            keep = np.abs(n) <= cut
            g = 1.0 + 1j * self.beta

            def nonlin(v):
                a = np.fft.ifft(v, axis=-1)
                return keep * (-g) * np.fft.fft((a.real**2 + a.imag**2) * a, axis=-1)

            to_phys = lambda v: np.fft.ifft(v, axis=-1)
            to_spec = lambda a: np.fft.fft(a, axis=-1)
        if not self.nonlinear:
            nonlin = None
        return Etdrk4(lin, nonlin, self.dt, to_phys=to_phys, to_spec=to_spec)


class Etdrk4:
    """Exponential time differencing RK4 for ``v_t = lin * v + N(v)`` in Fourier space.

    Coefficients use the contour-integral evaluation of Kassam and Trefethen
    over a full circle, so complex linear operators are handled as well.
    """

    def __init__(self, lin, nonlin, h, n_contour: int = 64, to_phys=None, to_spec=None):
        lin = np.asarray(lin)
        self.lin = lin
        self.nonlin = nonlin
        self.h = h
        self.to_phys = to_phys
        self.to_spec = to_spec
        self.E = np.exp(h * lin)
        self.E2 = np.exp(h * lin / 2)
        roots = np.exp(2j * np.pi * (np.arange(n_contour) + 0.5) / n_contour)
        LR = h * lin[:, None] + roots[None, :]
        eLR = np.exp(LR)
        self.Q = h * np.mean((np.exp(LR / 2) - 1) / LR, axis=1)
        self.f1 = h * np.mean((-4 - LR + eLR * (4 - 3 * LR + LR**2)) / LR**3, axis=1)
        self.f2 = h * np.mean((2 + LR + eLR * (LR - 2)) / LR**3, axis=1)
        self.f3 = h * np.mean((-4 - 3 * LR - LR**2 + eLR * (4 - LR)) / LR**3, axis=1)
        if np.isrealobj(lin):
            for name in ("E", "E2", "Q", "f1", "f2", "f3"):
                setattr(self, name, np.real(getattr(self, name)))

    def step(self, v):
        if self.nonlin is None:
            return self.E * v
        N = self.nonlin
        Nv = N(v)
        a = self.E2 * v + self.Q * Nv
        Na = N(a)
        b = self.E2 * v + self.Q * Na
        Nb = N(b)
        c = self.E2 * a + self.Q * (2 * Nb - Nv)
        Nc = N(c)
        return self.E * v + Nv * self.f1 + 2 * (Na + Nb) * self.f2 + Nc * self.f3


def kse(L: float = 22.0, M: int = 64, dt: float = 0.25, nonlinear: bool = True) -> PdeSystem:
    return PdeSystem("kse", L, M, dt, nonlinear=nonlinear)


def cgle(
    L: float = 18.0,
    M: int = 32,
    dt: float = 0.07,
    alpha: float = 2.0,
    beta: float = -2.0,
    nonlinear: bool = True,
) -> PdeSystem:
    return PdeSystem("cgle", L, M, dt, alpha, beta, nonlinear)


def _run_pde(system: PdeSystem, field0, n_steps: int, discard: int) -> np.ndarray:
    if n_steps <= 0:
        raise ValueError("n_steps must be positive")
    st = system.stepper()
    v = st.to_spec(field0)
    total = discard + n_steps
    out = np.empty((n_steps, system.M), dtype=field0.dtype)
    u = field0
    for i in range(total):
        if i > 0:
            v = st.step(v)
            u = st.to_phys(v)
            if not np.all(np.abs(u) <= BLOWUP_LIMIT):
                raise IntegrationBlowUp(i, system.name)
        if i >= discard:
            out[i - discard] = u
    return out


def integrate_kse(
    system: PdeSystem, y0, n_steps: int, discard: int = PDE_DISCARD
) -> TrajectoryBuffer:
    if system.name != "kse":
        raise ValueError("integrate_kse needs a KSE system")
    y0 = np.asarray(y0)
    if np.iscomplexobj(y0) or y0.shape != (system.M,):
        raise ValueError(f"y0 must be a real field of length {system.M}")
    out = _run_pde(system, y0.astype(float), n_steps, discard)
    return TrajectoryBuffer(out, system.dt, system.channel_names)


def integrate_cgle(
    system: PdeSystem, A0, n_steps: int, discard: int = PDE_DISCARD
) -> TrajectoryBuffer:
    if system.name != "cgle":
        raise ValueError("integrate_cgle needs a CGLE system")
    A0 = np.asarray(A0, dtype=complex)
    if A0.shape != (system.M,):
        raise ValueError(f"A0 must be a complex field of length {system.M}")
    out = _run_pde(system, A0, n_steps, discard)
    inter = np.empty((n_steps, 2 * system.M))
    inter[:, 0::2] = out.real
    inter[:, 1::2] = out.imag
    return TrajectoryBuffer(inter, system.dt, system.channel_names)


def default_initial_state(system, seed: int = 0) -> np.ndarray:
    """Seeded small perturbation of a fixed base point.

    ODEs: base point plus 1e-2 Gaussian noise.  KSE: a few low cosine modes with
    random amplitudes (zero mean).  CGLE: unit-modulus field plus 1e-2 complex
    noise, which the Benjamin-Feir instability carries into chaos.
    """
    rng = np.random.default_rng(seed)
    if isinstance(system, OdeSystem):
        return np.asarray(_ODE_BASE[system.name]) + 1e-2 * rng.standard_normal(3)
    x = system.x
    if system.name == "kse":
        y = np.zeros(system.M)
        for m in range(1, 5):
            a, b = 0.5 * rng.standard_normal(2)
            y += a * np.cos(2 * np.pi * m * x / system.L) + b * np.sin(2 * np.pi * m * x / system.L)
        return y
    noise = rng.standard_normal(system.M) + 1j * rng.standard_normal(system.M)
    return np.ones(system.M, dtype=complex) + 1e-2 * noise


def integrate(system, x0, n_steps: int, discard: int | None = None) -> TrajectoryBuffer:
    """Dispatch to the integrator matching ``system``."""
    if isinstance(system, OdeSystem):
        return integrate_ode(system, x0, n_steps, ODE_DISCARD if discard is None else discard)
    d = PDE_DISCARD if discard is None else discard
    if system.name == "kse":
        return integrate_kse(system, x0, n_steps, d)
    return integrate_cgle(system, x0, n_steps, d)
