"""Echo-state network: construction, ridge-regression training, prediction.

The reservoir evolves as ``r <- tanh(A r + W_in v)`` and reads out
``v = W_out f(r)`` where ``f`` squares every second component (0-based odd
indices), leaving the first component linear.  During training ``v`` is the
true signal; in closed loop it is the network's own output, optionally pulled
toward sparse true measurements by an :class:`~rarecast.updating.UpdateSchedule`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import blas, lapack
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from . import _binfmt
from .dynsys import TrajectoryBuffer
from .updating import UpdateSchedule, expand_sites

__all__ = [
    "ReservoirParams",
    "ReservoirModel",
    "TrainReport",
    "ReservoirDivergence",
    "TrainingError",
    "build",
    "spectral_radius",
    "readout_features",
    "drive",
    "collect_features",
    "train",
    "predict_closed_loop",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

WARMUP = 100
WASHOUT = 1000
_BLOCK = 1000
_DENSE_EIG_LIMIT = 1200


class ReservoirDivergence(RuntimeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"closed-loop output became non-finite at prediction step {step}")


class TrainingError(RuntimeError):
    def __init__(self, message: str, condition: float):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


@dataclass(frozen=True)
class ReservoirParams:
    """Hyperparameters of the network.

    Exactly one of ``degree`` (expected out-degree, edge probability
    ``degree / n_reservoir``) and ``density`` (edge probability) is given.
    ``input_coupling="per_node"`` gives every node a single input channel
    (contiguous blocks of ``n_reservoir / n_in`` nodes per channel) instead of
    a dense ``W_in``.
    """

    n_reservoir: int
    n_in: int
    sigma: float
    rho: float
    eta: float
    degree: float | None = None
    density: float | None = None
    n_out: int | None = None
    seed: int = 0
    input_coupling: str = "dense"

    def __post_init__(self):
        if self.input_coupling not in ("dense", "per_node"):
            raise ValueError(f"unknown input_coupling {self.input_coupling!r}")
        if self.n_out is None:
            object.__setattr__(self, "n_out", self.n_in)
        if not 1 <= self.n_in <= self.n_reservoir:
            raise ValueError("need 1 <= n_in <= n_reservoir")
        if self.n_out < 1:
            raise ValueError("n_out must be positive")
        if self.sigma < 0 or self.rho <= 0 or self.eta <= 0:
            raise ValueError("need sigma >= 0, rho > 0, eta > 0")
        if (self.degree is None) == (self.density is None):
            raise ValueError("give exactly one of degree or density")
        if self.degree is not None and not 0 < self.degree <= self.n_reservoir:
            raise ValueError("degree must lie in (0, n_reservoir]")
        if self.density is not None and not 0 < self.density <= 1:
            raise ValueError("density must lie in (0, 1]")

    @property
    def edge_probability(self) -> float:
        if self.density is not None:
            return self.density
        return self.degree / self.n_reservoir


@dataclass
class TrainReport:
    n_train_steps: int
    washout: int
    residual_rms: np.ndarray
    condition_estimate: float

    def to_dict(self) -> dict:
        return {
            "n_train_steps": self.n_train_steps,
            "washout": self.washout,
            "residual_rms": [float(x) for x in self.residual_rms],
            "condition_estimate": float(self.condition_estimate),
        }


@dataclass
class ReservoirModel:
    params: ReservoirParams
    W_in: np.ndarray
    A: sp.csr_matrix
    W_out: np.ndarray | None = None
    r: np.ndarray = field(default=None)
    seed_used: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.r is None:
            self.r = np.zeros(self.params.n_reservoir)

    @property
    def trained(self) -> bool:
        return self.W_out is not None

    def reset(self) -> None:
        self.r = np.zeros(self.params.n_reservoir)


def spectral_radius(A, seed: int = 0) -> float:
    """Largest eigenvalue modulus; dense LAPACK for small matrices, ARPACK otherwise."""
    n = A.shape[0]
    if n <= _DENSE_EIG_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        return float(np.max(np.abs(np.linalg.eigvals(dense))))
    if A.nnz == 0:
        return 0.0
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        vals = eigs(A, k=1, which="LM", v0=v0, ncv=min(n, 64), tol=1e-12, maxiter=20000,
                    return_eigenvectors=False)
    except ArpackNoConvergence as exc:  # pragma: no cover - large random graphs converge
        vals = exc.eigenvalues
        if len(vals) == 0:
            raise
    return float(np.max(np.abs(vals)))


def _random_adjacency(n: int, p: float, rng: np.random.Generator) -> sp.csr_matrix:
    # Independent Bernoulli(p) edges: binomial count, then uniform distinct positions.
    k = int(rng.binomial(n * n, p))
    flat = rng.choice(n * n, size=k, replace=False)
    flat.sort()
    vals = rng.uniform(-1.0, 1.0, size=k)
    rows, cols = np.divmod(flat, n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _input_matrix(params: ReservoirParams, rng: np.random.Generator) -> np.ndarray:
    n, k = params.n_reservoir, params.n_in
    if params.input_coupling == "dense":
        return rng.uniform(-params.sigma, params.sigma, size=(n, k))
    W_in = np.zeros((n, k))
    W_in[np.arange(n), np.arange(n) * k // n] = rng.uniform(-params.sigma, params.sigma, size=n)
    return W_in


def build(params: ReservoirParams, max_retries: int = 10) -> ReservoirModel:
    """Draw ``W_in`` and ``A`` from ``params.seed`` and rescale ``A`` to spectral radius ``rho``."""
    seed = params.seed
    for _ in range(max_retries + 1):
        rng = np.random.default_rng(seed)
        W_in = _input_matrix(params, rng)
        A = _random_adjacency(params.n_reservoir, params.edge_probability, rng)
        radius = spectral_radius(A, seed)
        if radius >= 1e-12:
            A = (A * (params.rho / radius)).tocsr()
            if seed != params.seed:
                log.warning("adjacency for seed %d was nilpotent; rebuilt with seed %d",
                            params.seed, seed)
            return ReservoirModel(params, W_in, A, seed_used=seed)
        seed += 1
    raise RuntimeError(f"no non-nilpotent adjacency found after {max_retries} retries")


def readout_features(r) -> np.ndarray:
    """Pass components 0, 2, 4, ... through and square components 1, 3, 5, ... (last axis)."""
    g = np.array(r, dtype=float, copy=True)
    g[..., 1::2] **= 2
    return g


def drive(model: ReservoirModel, v) -> np.ndarray:
    """One reservoir step with input ``v``; updates and returns ``model.r``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (model.params.n_in,):
        raise ValueError(f"input must have length {model.params.n_in}, got {v.shape}")
    model.r = np.tanh(model.A @ model.r + model.W_in @ v)
    return model.r


def _teacher_blocks(model: ReservoirModel, U: np.ndarray, washout: int, block: int = _BLOCK):
    """Yield ``(features, targets)`` blocks for the teacher-forced pass.

    Starting from ``r = 0``, the state driven by ``U[t]`` is paired with the
    target ``U[t + 1]``; the first ``washout`` pairs are skipped.
    """
    A, W_in = model.A, model.W_in
    r = np.zeros(model.params.n_reservoir)
    n_pairs = U.shape[0] - 1
    for start in range(0, n_pairs, block):
        stop = min(start + block, n_pairs)
        drive_in = U[start:stop] @ W_in.T
        states = np.empty((stop - start, r.size))
        for i in range(stop - start):
            r = np.tanh(A @ r + drive_in[i])
            states[i] = r
        lo = max(washout - start, 0)
        if lo < stop - start:
            feats = states[lo:]
            feats[:, 1::2] **= 2
            yield feats, U[start + 1 + lo : stop + 1]
    model.r = r


def collect_features(model: ReservoirModel, traj, washout: int = WASHOUT):
    """Teacher-forced feature matrix ``G`` (steps x n_reservoir) and targets ``U``."""
    U = traj.data if isinstance(traj, TrajectoryBuffer) else np.asarray(traj, dtype=float)
    feats, targets = zip(*_teacher_blocks(model, U, washout))
    return np.vstack(feats), np.vstack(targets)


def train(model: ReservoirModel, traj, washout: int = WASHOUT) -> TrainReport:
    """Fit ``W_out`` by ridge regression on the teacher-forced pass.

    Minimises ``sum_t |u(t) - W_out g(t)|^2 + eta |W_out|_F^2`` through the
    normal equations ``(G G^T + eta I) W_out^T = G U^T`` with a Cholesky solve.
    """
    U = traj.data if isinstance(traj, TrajectoryBuffer) else np.asarray(traj, dtype=float)
    p = model.params
    if U.ndim != 2 or U.shape[1] != p.n_in:
        raise ValueError(f"training data must have {p.n_in} channels")
    if p.n_out != p.n_in:
        raise ValueError("training on a single trajectory needs n_out == n_in")
    if U.shape[0] <= washout + 1:
        raise ValueError("trajectory is too short for the requested washout")

    n = p.n_reservoir
    gram = np.zeros((n, n), order="F")
    cross = np.zeros((n, p.n_out))
    sq = np.zeros(p.n_out)
    count = 0
    for feats, targets in _teacher_blocks(model, U, washout):
        gram = blas.dsyrk(1.0, feats.T, beta=1.0, c=gram, trans=0, lower=0, overwrite_c=1)
        cross += feats.T @ targets
        sq += np.einsum("ij,ij->j", targets, targets)
        count += feats.shape[0]

    gram[np.diag_indices(n)] += p.eta
    anorm = _sym_one_norm(gram)
    chol, info = lapack.dpotrf(gram, lower=0, clean=0, overwrite_a=1)
    del gram
    if info != 0:
        raise TrainingError("normal equations are not positive definite", math.inf)
    rcond, _ = lapack.dpocon(chol, anorm)
    cond = 1.0 / rcond if rcond > 0 else math.inf
    W_out_T, info = lapack.dpotrs(chol, cross, lower=0)
    if info != 0 or not np.isfinite(W_out_T).all():
        raise TrainingError("ridge solve produced non-finite weights", cond)
    model.W_out = np.ascontiguousarray(W_out_T.T)

    sse = np.zeros(p.n_out)
    for feats, targets in _teacher_blocks(model, U, washout):
        resid = targets - feats @ model.W_out.T
        sse += np.einsum("ij,ij->j", resid, resid)
    report = TrainReport(U.shape[0], washout, np.sqrt(sse / count), cond)
    model.meta["train"] = report.to_dict()
    model.reset()
    return report


def _sym_one_norm(upper: np.ndarray, block: int = 1024) -> float:
    """1-norm of a symmetric matrix stored in its upper triangle."""
    n = upper.shape[0]
    col = np.zeros(n)
    for s in range(0, n, block):
        e = min(s + block, n)
        blk = np.abs(upper[:e, s:e])
        tri = np.triu(blk[s:e])
        # columns s:e get their upper part; rows s:e (as columns) get the mirrored part
        col[s:e] += blk[:s].sum(axis=0) + tri.sum(axis=0)
        col[:s] += blk[:s].sum(axis=1)
        col[s:e] += tri.sum(axis=1) - np.diag(tri)
    return float(col.max())


def _input_operator(W_in: np.ndarray):
    # per-node input matrices are mostly zeros; a sparse product is much cheaper
    if W_in.size > 4096 and np.count_nonzero(W_in) < 0.1 * W_in.size:
        return sp.csr_matrix(W_in)
    return W_in


def predict_closed_loop(
    model: ReservoirModel,
    warmup,
    n_steps: int,
    schedule: UpdateSchedule | None = None,
    truth=None,
    n_sites: int | None = None,
    return_inputs: bool = False,
):
    """Teacher-force ``warmup`` from ``r = 0``, then run ``n_steps`` autonomously.

    Row ``t`` of the result is the network output for the step following the
    warmup by ``t + 1``.  With a schedule, ``truth`` row ``t`` must be the true
    state at that same time; at active (step, site) pairs the fed-back input is
    ``v + c (u - v)``.  The recorded output is always the network's own
    prediction, before any update.  ``n_sites`` groups channels into sites
    (default: one channel per site).

    With ``return_inputs=True`` the inputs actually fed back are returned too.
    """
    if not model.trained:
        raise RuntimeError("model has no trained readout")
    W = warmup.data if isinstance(warmup, TrajectoryBuffer) else np.asarray(warmup, dtype=float)
    dt = warmup.dt if isinstance(warmup, TrajectoryBuffer) else 1.0
    names = warmup.channel_names if isinstance(warmup, TrajectoryBuffer) else ()
    D = model.params.n_out
    if W.ndim != 2 or W.shape[1] != model.params.n_in or len(W) < 1:
        raise ValueError("warmup must be a non-empty (steps x n_in) segment")

    masks = None
    if schedule is not None:
        if truth is None:
            raise ValueError("an update schedule needs the true trajectory")
        Ut = truth.data if isinstance(truth, TrajectoryBuffer) else np.asarray(truth, dtype=float)
        if Ut.shape[0] < n_steps or Ut.shape[1] != D:
            raise ValueError("truth must cover n_steps rows of every output channel")
        M = D if n_sites is None else n_sites
        if D % M:
            raise ValueError("channel count must be a multiple of n_sites")
        masks = expand_sites(schedule.mask_table(n_steps, M), D // M)
        c = schedule.c
        if not masks.any():
            masks = None

    A, W_in, W_out = model.A, _input_operator(model.W_in), model.W_out
    r = np.zeros(model.params.n_reservoir)
    for u in W:
        r = np.tanh(A @ r + W_in @ u)

    out = np.empty((n_steps, D))
    fed = np.empty((n_steps, D)) if return_inputs else None
    g = np.empty_like(r)
    for t in range(n_steps):
        np.copyto(g, r)
        g[1::2] *= r[1::2]
        v = W_out @ g
        if not np.isfinite(v).all():
            raise ReservoirDivergence(t)
        out[t] = v
        if masks is not None and masks[t].any():
            m = masks[t]
            v = v.copy()
            v[m] = (1.0 - c) * v[m] + c * Ut[t, m]
        if fed is not None:
            fed[t] = v
        r = np.tanh(A @ r + W_in @ v)
    model.r = r
    pred = TrajectoryBuffer(out, dt, names)
    if return_inputs:
        return pred, fed
    return pred


def save_model(model: ReservoirModel, path) -> None:
    """Write a snapshot: JSON header plus W_in, A (coordinate list) and W_out."""
    coo = model.A.tocoo()
    arrays = {
        "W_in": model.W_in,
        "A_row": coo.row.astype(np.int64),
        "A_col": coo.col.astype(np.int64),
        "A_val": coo.data.astype(float),
    }
    if model.W_out is not None:
        arrays["W_out"] = model.W_out
    header = {
        "kind": "reservoir-model",
        "params": asdict(model.params),
        "seed_used": model.seed_used,
        "meta": model.meta,
        "A_shape": list(model.A.shape),
    }
    _binfmt.write(path, header, arrays)


def load_model(path) -> ReservoirModel:
    header, arrays = _binfmt.read(path)
    if header.get("kind") != "reservoir-model":
        raise ValueError(f"{path}: not a reservoir model snapshot")
    params = ReservoirParams(**header["params"])
    n = header["A_shape"][0]
    A = sp.csr_matrix((arrays["A_val"], (arrays["A_row"], arrays["A_col"])), shape=(n, n))
    return ReservoirModel(
        params,
        arrays["W_in"],
        A,
        arrays.get("W_out"),
        seed_used=header["seed_used"],
        meta=header["meta"],
    )
