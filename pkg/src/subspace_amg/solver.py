"""Two-level subspace preconditioner, PCG, and a smoothed-aggregation baseline."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NotSPDError
from .linalg import CholeskyFactor, SparseCsrMatrix, qr_thin, spmv
from .smoothing import DEFAULT_OMEGA, JacobiSmoother

DEFAULT_DELTA = 1e-6
DEFAULT_NU = 5
DEFAULT_THETA = 0.25

REPORT_FIELDS = ("method", "family", "N", "K", "n_c", "seed", "iterations", "converged",
                 "inference_ms", "setup_ms", "solve_ms", "total_ms")


def _ms_since(t0: float) -> float:
    return 1e3 * (time.perf_counter() - t0)


@dataclass(frozen=True, eq=False)
class TwoLevelPreconditioner:
    A: SparseCsrMatrix
    U: np.ndarray
    A_c: np.ndarray
    factor: CholeskyFactor
    smoother: JacobiSmoother
    nu1: int = DEFAULT_NU
    nu2: int = DEFAULT_NU
    setup_ms: float = 0.0

    @property
    def n_c(self) -> int:
        return self.U.shape[1]

    def __call__(self, rhs) -> np.ndarray:
        return apply_two_level(self, self.A, rhs)


def build_preconditioner(A: SparseCsrMatrix, U_r, omega: float = DEFAULT_OMEGA,
                         nu1: int = DEFAULT_NU, nu2: int = DEFAULT_NU) -> TwoLevelPreconditioner:
    """Orthonormalise ``U_r``, form ``A_c = U^T A U`` densely and factor it once."""
    t0 = time.perf_counter()
    U_r = np.asarray(U_r, dtype=np.float64)
    if U_r.ndim != 2 or U_r.shape[0] != A.dim:
        raise DimensionError(f"basis of shape {U_r.shape} does not match n = {A.dim}")
    if U_r.shape[1] == 0:
        raise DimensionError("coarse space must have at least one column")
    U, _ = qr_thin(U_r)
    A_c = U.T @ spmv(A, U)
    A_c = 0.5 * (A_c + A_c.T)
    try:
        factor = CholeskyFactor(A_c)
    except NotSPDError as exc:
        raise NotSPDError(f"coarse matrix is not SPD; the basis is broken ({exc})") from exc
    smoother = JacobiSmoother.from_matrix(A, omega)
    return TwoLevelPreconditioner(A, U, A_c, factor, smoother, int(nu1), int(nu2),
                                  _ms_since(t0))


def apply_two_level(M: TwoLevelPreconditioner, A: SparseCsrMatrix, rhs) -> np.ndarray:
    """One cycle from a zero guess: pre-smooth, coarse correction, post-smooth."""
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != A.dim:
        raise DimensionError(f"rhs length {rhs.shape[0]} != {A.dim}")
    z = np.zeros_like(rhs)
    for _ in range(M.nu1):
        z = M.smoother.sweep(A, z, rhs)
    r = rhs - spmv(A, z)
    z = z + M.U @ M.factor.solve(M.U.T @ r)
    for _ in range(M.nu2):
        z = M.smoother.sweep(A, z, rhs)
    return z


def identity_preconditioner(r):
    return np.array(r, dtype=np.float64, copy=True)


@dataclass(frozen=True, eq=False)
class JacobiPreconditioner:
    inv_diag: np.ndarray

    @classmethod
    def from_matrix(cls, A: SparseCsrMatrix) -> "JacobiPreconditioner":
        return cls(1.0 / A.diagonal())

    def __call__(self, r):
        return self.inv_diag * r


@dataclass
class SolveReport:
    iterations: int
    history: list
    converged: bool
    method: str = "cg"
    n_c: int = 0
    inference_ms: float = 0.0
    setup_ms: float = 0.0
    solve_ms: float = 0.0
    total_ms: float = 0.0
    family: str = ""
    N: int = 0
    K: int = 0
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def finalize(self, inference_ms: float = 0.0, setup_ms: float = 0.0,
                 total_ms: float | None = None) -> "SolveReport":
        """Fill in the non-solve phases; ``total_ms`` defaults to their sum."""
        self.inference_ms = float(inference_ms)
        self.setup_ms = float(setup_ms)
        parts = self.inference_ms + self.setup_ms + self.solve_ms
        self.total_ms = parts if total_ms is None else float(total_ms)
        return self

    def csv_row(self) -> list:
        return [getattr(self, name) for name in REPORT_FIELDS]


def pcg(A: SparseCsrMatrix, b, preconditioner=None, delta: float = DEFAULT_DELTA,
        max_iters: int | None = None, x0=None):
    """Preconditioned conjugate gradients; stops when ``||r||/||b|| < delta``.

    ``preconditioner`` is any callable ``r -> M^{-1} r`` (identity when None).
    Returns ``(x, SolveReport)``; ``history[i]`` is the relative residual
    after ``i`` iterations.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.dim,):
        raise DimensionError(f"rhs length {b.shape} != ({A.dim},)")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        raise ValueError("right-hand side must be nonzero")
    M = identity_preconditioner if preconditioner is None else preconditioner
    max_iters = 10 * A.dim if max_iters is None else int(max_iters)
    x = np.zeros(A.dim) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - spmv(A, x)
    history = [float(np.linalg.norm(r)) / bnorm]
    converged = history[0] < delta
    it = 0
    if not converged:
        z = M(r)
        p = z.copy()
        rz = float(r @ z)
        while it < max_iters:
            Ap = spmv(A, p)
            pAp = float(p @ Ap)
            if pAp <= 0.0:
                raise NotSPDError(f"CG breakdown at iteration {it}: p^T A p = {pAp:.3e}")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            history.append(float(np.linalg.norm(r)) / bnorm)
            if history[-1] < delta:
                converged = True
                break
            z = M(r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
    report = SolveReport(it, history, converged, solve_ms=_ms_since(t0))
    report.total_ms = report.solve_ms
    return x, report


@dataclass(frozen=True, eq=False)
class SaProlongator:
    P: np.ndarray           # dense n x n_c smoothed prolongator
    T: np.ndarray           # tentative prolongator (normalised indicators)
    aggregates: np.ndarray  # aggregate id per fine node
    theta: float

    @property
    def n_c(self) -> int:
        return self.P.shape[1]


def strong_neighbours(A: SparseCsrMatrix, theta: float = DEFAULT_THETA) -> list[np.ndarray]:
    """Off-diagonal j with ``|A_ij| >= theta sqrt(A_ii A_jj)`` for each row i."""
    d = A.diagonal()
    rows = A.row_indices()
    cols = A.col_idx
    strong = (rows != cols) & (np.abs(A.values) >= theta * np.sqrt(np.abs(d[rows] * d[cols])))
    strong &= A.values != 0
    return [cols[A.row_ptr[i]:A.row_ptr[i + 1]][strong[A.row_ptr[i]:A.row_ptr[i + 1]]]
            for i in range(A.dim)]


def aggregate(A: SparseCsrMatrix, theta: float = DEFAULT_THETA) -> np.ndarray:
    """Greedy aggregation in three passes; returns an aggregate id per node."""
    nbrs = strong_neighbours(A, theta)
    agg = np.full(A.dim, -1, dtype=np.int64)
    count = 0
    # pass 1: root nodes whose whole strong neighbourhood is still free
    for i in range(A.dim):
        if agg[i] < 0 and len(nbrs[i]) and np.all(agg[nbrs[i]] < 0):
            agg[i] = count
            agg[nbrs[i]] = count
            count += 1
    # pass 2: attach leftovers to an adjacent aggregate
    pending = agg.copy()
    for i in range(A.dim):
        if agg[i] < 0:
            owners = pending[nbrs[i]]
            owners = owners[owners >= 0]
            if owners.size:
                agg[i] = owners[0]
    # pass 3: whatever remains (isolated nodes included) starts its own aggregate
    for i in range(A.dim):
        if agg[i] < 0:
            agg[i] = count
            free = nbrs[i][agg[nbrs[i]] < 0]
            agg[free] = count
            count += 1
    return agg


def sa_prolongator(A: SparseCsrMatrix, strength_threshold: float = DEFAULT_THETA,
                   omega: float = DEFAULT_OMEGA) -> SaProlongator:
    """``P = (I - omega D^{-1} A) T`` with T built from greedy aggregates."""
    agg = aggregate(A, strength_threshold)
    n_c = int(agg.max()) + 1
    sizes = np.bincount(agg, minlength=n_c)
    T = np.zeros((A.dim, n_c))
    T[np.arange(A.dim), agg] = 1.0 / np.sqrt(sizes[agg])
    P = JacobiSmoother.from_matrix(A, omega).sweep(A, T)
    return SaProlongator(P, T, agg, float(strength_threshold))
