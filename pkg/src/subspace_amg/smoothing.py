"""Weighted Jacobi relaxation and the smoothed test-vector generator."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import SparseCsrMatrix, read_dense, spmv, write_dense
from .manifest import read_manifest, write_manifest

DEFAULT_OMEGA = 0.66
DEFAULT_SWEEPS = 10


@dataclass(frozen=True, eq=False)
class JacobiSmoother:
    inv_diag: np.ndarray
    omega: float = DEFAULT_OMEGA

    @classmethod
    def from_matrix(cls, A: SparseCsrMatrix, omega: float = DEFAULT_OMEGA) -> "JacobiSmoother":
        if not 0.0 <= omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        d = A.diagonal()
        if np.any(d <= 0):
            raise ZeroDivisionError("Jacobi smoothing needs a strictly positive diagonal")
        return cls(1.0 / d, float(omega))

    def sweep(self, A: SparseCsrMatrix, X, b=None) -> np.ndarray:
        """One update ``X + omega D^{-1} (b - A X)``; columns are independent."""
        X = np.asarray(X, dtype=np.float64)
        resid = -spmv(A, X) if b is None else np.asarray(b) - spmv(A, X)
        scale = self.omega * self.inv_diag
        if X.ndim == 2:
            scale = scale[:, None]
        return X + scale * resid


def jacobi_sweep(smoother: JacobiSmoother, A: SparseCsrMatrix, X, b=None, sweeps: int = 1):
    for _ in range(sweeps):
        X = smoother.sweep(A, X, b)
    return X


@dataclass(frozen=True, eq=False)
class SmoothedVectorSet:
    S: np.ndarray
    sweeps_applied: int
    omega: float
    source_seed: int

    @property
    def K(self) -> int:
        return self.S.shape[1]


def generate_smoothed_vectors(A: SparseCsrMatrix, K: int, s1: int = DEFAULT_SWEEPS,
                              omega: float = DEFAULT_OMEGA, seed=0,
                              boundary_mask=None) -> SmoothedVectorSet:
    """Apply ``s1`` homogeneous Jacobi sweeps to K standard-normal vectors.

    Rows flagged in ``boundary_mask`` start at zero; when no mask is given,
    rows of ``A`` that are identity rows (Dirichlet nodes) are used.
    """
    if K < 1 or s1 < 0:
        raise ValueError("need K >= 1 and s1 >= 0")
    smoother = JacobiSmoother.from_matrix(A, omega)
    if boundary_mask is None:
        boundary_mask = dirichlet_rows(A)
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((A.dim, K))
    S[np.asarray(boundary_mask, dtype=bool)] = 0.0
    S = jacobi_sweep(smoother, A, S, sweeps=s1)
    # child SeedSequences record the instance seed as their entropy
    source = seed.entropy if isinstance(seed, np.random.SeedSequence) else seed
    return SmoothedVectorSet(S, int(s1), float(omega), int(source))


def dirichlet_rows(A: SparseCsrMatrix) -> np.ndarray:
    """Rows whose only stored nonzero is a unit diagonal."""
    counts = np.diff(A.row_ptr)
    rows = A.row_indices()
    off = np.bincount(rows, weights=(rows != A.col_idx) & (A.values != 0), minlength=A.dim)
    return (off == 0) & (A.diagonal() == 1.0) & (counts >= 1)


def save_smoothed(directory, svs: SmoothedVectorSet, name: str = "smoothed") -> None:
    d = Path(directory)
    write_dense(d / f"{name}.bin", svs.S)
    write_manifest(d / f"{name}.manifest.txt",
                   {"K": svs.K, "s1": svs.sweeps_applied, "omega": svs.omega,
                    "seed": svs.source_seed})


def load_smoothed(directory, name: str = "smoothed") -> SmoothedVectorSet:
    d = Path(directory)
    man = read_manifest(d / f"{name}.manifest.txt")
    return SmoothedVectorSet(read_dense(d / f"{name}.bin"), int(man["s1"]),
                             float(man["omega"]), int(man["seed"]))
