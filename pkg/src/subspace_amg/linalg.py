"""Dense and sparse primitives shared by every other module.

Dense matrices are plain ``numpy.ndarray`` objects of dtype float64. The
sparse system matrix uses :class:`SparseCsrMatrix`, a small validated CSR
container whose products are evaluated row by row.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    DimensionError,
    NotOrthonormalError,
    NotSPDError,
    RankDeficientError,
)

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SparseCsrMatrix:
    """Square sparse matrix in compressed sparse row layout."""

    dim: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    _diag: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        row_ptr = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_ptr", row_ptr)
        object.__setattr__(self, "col_idx", col_idx)
        object.__setattr__(self, "values", values)
        self.validate()

    def validate(self) -> None:
        n = self.dim
        if self.row_ptr.shape != (n + 1,) or self.row_ptr[0] != 0:
            raise DimensionError("row_ptr must have dim+1 entries starting at 0")
        if np.any(np.diff(self.row_ptr) < 0):
            raise DimensionError("row_ptr must be nondecreasing")
        nnz = int(self.row_ptr[-1])
        if self.col_idx.shape != (nnz,) or self.values.shape != (nnz,):
            raise DimensionError("col_idx/values length must equal row_ptr[-1]")
        if nnz and (self.col_idx.min() < 0 or self.col_idx.max() >= n):
            raise DimensionError("column index out of range")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix entries must be finite")
        rows = self.row_indices()
        if nnz > 1:
            key = rows * n + self.col_idx
            if np.unique(key).size != nnz:
                raise DimensionError("duplicate column within a row")

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.dim, self.dim)

    def row_indices(self) -> np.ndarray:
        return np.repeat(np.arange(self.dim, dtype=np.int64), np.diff(self.row_ptr))

    @classmethod
    def from_coo(cls, dim, rows, cols, vals) -> "SparseCsrMatrix":
        """Build from triplets, summing duplicates and sorting columns per row."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size == 0:
            return cls(dim, np.zeros(dim + 1, np.int64), rows, vals)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        key = rows * dim + cols
        starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
        row_ptr = np.zeros(dim + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=dim), out=row_ptr[1:])
        return cls(dim, row_ptr, cols, vals)

    @classmethod
    def from_dense(cls, M, drop_zeros: bool = True) -> "SparseCsrMatrix":
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError("dense source must be square")
        mask = M != 0 if drop_zeros else np.ones_like(M, dtype=bool)
        rows, cols = np.nonzero(mask)
        return cls.from_coo(M.shape[0], rows, cols, M[rows, cols])

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        out[self.row_indices(), self.col_idx] = self.values
        return out

    def diagonal(self) -> np.ndarray:
        if self._diag is None:
            d = np.zeros(self.dim)
            rows = self.row_indices()
            on = rows == self.col_idx
            d[rows[on]] = self.values[on]
            object.__setattr__(self, "_diag", d)
        return self._diag

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        rows = self.row_indices()
        skew = SparseCsrMatrix.from_coo(
            self.dim, np.r_[rows, self.col_idx], np.r_[self.col_idx, rows],
            np.r_[self.values, -self.values])
        scale = np.abs(self.values).max(initial=0.0)
        return bool(np.abs(skew.values).max(initial=0.0) <= rtol * scale)

    def check_spd_flags(self, rtol: float = 1e-12) -> None:
        """Cheap SPD invariants: symmetry and a positive diagonal."""
        if not self.is_symmetric(rtol):
            raise NotSPDError("matrix is not symmetric")
        if np.any(self.diagonal() <= 0):
            raise NotSPDError("matrix has a non-positive diagonal entry")

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(A: SparseCsrMatrix, x) -> np.ndarray:
    """Row-ordered sparse product ``A @ x`` for a vector or a block of columns."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != A.dim:
        raise DimensionError(f"operand has {x.shape[0]} rows, matrix dim is {A.dim}")
    out_shape = (A.dim,) + x.shape[1:]
    if A.nnz == 0:
        return np.zeros(out_shape)
    if x.ndim == 1:
        prod = A.values * x[A.col_idx]
    else:
        prod = A.values.reshape((-1,) + (1,) * (x.ndim - 1)) * x[A.col_idx]
    starts = A.row_ptr[:-1]
    empty = starts == A.row_ptr[1:]
    y = np.add.reduceat(prod, np.minimum(starts, A.nnz - 1), axis=0)
    if empty.any():
        y[empty] = 0.0
    return y


def qr_thin(M) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with ``diag(R) >= 0``.

    Raises RankDeficientError if some ``|R_jj| < 1e-12 * ||M||_F``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise DimensionError(f"qr_thin needs a tall matrix, got shape {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    Q = Q * signs
    R = R * signs[:, None]
    fro = np.linalg.norm(M)
    if M.shape[1] and np.min(np.abs(np.diag(R))) < 1e-12 * fro:
        raise RankDeficientError("matrix is numerically rank deficient")
    return Q, R


@dataclass(frozen=True)
class SvdResult:
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray
    sweeps: int = 0

    def truncate(self, r: int) -> "SvdResult":
        return SvdResult(self.left_vectors[:, :r], self.singular_values[:r],
                         self.right_vectors[:, :r], self.sweeps)


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint (p, q) pairings covering every pair once per sweep."""
    players = list(range(m + (m % 2)))
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        p, q = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a < m and b < m:
                p.append(min(a, b))
                q.append(max(a, b))
        rounds.append((np.array(p, dtype=np.int64), np.array(q, dtype=np.int64)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_gram_eig(X, max_sweeps: int = 30, tol: float = 1e-15):
    """Diagonalise the Gram matrix ``X^T X`` by Jacobi rotations.

    The Gram entries of each pivot pair are formed from the current columns,
    so the rotations act on ``X`` directly and ``X V`` converges to a matrix
    with mutually orthogonal columns. Returns ``(XV, V, sweeps)``.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    m = X.shape[1]
    V = np.eye(m)
    rounds = _round_robin(m)
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p, q in rounds:
            if p.size == 0:
                continue
            xp, xq = X[:, p], X[:, q]
            a = np.einsum("ij,ij->j", xp, xp)
            b = np.einsum("ij,ij->j", xq, xq)
            c = np.einsum("ij,ij->j", xp, xq)
            active = np.abs(c) > tol * np.sqrt(a * b)
            if not active.any():
                continue
            rotated = True
            p, q, a, b, c = p[active], q[active], a[active], b[active], c[active]
            zeta = (b - a) / (2.0 * c)
            t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            cs = 1.0 / np.sqrt(1.0 + t * t)
            sn = cs * t
            for M in (X, V):
                mp, mq = M[:, p].copy(), M[:, q]
                M[:, p] = cs * mp - sn * mq
                M[:, q] = sn * mp + cs * mq
        if not rotated:
            return X, V, sweep
    G = X.T @ X
    off = np.linalg.norm(G - np.diag(np.diag(G)))
    if off > 1e-12 * np.linalg.norm(G):
        raise ConvergenceError("Jacobi eigensolve did not converge", sweeps=max_sweeps,
                               off_diagonal=off)
    return X, V, max_sweeps


def _complete_basis(U: np.ndarray, good: np.ndarray) -> np.ndarray:
    """Replace columns not flagged ``good`` with an orthonormal completion."""
    n = U.shape[0]
    basis = [U[:, j] for j in np.flatnonzero(good)]
    out = U.copy()
    candidates = iter(np.eye(n))
    for j in np.flatnonzero(~good):
        while True:
            v = next(candidates).copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > 1e-6:
                v /= nv
                break
        basis.append(v)
        out[:, j] = v
    return out


def _fix_signs(U, V):
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.where(U[idx, np.arange(U.shape[1])] < 0, -1.0, 1.0)
    return U * signs, V * signs


def svd_oracle(S, max_sweeps: int = 30) -> SvdResult:
    """Thin SVD through a Jacobi eigensolve of the smaller Gram matrix.

    Singular values come back nonincreasing. Each left vector is sign-fixed
    so that its largest-magnitude entry (first one on ties) is nonnegative.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2:
        raise DimensionError("svd_oracle expects a 2-D array")
    if not np.all(np.isfinite(S)):
        raise ValueError("svd_oracle input must be finite")
    n, m = S.shape
    if n < m:
        res = svd_oracle(S.T, max_sweeps)
        U, V = _fix_signs(res.right_vectors, res.left_vectors)
        return SvdResult(U, res.singular_values, V, res.sweeps)

    XV, V, sweeps = jacobi_gram_eig(S, max_sweeps=max_sweeps)
    sigma = np.linalg.norm(XV, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, XV, V = sigma[order], XV[:, order], V[:, order]
    cutoff = max(n, m) * np.finfo(float).eps * (sigma[0] if m else 0.0)
    good = sigma > cutoff
    U = np.zeros_like(XV)
    U[:, good] = XV[:, good] / sigma[good]
    if not good.all():
        U = _complete_basis(U, good)
    U, V = _fix_signs(U, V)
    return SvdResult(U, sigma, V, sweeps)


def check_orthonormal(P, tol: float = ORTHONORMAL_TOL) -> None:
    P = np.asarray(P)
    err = np.abs(P.T @ P - np.eye(P.shape[1])).max(initial=0.0)
    if err > tol:
        raise NotOrthonormalError(f"basis is not orthonormal (max |P^T P - I| = {err:.2e})")


def captured_energy(P, S) -> float:
    """Fraction of ``||S||_F^2`` lying in ``span(P)`` for orthonormal ``P``."""
    P = np.asarray(P, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if P.shape[0] != S.shape[0]:
        raise DimensionError("P and S must have the same number of rows")
    check_orthonormal(P)
    total = np.sum(S * S)
    if total <= 0:
        raise ValueError("S must be nonzero")
    proj = P.T @ S
    return float(np.sum(proj * proj) / total)


def principal_angles(A, B) -> np.ndarray:
    """Principal angles (radians, ascending) between spans of two orthonormal bases."""
    s = np.linalg.svd(np.asarray(A).T @ np.asarray(B), compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))


class CholeskyFactor:
    """Reusable Cholesky factorisation of a small dense SPD matrix."""

    def __init__(self, A_c):
        A_c = np.asarray(A_c, dtype=np.float64)
        if A_c.ndim != 2 or A_c.shape[0] != A_c.shape[1] or A_c.shape[0] == 0:
            raise DimensionError("coarse matrix must be square and nonempty")
        scale = np.abs(A_c).max()
        if np.abs(A_c - A_c.T).max() > 1e-10 * max(scale, 1e-300):
            raise NotSPDError("coarse matrix is not symmetric")
        try:
            self._factor = scipy.linalg.cho_factor(A_c, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise NotSPDError(f"non-positive pivot in Cholesky factorisation: {exc}") from None
        self.dim = A_c.shape[0]

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=np.float64)
        if rhs.shape[0] != self.dim:
            raise DimensionError("rhs length does not match factor")
        return scipy.linalg.cho_solve(self._factor, rhs, check_finite=False)


def cholesky_solve(A_c, rhs) -> np.ndarray:
    return CholeskyFactor(A_c).solve(rhs)


# -- serialization ---------------------------------------------------------

_DENSE_HEADER = struct.Struct("<QQ")


def write_dense(path, M) -> None:
    """Little-endian ``rows, cols`` (u64) header followed by row-major float64."""
    M = np.ascontiguousarray(M, dtype="<f8")
    if M.ndim == 1:
        M = M[:, None]
    with open(path, "wb") as fh:
        fh.write(_DENSE_HEADER.pack(*M.shape))
        fh.write(M.tobytes(order="C"))


def read_dense(path) -> np.ndarray:
    data = Path(path).read_bytes()
    rows, cols = _DENSE_HEADER.unpack_from(data)
    body = np.frombuffer(data, dtype="<f8", offset=_DENSE_HEADER.size)
    if body.size != rows * cols:
        raise ValueError(f"{path}: payload has {body.size} values, header says {rows}x{cols}")
    return body.reshape(rows, cols).astype(np.float64)


def write_dense_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    with open(path, "w") as fh:
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_dense_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_matrix_market(path, A: SparseCsrMatrix) -> None:
    """Symmetric coordinate Matrix Market file (lower triangle stored)."""
    rows = A.row_indices()
    keep = rows >= A.col_idx
    r, c, v = rows[keep], A.col_idx[keep], A.values[keep]
    order = np.lexsort((r, c))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        fh.write(f"{A.dim} {A.dim} {r.size}\n")
        for i in order:
            fh.write(f"{r[i] + 1} {c[i] + 1} {float(v[i])!r}\n")


def read_matrix_market(path) -> SparseCsrMatrix:
    with open(path) as fh:
        header = fh.readline().lower()
        if not header.startswith("%%matrixmarket matrix coordinate real"):
            raise ValueError(f"{path}: unsupported Matrix Market header")
        symmetric = "symmetric" in header
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n, _, nnz = (int(t) for t in line.split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    r = data[:, 0].astype(np.int64) - 1
    c = data[:, 1].astype(np.int64) - 1
    v = data[:, 2]
    if symmetric:
        off = r != c
        r, c, v = np.r_[r, c[off]], np.r_[c, r[off]], np.r_[v, v[off]]
    return SparseCsrMatrix.from_coo(n, r, c, v)
