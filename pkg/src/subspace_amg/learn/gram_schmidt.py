"""Modified Gram-Schmidt with one reorthogonalisation pass, plus its adjoint.

The forward pass runs right-looking MGS twice, recording each elimination
step so the reverse pass can replay them backwards. Public functions take a
leading batch axis, ``(B, n, k)``; internally columns are stored as rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import RankDeficientError

RANK_TOL = 1e-10


@dataclass
class _Tape:
    norms: list        # rho_j, shape (B,)
    columns: list      # q_j, shape (B, n)
    coeffs: list       # q_j^T (trailing block), shape (B, k-j-1)
    final: np.ndarray  # working columns after the last step, (B, k, n)


def _mgs(Xt):
    """Right-looking MGS on column-major storage ``Xt`` of shape (B, k, n)."""
    Xt = np.array(Xt, dtype=np.float64, copy=True)
    k = Xt.shape[1]
    tape = _Tape([], [], [], Xt)
    for j in range(k):
        rho = np.sqrt(np.einsum("bn,bn->b", Xt[:, j], Xt[:, j]))
        q = Xt[:, j] / rho[:, None]
        rest = Xt[:, j + 1:]
        c = np.matmul(rest, q[:, :, None])[:, :, 0]
        rest -= c[:, :, None] * q[:, None, :]
        tape.norms.append(rho)
        tape.columns.append(q)
        tape.coeffs.append(c)
    return np.stack(tape.columns, axis=1), tape


def _mgs_backward(tape: _Tape, dQt):
    """Replay the eliminations in reverse, rebuilding each trailing block in place."""
    k = dQt.shape[1]
    work = tape.final.copy()
    gX = np.zeros_like(dQt)
    for j in reversed(range(k)):
        q, rho, c = tape.columns[j], tape.norms[j], tape.coeffs[j]
        rest = work[:, j + 1:]
        rest += c[:, :, None] * q[:, None, :]
        g_after = gX[:, j + 1:]
        gc = -np.matmul(g_after, q[:, :, None])[:, :, 0]
        gq = (dQt[:, j] - np.matmul(c[:, None, :], g_after)[:, 0]
              + np.matmul(gc[:, None, :], rest)[:, 0])
        g_after += gc[:, :, None] * q[:, None, :]
        gX[:, j] = (gq - q * np.einsum("bn,bn->b", q, gq)[:, None]) / rho[:, None]
    return gX


@dataclass
class OrthoTape:
    first: _Tape
    second: _Tape


def orthonormalize_forward(P_raw, rank_tol: float = RANK_TOL):
    """Return ``(Q, tape)``; accepts ``(n, k)`` or batched ``(B, n, k)`` input."""
    P = np.asarray(P_raw, dtype=np.float64)
    squeeze = P.ndim == 2
    if squeeze:
        P = P[None]
    Pt = np.swapaxes(P, 1, 2)
    Q1, t1 = _mgs(Pt)
    col_norms = np.linalg.norm(Pt, axis=2)
    if np.any(np.stack(t1.norms, axis=1) <= rank_tol * np.maximum(col_norms, 1e-300)):
        raise RankDeficientError("column norm vanished during Gram-Schmidt elimination")
    Qt, t2 = _mgs(Q1)
    Q = np.swapaxes(Qt, 1, 2)
    return (Q[0] if squeeze else Q), OrthoTape(t1, t2)


def orthonormalize_backward(tape: OrthoTape, dQ):
    dQ = np.asarray(dQ, dtype=np.float64)
    squeeze = dQ.ndim == 2
    if squeeze:
        dQ = dQ[None]
    dPt = _mgs_backward(tape.first, _mgs_backward(tape.second, np.swapaxes(dQ, 1, 2)))
    dP = np.swapaxes(dPt, 1, 2)
    return dP[0] if squeeze else dP


def orthonormalize_differentiable(P_raw):
    """Orthonormal basis of ``span(P_raw)`` with positive Gram-Schmidt diagonal.

    Returns ``(P_tilde, vjp)`` where ``vjp(dP_tilde)`` gives the gradient with
    respect to ``P_raw``.
    """
    Q, tape = orthonormalize_forward(P_raw)
    return Q, lambda dQ: orthonormalize_backward(tape, dQ)
