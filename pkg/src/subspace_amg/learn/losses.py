"""Nested (ordered) and plain subspace losses on orthonormal bases."""
from __future__ import annotations

import enum

import numpy as np

from ..linalg import check_orthonormal


class LossKind(str, enum.Enum):
    NLSS = "nlss"
    SUBSPACE = "subspace"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower())


def nested_weights(k: int) -> np.ndarray:
    """Column j (1-based) is counted in k - j + 1 of the nested prefixes."""
    return np.arange(k, 0, -1, dtype=np.float64)


def loss_weights(kind, k: int) -> np.ndarray:
    """Per-column weights ``w`` and normaliser folded in: loss = 1 - sum(w c_j)."""
    kind = LossKind.parse(kind)
    if kind is LossKind.NLSS:
        return nested_weights(k) / k
    return np.ones(k)


def weighted_energy_loss(S, P, weights):
    """Batched ``1 - sum_j w_j ||p_j^T S||^2 / ||S||^2`` and its gradient in P.

    ``S`` is ``(B, n, m)`` and ``P`` is ``(B, n, k)``; no orthonormality check.
    """
    total = np.einsum("bnm,bnm->b", S, S)
    SP = np.einsum("bnm,bnk->bmk", S, P)
    per_col = np.einsum("bmk,bmk->bk", SP, SP) / total[:, None]
    loss = 1.0 - per_col @ weights
    grad = -2.0 * np.einsum("bnm,bmk->bnk", S, SP) * weights / total[:, None, None]
    return loss, grad


def _single(S, P, weights):
    S = np.asarray(S, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    check_orthonormal(P)
    if not np.any(S):
        raise ValueError("S must be nonzero")
    loss, grad = weighted_energy_loss(S[None], P[None], weights)
    return float(loss[0]), grad[0]


def nlss_loss(S, P_tilde):
    """Mean over prefixes l = 1..k of ``1 - ||P_l^T S||^2 / ||S||^2``."""
    return _single(S, P_tilde, loss_weights(LossKind.NLSS, np.shape(P_tilde)[1]))


def subspace_loss(S, P_tilde):
    """``1 - ||P^T S||^2 / ||S||^2``; blind to rotations inside span(P)."""
    return _single(S, P_tilde, loss_weights(LossKind.SUBSPACE, np.shape(P_tilde)[1]))
