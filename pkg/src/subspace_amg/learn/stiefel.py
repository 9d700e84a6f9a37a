"""Network-free minimisation of the nested loss over orthonormal frames.

Used to check the optimality claims directly: Riemannian gradient descent
on St(n, k) with a QR retraction, no learned parameters involved.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConvergenceError
from ..linalg import qr_thin
from .losses import LossKind, loss_weights, weighted_energy_loss


@dataclass
class StiefelResult:
    P: np.ndarray
    loss: float
    grad_norm: float
    steps: int


def _spectral_norm_sq(S, iters: int = 100, seed: int = 0) -> float:
    """Largest eigenvalue of S S^T by power iteration on the smaller Gram side."""
    G = S.T @ S if S.shape[0] >= S.shape[1] else S @ S.T
    x = np.random.default_rng(seed).standard_normal(G.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = G @ x
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        x = y / nrm
        lam = float(x @ G @ x)
    return lam


def riemannian_gradient(P, G):
    """Project a Euclidean gradient onto the tangent space at P."""
    PtG = P.T @ G
    return G - P @ (0.5 * (PtG + PtG.T))


def stiefel_minimize(S, k: int, steps: int = 20000, step_size: float = 1.0, seed: int = 0,
                     tol: float = 1e-10, loss=LossKind.NLSS, P0=None) -> StiefelResult:
    """Projected gradient descent of the nested loss, started from a random frame.

    The step is ``step_size / L`` where ``L`` bounds the Lipschitz constant of
    the Euclidean gradient. Stops once the Riemannian gradient norm drops
    below ``tol``; raises :class:`ConvergenceError` if ``steps`` run out.
    """
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}]")
    w = loss_weights(loss, k)
    total = float(np.sum(S * S))
    if total == 0.0:
        raise ValueError("S must be nonzero")
    lip = 2.0 * w[0] * _spectral_norm_sq(S, seed=seed) / total
    eta = step_size / lip
    if P0 is None:
        P0 = np.random.default_rng(seed).standard_normal((n, k))
    P, _ = qr_thin(P0)
    gnorm = np.inf
    for it in range(steps):
        _, G = weighted_energy_loss(S[None], P[None], w)
        rg = riemannian_gradient(P, G[0])
        gnorm = float(np.linalg.norm(rg))
        if gnorm < tol:
            loss_val = float(weighted_energy_loss(S[None], P[None], w)[0][0])
            return StiefelResult(P, loss_val, gnorm, it)
        P, _ = qr_thin(P - eta * rg)
    raise ConvergenceError(f"Stiefel descent did not converge in {steps} steps "
                           f"(gradient norm {gnorm:.3e})", grad_norm=gnorm, steps=steps)
