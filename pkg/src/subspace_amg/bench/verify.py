"""Quick numerical property checks, runnable without pytest."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..fem import make_instance
from ..learn.gram_schmidt import orthonormalize_differentiable
from ..learn.losses import nlss_loss
from ..learn.stiefel import stiefel_minimize
from ..linalg import SparseCsrMatrix, captured_energy, qr_thin, svd_oracle
from ..mesh import build_mesh, delaunay_violations
from ..solver import apply_two_level, build_preconditioner


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def random_orthonormal(rng, n, k):
    return qr_thin(rng.standard_normal((n, k)))[0]


def check_svd(rng, trials=10) -> Check:
    worst = 0.0
    for _ in range(trials):
        n, m = rng.integers(2, 120), rng.integers(1, 40)
        S = rng.standard_normal((n, m))
        res = svd_oracle(S)
        rec = (res.left_vectors * res.singular_values) @ res.right_vectors.T
        worst = max(worst, np.linalg.norm(S - rec) / np.linalg.norm(S))
    return Check("svd reconstruction", worst <= 1e-9, f"max rel error {worst:.2e}")


def check_von_neumann(rng, trials=50) -> Check:
    worst = -np.inf
    for _ in range(trials):
        n = rng.integers(1, 11)
        X, Y = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        A, B = X @ X.T, Y @ Y.T
        a = np.linalg.svd(A, compute_uv=False)
        b = np.linalg.svd(B, compute_uv=False)
        worst = max(worst, np.trace(A @ B) - a @ b)
    return Check("von Neumann trace inequality", worst <= 1e-10, f"max excess {worst:.2e}")


def check_ky_fan(rng, trials=5, competitors=200) -> Check:
    ok = True
    for _ in range(trials):
        S = rng.standard_normal((60, 20))
        U = svd_oracle(S).left_vectors[:, :5]
        best = np.linalg.norm(S - U @ (U.T @ S))
        for _ in range(competitors):
            P = random_orthonormal(rng, 60, 5)
            ok &= best < np.linalg.norm(S - P @ (P.T @ S))
    return Check("SVD projector minimises the residual", bool(ok), f"{trials} trials")


def check_stiefel(rng, trials=5) -> Check:
    worst = 1.0
    for t in range(trials):
        sig = 1.5 ** -np.arange(12.0)
        U = random_orthonormal(rng, 40, 12)
        V = random_orthonormal(rng, 12, 12)
        P = stiefel_minimize((U * sig) @ V.T, 4, seed=t).P
        worst = min(worst, np.abs(np.sum(P * U[:, :4], axis=0)).min())
    return Check("nested loss recovers ordered singular vectors", worst >= 0.99,
                 f"min alignment {worst:.6f}")


def check_coarse_exactness(rng, trials=20) -> Check:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(5, 80))
        X = rng.standard_normal((n, n))
        A = SparseCsrMatrix.from_dense(X @ X.T + n * np.eye(n))
        U = random_orthonormal(rng, n, int(rng.integers(1, n)))
        y = rng.standard_normal(U.shape[1])
        M = build_preconditioner(A, U, nu1=0, nu2=0)
        z = apply_two_level(M, A, A @ (U @ y))
        worst = max(worst, np.linalg.norm(z - U @ y) / np.linalg.norm(U @ y))
    return Check("two-level coarse exactness", worst <= 1e-10, f"max rel error {worst:.2e}")


def check_gradients(rng) -> Check:
    S = rng.standard_normal((12, 6))
    X = rng.standard_normal((12, 4))
    Q, vjp = orthonormalize_differentiable(X)
    _, dQ = nlss_loss(S, Q)
    g = vjp(dQ)
    num = np.zeros_like(X)
    eps = 1e-5
    for idx in np.ndindex(X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += eps
        Xm[idx] -= eps
        num[idx] = (nlss_loss(S, orthonormalize_differentiable(Xp)[0])[0]
                    - nlss_loss(S, orthonormalize_differentiable(Xm)[0])[0]) / (2 * eps)
    err = np.abs(g - num).max() / np.abs(num).max()
    return Check("loss gradient through Gram-Schmidt", err < 1e-5, f"rel error {err:.2e}")


def check_mesh(rng, trials=3) -> Check:
    bad = 0
    for _ in range(trials):
        mesh = build_mesh(9, 0.25, seed=int(rng.integers(1 << 31)))
        bad += delaunay_violations(mesh.vertices, mesh.triangles)
    return Check("Delaunay meshes", bad == 0, f"{bad} violations")


def check_energy_bounds(rng) -> Check:
    inst = make_instance("diffusion", 6, int(rng.integers(1 << 31)))
    S = rng.standard_normal((inst.n, 8))
    e = captured_energy(random_orthonormal(rng, inst.n, 4), S)
    return Check("captured energy in [0, 1]", 0.0 <= e <= 1.0 + 1e-12, f"energy {e:.4f}")


CHECKS = (check_svd, check_von_neumann, check_ky_fan, check_stiefel, check_coarse_exactness,
          check_gradients, check_mesh, check_energy_bounds)


def run_all(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    return [fn(rng) for fn in CHECKS]
