"""P1 finite elements for the three benchmark families on jittered meshes.

All three operators share one assembly path: a per-triangle 2x2 conductivity
tensor for the stiffness term plus an optional scaled mass term.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import MeshError
from .linalg import SparseCsrMatrix, read_matrix_market, write_matrix_market
from .manifest import read_manifest, write_manifest
from .mesh import AREA_MIN_FRACTION, TriMesh, build_mesh

DEFAULT_ANISOTROPY = 100000.0


class Family(str, enum.Enum):
    DIFFUSION = "diffusion"
    ANISOTROPIC = "anisotropic"
    SCREENED_POISSON = "screened_poisson"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"screened": "screened_poisson", "poisson": "screened_poisson"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown PDE family {value!r}") from None


@dataclass(frozen=True, eq=False)
class Coefficients:
    """Per-triangle coefficient data.

    ``scalar`` holds g (diffusion), phi (anisotropic rotation angle) or kappa
    (screened Poisson). ``tensor`` is the anisotropic conductivity and
    ``alpha`` the instance-wide reaction weight.
    """

    family: Family
    scalar: np.ndarray
    tensor: np.ndarray | None = None
    alpha: float | None = None

    def conductivity(self) -> np.ndarray:
        """Per-triangle 2x2 tensors used by the stiffness term."""
        if self.family is Family.ANISOTROPIC:
            return self.tensor
        return self.scalar[:, None, None] * np.eye(2)

    def columns(self) -> tuple[list[str], np.ndarray]:
        if self.family is Family.DIFFUSION:
            return ["g"], self.scalar[:, None]
        if self.family is Family.ANISOTROPIC:
            t = self.tensor
            return (["phi", "k11", "k12", "k22"],
                    np.column_stack([self.scalar, t[:, 0, 0], t[:, 0, 1], t[:, 1, 1]]))
        alpha = np.full(self.scalar.size, self.alpha)
        return ["kappa", "alpha"], np.column_stack([self.scalar, alpha])


def rotation_tensor(phi, anisotropy: float = DEFAULT_ANISOTROPY) -> np.ndarray:
    """``R(phi) diag(anisotropy, 1) R(phi)^T`` for each angle."""
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    c, s = np.cos(phi), np.sin(phi)
    R = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    D = np.diag([anisotropy, 1.0])
    return R @ D @ np.swapaxes(R, -1, -2)


def sample_coefficients(family, mesh: TriMesh, seed, *, anisotropy: float = DEFAULT_ANISOTROPY,
                        angle_per_triangle: bool = False) -> Coefficients:
    """Draw the randomized coefficients of one training or test instance.

    diffusion: g_T = exp(z), z ~ N(0, 1.5) (variance 1.5).
    anisotropic: phi ~ N(0, pi^2), one angle per instance unless
    ``angle_per_triangle``; K_T = R(phi) diag(anisotropy, 1) R(phi)^T.
    screened Poisson: kappa_T = exp(z), z ~ N(0, 1); alpha ~ U(0, 20).
    """
    family = Family.parse(family)
    rng = np.random.default_rng(seed)
    t = mesh.n_triangles
    if family is Family.DIFFUSION:
        return Coefficients(family, np.exp(rng.normal(0.0, np.sqrt(1.5), size=t)))
    if family is Family.ANISOTROPIC:
        if angle_per_triangle:
            phi = rng.normal(0.0, np.pi, size=t)
        else:
            phi = np.full(t, rng.normal(0.0, np.pi))
        return Coefficients(family, phi, rotation_tensor(phi, anisotropy))
    kappa = np.exp(rng.normal(0.0, 1.0, size=t))
    alpha = float(rng.uniform(0.0, 20.0))
    return Coefficients(family, kappa, alpha=alpha)


def p1_gradients(vertices, triangles) -> tuple[np.ndarray, np.ndarray]:
    """Constant basis gradients ``(t, 3, 2)`` and signed areas ``(t,)``."""
    p = vertices[triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    j, k = [1, 2, 0], [2, 0, 1]
    grads = np.stack([y[:, j] - y[:, k], x[:, k] - x[:, j]], axis=-1)
    return grads / (2.0 * area[:, None, None]), area


def local_stiffness(vertices, triangles, conductivity) -> np.ndarray:
    """Element matrices ``|T| (grad phi_i)^T K_T (grad phi_j)``."""
    grads, area = p1_gradients(vertices, triangles)
    K = area[:, None, None] * np.einsum("tia,tab,tjb->tij", grads, conductivity, grads)
    # exact symmetry, so the assembled matrix is bitwise symmetric
    return 0.5 * (K + np.swapaxes(K, 1, 2))


def local_mass(vertices, triangles) -> np.ndarray:
    _, area = p1_gradients(vertices, triangles)
    pattern = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * pattern


def _check_areas(mesh: TriMesh) -> np.ndarray:
    areas = mesh.signed_areas()
    if np.any(areas <= AREA_MIN_FRACTION * areas.mean()):
        raise MeshError("degenerate triangle below the area threshold")
    return areas


def assemble_raw(mesh: TriMesh, coefficients: Coefficients,
                 f: Callable | float = 1.0) -> tuple[SparseCsrMatrix, np.ndarray]:
    """Global matrix and load vector before boundary conditions."""
    if coefficients.scalar.shape[0] != mesh.n_triangles:
        raise ValueError("coefficient arrays need one entry per triangle")
    areas = _check_areas(mesh)
    local = local_stiffness(mesh.vertices, mesh.triangles, coefficients.conductivity())
    if coefficients.family is Family.SCREENED_POISSON and coefficients.alpha:
        local = local + coefficients.alpha * local_mass(mesh.vertices, mesh.triangles)
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    A = SparseCsrMatrix.from_coo(mesh.n_vertices, rows, cols, local.ravel())

    if callable(f):
        centroids = mesh.vertices[tri].mean(axis=1)
        fvals = np.asarray(f(centroids[:, 0], centroids[:, 1]), dtype=np.float64)
    else:
        fvals = np.full(mesh.n_triangles, float(f))
    rhs = np.bincount(tri.ravel(), weights=np.repeat(fvals * areas / 3.0, 3),
                      minlength=mesh.n_vertices)
    return A, rhs


def apply_dirichlet(A: SparseCsrMatrix, rhs, boundary_mask, values=None):
    """Impose ``u = values`` (default 0) on flagged nodes, keeping symmetry.

    Boundary rows and columns are cleared and the diagonal set to one; the
    known values are lifted into the interior right-hand side.
    """
    rhs = np.array(rhs, dtype=np.float64, copy=True)
    boundary_mask = np.asarray(boundary_mask, dtype=bool)
    g = np.zeros(A.dim) if values is None else np.asarray(values, dtype=np.float64)
    g = np.where(boundary_mask, g, 0.0)
    if np.any(g):
        rhs -= A @ g
    rows = A.row_indices()
    keep = ~(boundary_mask[rows] | boundary_mask[A.col_idx])
    bnd = np.flatnonzero(boundary_mask)
    A_bc = SparseCsrMatrix.from_coo(
        A.dim, np.r_[rows[keep], bnd], np.r_[A.col_idx[keep], bnd],
        np.r_[A.values[keep], np.ones(bnd.size)])
    rhs[boundary_mask] = g[boundary_mask]
    return A_bc, rhs


def assemble(family, mesh: TriMesh, coefficients: Coefficients, f: Callable | float = 1.0):
    """Assemble ``(A, rhs)`` with homogeneous Dirichlet conditions."""
    family = Family.parse(family)
    if coefficients.family is not family:
        raise ValueError("coefficients were sampled for a different family")
    A, rhs = assemble_raw(mesh, coefficients, f)
    return apply_dirichlet(A, rhs, mesh.boundary_mask)


@dataclass(frozen=True, eq=False)
class PdeInstance:
    family: Family
    N: int
    mesh: TriMesh
    coefficients: Coefficients
    A: SparseCsrMatrix
    rhs: np.ndarray
    seed: int
    jitter: float

    @property
    def n(self) -> int:
        return self.A.dim


def instance_streams(seed: int) -> list[np.random.SeedSequence]:
    """Independent child streams for mesh, coefficients and smoothed vectors."""
    return np.random.SeedSequence(seed).spawn(3)


def make_instance(family, N: int, seed: int, jitter: float = 0.25, *,
                  anisotropy: float = DEFAULT_ANISOTROPY, f: float = 1.0) -> PdeInstance:
    family = Family.parse(family)
    mesh_ss, coef_ss, _ = instance_streams(seed)
    mesh = build_mesh(N, jitter, seed=mesh_ss)
    coeffs = sample_coefficients(family, mesh, coef_ss, anisotropy=anisotropy)
    A, rhs = assemble(family, mesh, coeffs, f)
    return PdeInstance(family, N, mesh, coeffs, A, rhs, int(seed), float(jitter))


def _write_csv(path, header, rows, fmt=repr):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def save_instance(directory, inst: PdeInstance, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "vertices.csv", ["x", "y", "boundary"],
               [(float(x), float(y), int(b)) for (x, y), b in
                zip(inst.mesh.vertices, inst.mesh.boundary_mask)])
    _write_csv(d / "triangles.csv", ["a", "b", "c"], inst.mesh.triangles.tolist(), fmt=str)
    write_matrix_market(d / "matrix.mtx", inst.A)
    _write_csv(d / "rhs.csv", ["f"], [(float(v),) for v in inst.rhs])
    names, table = inst.coefficients.columns()
    _write_csv(d / "coefficients.csv", names, [tuple(float(v) for v in row) for row in table])
    manifest = {"family": inst.family.value, "N": inst.N, "seed": inst.seed,
                "jitter": inst.jitter, "n": inst.n, "triangles": inst.mesh.n_triangles}
    manifest.update(extra or {})
    write_manifest(d / "manifest.txt", manifest)
    return d


def load_instance(directory) -> PdeInstance:
    d = Path(directory)
    man = read_manifest(d / "manifest.txt")
    family = Family.parse(man["family"])
    vert = np.loadtxt(d / "vertices.csv", delimiter=",", skiprows=1, ndmin=2)
    tris = np.loadtxt(d / "triangles.csv", delimiter=",", skiprows=1, ndmin=2, dtype=np.int64)
    mesh = TriMesh(vert[:, :2].copy(), tris, vert[:, 2].astype(bool))
    A = read_matrix_market(d / "matrix.mtx")
    rhs = np.loadtxt(d / "rhs.csv", delimiter=",", skiprows=1, ndmin=1)
    table = np.loadtxt(d / "coefficients.csv", delimiter=",", skiprows=1, ndmin=2)
    if family is Family.DIFFUSION:
        coeffs = Coefficients(family, table[:, 0].copy())
    elif family is Family.ANISOTROPIC:
        tensor = np.stack([np.stack([table[:, 1], table[:, 2]], -1),
                           np.stack([table[:, 2], table[:, 3]], -1)], -2)
        coeffs = Coefficients(family, table[:, 0].copy(), tensor)
    else:
        coeffs = Coefficients(family, table[:, 0].copy(), alpha=float(table[0, 1]))
    return PdeInstance(family, int(man["N"]), mesh, coeffs, A, rhs,
                       int(man["seed"]), float(man["jitter"]))


__all__ = [
    "Family", "Coefficients", "PdeInstance", "sample_coefficients", "rotation_tensor",
    "p1_gradients", "local_stiffness", "local_mass", "assemble_raw", "apply_dirichlet",
    "assemble", "make_instance", "instance_streams", "save_instance", "load_instance",
]
