import numpy as np
import pytest

from subspace_amg.errors import MeshError
from subspace_amg.fem import (Family, apply_dirichlet, assemble_raw, load_instance,
                              local_mass, local_stiffness, make_instance, rotation_tensor,
                              sample_coefficients, save_instance)
from subspace_amg.linalg import SparseCsrMatrix
from subspace_amg.mesh import (TriMesh, build_mesh, delaunay, delaunay_violations, grid_points,
                               signed_areas)


# -- mesh ------------------------------------------------------------------

def test_regular_grid_n2():
    mesh = build_mesh(2, 0.0)
    assert mesh.n_vertices == 9 and mesh.n_triangles == 8
    assert delaunay_violations(mesh.vertices, mesh.triangles) == 0


def test_n9_vertex_count():
    assert build_mesh(9, 0.25, seed=1).n_vertices == 100


def test_unit_square_corners():
    tris = delaunay([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert tris.shape == (2, 3)


def test_random_points_delaunay():
    pts = np.random.default_rng(0).random((200, 2))
    tris = delaunay(pts)
    assert delaunay_violations(pts, tris) == 0
    assert np.all(signed_areas(pts, tris) > 0)
    # Euler: t = 2n - 2 - h for h hull vertices; total area equals hull area
    assert tris.shape[0] < 2 * len(pts)


def test_collinear_rejected():
    with pytest.raises(MeshError):
        delaunay([[0, 0], [1, 1], [2, 2], [3, 3]])


def test_duplicate_rejected():
    with pytest.raises(MeshError):
        delaunay([[0, 0], [1, 0], [0, 1], [1, 0]])


@pytest.mark.parametrize("seed", range(5))
def test_mesh_invariants(seed):
    N = 12
    mesh = build_mesh(N, 0.25, seed=seed)
    base, boundary = grid_points(N)
    assert np.array_equal(mesh.boundary_mask, boundary)
    assert np.array_equal(mesh.vertices[boundary], base[boundary])
    shift = np.linalg.norm(mesh.vertices - base, axis=1)
    assert shift.max() <= 0.25 / N + 1e-15
    areas = mesh.signed_areas()
    assert np.all(areas > 1e-6 * areas.mean())
    assert areas.sum() == pytest.approx(1.0, rel=1e-12)
    assert delaunay_violations(mesh.vertices, mesh.triangles) == 0


def test_mesh_reproducible():
    a, b = build_mesh(8, 0.3, seed=42), build_mesh(8, 0.3, seed=42)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)


def test_mesh_bad_arguments():
    with pytest.raises(ValueError):
        build_mesh(1)
    with pytest.raises(ValueError):
        build_mesh(4, 0.5)


def test_mesh_retry_budget_reports_seed(monkeypatch):
    import subspace_amg.mesh as mesh_mod

    def always_fail(points, tol=mesh_mod.INCIRCLE_TOL):
        raise MeshError("forced")

    monkeypatch.setattr(mesh_mod, "delaunay", always_fail)
    with pytest.raises(MeshError, match="seed=7"):
        mesh_mod.build_mesh(4, 0.25, seed=7, max_retries=3)


# -- FEM -------------------------------------------------------------------

def test_reference_stiffness():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    K = local_stiffness(v, np.array([[0, 1, 2]]), np.eye(2)[None])[0]
    assert np.allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])


def test_reference_mass():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    M = local_mass(v, np.array([[0, 1, 2]]))[0]
    assert M.sum() == pytest.approx(0.5)
    assert M[0, 0] == pytest.approx(1 / 12) and M[0, 1] == pytest.approx(1 / 24)


def test_stiffness_annihilates_constants():
    mesh = build_mesh(6, 0.25, seed=3)
    for fam in Family:
        coeffs = sample_coefficients(fam, mesh, 5)
        A, _ = assemble_raw(mesh, coeffs)
        r = A @ np.ones(mesh.n_vertices)
        if fam is Family.SCREENED_POISSON:
            # mass term: row sums equal alpha * lumped mass
            assert r.sum() == pytest.approx(coeffs.alpha, rel=1e-10)
        else:
            assert np.abs(r).max() < 1e-8 * np.abs(A.values).max()


def test_stiffness_reproduces_quadratic_form():
    # u = x gives energy int |grad u|^2 = 1 with unit conductivity
    mesh = build_mesh(5, 0.2, seed=1)
    coeffs = sample_coefficients("diffusion", mesh, 0)
    coeffs = type(coeffs)(coeffs.family, np.ones(mesh.n_triangles))
    A, rhs = assemble_raw(mesh, coeffs)
    u = mesh.vertices[:, 0]
    assert u @ (A @ u) == pytest.approx(1.0, rel=1e-12)
    assert rhs.sum() == pytest.approx(1.0, rel=1e-12)


def test_rotation_tensor():
    K = rotation_tensor(np.pi / 2, 10.0)[0]
    assert np.allclose(K, [[1.0, 0.0], [0.0, 10.0]])


def test_coefficient_samplers():
    mesh = build_mesh(9, 0.25, seed=0)
    g = sample_coefficients("diffusion", mesh, 1)
    assert g.scalar.shape == (mesh.n_triangles,) and np.all(g.scalar > 0)
    z = np.log(np.concatenate([sample_coefficients("diffusion", mesh, s).scalar
                               for s in range(40)]))
    assert z.var() == pytest.approx(1.5, rel=0.1)
    a = sample_coefficients("anisotropic", mesh, 2)
    eig = np.linalg.eigvalsh(a.tensor)
    assert np.allclose(eig, [1.0, 1e5], rtol=1e-9)
    sp = sample_coefficients("screened_poisson", mesh, 3)
    assert 0.0 <= sp.alpha <= 20.0 and np.all(sp.scalar > 0)


def test_dirichlet_rows():
    A = SparseCsrMatrix.from_dense([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    mask = np.array([True, False, False])
    A_bc, rhs = apply_dirichlet(A, np.ones(3), mask, values=np.array([3.0, 0.0, 0.0]))
    D = A_bc.to_dense()
    assert np.array_equal(D[0], [1.0, 0.0, 0.0]) and np.array_equal(D[:, 0], [1.0, 0.0, 0.0])
    assert np.allclose(rhs, [3.0, 4.0, 1.0])


@pytest.mark.parametrize("family", list(Family))
def test_instances_spd(family):
    inst = make_instance(family, 6, seed=11)
    D = inst.A.to_dense()
    assert np.allclose(D, D.T, rtol=0, atol=1e-12 * np.abs(D).max())
    assert np.linalg.eigvalsh(D).min() > 0
    assert np.all(np.isfinite(inst.rhs))
    assert np.all(inst.rhs[inst.mesh.boundary_mask] == 0)


def test_instance_roundtrip(tmp_path):
    for fam in Family:
        inst = make_instance(fam, 5, seed=3)
        back = load_instance(save_instance(tmp_path / fam.value, inst))
        assert back.family is fam and back.seed == 3
        assert np.array_equal(back.A.to_dense(), inst.A.to_dense())
        assert np.array_equal(back.rhs, inst.rhs)
        assert np.array_equal(back.mesh.triangles, inst.mesh.triangles)
        assert np.array_equal(back.coefficients.scalar, inst.coefficients.scalar)


def test_degenerate_triangle_rejected():
    mesh = TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1e-12], [0.0, 1.0]]),
                   np.array([[0, 1, 2], [0, 2, 3]]), np.array([True] * 4))
    with pytest.raises(MeshError):
        assemble_raw(mesh, sample_coefficients("diffusion", mesh, 0))
