import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subspace_amg.errors import (ConvergenceError, DimensionError, NotOrthonormalError,
                                 NotSPDError, RankDeficientError)
from subspace_amg.linalg import (CholeskyFactor, SparseCsrMatrix, captured_energy,
                                 cholesky_solve, jacobi_gram_eig, principal_angles, qr_thin,
                                 read_dense, read_dense_csv, read_matrix_market, spmv,
                                 svd_oracle, write_dense, write_dense_csv, write_matrix_market)


def rand_orth(rng, n, k):
    return np.linalg.qr(rng.standard_normal((n, k)))[0]


# -- sparse ----------------------------------------------------------------

def test_spmv_identity():
    A = SparseCsrMatrix.from_dense(np.eye(3))
    assert np.array_equal(spmv(A, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_spmv_laplacian_constant():
    A = SparseCsrMatrix.from_dense([[2.0, -1.0], [-1.0, 2.0]])
    assert np.array_equal(spmv(A, np.ones(2)), [1.0, 1.0])


def test_spmv_matches_dense():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((50, 50)) * (rng.random((50, 50)) < 0.2)
    x = rng.standard_normal(50)
    y = spmv(SparseCsrMatrix.from_dense(M), x)
    assert np.linalg.norm(y - M @ x) <= 1e-14 * np.linalg.norm(M @ x)


def test_spmv_block_and_empty_rows():
    M = np.zeros((4, 4))
    M[1, 2] = 3.0
    M[3, 0] = -1.0
    A = SparseCsrMatrix.from_dense(M)
    X = np.arange(8.0).reshape(4, 2)
    assert np.allclose(spmv(A, X), M @ X)


def test_spmv_dimension_error():
    with pytest.raises(DimensionError):
        spmv(SparseCsrMatrix.from_dense(np.eye(3)), np.ones(4))


def test_csr_validation():
    with pytest.raises(ValueError):
        SparseCsrMatrix(2, np.array([0, 2, 1]), np.array([0, 1]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SparseCsrMatrix(2, np.array([0, 2, 2]), np.array([0, 0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        SparseCsrMatrix(2, np.array([0, 1, 2]), np.array([0, 5]), np.array([1.0, 1.0]))


def test_from_coo_sums_duplicates():
    A = SparseCsrMatrix.from_coo(2, [0, 0, 1], [1, 1, 0], [1.0, 2.0, 5.0])
    assert np.array_equal(A.to_dense(), [[0.0, 3.0], [5.0, 0.0]])


def test_spd_flags():
    A = SparseCsrMatrix.from_dense([[2.0, -1.0], [-1.0, 2.0]])
    A.check_spd_flags()
    with pytest.raises(NotSPDError):
        SparseCsrMatrix.from_dense([[2.0, -1.0], [0.0, 2.0]]).check_spd_flags()


# -- QR --------------------------------------------------------------------

def test_qr_orthonormal_input():
    Q0 = rand_orth(np.random.default_rng(1), 10, 4)
    Q, R = qr_thin(Q0)
    assert np.allclose(np.abs(Q), np.abs(Q0), atol=1e-12)
    assert np.allclose(R, np.eye(4), atol=1e-12)


def test_qr_hand_example():
    Q, R = qr_thin(np.array([[3.0], [4.0]]))
    assert np.allclose(Q, [[0.6], [0.8]])
    assert np.allclose(R, [[5.0]])


def test_qr_reconstruction():
    M = np.random.default_rng(2).standard_normal((100, 16))
    Q, R = qr_thin(M)
    assert np.abs(Q.T @ Q - np.eye(16)).max() < 1e-10
    assert np.linalg.norm(Q @ R - M) < 1e-10 * np.linalg.norm(M)
    assert np.all(np.diag(R) >= 0)


def test_qr_idempotent():
    Q, _ = qr_thin(np.random.default_rng(3).standard_normal((30, 6)))
    Q2, R2 = qr_thin(Q)
    assert np.allclose(Q2, Q, atol=1e-12) and np.allclose(R2, np.eye(6), atol=1e-12)


def test_qr_rank_deficient():
    M = np.ones((5, 2))
    with pytest.raises(RankDeficientError):
        qr_thin(M)


# -- SVD oracle ------------------------------------------------------------

def test_svd_diagonal():
    S = np.array([[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    res = svd_oracle(S)
    assert np.allclose(res.singular_values, [3.0, 2.0])
    assert np.allclose(res.left_vectors[:, 0], [1.0, 0.0, 0.0])


def test_svd_rank_one():
    rng = np.random.default_rng(4)
    S = np.outer(rng.standard_normal(7), rng.standard_normal(5))
    s = svd_oracle(S).singular_values
    assert s[1] / s[0] < 1e-12


@pytest.mark.parametrize("shape", [(20, 8), (8, 20), (200, 64), (1, 1), (5, 1)])
def test_svd_reconstruction(shape):
    S = np.random.default_rng(5).standard_normal(shape)
    res = svd_oracle(S)
    rec = (res.left_vectors * res.singular_values) @ res.right_vectors.T
    assert np.linalg.norm(S - rec) <= 1e-9 * np.linalg.norm(S)
    r = res.singular_values.size
    assert np.abs(res.left_vectors.T @ res.left_vectors - np.eye(r)).max() < 1e-10
    assert np.all(np.diff(res.singular_values) <= 0)


def test_svd_sign_convention():
    res = svd_oracle(np.random.default_rng(6).standard_normal((15, 6)))
    U = res.left_vectors
    idx = np.argmax(np.abs(U), axis=0)
    assert np.all(U[idx, np.arange(U.shape[1])] >= 0)


def test_svd_rank_deficient_basis_completed():
    rng = np.random.default_rng(7)
    S = rng.standard_normal((12, 3)) @ rng.standard_normal((3, 6))
    res = svd_oracle(S)
    assert np.abs(res.left_vectors.T @ res.left_vectors - np.eye(6)).max() < 1e-10


def test_svd_matches_lapack_values():
    S = np.random.default_rng(8).standard_normal((40, 12))
    assert np.allclose(svd_oracle(S).singular_values, np.linalg.svd(S, compute_uv=False),
                       rtol=1e-12)


def test_jacobi_budget_exhausted():
    X = np.random.default_rng(9).standard_normal((30, 10))
    with pytest.raises(ConvergenceError) as info:
        jacobi_gram_eig(X, max_sweeps=1)
    assert info.value.info["sweeps"] == 1


def test_svd_nonfinite():
    with pytest.raises(ValueError):
        svd_oracle(np.array([[np.nan, 1.0]]))


# -- captured energy and friends -------------------------------------------

def test_energy_complete_basis():
    rng = np.random.default_rng(10)
    assert captured_energy(rand_orth(rng, 6, 6), rng.standard_normal((6, 3))) == pytest.approx(1.0)


def test_energy_diagonal():
    S = np.array([[3.0, 0.0], [0.0, 2.0], [0.0, 0.0]])
    assert captured_energy(np.array([[1.0], [0.0], [0.0]]), S) == pytest.approx(9 / 13)


def test_energy_of_svd_basis():
    S = np.random.default_rng(11).standard_normal((30, 10))
    res = svd_oracle(S)
    s2 = res.singular_values ** 2
    assert captured_energy(res.left_vectors[:, :4], S) == pytest.approx(s2[:4].sum() / s2.sum(),
                                                                        abs=1e-12)


def test_energy_rejects_non_orthonormal():
    with pytest.raises(NotOrthonormalError):
        captured_energy(np.ones((4, 1)), np.ones((4, 2)))


def test_energy_rotation_invariant():
    rng = np.random.default_rng(12)
    S, P, Q = rng.standard_normal((25, 7)), rand_orth(rng, 25, 5), rand_orth(rng, 5, 5)
    assert abs(captured_energy(P, S) - captured_energy(P @ Q, S)) < 1e-10


def test_ky_fan_optimality():
    rng = np.random.default_rng(13)
    S = rng.standard_normal((40, 15))
    best = captured_energy(svd_oracle(S).left_vectors[:, :5], S)
    assert all(captured_energy(rand_orth(rng, 40, 5), S) < best for _ in range(200))


def test_principal_angles_same_span():
    rng = np.random.default_rng(14)
    P = rand_orth(rng, 10, 3)
    assert np.allclose(principal_angles(P, P @ rand_orth(rng, 3, 3)), 0.0, atol=1e-7)


def test_von_neumann():
    rng = np.random.default_rng(15)
    for _ in range(100):
        n = rng.integers(1, 11)
        X, Y = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        A, B = X @ X.T, Y @ Y.T
        a = np.linalg.svd(A, compute_uv=False)
        b = np.linalg.svd(B, compute_uv=False)
        assert np.trace(A @ B) <= a @ b + 1e-10


# -- Cholesky --------------------------------------------------------------

def test_cholesky_identity():
    assert np.allclose(cholesky_solve(np.eye(3), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_cholesky_hand_example():
    assert np.allclose(cholesky_solve(np.array([[4.0, 2.0], [2.0, 3.0]]), [4.0, 2.0]), [1.0, 0.0])


def test_cholesky_random_reuse():
    rng = np.random.default_rng(16)
    X = rng.standard_normal((64, 64))
    A = X @ X.T + 64 * np.eye(64)
    F = CholeskyFactor(A)
    for _ in range(3):
        b = rng.standard_normal(64)
        assert np.linalg.norm(A @ F.solve(b) - b) < 1e-9 * np.linalg.norm(b)


def test_cholesky_not_spd():
    with pytest.raises(NotSPDError):
        CholeskyFactor(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotSPDError):
        CholeskyFactor(np.array([[1.0, 0.5], [0.0, 1.0]]))


# -- serialization ---------------------------------------------------------

def test_dense_binary_roundtrip(tmp_path):
    M = np.random.default_rng(17).standard_normal((7, 3))
    write_dense(tmp_path / "m.bin", M)
    raw = (tmp_path / "m.bin").read_bytes()
    assert raw[:16] == (7).to_bytes(8, "little") + (3).to_bytes(8, "little")
    assert np.array_equal(read_dense(tmp_path / "m.bin"), M)


def test_dense_csv_roundtrip(tmp_path):
    M = np.random.default_rng(18).standard_normal((4, 5))
    write_dense_csv(tmp_path / "m.csv", M)
    assert np.array_equal(read_dense_csv(tmp_path / "m.csv"), M)


def test_matrix_market_roundtrip(tmp_path):
    X = np.random.default_rng(19).standard_normal((9, 9))
    A = SparseCsrMatrix.from_dense((X + X.T) * (np.abs(X + X.T) > 1))
    write_matrix_market(tmp_path / "a.mtx", A)
    assert np.array_equal(read_matrix_market(tmp_path / "a.mtx").to_dense(), A.to_dense())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 30), st.integers(1, 12), st.integers(0, 2**31))
def test_svd_property_random_shapes(n, m, seed):
    S = np.random.default_rng(seed).standard_normal((n, m))
    res = svd_oracle(S)
    rec = (res.left_vectors * res.singular_values) @ res.right_vectors.T
    assert np.linalg.norm(S - rec) <= 1e-9 * np.linalg.norm(S)
