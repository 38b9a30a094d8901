import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oem.errors import (
    DataError,
    DimensionMismatchError,
    EmptyFoldError,
    EmptyMatrixError,
    NotConvergedError,
    ZeroVarianceColumnError,
)
from oem.gram import (
    DenseDesign,
    SparseDesign,
    compute_fold_grams,
    compute_gram,
    largest_eigenvalue,
    lanczos_bounds,
    raw_moments,
    safe_largest_eigenvalue,
    standardize,
)
from oem.io import open_mmapped, write_binary

from .oracles import naive_gram


def rand_xy(n=50, p=5, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, p)), rng.standard_normal(n)


# -- standardize ----------------------------------------------------------------


def test_constant_column_rejected():
    X = np.column_stack([np.ones(4), [1.0, 2, 3, 4]])
    with pytest.raises(ZeroVarianceColumnError) as exc:
        standardize(X, np.zeros(4))
    assert exc.value.column == 0


def test_unit_column_has_unit_scale():
    x = np.array([1.0, -1.0, 1.0, -1.0])  # sum x^2 = n
    _, sc = standardize(x[:, None], np.zeros(4), center=False, scale=True)
    assert sc.scales[0] == pytest.approx(1.0, abs=1e-15)


def test_center_and_scale_small_column():
    X = np.array([[1.0], [2.0], [3.0]])
    view, sc = standardize(X, np.zeros(3))
    assert sc.centers[0] == pytest.approx(2.0)
    xt = view.to_dense()[:, 0]
    assert np.allclose(xt / xt[2], [-1, 0, 1])
    assert np.sum(xt**2) / 3 == pytest.approx(1.0, abs=1e-14)
    assert np.array_equal(X, [[1.0], [2.0], [3.0]])  # original untouched


def test_empty_matrix():
    with pytest.raises(EmptyMatrixError):
        DenseDesign(np.zeros((0, 3)))


def test_center_needs_two_rows():
    with pytest.raises(DataError):
        compute_gram(np.ones((1, 2)), [1.0], center=True)


# -- compute_gram --------------------------------------------------------------


def test_identity_gram():
    g = compute_gram(np.eye(2), [1.0, 2.0])
    assert np.array_equal(g.xtx, 0.5 * np.eye(2))
    assert np.array_equal(g.xty, [0.5, 1.0])


def test_matches_naive_triple_loop():
    X, y = rand_xy()
    g = compute_gram(X, y)
    xtx, xty = naive_gram(X, y)
    assert np.max(np.abs(g.xtx - xtx)) <= 1e-12
    assert np.max(np.abs(g.xty - xty)) <= 1e-12


@pytest.mark.parametrize("block_rows", [1, 7, 50])
@pytest.mark.parametrize("center,scale", [(False, False), (True, True)])
def test_block_invariance(block_rows, center, scale):
    X, y = rand_xy()
    ref = compute_gram(X, y, block_rows=50, center=center, scale=scale)
    g = compute_gram(X, y, block_rows=block_rows, center=center, scale=scale)
    assert np.allclose(g.xtx, ref.xtx, rtol=1e-12, atol=1e-13)
    assert np.allclose(g.xty, ref.xty, rtol=1e-12, atol=1e-13)


def test_threads_do_not_change_result():
    X, y = rand_xy(200, 6)
    a = compute_gram(X, y, block_rows=13, threads=1)
    b = compute_gram(X, y, block_rows=13, threads=3)
    assert np.array_equal(a.xtx, b.xtx) and a.d == b.d


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        compute_gram(np.ones((3, 2)), [1.0, 2.0])


def test_gram_is_symmetric_and_immutable():
    X, y = rand_xy()
    g = compute_gram(X, y, center=True, scale=True)
    assert np.array_equal(g.xtx, g.xtx.T)
    with pytest.raises(ValueError):
        g.xtx[0, 0] = 1.0
    assert np.allclose(np.diag(g.xtx), 1.0)


def test_weighted_moments():
    X, y = rand_xy(30, 3)
    w = np.random.default_rng(1).uniform(0.1, 1.0, 30)
    m = raw_moments(X, y, weights=w, block_rows=4)
    assert np.allclose(m.sxx, (X * w[:, None]).T @ X)
    assert np.allclose(m.sxy, X.T @ (w * y))
    ms = raw_moments(sp.csc_matrix(X), y, weights=w, block_rows=4)
    assert np.allclose(ms.sxx, m.sxx, rtol=1e-13)


def test_backends_agree(tmp_path):
    rng = np.random.default_rng(2)
    Xs = sp.random(300, 8, density=0.2, format="csc", random_state=rng)
    X = Xs.toarray()
    y = rng.standard_normal(300)
    path = tmp_path / "x.oemx"
    write_binary(path, X)
    ref = compute_gram(X, y, center=True, scale=True)
    for other in (SparseDesign(Xs), open_mmapped(path, block_bytes=8 * 8 * 17)):
        g = compute_gram(other, y, center=True, scale=True)
        assert np.max(np.abs(g.xtx - ref.xtx)) <= 1e-10
        assert np.max(np.abs(g.xty - ref.xty)) <= 1e-10
        assert g.y_mean == pytest.approx(ref.y_mean, rel=1e-14)


def test_sparse_centering_keeps_sparsity():
    rng = np.random.default_rng(3)
    Xs = sp.random(100, 5, density=0.1, format="csc", random_state=rng) + sp.eye(100, 5)
    design = SparseDesign(Xs)
    g = compute_gram(design, rng.standard_normal(100), center=True, scale=True)
    assert sp.issparse(design.csc) and design.nnz == Xs.nnz
    Xd = Xs.toarray()
    Z = (Xd - Xd.mean(0)) / Xd.std(0)
    assert np.allclose(g.xtx, Z.T @ Z / 100, atol=1e-12)


def test_sparse_from_arrays_validation():
    with pytest.raises(DataError):
        SparseDesign.from_arrays([0, 2, 1], [0, 1], [1.0, 2.0], 3, 2)
    with pytest.raises(DataError):
        SparseDesign.from_arrays([0, 1, 2], [0, 5], [1.0, 2.0], 3, 2)
    d = SparseDesign.from_arrays([0, 1, 2], [0, 2], [1.0, 2.0], 3, 2)
    assert np.array_equal(d.to_dense(), [[1, 0], [0, 0], [0, 2]])


# -- fold grams ----------------------------------------------------------------


def test_single_fold_equals_full():
    X, y = rand_xy()
    fg = compute_fold_grams(X, y, np.zeros(50, dtype=int))
    g = compute_gram(X, y)
    assert np.allclose(fg.folds[0].xtx, g.xtx, rtol=1e-14)


def test_leave_one_out_outer_products():
    X, y = rand_xy(5, 2)
    fg = compute_fold_grams(X, y, np.arange(5))
    for i, f in enumerate(fg.folds):
        assert np.allclose(f.xtx, np.outer(X[i], X[i]) / 5, rtol=1e-14)
    assert np.allclose(fg.total_xtx(), X.T @ X / 5, rtol=1e-13)


def test_two_fold_reconstruction():
    X, y = rand_xy(40, 4, seed=5)
    fold = np.repeat([0, 1], 20)
    fg = compute_fold_grams(X, y, fold)
    direct = compute_gram(X, y, rows=fold == 1)
    # direct statistics use n_1, the fold grams use the full n
    assert np.allclose(fg.leave_out_xtx(0), direct.xtx * 20 / 40, rtol=1e-12)
    assert np.allclose(fg.leave_out_xty(0), direct.xty * 20 / 40, rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_fold_additivity(K, seed):
    rng = np.random.default_rng(seed)
    X, y = rng.standard_normal((60, 4)), rng.standard_normal(60)
    fold = rng.permutation(np.arange(60) % K)
    fg = compute_fold_grams(X, y, fold, block_rows=int(rng.integers(1, 61)))
    g = compute_gram(X, y)
    scale = np.max(np.abs(g.xtx))
    assert np.max(np.abs(fg.total_xtx() - g.xtx)) <= 1e-12 * scale
    assert np.max(np.abs(fg.total_xty() - g.xty)) <= 1e-12 * max(1.0, np.max(np.abs(g.xty)))
    assert sum(f.n_k for f in fg.folds) == 60
    ids = np.sort(np.concatenate([f.row_ids for f in fg.folds]))
    assert np.array_equal(ids, np.arange(60))
    for k in range(K):
        assert np.allclose(g.xtx - fg.leave_out_xtx(k), fg.folds[k].xtx, atol=1e-12 * scale)


def test_empty_fold():
    X, y = rand_xy(10, 2)
    with pytest.raises(EmptyFoldError) as exc:
        compute_fold_grams(X, y, np.array([0] * 5 + [2] * 5))
    assert exc.value.fold == 1


# -- largest eigenvalue --------------------------------------------------------


@pytest.mark.parametrize("A,lam1", [(np.eye(2), 1.0), (np.array([[2.0, 1.0], [1.0, 2.0]]), 3.0),
                                    (np.eye(5), 1.0)])
def test_known_spectra(A, lam1):
    tol = 1e-8
    d = largest_eigenvalue(A, tol=tol)
    assert lam1 <= d <= lam1 * (1 + 10 * tol)


def test_d_dominance_random_psd():
    rng = np.random.default_rng(7)
    tol = 1e-8
    for trial in range(100):
        p = int(rng.integers(3, 40))
        B = rng.standard_normal((int(rng.integers(1, 2 * p)), p))
        if trial % 3 == 0:  # clustered top eigenvalues
            B = np.vstack([B, 5 * rng.standard_normal((1, p))])
        A = B.T @ B / B.shape[0]
        lam1 = np.linalg.eigvalsh(A)[-1]
        d = largest_eigenvalue(A, tol=tol)
        assert d >= lam1
        assert d <= lam1 * (1 + 10 * tol)


def test_not_converged_and_fallback():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((200, 60))
    A = B.T @ B
    with pytest.raises(NotConvergedError):
        lanczos_bounds(A, tol=1e-14, max_iter=2)
    assert safe_largest_eigenvalue(A, tol=1e-14, max_iter=2) == pytest.approx(np.trace(A))


def test_ritz_min_detects_indefinite():
    A = np.diag([3.0, 1.0, -2.0])
    rb = lanczos_bounds(A)
    assert rb.theta_min < 0
