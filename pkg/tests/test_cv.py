import numpy as np
import pytest

from oem.cv import CvResult, cv_generic, make_folds, select, xval_fast
from oem.errors import BadKError, EmptyFoldError
from oem.glm import LogisticConfig, sigmoid
from oem.gram import compute_gram
from oem.prox import make_specs
from oem.solver import PathConfig, fit_path

CFG = PathConfig(nlambda=15, tol=1e-12, maxit=100_000)


def data(n=120, p=6, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X[:, 0] - 0.5 * X[:, 1] + rng.standard_normal(n)
    return X, y


def test_make_folds():
    assert np.array_equal(np.sort(make_folds(10, 10, 0)), np.arange(10))
    assert sorted(np.bincount(make_folds(10, 3, 1))) == [3, 3, 4]
    assert np.array_equal(make_folds(50, 5, 7), make_folds(50, 5, 7))
    assert not np.array_equal(make_folds(50, 5, 7), make_folds(50, 5, 8))
    for K in (1, 11):
        with pytest.raises(BadKError):
            make_folds(10, K)


def test_xval_fold_paths_match_direct_refit():
    X, y = data()
    spec = make_specs(["lasso"], 6)
    fold = make_folds(120, 2, 3)
    cv = xval_fast(X, y, spec, CFG, fold_assignment=fold)
    # recompute fold-0 held-out error by fitting the complementary rows directly
    g = compute_gram(X, y, center=True, scale=True, rows=fold != 0)
    direct = fit_path(g, spec, PathConfig(user_lambda=tuple(cv.lambdas["lasso"]), tol=1e-12,
                                          maxit=100_000))["lasso"]
    r = y[fold == 0][:, None] - (X[fold == 0] @ direct.coef + direct.intercepts)
    assert np.allclose(cv.fold_errors["lasso"][0], np.mean(r * r, axis=0), rtol=1e-10)


def test_null_model_cvm():
    X, y = data(seed=1)
    fold = make_folds(120, 4, 0)
    pooled = 0.0
    for k in range(4):
        pooled += np.sum((y[fold == k] - y[fold != k].mean()) ** 2)
    # a lambda that nulls every training fit, not only the full-data one
    errs = [np.mean((y[fold == k] - y[fold != k].mean()) ** 2) for k in range(4)]
    big = PathConfig(user_lambda=(1e3,), tol=1e-12)
    cv0 = xval_fast(X, y, make_specs(["lasso"], 6), big, fold_assignment=fold)
    assert np.allclose(cv0.fold_errors["lasso"][:, 0], errs, rtol=1e-12)
    assert cv0.cvm["lasso"][0] == pytest.approx(pooled / 120, rel=1e-12)


def test_row_order_invariance():
    X, y = data(seed=2)
    fold = make_folds(120, 5, 1)
    perm = np.random.default_rng(0).permutation(120)
    specs = make_specs(["lasso", "grp.lasso"], 6, groups=[0, 0, 1, 1, 2, 2])
    a = xval_fast(X, y, specs, CFG, fold_assignment=fold)
    b = xval_fast(X[perm], y[perm], specs, CFG, fold_assignment=fold[perm])
    for lab in a.labels:
        assert np.allclose(a.cvm[lab], b.cvm[lab], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("K", [2, 5, 10])
def test_xval_equals_generic(K):
    X, y = data(200, 8, seed=K)
    specs = make_specs(["lasso", "elastic.net", "grp.lasso"], 8, groups=np.arange(8) // 2)
    a = xval_fast(X, y, specs, CFG, K=K, seed=4)
    b = cv_generic(X, y, "linear", specs, CFG, K=K, seed=4)
    assert np.array_equal(a.fold_assignment, b.fold_assignment)
    for lab in a.labels:
        assert np.max(np.abs(a.cvm[lab] - b.cvm[lab])) <= 1e-8
        assert np.all(a.cvsd[lab] >= 0)


def test_xval_trace_bound_same_answer():
    X, y = data(seed=5)
    spec = make_specs(["lasso"], 6)
    a = xval_fast(X, y, spec, CFG, K=3)
    b = xval_fast(X, y, spec, CFG, K=3, fold_d="trace")
    assert np.allclose(a.cvm["lasso"], b.cvm["lasso"], rtol=1e-8)


def test_leave_one_out_matches_loop():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((12, 2))
    y = X[:, 0] + 0.3 * rng.standard_normal(12)
    spec = make_specs(["lasso"], 2)
    cv = cv_generic(X, y, "linear", spec, CFG, fold_assignment=np.arange(12))
    lams = cv.lambdas["lasso"]
    loo = np.zeros((12, lams.size))
    for i in range(12):
        keep = np.arange(12) != i
        g = compute_gram(X[keep], y[keep], center=True, scale=True)
        p = fit_path(g, spec, PathConfig(user_lambda=tuple(lams), tol=1e-12, maxit=100_000))["lasso"]
        loo[i] = (y[i] - X[i] @ p.coef - p.intercepts) ** 2
    assert np.allclose(cv.cvm["lasso"], loo.mean(0), rtol=1e-10)
    assert np.allclose(cv.cvsd["lasso"], loo.std(0, ddof=1) / np.sqrt(12), rtol=1e-8)


def test_logistic_cv_null_deviance():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((150, 3))
    y = (rng.uniform(size=150) < sigmoid(X[:, 0])).astype(float)
    fold = make_folds(150, 3, 0)
    cfg = LogisticConfig(path=PathConfig(user_lambda=(10.0, 0.01), tol=1e-10, maxit=10_000))
    cv = cv_generic(X, y, "logistic", make_specs(["lasso"], 3), cfg, fold_assignment=fold)
    for k in range(3):
        p = y[fold != k].mean()
        yt = y[fold == k]
        dev = -2 * np.mean(yt * np.log(p) + (1 - yt) * np.log(1 - p))
        assert cv.fold_errors["lasso"][k, 0] == pytest.approx(dev, rel=1e-6)
    assert cv.cvm["lasso"][1] < cv.cvm["lasso"][0]


def test_empty_fold_rejected():
    X, y = data(10, 2)
    with pytest.raises(EmptyFoldError):
        xval_fast(X, y, make_specs(["lasso"], 2), CFG, fold_assignment=[0] * 5 + [2] * 5)


def manual_result(cvms, sds):
    lab = [f"m{i}" for i in range(len(cvms))]
    lam = {k: np.linspace(1, 0.1, len(c)) for k, c in zip(lab, cvms)}
    return CvResult(family="linear", lambdas=lam, cvm=dict(zip(lab, map(np.array, cvms))),
                    cvsd=dict(zip(lab, map(np.array, sds))), fold_assignment=np.array([0, 1]),
                    fold_errors={})


def test_select_rules():
    r = manual_result([[3.0, 2.0, 1.0, 1.2], [2.5, 0.9, 0.95, 2.0]], [[0.1] * 4, [0.2] * 4])
    sel = select(r)
    assert sel["best_model"] == "m1"
    assert sel["lambda_min"]["m0"] == pytest.approx(r.lambdas["m0"][2])
    assert sel["lambda_1se"]["m1"] == r.lambda_min("m1")
    r2 = manual_result([[5.0, 1.0, 0.9, 0.95]], [[0.2] * 4])
    assert r2.index_1se("m0") == 1 and r2.lambda_1se("m0") >= r2.lambda_min("m0")
    ties = manual_result([[2.0, 1.0, 1.0, 1.0]], [[0.0] * 4])
    assert ties.index_min("m0") == 1
    single = manual_result([[1.0]], [[0.0]])
    assert single.lambda_min("m0") == single.lambda_1se("m0")
    for lab in r.labels:
        assert np.all(r.cvlo(lab) <= r.cvm[lab]) and np.all(r.cvm[lab] <= r.cvup(lab))
