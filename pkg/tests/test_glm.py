import numpy as np
import pytest

from oem.errors import NonBinaryResponseError, PenaltyError
from oem.glm import (
    EPS,
    LogisticConfig,
    binomial_deviance,
    canonical_mode,
    fit_logistic_path,
    logistic_nll,
    sigmoid,
    working_response,
)
from oem.prox import PenaltySpec, make_specs
from oem.solver import PathConfig

from . import oracles


def logistic_data(n=400, p=4, seed=0, scale=0.7):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.uniform(-1, 1, p) * scale
    y = (rng.uniform(size=n) < sigmoid(0.3 + X @ beta)).astype(float)
    return X, y


def tight(mode, **path):
    return LogisticConfig(hessian_mode=mode, outer_tol=1e-12, outer_maxit=500,
                          path=PathConfig(tol=1e-13, maxit=100_000, **path))


def test_working_response_at_zero():
    X, y = logistic_data(20, 3)
    z, w, mu = working_response(np.zeros(3), X, y)
    assert np.allclose(mu, 0.5) and np.allclose(w, 0.25)
    assert np.allclose(z, 4 * y - 2)


def test_working_response_clamp():
    X = np.array([[50.0], [-50.0]])
    y = np.array([1.0, 1.0])
    z, w, mu = working_response([1.0], X, y)
    assert np.all((mu >= EPS) & (mu <= 1 - EPS))
    assert np.all(np.abs(z) <= np.abs(X[:, 0]) + 1 / EPS)


@pytest.mark.parametrize("mode,quarter", [("exact", False), ("upper_bound", True)])
def test_working_response_matches_textbook(mode, quarter):
    X, y = logistic_data(30, 3, seed=2)
    beta = np.array([0.4, -1.2, 0.8])
    z, w, mu = working_response(beta, X, y, intercept=0.3, mode=mode)
    zo, wo, mo = oracles.irls_quantities(X, y, beta, 0.3, quarter=quarter)
    assert np.allclose(z, zo, rtol=1e-12, atol=1e-12)
    assert np.allclose(w, wo, rtol=1e-12, atol=1e-12)
    assert np.allclose(mu, mo, rtol=1e-12, atol=1e-12)
    assert np.all(w <= 0.25)


def test_non_binary_rejected():
    with pytest.raises(NonBinaryResponseError):
        fit_logistic_path(np.ones((3, 1)), [0.0, 2.0, 1.0], make_specs(["lasso"], 1))


def test_mode_aliases():
    assert canonical_mode("irls") == "exact"
    assert canonical_mode("upper_bound") == "upper_bound"
    with pytest.raises(ValueError):
        canonical_mode("newton")


def test_loss_helpers():
    eta = np.array([0.0, 2.0, -1.0])
    y = np.array([1.0, 0.0, 1.0])
    direct = -np.mean(y * np.log(sigmoid(eta)) + (1 - y) * np.log(1 - sigmoid(eta)))
    assert logistic_nll(eta, y) == pytest.approx(direct, rel=1e-14)
    assert binomial_deviance(eta, y) == pytest.approx(2 * direct, rel=1e-12)


@pytest.mark.parametrize("mode", ["exact", "upper_bound"])
def test_null_model_at_lambda_max(mode):
    X, y = logistic_data(300, 5, seed=3)
    res = fit_logistic_path(X, y, make_specs(["lasso", "grp.lasso"], 5, groups=[0, 0, 1, 1, 2]),
                            tight(mode, nlambda=2))
    for lab in res.labels:
        assert not np.any(res[lab].coef[:, 0])
        assert res[lab].intercepts[0] == pytest.approx(np.log(y.mean() / (1 - y.mean())), abs=1e-6)


@pytest.mark.parametrize("mode", ["exact", "upper_bound"])
def test_small_lambda_matches_newton(mode):
    X, y = logistic_data(2000, 4, seed=4)
    res = fit_logistic_path(X, y, make_specs(["lasso"], 4), tight(mode, nlambda=25, lambda_min_ratio=1e-9))
    b0, b = oracles.newton_logistic(X, y)
    assert np.allclose(res["lasso"].coef[:, -1], b, atol=1e-4)
    assert res["lasso"].intercepts[-1] == pytest.approx(b0, abs=1e-4)


@pytest.mark.parametrize("family", ["lasso", "elastic.net", "grp.lasso", "sparse.grp.lasso"])
def test_modes_agree_for_convex(family):
    X, y = logistic_data(500, 6, seed=5)
    specs = make_specs([family], 6, groups=[0, 0, 1, 1, 2, 2])
    a = fit_logistic_path(X, y, specs, tight("exact", nlambda=8))
    b = fit_logistic_path(X, y, specs, tight("upper_bound", nlambda=8))
    assert np.array_equal(a[family].lambdas, b[family].lambdas)
    assert np.max(np.abs(a[family].coef - b[family].coef)) <= 1e-5
    assert a[family].converged.all() and b[family].converged.all()


def test_lasso_kkt():
    X, y = logistic_data(600, 6, seed=6)
    res = fit_logistic_path(X, y, make_specs(["lasso"], 6), tight("exact", nlambda=10))
    path = res["lasso"]
    Z = (X - X.mean(0)) / X.std(0)
    for j, lam in enumerate(path.lambdas):
        eta = X @ path.coef[:, j] + path.intercepts[j]
        score = Z.T @ (y - sigmoid(eta)) / 600
        b = path.beta_std[:, j]
        assert abs(np.mean(y - sigmoid(eta))) <= 1e-8
        assert np.all(np.abs(score[b == 0]) <= lam + 1e-4)
        assert np.allclose(score[b != 0], lam * np.sign(b[b != 0]), atol=1e-4)


def test_outer_descent_exact_mode():
    flagged = 0
    for seed in range(30):
        X, y = logistic_data(200, 5, seed=100 + seed)
        spec = PenaltySpec("lasso", 5)
        losses = []
        for k in range(1, 8):
            cfg = LogisticConfig(outer_tol=1e-300, outer_maxit=k,
                                 path=PathConfig(nlambda=1, user_lambda=(0.02,), tol=1e-12,
                                                 maxit=100_000, compute_loss=True))
            losses.append(fit_logistic_path(X, y, [spec], cfg)["lasso"].loss[0])
        flagged += any(b > a + 1e-8 for a, b in zip(losses, losses[1:]))
    assert flagged / 30 < 0.01


def test_nonconvex_curvature_error():
    X, y = logistic_data(200, 3, seed=7)
    with pytest.raises(PenaltyError, match="weighted Gram"):
        fit_logistic_path(X, y, [PenaltySpec("mcp", 3, gamma=1.5)], tight("upper_bound", nlambda=3))


def test_nonconvex_fit_runs():
    X, y = logistic_data(300, 3, seed=8)
    res = fit_logistic_path(X, y, [PenaltySpec("mcp", 3, gamma=8.0)], tight("upper_bound", nlambda=5))
    assert np.all(np.isfinite(res["mcp"].coef)) and res["mcp"].converged.all()
