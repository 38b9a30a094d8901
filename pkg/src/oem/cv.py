"""Cross-validation and tuning-parameter selection.

:func:`xval_fast` builds per-fold Gram statistics in one pass and obtains
every leave-fold-out Gram by summation, so K-fold CV of a linear model
costs about one Gram build plus ``K + 1`` path fits. :func:`cv_generic`
refits each training set from the raw rows and also covers logistic
models. Both use the lambda grid of the full data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadKError, DimensionMismatchError, EmptyFoldError, PenaltyError
from .glm import LogisticConfig, binomial_deviance, fit_logistic_path
from .gram import (
    GramState,
    _check_response,
    as_design,
    compute_fold_grams,
    compute_gram,
    gram_from_moments,
)
from .prox import PenaltySpec
from .solver import FitResult, PathConfig, _back_transform, fit_path, solve_path

LINEAR = "linear"
LOGISTIC = "logistic"


def make_folds(n: int, K: int, seed: int = 0) -> np.ndarray:
    """Random balanced fold ids in ``[0, K)``; sizes differ by at most one."""
    n, K = int(n), int(K)
    if not 2 <= K <= n:
        raise BadKError(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    fold = np.empty(n, dtype=np.int64)
    fold[perm] = np.arange(n) % K
    return fold


@dataclass
class CvResult:
    """Cross-validated error curves for each penalty of one fit."""

    family: str
    lambdas: dict[str, np.ndarray]
    cvm: dict[str, np.ndarray]
    cvsd: dict[str, np.ndarray]
    fold_assignment: np.ndarray
    fold_errors: dict[str, np.ndarray]  # K x nlambda
    fit: FitResult | None = None
    method: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def labels(self) -> list[str]:
        return list(self.cvm)

    @property
    def nfolds(self) -> int:
        return int(self.fold_assignment.max()) + 1

    def cvup(self, label: str) -> np.ndarray:
        return self.cvm[label] + self.cvsd[label]

    def cvlo(self, label: str) -> np.ndarray:
        return self.cvm[label] - self.cvsd[label]

    def index_min(self, label: str) -> int:
        # first minimum on the decreasing grid, i.e. the largest lambda among ties
        return int(np.argmin(self.cvm[label]))

    def index_1se(self, label: str) -> int:
        i = self.index_min(label)
        cvm = self.cvm[label]
        return int(np.nonzero(cvm <= cvm[i] + self.cvsd[label][i])[0][0])

    def lambda_min(self, label: str) -> float:
        return float(self.lambdas[label][self.index_min(label)])

    def lambda_1se(self, label: str) -> float:
        return float(self.lambdas[label][self.index_1se(label)])

    @property
    def best_model(self) -> str:
        mins = [float(self.cvm[lab][self.index_min(lab)]) for lab in self.labels]
        return self.labels[int(np.argmin(mins))]


def select(result: CvResult) -> dict:
    """Best penalty and ``lambda_min`` / ``lambda_1se`` for each penalty."""
    return {
        "best_model": result.best_model,
        "lambda_min": {lab: result.lambda_min(lab) for lab in result.labels},
        "lambda_1se": {lab: result.lambda_1se(lab) for lab in result.labels},
        "cv_min": {lab: float(result.cvm[lab][result.index_min(lab)]) for lab in result.labels},
    }


def _summarize(errs: np.ndarray, n_k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fold-size weighted mean and standard error of per-fold mean errors."""
    K = errs.shape[0]
    wts = n_k / n_k.sum()
    cvm = wts @ errs
    var = wts @ (errs - cvm) ** 2 / (K - 1)
    return cvm, np.sqrt(var)


def _resolve_folds(n: int, K: int, seed: int, fold_assignment) -> np.ndarray:
    if fold_assignment is None:
        return make_folds(n, K, seed)
    fold = np.asarray(fold_assignment, dtype=np.int64)
    if fold.shape != (n,):
        raise DimensionMismatchError("fold assignment length does not match the data")
    K = int(fold.max()) + 1
    if K < 2 or fold.min() < 0:
        raise BadKError("fold ids must cover at least two folds starting at 0")
    empty = np.nonzero(np.bincount(fold, minlength=K) == 0)[0]
    if empty.size:
        raise EmptyFoldError(int(empty[0]))
    return fold


def _as_specs(specs) -> list[PenaltySpec]:
    specs = [specs] if isinstance(specs, PenaltySpec) else list(specs)
    if not specs:
        raise PenaltyError("at least one penalty is required")
    return specs


def _grid_fit(gram: GramState, spec: PenaltySpec, lambdas, cfg: PathConfig, label: str):
    betas, _, _ = solve_path(gram, spec, lambdas, cfg.tol, cfg.maxit, label=label)
    return _back_transform(gram, betas)


def xval_fast(X, y, specs, cfg: PathConfig | None = None, K: int = 10, seed: int = 0, *,
              fold_assignment=None, intercept: bool = True, standardize: bool = True,
              fold_d: str = "lanczos", block_rows: int | None = None, threads: int = 1) -> CvResult:
    """K-fold CV of penalized least squares from fold-partitioned Gram sums.

    Each training set is re-standardized from its own moments, so ``d`` is
    recomputed per fold: by Lanczos (``fold_d="lanczos"``) or with the trace
    bound (``fold_d="trace"``).
    """
    cfg = cfg or PathConfig()
    specs = _as_specs(specs)
    X = as_design(X)
    y = _check_response(X, y)
    fold = _resolve_folds(X.n_rows, K, seed, fold_assignment)
    if fold_d not in ("lanczos", "trace"):
        raise ValueError("fold_d must be 'lanczos' or 'trace'")
    fg = compute_fold_grams(X, y, fold, block_rows=block_rows, threads=threads)
    full = gram_from_moments(fg.total_moments(), center=intercept, scale=standardize)
    fit = fit_path(full, specs, cfg, threads=threads)
    labels = fit.labels
    grids = [fit[lab].lambdas for lab in labels]

    coefs = []  # per fold: list over specs of (coef p x L, b L)
    for k in range(fg.K):
        m = fg.training_moments(k)
        d = None
        if fold_d == "trace":
            d = float(np.trace(gram_from_moments(m, center=intercept, scale=standardize, d=1.0).xtx))
        gk = gram_from_moments(m, center=intercept, scale=standardize, d=d)
        coefs.append([_grid_fit(gk, s, lam, cfg, lab) for s, lam, lab in zip(specs, grids, labels)])

    # stream held-out rows once; each row is scored with its own fold's paths
    sse = [np.zeros((fg.K, lam.shape[0])) for lam in grids]
    for start, stop, blk in X.iter_blocks(block_rows):
        fb = fold[start:stop]
        yb = y[start:stop]
        for k in np.unique(fb):
            keep = fb == k
            sub = blk[keep]
            for j, (coef, b) in enumerate(coefs[k]):
                r = yb[keep][:, None] - (sub @ coef + b)
                sse[j][k] += np.einsum("ij,ij->j", r, r)
    n_k = np.array([f.n_k for f in fg.folds], dtype=np.float64)
    cvm, cvsd, ferr = {}, {}, {}
    for j, lab in enumerate(labels):
        errs = sse[j] / n_k[:, None]
        ferr[lab] = errs
        cvm[lab], cvsd[lab] = _summarize(errs, n_k)
    return CvResult(family=LINEAR, lambdas=dict(zip(labels, grids)), cvm=cvm, cvsd=cvsd,
                    fold_assignment=fold, fold_errors=ferr, fit=fit, method="xval")


def cv_generic(X, y, family: str = LINEAR, specs=(), cfg=None, K: int = 10, seed: int = 0, *,
               fold_assignment=None, intercept: bool = True, standardize: bool = True,
               block_rows: int | None = None, threads: int = 1) -> CvResult:
    """K-fold CV by refitting each training set from its rows.

    ``cfg`` is a :class:`PathConfig` for linear models and a
    :class:`LogisticConfig` for logistic ones. Errors are mean squared error
    and mean binomial deviance respectively.
    """
    specs = _as_specs(specs)
    X = as_design(X)
    y = _check_response(X, y)
    fold = _resolve_folds(X.n_rows, K, seed, fold_assignment)
    Kf = int(fold.max()) + 1
    if family == LINEAR:
        cfg = cfg or PathConfig()
        full = compute_gram(X, y, block_rows=block_rows, center=intercept, scale=standardize,
                            threads=threads)
        fit = fit_path(full, specs, cfg, threads=threads)
    elif family == LOGISTIC:
        cfg = cfg or LogisticConfig()
        fit = fit_logistic_path(X, y, specs, cfg, intercept=intercept, standardize=standardize,
                                block_rows=block_rows, threads=threads)
    else:
        raise ValueError(f"unknown family {family!r}")
    labels = fit.labels
    grids = [fit[lab].lambdas for lab in labels]
    errs = [np.zeros((Kf, lam.shape[0])) for lam in grids]
    n_k = np.bincount(fold, minlength=Kf).astype(np.float64)
    for k in range(Kf):
        test = np.nonzero(fold == k)[0]
        train = np.nonzero(fold != k)[0]
        Xte, yte = X.take_rows(test), y[test]
        if family == LINEAR:
            gk = compute_gram(X, y, block_rows=block_rows, center=intercept, scale=standardize,
                              rows=train, threads=threads)
            for j, (s, lam, lab) in enumerate(zip(specs, grids, labels)):
                coef, b = _grid_fit(gk, s, lam, cfg, lab)
                r = yte[:, None] - (np.column_stack([Xte.matvec(c) for c in coef.T]) + b)
                errs[j][k] = np.mean(r * r, axis=0)
        else:
            Xtr = X.take_rows(train)
            for j, (s, lam, lab) in enumerate(zip(specs, grids, labels)):
                kc = LogisticConfig(hessian_mode=cfg.hessian_mode, outer_tol=cfg.outer_tol,
                                    outer_maxit=cfg.outer_maxit,
                                    path=_with_grid(cfg.path, lam))
                pf = fit_logistic_path(Xtr, y[train], [s], kc, intercept=intercept,
                                       standardize=standardize, threads=threads).paths[s.label]
                errs[j][k] = [binomial_deviance(Xte.matvec(pf.coef[:, i]) + pf.intercepts[i], yte)
                              for i in range(lam.shape[0])]
    cvm, cvsd, ferr = {}, {}, {}
    for j, lab in enumerate(labels):
        ferr[lab] = errs[j]
        cvm[lab], cvsd[lab] = _summarize(errs[j], n_k)
    return CvResult(family=family, lambdas=dict(zip(labels, grids)), cvm=cvm, cvsd=cvsd,
                    fold_assignment=fold, fold_errors=ferr, fit=fit, method="cv")


def _with_grid(cfg: PathConfig, lambdas) -> PathConfig:
    return PathConfig(nlambda=len(lambdas), lambda_min_ratio=cfg.lambda_min_ratio,
                      user_lambda=tuple(lambdas), tol=cfg.tol, maxit=cfg.maxit,
                      compute_loss=False)
