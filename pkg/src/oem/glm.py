"""Penalized logistic regression by proximal Newton with OEM inner solves.

Each outer step replaces the log-likelihood by its weighted least-squares
approximation around the current fit, with working responses ``z`` and
weights ``w``, and solves that penalized problem with OEM. The weights are
either the IRLS weights ``mu (1 - mu)`` (the Gram and ``d`` are rebuilt each
step) or the constant bound ``0.25`` (the Gram and ``d`` are built once).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionMismatchError, NonBinaryResponseError, PenaltyError
from .gram import (
    ColumnScaling,
    GramState,
    _scaling_from_moments,
    as_design,
    raw_moments,
    safe_largest_eigenvalue,
)
from .prox import PenaltySpec
from .solver import LAMBDA_MAX_SLACK, FitResult, PathConfig, PathFit, _unique_labels, solve_path

#: Probabilities are clamped to ``[EPS, 1 - EPS]``.
EPS = 1e-5

EXACT = "exact"
UPPER_BOUND = "upper_bound"
_MODES = {"exact": EXACT, "exact_irls": EXACT, "irls": EXACT,
          "upper_bound": UPPER_BOUND, "upper_bound_quarter": UPPER_BOUND, "quarter": UPPER_BOUND}


def canonical_mode(name: str) -> str:
    key = name.strip().lower().replace("-", "_")
    if key not in _MODES:
        raise ValueError(f"unknown hessian mode {name!r}; use 'exact' or 'upper_bound'")
    return _MODES[key]


@dataclass(frozen=True)
class LogisticConfig:
    hessian_mode: str = EXACT
    outer_tol: float = 1e-6
    outer_maxit: int = 100
    path: PathConfig = field(default_factory=PathConfig)

    def __post_init__(self):
        object.__setattr__(self, "hessian_mode", canonical_mode(self.hessian_mode))
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.outer_maxit < 1:
            raise ValueError("outer_maxit must be >= 1")


@dataclass
class LogisticState:
    beta: np.ndarray
    intercept: float
    mu: np.ndarray
    z: np.ndarray
    wts: np.ndarray


def check_binary(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise NonBinaryResponseError("logistic response must contain only 0 and 1")
    return y


def sigmoid(eta: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(eta, dtype=np.float64)))


def _working(eta, y, mode):
    mu = np.clip(sigmoid(eta), EPS, 1.0 - EPS)
    wts = mu * (1.0 - mu) if mode == EXACT else np.full_like(mu, 0.25)
    z = eta + (y - mu) / wts
    return z, wts, mu


def working_response(beta, X, y, intercept: float = 0.0, mode: str = EXACT):
    """Working responses, weights and clamped probabilities at ``(intercept, beta)``.

    ``z = eta + (y - mu) / w`` with ``w = mu (1 - mu)`` in exact mode and
    ``w = 0.25`` in upper-bound mode.
    """
    X = as_design(X)
    y = check_binary(y)
    if y.shape[0] != X.n_rows:
        raise DimensionMismatchError("X and y lengths differ")
    eta = X.matvec(np.asarray(beta, dtype=np.float64)) + intercept
    return _working(eta, y, canonical_mode(mode))


def logistic_nll(eta, y) -> float:
    """Mean negative log-likelihood ``(1/n) sum(log(1 + e^eta) - y eta)``."""
    eta = np.asarray(eta, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def binomial_deviance(eta, y) -> float:
    """Mean deviance ``-2/n sum(y log mu + (1-y) log(1-mu))`` with clamped ``mu``."""
    mu = np.clip(sigmoid(eta), EPS, 1.0 - EPS)
    return float(-2.0 * np.mean(y * np.log(mu) + (1.0 - y) * np.log1p(-mu)))


class _Problem:
    """Data, scaling and the weighted quadratic model of one logistic fit."""

    def __init__(self, X, y, intercept, standardize, block_rows, threads):
        self.X = as_design(X)
        self.y = check_binary(y)
        if self.y.shape[0] != self.X.n_rows:
            raise DimensionMismatchError(f"X has {self.X.n_rows} rows but y has {self.y.shape[0]} entries")
        self.n, self.p = self.X.shape
        self.intercept = bool(intercept)
        self.block_rows, self.threads = block_rows, threads
        self.m0 = raw_moments(self.X, self.y, block_rows=block_rows, threads=threads)
        sc, _ = _scaling_from_moments(self.m0, center=self.intercept, scale=standardize)
        self.scaling = sc
        self.s = sc.scales
        self._fixed = None

    def quadratic(self, beta_std, b, mode) -> tuple[GramState, LogisticState, np.ndarray, float]:
        """Weighted Gram of the approximation at ``(b, beta_std)``.

        Also returns the weighted column means and mean working response,
        which give the intercept that minimizes the approximation for any
        ``beta``.
        """
        beta = beta_std / self.s
        eta = self.X.matvec(beta, self.block_rows) + b
        z, wts, mu = _working(eta, self.y, mode)
        assert np.all(wts <= 0.25)
        n, s = self.n, self.s
        if mode == EXACT:
            m = raw_moments(self.X, z, weights=wts, block_rows=self.block_rows, threads=self.threads)
            sw, sx, sxx, sz, sxz = m.sw, m.sx, m.sxx, m.sy, m.sxy
        else:
            sw, sx = 0.25 * n, 0.25 * self.m0.sx
            sz = float(wts @ z)
            sxz = self.X.rmatvec(wts * z, self.block_rows)
            sxx = None
        if self.intercept:
            xbar, zbar = sx / sw, sz / sw
            g = (sxz - sx * zbar) / n / s
        else:
            xbar, zbar = np.zeros(self.p), 0.0
            g = sxz / n / s
        if mode == EXACT:
            H = (sxx - np.outer(sx, xbar)) / n if self.intercept else sxx / n
            H = H / np.outer(s, s)
            H = 0.5 * (H + H.T)
            d = safe_largest_eigenvalue(H)
        else:
            H, d = self._upper_bound_gram()
        gram = GramState(xtx=H, xty=g, d=d, n_obs=n, scaling=self.scaling)
        state = LogisticState(beta=beta, intercept=b, mu=mu, z=z, wts=wts)
        return gram, state, xbar, zbar

    def _upper_bound_gram(self):
        if self._fixed is None:
            m = self.m0
            n, s = self.n, self.s
            if self.intercept:
                xbar = m.sx / m.sw
                C = (m.sxx - np.outer(m.sx, xbar)) / n
            else:
                C = m.sxx / n
            C = C / np.outer(s, s)
            C = 0.5 * (C + C.T)
            self._fixed = (0.25 * C, 0.25 * safe_largest_eigenvalue(C))
        return self._fixed

    def null_fit(self) -> tuple[float, np.ndarray]:
        """Intercept-only fit and the score ``X~'(y - ybar)/n`` at it."""
        ybar = self.m0.sy / self.n
        if not self.intercept:
            return 0.0, (self.X.rmatvec(self.y - 0.5, self.block_rows) / self.n) / self.s
        ybar = min(max(ybar, EPS), 1 - EPS)
        xbar = self.m0.sx / self.n
        g = (self.m0.sxy - self.n * xbar * ybar) / self.n / self.s
        return math.log(ybar / (1 - ybar)), g

    def eta(self, beta_std, b):
        return self.X.matvec(beta_std / self.s, self.block_rows) + b


def _lambda_grid(prob: _Problem, spec: PenaltySpec, cfg: PathConfig) -> np.ndarray:
    """Grid whose first value nulls every penalized coefficient at the intercept-only fit."""
    if cfg.user_lambda is not None:
        return np.array(cfg.user_lambda, dtype=np.float64)
    lam_max = spec.lambda_max(prob.null_fit()[1]) * (1.0 + LAMBDA_MAX_SLACK)
    if not lam_max > 0:
        raise DataError("response is unrelated to every penalized column; lambda_max is zero")
    if cfg.nlambda == 1:
        return np.array([lam_max])
    return np.exp(np.linspace(math.log(lam_max), math.log(lam_max * cfg.lambda_min_ratio), cfg.nlambda))


def _fit_one(prob: _Problem, spec: PenaltySpec, cfg: LogisticConfig, label: str) -> PathFit:
    if spec.n_vars != prob.p:
        raise DimensionMismatchError(f"penalty {label!r} built for {spec.n_vars} variables, data has {prob.p}")
    pc = cfg.path
    lambdas = _lambda_grid(prob, spec, pc)
    L, p = lambdas.shape[0], prob.p
    betas = np.zeros((L, p))
    b_path = np.zeros(L)
    iters = np.zeros(L, dtype=np.int64)
    outer = np.zeros(L, dtype=np.int64)
    conv = np.zeros(L, dtype=bool)
    loss = np.zeros(L) if pc.compute_loss else None
    beta = np.zeros(p)
    b, _ = prob.null_fit()
    for li, lam in enumerate(lambdas):
        for t in range(cfg.outer_maxit):
            gram, _, xbar, zbar = prob.quadratic(beta, b, cfg.hessian_mode)
            try:
                spec.check_curvature(gram.d)
            except PenaltyError as exc:
                raise PenaltyError(f"{exc} (weighted Gram of the logistic fit)") from None
            nb, it, _ = solve_path(gram, spec, np.array([lam]), pc.tol, pc.maxit, beta0=beta, label=label)
            new_beta = nb[0]
            new_b = float(zbar - xbar @ (new_beta / prob.s)) if prob.intercept else 0.0
            iters[li] += it[0]
            delta = max(float(np.max(np.abs(new_beta - beta), initial=0.0)), abs(new_b - b))
            big = max(1.0, float(np.max(np.abs(beta), initial=0.0)), abs(b))
            beta, b = new_beta, new_b
            outer[li] = t + 1
            if delta / big <= cfg.outer_tol:
                conv[li] = True
                break
        betas[li] = beta
        b_path[li] = b
        if loss is not None:
            loss[li] = logistic_nll(prob.eta(beta, b), prob.y) + spec.value(beta, lam)
    coef = np.ascontiguousarray(prob.scaling.to_original(betas.T))
    return PathFit(label=label, spec=spec, lambdas=lambdas, coef=coef, intercepts=b_path,
                   iters=iters, converged=conv, loss=loss, beta_std=np.ascontiguousarray(betas.T),
                   outer_iters=outer)


def fit_logistic_path(X, y, specs, cfg: LogisticConfig | None = None, *, intercept: bool = True,
                      standardize: bool = True, block_rows: int | None = None,
                      threads: int = 1) -> FitResult:
    """Penalized logistic regression paths, one per penalty in ``specs``.

    Minimizes ``(1/n) sum(log(1 + e^eta_i) - y_i eta_i) + P_lam(beta)`` on
    the standardized columns for every lambda, warm started along the path.
    ``converged`` flags the outer (Newton) loop; ``iters`` counts inner OEM
    iterations.
    """
    cfg = cfg or LogisticConfig()
    specs = [specs] if isinstance(specs, PenaltySpec) else list(specs)
    if not specs:
        raise PenaltyError("at least one penalty is required")
    prob = _Problem(X, y, intercept, standardize, block_rows, threads)
    labels = _unique_labels(specs)
    fits = [_fit_one(prob, s, cfg, lab) for s, lab in zip(specs, labels)]
    return FitResult(paths=dict(zip(labels, fits)), n_obs=prob.n, n_vars=prob.p,
                     family="logistic", intercept=prob.intercept, scaling=prob.scaling,
                     meta={"hessian_mode": cfg.hessian_mode})

