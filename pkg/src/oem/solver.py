"""OEM iterations along warm-started lambda paths.

Every iteration forms ``u = xty + (d I - xtx) beta`` and applies the
penalty's closed-form update to the whole vector. Once the Gram state is
built, each iteration costs ``O(p^2)`` whatever ``n`` is, so several
penalties fitted on the same state share the expensive part.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DataError, DimensionMismatchError, NonFiniteError, NotPSDError, PenaltyError
from .gram import ColumnScaling, GramState, as_design, compute_gram, lanczos_bounds
from .prox import PenaltySpec, prox_update


#: Relative margin added to lambda_max so rounding cannot leave a coefficient
#: a few ulps away from zero at the top of the grid.
LAMBDA_MAX_SLACK = 1e-10


@dataclass(frozen=True)
class PathConfig:
    """Lambda grid and stopping rule shared by every penalty in a fit."""

    nlambda: int = 100
    lambda_min_ratio: float = 1e-3
    user_lambda: tuple | None = None
    tol: float = 1e-7
    maxit: int = 500
    compute_loss: bool = False

    def __post_init__(self):
        if self.nlambda < 1:
            raise ValueError("nlambda must be >= 1")
        if not 0.0 < self.lambda_min_ratio < 1.0:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.maxit < 1:
            raise ValueError("maxit must be >= 1")
        if self.user_lambda is not None:
            lam = np.asarray(self.user_lambda, dtype=np.float64).ravel()
            if lam.size == 0 or not np.all(np.isfinite(lam)) or np.any(lam < 0):
                raise ValueError("user lambdas must be finite and nonnegative")
            lam = np.sort(lam)[::-1]
            if np.any(np.diff(lam) == 0):
                raise ValueError("user lambdas must be distinct")
            object.__setattr__(self, "user_lambda", tuple(float(v) for v in lam))


@dataclass
class SolverState:
    beta: np.ndarray
    u: np.ndarray
    iter: int = 0
    rel_change: float = math.inf


@dataclass
class PathFit:
    """One penalty's path. ``coef`` is ``p x nlambda`` on the original scale."""

    label: str
    spec: PenaltySpec
    lambdas: np.ndarray
    coef: np.ndarray
    intercepts: np.ndarray
    iters: np.ndarray
    converged: np.ndarray
    loss: np.ndarray | None = None
    beta_std: np.ndarray | None = None
    outer_iters: np.ndarray | None = None

    @property
    def nonzero(self) -> np.ndarray:
        return np.count_nonzero(self.coef, axis=0)


@dataclass
class FitResult:
    """Paths for each penalty of one fit, keyed by label in input order."""

    paths: dict[str, PathFit]
    n_obs: int
    n_vars: int
    family: str = "linear"
    intercept: bool = True
    scaling: ColumnScaling | None = None
    d: float = math.nan
    meta: dict = field(default_factory=dict)

    def __getitem__(self, label: str) -> PathFit:
        return self.paths[label]

    @property
    def labels(self) -> list[str]:
        return list(self.paths)


# ---------------------------------------------------------------------------
# Lambda grid
# ---------------------------------------------------------------------------


def null_gradient(gram: GramState, spec: PenaltySpec) -> np.ndarray:
    """``xty - xtx beta_U`` where ``beta_U`` fits the unpenalized coordinates alone."""
    free = ~spec.penalized_mask()
    g = np.asarray(gram.xty, dtype=np.float64)
    if not free.any():
        return g
    A = gram.xtx[np.ix_(free, free)]
    bu = np.linalg.lstsq(A, g[free], rcond=None)[0]
    return g - gram.xtx[:, free] @ bu


def lambda_path(gram: GramState, spec: PenaltySpec, cfg: PathConfig) -> np.ndarray:
    """Decreasing log-spaced grid from the smallest all-zero lambda down by ``lambda_min_ratio``."""
    if spec.n_vars != gram.p:
        raise DimensionMismatchError(f"penalty built for {spec.n_vars} variables, data has {gram.p}")
    if cfg.user_lambda is not None:
        return np.array(cfg.user_lambda, dtype=np.float64)
    lam_max = spec.lambda_max(null_gradient(gram, spec)) * (1.0 + LAMBDA_MAX_SLACK)
    if not lam_max > 0:
        raise DataError("response is orthogonal to every penalized column; lambda_max is zero")
    if cfg.nlambda == 1:
        return np.array([lam_max])
    return np.exp(np.linspace(math.log(lam_max), math.log(lam_max * cfg.lambda_min_ratio), cfg.nlambda))


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _oem_path(xtx, xty, d, lambdas, beta, tol, maxit,
              fam, gamma, alpha, tau, w, c, order, starts):
    """Warm-started OEM over ``lambdas``; ``beta`` is the start and is updated in place.

    Returns ``betas`` (L x p), iteration counts, convergence flags and the
    first lambda index with non-finite iterates (-1 if none).
    """
    p = xty.shape[0]
    L = lambdas.shape[0]
    betas = np.zeros((L, p))
    iters = np.zeros(L, dtype=np.int64)
    conv = np.zeros(L, dtype=np.bool_)
    new = np.empty(p)
    u = np.empty(p)
    for li in range(L):
        lam = lambdas[li]
        it = 0
        done = False
        while it < maxit:
            # u = xty + d*beta - xtx @ beta, skipping zero coefficients
            for j in range(p):
                u[j] = xty[j] + d * beta[j]
            for k in range(p):
                bk = beta[k]
                if bk != 0.0:
                    row = xtx[k]
                    for j in range(p):
                        u[j] -= row[j] * bk
            prox_update(u, new, fam, lam, d, gamma, alpha, tau, w, c, order, starts)
            it += 1
            diff = 0.0
            big = 1.0
            finite = True
            for j in range(p):
                v = new[j]
                if not math.isfinite(v):
                    finite = False
                a = abs(v - beta[j])
                if a > diff:
                    diff = a
                b = abs(beta[j])
                if b > big:
                    big = b
                beta[j] = v
            if not finite:
                return betas, iters, conv, li
            if diff / big <= tol:
                done = True
                break
        betas[li] = beta
        iters[li] = it
        conv[li] = done
    return betas, iters, conv, -1


# ---------------------------------------------------------------------------
# Single steps and losses
# ---------------------------------------------------------------------------


def oem_step(state: SolverState, gram: GramState, spec: PenaltySpec, lam: float) -> SolverState:
    """One E step (form ``u``) and one M step (closed-form update)."""
    beta = np.asarray(state.beta, dtype=np.float64)
    u = gram.xty + gram.d * beta - gram.xtx @ beta
    new = spec.apply(u, lam, gram.d)
    rel = float(np.max(np.abs(new - beta)) / max(1.0, float(np.max(np.abs(beta)))))
    return SolverState(beta=new, u=u, iter=state.iter + 1, rel_change=rel)


def penalized_loss(source, beta, spec: PenaltySpec, lam: float, intercept: float = 0.0) -> float:
    """Penalized least squares ``0.5 ||y - X beta - b||^2 / n + P(beta)``.

    ``source`` is either ``(X, y)`` or a :class:`GramState`. The Gram form is
    ``0.5 beta'xtx beta - xty'beta + P(beta)`` and differs from the data form
    by the constant ``0.5 ||y||^2 / n`` (of the centered response when the
    state was built with an intercept).
    """
    beta = np.asarray(beta, dtype=np.float64).ravel()
    if beta.shape[0] != spec.n_vars:
        raise DimensionMismatchError("beta length does not match the penalty")
    pen = spec.value(beta, lam)
    if isinstance(source, GramState):
        if source.p != beta.shape[0]:
            raise DimensionMismatchError("beta length does not match the Gram state")
        return float(0.5 * beta @ (source.xtx @ beta) - source.xty @ beta + pen)
    X, y = source
    X = as_design(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.n_cols != beta.shape[0] or X.n_rows != y.shape[0]:
        raise DimensionMismatchError("X, y and beta dimensions do not agree")
    r = y - X.matvec(beta) - intercept
    return float(0.5 * (r @ r) / X.n_rows + pen)


# ---------------------------------------------------------------------------
# Path drivers
# ---------------------------------------------------------------------------


def _unique_labels(specs) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for s in specs:
        k = seen.get(s.label, 0) + 1
        seen[s.label] = k
        out.append(s.label if k == 1 else f"{s.label}#{k}")
    return out


def solve_path(gram: GramState, spec: PenaltySpec, lambdas: np.ndarray, tol: float,
               maxit: int, beta0: np.ndarray | None = None, label: str = ""):
    """Run the kernel for one penalty; returns ``(betas L x p, iters, converged)``."""
    spec.check_curvature(gram.d)
    b = np.zeros(gram.p) if beta0 is None else np.array(beta0, dtype=np.float64)
    betas, iters, conv, bad = _oem_path(
        np.ascontiguousarray(gram.xtx), np.ascontiguousarray(gram.xty), float(gram.d),
        np.ascontiguousarray(lambdas, dtype=np.float64), b, float(tol), int(maxit),
        *spec.kernel_args())
    if bad >= 0:
        raise NonFiniteError(int(bad), label or spec.label)
    return betas, iters, conv


def _back_transform(gram: GramState, betas: np.ndarray):
    coef = gram.scaling.to_original(betas.T)
    if gram.intercept:
        b = gram.y_mean - gram.scaling.centers @ coef
    else:
        b = np.zeros(coef.shape[1])
    return np.ascontiguousarray(coef), np.asarray(b, dtype=np.float64)


def _assemble(gram, spec, label, lambdas, solved, cfg) -> PathFit:
    betas, iters, conv = solved
    coef, b = _back_transform(gram, betas)
    loss = None
    if cfg.compute_loss:
        const = 0.5 * gram.yty if gram.yty is not None else 0.0
        loss = np.array([penalized_loss(gram, betas[i], spec, lambdas[i]) + const
                         for i in range(lambdas.shape[0])])
    return PathFit(label=label, spec=spec, lambdas=lambdas, coef=coef, intercepts=b,
                   iters=iters, converged=conv, loss=loss, beta_std=np.ascontiguousarray(betas.T))


def fit_path(gram: GramState, specs, cfg: PathConfig | None = None, threads: int = 1) -> FitResult:
    """Fit every penalty in ``specs`` on the shared ``gram``.

    Each path is warm started from large to small lambda and evolves
    independently of the others: results do not depend on which other
    penalties are in the call or on ``threads``. With ``threads > 1``
    penalties are solved concurrently (the kernel releases the GIL).
    """
    cfg = cfg or PathConfig()
    specs = [specs] if isinstance(specs, PenaltySpec) else list(specs)
    if not specs:
        raise PenaltyError("at least one penalty is required")
    labels = _unique_labels(specs)
    for s, lab in zip(specs, labels):
        if s.n_vars != gram.p:
            raise DimensionMismatchError(f"penalty {lab!r} built for {s.n_vars} variables, data has {gram.p}")
    lambdas = [lambda_path(gram, s, cfg) for s in specs]

    def run(m):
        return solve_path(gram, specs[m], lambdas[m], cfg.tol, cfg.maxit, label=labels[m])

    if threads > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            solved = list(pool.map(run, range(len(specs))))
    else:
        solved = [run(m) for m in range(len(specs))]
    fits = [_assemble(gram, s, lab, lam, sol, cfg)
            for s, lab, lam, sol in zip(specs, labels, lambdas, solved)]
    return FitResult(paths=dict(zip(labels, fits)), n_obs=gram.n_obs, n_vars=gram.p,
                     family="linear", intercept=gram.intercept, scaling=gram.scaling, d=gram.d)


def gram_from_arrays(xtx, xty, n: int, d: float | None = None, d_tol: float = 1e-8,
                     yty: float | None = None) -> GramState:
    """Validate user-supplied ``X'X/n`` and ``X'y/n`` and wrap them in a state."""
    xtx = np.array(xtx, dtype=np.float64)
    xty = np.array(xty, dtype=np.float64).ravel()
    p = xty.shape[0]
    if xtx.shape != (p, p):
        raise DimensionMismatchError(f"xtx has shape {xtx.shape}, expected ({p}, {p})")
    if n < 1:
        raise DataError("n must be positive")
    if not (np.all(np.isfinite(xtx)) and np.all(np.isfinite(xty))):
        raise DataError("xtx and xty must be finite")
    scale = max(1.0, float(np.max(np.abs(xtx))))
    if np.max(np.abs(xtx - xtx.T)) > 1e-12 * scale:
        raise DataError("xtx is not symmetric")
    xtx = 0.5 * (xtx + xtx.T)
    if np.min(np.diag(xtx)) < -1e-8 * scale:
        raise NotPSDError("xtx has a negative diagonal entry")
    rb = lanczos_bounds(xtx, tol=d_tol)
    if rb.theta_min < -1e-8 * max(1.0, abs(rb.theta_max)):
        raise NotPSDError(f"xtx has a negative Rayleigh quotient {rb.theta_min:.3g}")
    return GramState(xtx=xtx, xty=xty, d=float(rb.d if d is None else d), n_obs=int(n),
                     scaling=ColumnScaling.identity(p), yty=yty)


def fit_from_gram(xtx, xty, n: int, specs, cfg: PathConfig | None = None, threads: int = 1,
                  d: float | None = None) -> FitResult:
    """Fit from precomputed ``X'X/n`` and ``X'y/n`` without touching raw data.

    Losses (when requested) omit the ``0.5 ||y||^2 / n`` constant.
    """
    return fit_path(gram_from_arrays(xtx, xty, n, d=d), specs, cfg, threads=threads)


def fit(X, y, specs, cfg: PathConfig | None = None, *, intercept: bool = True,
        standardize: bool = True, block_rows: int | None = None, threads: int = 1) -> FitResult:
    """Build the Gram state of ``(X, y)`` and fit every penalty on it."""
    gram = compute_gram(X, y, block_rows=block_rows, center=intercept, scale=standardize,
                        threads=threads)
    return fit_path(gram, specs, cfg, threads=threads)
