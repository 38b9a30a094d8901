"""Internal benchmarks with correctness cross-checks.

Timings are reported separately from the checks so that the check record
is deterministic for a fixed seed and thread count.
"""

from __future__ import annotations

import os
import tempfile
import time

import numpy as np
import scipy.sparse as sp

from .cv import cv_generic, xval_fast
from .gram import SparseDesign
from .io import open_mmapped, write_binary
from .prox import make_specs
from .solver import PathConfig, fit

MULTI_PENALTIES = ("lasso", "mcp", "grp.lasso", "scad")


def equicorrelated(n: int, p: int, rho: float = 0.25, seed: int = 0, n_signal: int = 10,
                   noise: float = 5.0):
    """Gaussian design with ``corr(x_j, x_k) = rho`` and a sparse linear response."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    X *= np.sqrt(1.0 - rho)
    X += np.sqrt(rho) * rng.standard_normal((n, 1))
    beta = np.zeros(p)
    k = min(n_signal, p)
    beta[:k] = rng.uniform(-1.0, 1.0, k)
    y = X @ beta + noise * rng.standard_normal(n)
    return X, y


def sparse_design(n: int, p: int, density: float, seed: int = 0, noise: float = 1.0):
    """Random CSC design with standard normal nonzeros and a sparse linear response."""
    rng = np.random.default_rng(seed)
    X = sp.random(n, p, density=density, format="csc", random_state=rng,
                  data_rvs=rng.standard_normal)
    beta = np.zeros(p)
    k = min(10, p)
    beta[:k] = rng.uniform(-1.0, 1.0, k)
    y = X @ beta + noise * rng.standard_normal(n)
    return X, y


def _timed(fn, repeat: int):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _max_coef_diff(a, b) -> float:
    return float(max(np.max(np.abs(a[lab].coef - b[lab].coef)) for lab in a.labels))


def bench_multi_penalty(n=100_000, p=100, seed=0, repeat=3, threads=1, cfg=None):
    X, y = equicorrelated(n, p, seed=seed)
    groups = np.repeat(np.arange(p // 5 + 1), 5)[:p]
    single = make_specs(["lasso"], p, gamma=3.0, groups=groups)
    multi = make_specs(MULTI_PENALTIES, p, gamma=3.0, groups=groups)
    cfg = cfg or PathConfig()
    fit(X[:1000], y[:1000], single, cfg)  # warm the compiled kernels
    t1, r1 = _timed(lambda: fit(X, y, single, cfg, threads=threads), repeat)
    t4, r4 = _timed(lambda: fit(X, y, multi, cfg, threads=threads), repeat)
    bitwise = bool(np.array_equal(r1["lasso"].coef, r4["lasso"].coef)
                   and np.array_equal(r1["lasso"].intercepts, r4["lasso"].intercepts))
    timings = {"single_s": t1, "multi_s": t4, "ratio": t4 / t1}
    checks = {"multi_lasso_bitwise_equal_single": bitwise,
              "iterations": {lab: int(r4[lab].iters.sum()) for lab in r4.labels}}
    return timings, checks


def bench_backends(n=100_000, p=200, density=0.01, seed=0, repeat=3, workdir=None, cfg=None,
                   penalties=("lasso",)):
    Xs, y = sparse_design(n, p, density, seed=seed)
    Xd = Xs.toarray()
    specs = make_specs(list(penalties), p)
    cfg = cfg or PathConfig()
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        path = os.path.join(tmp, "X.oemx")
        write_binary(path, Xd)
        Xm = open_mmapped(path)
        Xsd = SparseDesign(Xs)
        td, rd = _timed(lambda: fit(Xd, y, specs, cfg), repeat)
        ts, rs = _timed(lambda: fit(Xsd, y, specs, cfg), repeat)
        tm, rm = _timed(lambda: fit(Xm, y, specs, cfg), repeat)
        del Xm
    timings = {"dense_s": td, "sparse_s": ts, "mmapped_s": tm, "dense_over_sparse": td / ts}
    checks = {"sparse_vs_dense_max_diff": _max_coef_diff(rd, rs),
              "mmapped_vs_dense_max_diff": _max_coef_diff(rd, rm)}
    return timings, checks


def bench_cv(n=20_000, p=50, K=5, seed=0, repeat=1, cfg=None, penalties=("lasso", "grp.lasso")):
    X, y = equicorrelated(n, p, seed=seed)
    groups = np.repeat(np.arange(p // 5 + 1), 5)[:p]
    specs = make_specs(list(penalties), p, groups=groups)
    cfg = cfg or PathConfig(nlambda=50, tol=1e-10, maxit=20_000)
    tf, a = _timed(lambda: xval_fast(X, y, specs, cfg, K=K, seed=seed), repeat)
    tg, b = _timed(lambda: cv_generic(X, y, "linear", specs, cfg, K=K, seed=seed), repeat)
    diff = float(max(np.max(np.abs(a.cvm[lab] - b.cvm[lab])) for lab in a.labels))
    timings = {"xval_s": tf, "cv_s": tg, "cv_over_xval": tg / tf}
    checks = {"cvm_max_diff": diff, "cvm_agree_1e-8": diff <= 1e-8}
    return timings, checks
