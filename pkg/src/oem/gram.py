"""Sufficient statistics consumed by the OEM iterations.

Everything the solver needs from the data is ``X'X/n``, ``X'y/n`` and a
scalar ``d >= lambda_max(X'X/n)``. This module builds those quantities by
streaming row blocks out of one of three design-matrix backends:

* :class:`DenseDesign` -- an in-memory row-major array,
* :class:`SparseDesign` -- a compressed-sparse-column matrix,
* :class:`MmapDesign` -- a column-major binary file mapped from disk
  (see :mod:`oem.io` for the file layout).

Centering and scaling are never applied to the data itself. Raw moments
are accumulated first and the centered / scaled Gram is derived from them
with a rank-one correction, so sparse inputs stay sparse and memory-mapped
inputs are read exactly once.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .errors import (
    DataError,
    DimensionMismatchError,
    EmptyFoldError,
    EmptyMatrixError,
    NotConvergedError,
    ZeroVarianceColumnError,
)

logger = logging.getLogger(__name__)

#: Working-memory budget for one row block when no explicit size is given.
DEFAULT_BLOCK_BYTES = 32 * 2**20

# relative variance below which a column counts as constant
_ZERO_VARIANCE_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Design matrices
# ---------------------------------------------------------------------------


class DesignMatrix:
    """An ``n_rows x n_cols`` design matrix readable in row blocks."""

    backend = "abstract"

    def __init__(self, n_rows: int, n_cols: int):
        if n_rows < 1 or n_cols < 1:
            raise EmptyMatrixError(f"design matrix must be non-empty, got {n_rows}x{n_cols}")
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    def default_block_rows(self) -> int:
        return self.n_rows

    def _block(self, start: int, stop: int):
        raise NotImplementedError

    def iter_blocks(self, block_rows: int | None = None) -> Iterator[tuple[int, int, object]]:
        """Yield ``(start, stop, block)`` covering the rows in order."""
        if block_rows is None:
            block_rows = self.default_block_rows()
        if block_rows < 1:
            raise ValueError("block_rows must be >= 1")
        for start in range(0, self.n_rows, block_rows):
            stop = min(start + block_rows, self.n_rows)
            yield start, stop, self._block(start, stop)

    def matvec(self, beta: np.ndarray, block_rows: int | None = None) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        out = np.empty(self.n_rows)
        for start, stop, blk in self.iter_blocks(block_rows):
            out[start:stop] = blk @ beta
        return out

    def take_rows(self, rows) -> "DesignMatrix":
        """A new design holding only ``rows`` (index array, in the given order)."""
        rows = np.asarray(rows)
        return DenseDesign(self.to_dense()[rows])

    def rmatvec(self, v: np.ndarray, block_rows: int | None = None) -> np.ndarray:
        """``X' v`` accumulated over row blocks in order."""
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros(self.n_cols)
        for start, stop, blk in self.iter_blocks(block_rows):
            out += blk.T @ v[start:stop]
        return out

    def to_dense(self) -> np.ndarray:
        out = np.empty(self.shape)
        for start, stop, blk in self.iter_blocks():
            out[start:stop] = blk.toarray() if sp.issparse(blk) else blk
        return out


class DenseDesign(DesignMatrix):
    backend = "dense"

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"expected a 2-D matrix, got shape {arr.shape}")
        super().__init__(*arr.shape)
        self.data = arr

    def _block(self, start, stop):
        return self.data[start:stop]

    def matvec(self, beta, block_rows=None):
        return self.data @ np.asarray(beta, dtype=np.float64)

    def rmatvec(self, v, block_rows=None):
        return self.data.T @ np.asarray(v, dtype=np.float64)

    def take_rows(self, rows):
        return DenseDesign(self.data[np.asarray(rows)])

    def to_dense(self):
        return self.data


class SparseDesign(DesignMatrix):
    """CSC-backed design. Row blocks are served from a lazily built CSR copy."""

    backend = "sparse"

    def __init__(self, matrix):
        csc = sp.csc_matrix(matrix, dtype=np.float64)
        csc.check_format(full_check=True)
        super().__init__(*csc.shape)
        self.csc = csc
        self._csr = None

    @classmethod
    def from_arrays(cls, indptr, indices, values, n_rows: int, n_cols: int) -> "SparseDesign":
        indptr = np.asarray(indptr)
        indices = np.asarray(indices)
        if indptr.shape != (n_cols + 1,) or indptr[0] != 0 or np.any(np.diff(indptr) < 0):
            raise DataError("column pointers must be nondecreasing, start at 0, and have n_cols + 1 entries")
        if indptr[-1] != len(indices) or len(indices) != len(values):
            raise DataError("final column pointer must equal the number of stored entries")
        if len(indices) and (indices.min() < 0 or indices.max() >= n_rows):
            raise DataError("row indices out of range")
        return cls(sp.csc_matrix((values, indices, indptr), shape=(n_rows, n_cols)))

    @property
    def nnz(self) -> int:
        return self.csc.nnz

    def _block(self, start, stop):
        if start == 0 and stop == self.n_rows:
            return self.csc
        if self._csr is None:
            self._csr = self.csc.tocsr()
        return self._csr[start:stop]

    def matvec(self, beta, block_rows=None):
        return self.csc @ np.asarray(beta, dtype=np.float64)

    def rmatvec(self, v, block_rows=None):
        return self.csc.T @ np.asarray(v, dtype=np.float64)

    def take_rows(self, rows):
        if self._csr is None:
            self._csr = self.csc.tocsr()
        return SparseDesign(self._csr[np.asarray(rows)])

    def to_dense(self):
        return self.csc.toarray()


class MmapDesign(DesignMatrix):
    """Column-major float64 matrix stored in a file and mapped on demand.

    Only one row block is copied into working memory at a time; the mapping
    itself is backed by the page cache, not by process heap.
    """

    backend = "mmapped"

    def __init__(self, path, n_rows: int, n_cols: int, offset: int, block_bytes: int = DEFAULT_BLOCK_BYTES):
        super().__init__(n_rows, n_cols)
        self.path = str(path)
        self.offset = int(offset)
        self.block_bytes = int(block_bytes)
        self._mm = np.memmap(self.path, dtype="<f8", mode="r", offset=self.offset,
                             shape=(self.n_rows, self.n_cols), order="F")

    def default_block_rows(self) -> int:
        return max(1, min(self.n_rows, self.block_bytes // (8 * self.n_cols)))

    def _block(self, start, stop):
        return np.array(self._mm[start:stop], dtype=np.float64, order="C")

    def column(self, j: int) -> np.ndarray:
        return np.array(self._mm[:, j])

    def take_rows(self, rows):
        rows = np.asarray(rows)
        return DenseDesign(np.ascontiguousarray(self._mm[rows]))


def as_design(X) -> DesignMatrix:
    """Wrap arrays and scipy sparse matrices into the matching backend."""
    if isinstance(X, DesignMatrix):
        return X
    if sp.issparse(X):
        return SparseDesign(X)
    return DenseDesign(X)


# ---------------------------------------------------------------------------
# Raw moment accumulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RawMoments:
    """Uncentered weighted sums over a set of rows."""

    n: int
    sw: float
    sx: np.ndarray
    sxx: np.ndarray
    sy: float
    sxy: np.ndarray
    syy: float

    def __add__(self, other: "RawMoments") -> "RawMoments":
        return RawMoments(self.n + other.n, self.sw + other.sw, self.sx + other.sx,
                          self.sxx + other.sxx, self.sy + other.sy, self.sxy + other.sxy,
                          self.syy + other.syy)

    @classmethod
    def zeros(cls, p: int) -> "RawMoments":
        return cls(0, 0.0, np.zeros(p), np.zeros((p, p)), 0.0, np.zeros(p), 0.0)


def _block_moments(blk, yb: np.ndarray, wb: np.ndarray | None) -> RawMoments:
    m = blk.shape[0]
    if sp.issparse(blk):
        bw = blk if wb is None else sp.diags(wb) @ blk
        sxx = np.asarray((bw.T @ blk).toarray())
        sx = np.asarray(bw.sum(axis=0)).ravel()
        sxy = np.asarray(blk.T @ (yb if wb is None else wb * yb)).ravel()
    elif wb is None:
        sxx = blk.T @ blk
        sx = blk.sum(axis=0)
        sxy = blk.T @ yb
    else:
        bw = blk * wb[:, None]
        sxx = bw.T @ blk
        sx = bw.sum(axis=0)
        sxy = bw.T @ yb
    if wb is None:
        return RawMoments(m, float(m), sx, sxx, float(yb.sum()), sxy, float(yb @ yb))
    return RawMoments(m, float(wb.sum()), sx, sxx, float(wb @ yb), sxy, float(wb @ (yb * yb)))


def _row_mask(rows, n: int) -> np.ndarray | None:
    if rows is None:
        return None
    rows = np.asarray(rows)
    if rows.dtype == bool:
        if rows.shape != (n,):
            raise DimensionMismatchError("row mask length does not match the design")
        return rows
    mask = np.zeros(n, dtype=bool)
    mask[rows] = True
    return mask


def _check_response(X: DesignMatrix, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != X.n_rows:
        raise DimensionMismatchError(f"X has {X.n_rows} rows but y has {y.shape[0]} entries")
    return y


def raw_moments(X, y, weights=None, rows=None, block_rows: int | None = None,
                threads: int = 1) -> RawMoments:
    """Accumulate ``sum w x x'``, ``sum w x y`` and friends block by block.

    Blocks are reduced in row order whatever the thread count, so the
    result is bit-stable for a fixed ``block_rows``.
    """
    X = as_design(X)
    y = _check_response(X, y)
    w = None if weights is None else np.asarray(weights, dtype=np.float64)
    if w is not None and w.shape != y.shape:
        raise DimensionMismatchError("weights length does not match y")
    mask = _row_mask(rows, X.n_rows)

    def work(item):
        start, stop, blk = item
        yb = y[start:stop]
        wb = None if w is None else w[start:stop]
        if mask is not None:
            keep = mask[start:stop]
            if not keep.any():
                return None
            if not keep.all():
                blk, yb = blk[keep], yb[keep]
                wb = None if wb is None else wb[keep]
        return _block_moments(blk, yb, wb)

    total = RawMoments.zeros(X.n_cols)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, X.iter_blocks(block_rows)))
    else:
        parts = map(work, X.iter_blocks(block_rows))
    for part in parts:
        if part is not None:
            total = total + part
    return total


# ---------------------------------------------------------------------------
# Scaling and Gram state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColumnScaling:
    """Column transform ``x~ = (x - centers) / scales``."""

    centers: np.ndarray
    scales: np.ndarray

    @classmethod
    def identity(cls, p: int) -> "ColumnScaling":
        return cls(np.zeros(p), np.ones(p))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.centers) / self.scales

    def to_original(self, beta_std: np.ndarray) -> np.ndarray:
        """Map coefficients fitted on scaled columns back to the data scale."""
        return np.asarray(beta_std) / self.scales[:, None] if np.ndim(beta_std) == 2 \
            else np.asarray(beta_std) / self.scales


def _scaling_from_moments(m: RawMoments, center: bool, scale: bool) -> tuple[ColumnScaling, float]:
    if center and m.n < 2:
        raise DataError("centering needs at least two observations")
    p = m.sx.shape[0]
    means = m.sx / m.sw
    ybar = m.sy / m.sw
    second = np.diag(m.sxx) / m.sw
    if scale:
        var = second - means**2
        bad = np.nonzero(var <= _ZERO_VARIANCE_RTOL * np.maximum(second, np.finfo(float).tiny))[0]
        if bad.size:
            raise ZeroVarianceColumnError(int(bad[0]))
        scales = np.sqrt(var if center else second)
    else:
        scales = np.ones(p)
    centers = means if center else np.zeros(p)
    return ColumnScaling(centers, scales), (ybar if center else 0.0)


@dataclass(frozen=True)
class GramState:
    """Sufficient statistics of the (possibly centered and scaled) problem.

    ``xtx = X~'X~/n`` and ``xty = X~'y~/n`` where ``X~`` are the transformed
    columns and ``y~`` the (centered) response. ``d`` bounds the largest
    eigenvalue of ``xtx`` from above. ``yty`` is ``y~'y~/n`` when known; it
    only shifts losses by a constant.
    """

    xtx: np.ndarray
    xty: np.ndarray
    d: float
    n_obs: int
    scaling: ColumnScaling
    y_mean: float = 0.0
    intercept: bool = False
    yty: float | None = None

    def __post_init__(self):
        for arr in (self.xtx, self.xty, self.scaling.centers, self.scaling.scales):
            arr.flags.writeable = False

    @property
    def p(self) -> int:
        return self.xty.shape[0]

    @property
    def x_means(self) -> np.ndarray:
        return self.scaling.centers


def gram_from_moments(m: RawMoments, center: bool = False, scale: bool = False,
                      d_tol: float = 1e-8, d: float | None = None) -> GramState:
    """Turn raw sums into a :class:`GramState` under the ``/n`` convention."""
    if m.n < 1:
        raise EmptyMatrixError("no observations")
    scaling, ybar = _scaling_from_moments(m, center, scale)
    c, s = scaling.centers, scaling.scales
    n = m.n
    xtx = (m.sxx - m.sw * np.outer(c, c)) / n if center else m.sxx / n
    xtx = xtx / np.outer(s, s)
    xtx = 0.5 * (xtx + xtx.T)
    xty = ((m.sxy - m.sw * c * ybar) / n if center else m.sxy / n) / s
    yty = (m.syy - m.sw * ybar * ybar) / n if center else m.syy / n
    if d is None:
        d = safe_largest_eigenvalue(xtx, tol=d_tol)
    return GramState(xtx=xtx, xty=xty, d=float(d), n_obs=n, scaling=scaling,
                     y_mean=float(ybar), intercept=bool(center), yty=float(yty))


def standardize(X, y, center: bool = True, scale: bool = True,
                block_rows: int | None = None) -> tuple["ScaledDesign", ColumnScaling]:
    """Compute the column transform and return a lazily scaled view of ``X``.

    The original data are left untouched. With ``scale`` each transformed
    column satisfies ``sum(x~^2)/n == 1``.
    """
    X = as_design(X)
    m = raw_moments(X, y, block_rows=block_rows)
    scaling, ybar = _scaling_from_moments(m, center, scale)
    return ScaledDesign(X, scaling, _check_response(X, y) - ybar), scaling


class ScaledDesign(DesignMatrix):
    """Read-only view of a design with a column transform applied per block."""

    def __init__(self, base: DesignMatrix, scaling: ColumnScaling, y: np.ndarray):
        super().__init__(base.n_rows, base.n_cols)
        self.base = base
        self.scaling = scaling
        self.y = y
        self.backend = base.backend

    def default_block_rows(self):
        return self.base.default_block_rows()

    def _block(self, start, stop):
        blk = self.base._block(start, stop)
        blk = blk.toarray() if sp.issparse(blk) else blk
        return self.scaling.transform(blk)


def compute_gram(X, y, block_rows: int | None = None, *, center: bool = False,
                 scale: bool = False, rows=None, d_tol: float = 1e-8,
                 threads: int = 1) -> GramState:
    """Stream ``X`` once and return its :class:`GramState`.

    ``rows`` restricts the statistics to a subset of observations (boolean
    mask or index array) without materializing it.
    """
    m = raw_moments(X, y, rows=rows, block_rows=block_rows, threads=threads)
    return gram_from_moments(m, center=center, scale=scale, d_tol=d_tol)


# ---------------------------------------------------------------------------
# Fold partitioned statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldStats:
    xtx: np.ndarray  # X_k'X_k / n  (n = all observations)
    xty: np.ndarray  # X_k'y_k / n
    n_k: int
    row_ids: np.ndarray
    sx: np.ndarray
    sy: float
    syy: float


@dataclass(frozen=True)
class FoldGrams:
    folds: tuple[FoldStats, ...]
    n_obs: int

    @property
    def K(self) -> int:
        return len(self.folds)

    def total_xtx(self) -> np.ndarray:
        return sum((f.xtx for f in self.folds[1:]), self.folds[0].xtx.copy())

    def total_xty(self) -> np.ndarray:
        return sum((f.xty for f in self.folds[1:]), self.folds[0].xty.copy())

    def leave_out_xtx(self, k: int) -> np.ndarray:
        """``sum_{c != k} xtx_c`` (still divided by the full ``n``)."""
        others = [f.xtx for c, f in enumerate(self.folds) if c != k]
        return sum(others[1:], others[0].copy())

    def leave_out_xty(self, k: int) -> np.ndarray:
        others = [f.xty for c, f in enumerate(self.folds) if c != k]
        return sum(others[1:], others[0].copy())

    def total_moments(self) -> RawMoments:
        """Raw sums over all rows, assembled from the folds."""
        n = self.n_obs
        f0 = self.folds[0]
        return RawMoments(
            n=n, sw=float(n),
            sx=sum((f.sx for f in self.folds[1:]), f0.sx.copy()),
            sxx=n * self.total_xtx(), sy=float(sum(f.sy for f in self.folds)),
            sxy=n * self.total_xty(), syy=float(sum(f.syy for f in self.folds)))

    def training_moments(self, k: int) -> RawMoments:
        """Raw sums over every row outside fold ``k``."""
        if self.K < 2:
            raise DataError("need at least two folds to leave one out")
        n = self.n_obs
        others = [f for c, f in enumerate(self.folds) if c != k]
        n_train = sum(f.n_k for f in others)
        return RawMoments(
            n=n_train,
            sw=float(n_train),
            sx=sum((f.sx for f in others[1:]), others[0].sx.copy()),
            sxx=n * self.leave_out_xtx(k),
            sy=float(sum(f.sy for f in others)),
            sxy=n * self.leave_out_xty(k),
            syy=float(sum(f.syy for f in others)),
        )


def compute_fold_grams(X, y, fold_assignment, block_rows: int | None = None,
                       threads: int = 1) -> FoldGrams:
    """Per-fold ``X_k'X_k/n`` and ``X_k'y_k/n`` from a single pass over ``X``."""
    X = as_design(X)
    y = _check_response(X, y)
    fold = np.asarray(fold_assignment)
    if fold.shape != (X.n_rows,):
        raise DimensionMismatchError("fold assignment length does not match the design")
    if fold.size and (fold.min() < 0 or not np.issubdtype(fold.dtype, np.integer)):
        raise DataError("fold ids must be non-negative integers")
    K = int(fold.max()) + 1
    counts = np.bincount(fold, minlength=K)
    empty = np.nonzero(counts == 0)[0]
    if empty.size:
        raise EmptyFoldError(int(empty[0]))

    def work(item):
        start, stop, blk = item
        fb = fold[start:stop]
        yb = y[start:stop]
        out = {}
        for k in np.unique(fb):
            keep = fb == k
            out[int(k)] = _block_moments(blk[keep], yb[keep], None)
        return out

    acc = [RawMoments.zeros(X.n_cols) for _ in range(K)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, X.iter_blocks(block_rows)))
    else:
        parts = map(work, X.iter_blocks(block_rows))
    for part in parts:
        for k, mom in part.items():
            acc[k] = acc[k] + mom
    n = X.n_rows
    folds = tuple(
        FoldStats(xtx=0.5 * (m.sxx + m.sxx.T) / n, xty=m.sxy / n, n_k=m.n,
                  row_ids=np.nonzero(fold == k)[0], sx=m.sx, sy=m.sy, syy=m.syy)
        for k, m in enumerate(acc)
    )
    return FoldGrams(folds=folds, n_obs=n)


# ---------------------------------------------------------------------------
# Largest eigenvalue
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RitzBounds:
    d: float  # guaranteed-safe upper bound used by OEM
    theta_max: float
    theta_min: float
    residual: float
    steps: int


def _small_spectrum(A: np.ndarray) -> tuple[float, float]:
    if A.shape[0] == 1:
        return float(A[0, 0]), float(A[0, 0])
    a, b, c = A[0, 0], 0.5 * (A[0, 1] + A[1, 0]), A[1, 1]
    mid = 0.5 * (a + c)
    rad = math.hypot(0.5 * (a - c), b)
    return mid + rad, mid - rad


def lanczos_bounds(xtx: np.ndarray, tol: float = 1e-8, max_iter: int | None = None,
                   seed: int = 0) -> RitzBounds:
    """Lanczos with full reorthogonalization on a symmetric matrix.

    Stops when the residual of the top Ritz pair drops below
    ``tol * theta``. The returned ``d`` is ``(theta + residual)`` inflated by
    ``1 + min(1e-8, tol)``.
    """
    A = np.asarray(xtx, dtype=np.float64)
    p = A.shape[0]
    if A.shape != (p, p) or p == 0:
        raise DimensionMismatchError("expected a non-empty square matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    inflate = 1.0 + min(1e-8, tol)
    if p <= 2:
        hi, lo = _small_spectrum(A)
        return RitzBounds(hi * inflate, hi, lo, 0.0, 1)

    m_max = p if max_iter is None else min(int(max_iter), p)
    rng = np.random.default_rng(seed)
    Q = np.empty((m_max, p))
    alphas = np.empty(m_max)
    betas = np.empty(m_max)
    q = rng.standard_normal(p)
    q /= np.linalg.norm(q)
    theta = resid = 0.0
    converged = False
    for k in range(m_max):
        Q[k] = q
        w = A @ q
        a = q @ w
        w -= a * q
        if k > 0:
            w -= betas[k - 1] * Q[k - 1]
        for _ in range(2):
            w -= Q[: k + 1].T @ (Q[: k + 1] @ w)
        b = float(np.linalg.norm(w))
        alphas[k] = a
        betas[k] = b
        if k == 0:
            theta, s_last = a, 1.0
        else:
            vals, vecs = eigh_tridiagonal(alphas[: k + 1], betas[:k], select="i",
                                          select_range=(k, k))
            theta, s_last = float(vals[0]), float(vecs[-1, 0])
        resid = b * abs(s_last)
        scale = max(abs(theta), np.finfo(float).tiny)
        if resid <= tol * scale or k + 1 == p:
            converged = True
            break
        if b <= 1e-14 * scale:
            # invariant subspace; the Krylov space already holds every
            # eigen-direction the start vector touches
            converged = True
            break
        q = w / b
    steps = k + 1
    if not converged:
        raise NotConvergedError(m_max)
    if steps == 1:
        theta_min = theta
    else:
        theta_min = float(eigh_tridiagonal(alphas[:steps], betas[: steps - 1],
                                           eigvals_only=True, select="i",
                                           select_range=(0, 0))[0])
    d = (theta + resid) * inflate
    # one Rayleigh-quotient probe from a fresh direction
    v = A @ (A @ rng.standard_normal(p))
    nv = v @ v
    if nv > 0:
        probe = (v @ (A @ v)) / nv
        if probe > d:
            logger.warning("Rayleigh probe %.17g exceeds Lanczos bound %.17g", probe, d)
            d = probe * inflate
    return RitzBounds(float(d), float(theta), theta_min, float(resid), steps)


def largest_eigenvalue(xtx: np.ndarray, tol: float = 1e-8, max_iter: int | None = None) -> float:
    """Upper bound ``d`` on the largest eigenvalue with ``d <= lambda_1 (1 + 10 tol)``."""
    return lanczos_bounds(xtx, tol=tol, max_iter=max_iter).d


def safe_largest_eigenvalue(xtx: np.ndarray, tol: float = 1e-8, max_iter: int | None = None) -> float:
    """:func:`largest_eigenvalue`, falling back to the trace bound on failure."""
    try:
        d = largest_eigenvalue(xtx, tol=tol, max_iter=max_iter)
    except NotConvergedError:
        d = float(np.trace(xtx))
        logger.warning("Lanczos did not converge; using trace bound d=%g", d)
    if not np.isfinite(d) or d <= 0:
        raise DataError("Gram matrix has no positive eigenvalue (all-zero design?)")
    return d
