"""Independent reference implementations used by the test suite.

None of these call into the package: they minimize the defining
objectives directly (grid search, coordinate descent, Newton) so that the
closed-form operators and the OEM solver are checked against first
principles rather than against themselves.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

# ---------------------------------------------------------------------------
# Penalties written out from their definitions
# ---------------------------------------------------------------------------


def pen_lasso(b, lam):
    return lam * np.abs(b)


def pen_mcp(b, lam, gamma):
    a = np.abs(b)
    return np.where(a <= gamma * lam, lam * a - a**2 / (2 * gamma), gamma * lam**2 / 2)


def pen_scad(b, lam, gamma):
    a = np.abs(b)
    return np.where(
        a <= lam,
        lam * a,
        np.where(a <= gamma * lam, (2 * gamma * lam * a - a**2 - lam**2) / (2 * (gamma - 1)),
                 lam**2 * (gamma + 1) / 2),
    )


# ---------------------------------------------------------------------------
# Grid-search prox
# ---------------------------------------------------------------------------


def grid_argmin_1d(f, lo, hi, step=1e-4, final=1e-10, points=41):
    """Minimize a scalar function by a fine grid followed by zooming grids.

    ``f`` maps an array of candidates to objective values. Each zoom keeps a
    window of ``+-20`` steps around the incumbent and shrinks the step ten
    times; it stops once the step is below ``final``.
    """
    xs = np.arange(lo, hi + step, step)
    xs = np.append(xs, 0.0)
    x = xs[np.argmin(f(xs))]
    h = step
    while h > final:
        xs = x + h * np.linspace(-20, 20, points)
        xs = np.append(xs, x)
        x = xs[np.argmin(f(xs))]
        h /= 10
    if f(np.array([0.0]))[0] <= f(np.array([x]))[0]:
        x = 0.0
    return float(x)


def prox_scalar_oracle(u, d, penalty):
    """``argmin 0.5 d b^2 - u b + penalty(b)`` by grid search."""
    R = abs(u) / d + 1.0
    return grid_argmin_1d(lambda b: 0.5 * d * b * b - u * b + penalty(b), -R, R)


def grid_argmin_nd(f, center, radius, final=1e-10, points=None, shrink=4):
    """Zooming-grid pattern search in two or three dimensions.

    At each step size the grid is re-centred on the incumbent until the
    centre itself is the grid minimum; only then is the step shrunk. This
    keeps the search on track in the narrow valleys that appear near the
    kink of a norm penalty.
    """
    center = np.asarray(center, dtype=float)
    k = center.shape[0]
    points = points or (41 if k == 2 else 21)
    half = (points - 1) // 2
    offsets = np.stack(np.meshgrid(*[np.arange(-half, half + 1)] * k, indexing="ij"), -1).reshape(-1, k)
    h = radius / half
    x = center
    fx = f(x[None])[0]
    while h > final * max(radius, 1.0):
        for _ in range(200):
            # also try the coordinate-axis projections of the incumbent and zero
            extra = [np.where(np.arange(k) == i, 0.0, x) for i in range(k)] + [np.zeros(k)]
            mesh = np.vstack([x + h * offsets] + extra)
            vals = f(mesh)
            i = int(np.argmin(vals))
            if not vals[i] < fx:
                break
            x, fx = mesh[i], vals[i]
        h /= shrink
    return x


def prox_vector_oracle(u, d, penalty):
    """``argmin 0.5 d |b|^2 - u'b + penalty(b)`` over a two or three dimensional b."""
    u = np.asarray(u, dtype=float)

    def f(B):
        return 0.5 * d * np.sum(B * B, axis=1) - B @ u + penalty(B)

    R = np.linalg.norm(u) / d + 0.5
    return grid_argmin_nd(f, np.zeros_like(u), R)


# ---------------------------------------------------------------------------
# Coordinate descent on the Gram form
# ---------------------------------------------------------------------------


def cd_lasso(xtx, xty, lam, w=None, alpha=1.0, tol=1e-14, max_sweeps=200_000, beta0=None):
    """Cyclic coordinate descent for ``0.5 b'Ab - c'b + lam sum w (alpha|b| + (1-alpha) b^2/2)``."""
    p = xty.shape[0]
    w = np.ones(p) if w is None else np.asarray(w, float)
    b = np.zeros(p) if beta0 is None else beta0.copy()
    r = xty - xtx @ b
    for _ in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            z = r[j] + xtx[j, j] * b[j]
            thr = lam * w[j] * alpha
            new = np.sign(z) * max(abs(z) - thr, 0.0) / (xtx[j, j] + lam * w[j] * (1 - alpha))
            if new != b[j]:
                r -= xtx[:, j] * (new - b[j])
                delta = max(delta, abs(new - b[j]))
                b[j] = new
        if delta < tol:
            break
    return b


def _group_block_solve(A, c, t):
    """``argmin 0.5 b'Ab - c'b + t |b|`` for a PSD block ``A``."""
    nc = np.linalg.norm(c)
    if nc <= t:
        return np.zeros_like(c)
    if t == 0:
        return np.linalg.solve(A, c)
    ev, Q = np.linalg.eigh(A)
    ct = Q.T @ c

    def g(s):  # s * |(A + sI)^-1 c| increases from 0 to |c|
        return s * np.sqrt(np.sum((ct / (ev + s)) ** 2)) - t

    hi = 1.0
    while g(hi) < 0:
        hi *= 2
    s = brentq(g, 1e-300, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return Q @ (ct / (ev + s))


def bcd_group_lasso(xtx, xty, lam, groups, c=None, tol=1e-14, max_sweeps=100_000):
    """Block coordinate descent with exact block updates via the secular equation."""
    labels = np.unique(groups)
    blocks = [np.nonzero(groups == g)[0] for g in labels]
    c = np.array([np.sqrt(len(ix)) for ix in blocks]) if c is None else np.asarray(c, float)
    b = np.zeros(xty.shape[0])
    for _ in range(max_sweeps):
        delta = 0.0
        for k, ix in enumerate(blocks):
            A = xtx[np.ix_(ix, ix)]
            rhs = xty[ix] - xtx[ix] @ b + A @ b[ix]
            new = _group_block_solve(A, rhs, lam * c[k])
            delta = max(delta, float(np.max(np.abs(new - b[ix]))))
            b[ix] = new
        if delta < tol:
            break
    return b


# ---------------------------------------------------------------------------
# Other references
# ---------------------------------------------------------------------------


def naive_gram(X, y):
    n, p = X.shape
    xtx = np.zeros((p, p))
    xty = np.zeros(p)
    for j in range(p):
        for k in range(p):
            s = 0.0
            for i in range(n):
                s += X[i, j] * X[i, k]
            xtx[j, k] = s / n
        xty[j] = sum(X[i, j] * y[i] for i in range(n)) / n
    return xtx, xty


def ols(X, y, intercept=True):
    A = np.column_stack([np.ones(len(y)), X]) if intercept else X
    sol = np.linalg.lstsq(A, y, rcond=None)[0]
    return (sol[0], sol[1:]) if intercept else (0.0, sol)


def newton_logistic(X, y, iters=100):
    """Unpenalized logistic regression with intercept by Newton-Raphson."""
    A = np.column_stack([np.ones(len(y)), X])
    b = np.zeros(A.shape[1])
    for _ in range(iters):
        mu = 1.0 / (1.0 + np.exp(-A @ b))
        step = np.linalg.solve(A.T @ (A * (mu * (1 - mu))[:, None]), A.T @ (y - mu))
        b += step
        if np.max(np.abs(step)) < 1e-14:
            break
    return b[0], b[1:]


def irls_quantities(X, y, beta, b0, eps=1e-5, quarter=False):
    """Textbook IRLS working response and weights, written elementwise."""
    z, w, m = [], [], []
    for i in range(X.shape[0]):
        eta = b0 + sum(X[i, j] * beta[j] for j in range(X.shape[1]))
        mu = 1.0 / (1.0 + np.exp(-eta))
        mu = min(max(mu, eps), 1 - eps)
        wi = 0.25 if quarter else mu * (1 - mu)
        z.append(eta + (y[i] - mu) / wi)
        w.append(wi)
        m.append(mu)
    return np.array(z), np.array(w), np.array(m)
