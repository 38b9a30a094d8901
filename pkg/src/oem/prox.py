"""Thresholding operators and penalty specifications.

Each operator returns the minimizer of ``d/2 * b**2 - u*b + P(b)`` for its
penalty ``P``: the closed-form M-step of OEM. Scalar operators are jitted so
the solver kernel can inline them; they are equally callable from Python.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import PenaltyError

LASSO = "lasso"
ELASTIC_NET = "elastic.net"
MCP = "mcp"
SCAD = "scad"
GRP_LASSO = "grp.lasso"
GRP_MCP = "grp.mcp"
GRP_SCAD = "grp.scad"
SPARSE_GRP_LASSO = "sparse.grp.lasso"

FAMILIES = (LASSO, ELASTIC_NET, MCP, SCAD, GRP_LASSO, GRP_MCP, GRP_SCAD, SPARSE_GRP_LASSO)
GROUP_FAMILIES = frozenset({GRP_LASSO, GRP_MCP, GRP_SCAD, SPARSE_GRP_LASSO})
CONVEX_FAMILIES = frozenset({LASSO, ELASTIC_NET, GRP_LASSO, SPARSE_GRP_LASSO})
FAMILY_CODES = {name: code for code, name in enumerate(FAMILIES)}

_ALIASES = {
    "elastic_net": ELASTIC_NET, "enet": ELASTIC_NET, "elasticnet": ELASTIC_NET,
    "grp_lasso": GRP_LASSO, "group_lasso": GRP_LASSO,
    "grp_mcp": GRP_MCP, "group_mcp": GRP_MCP,
    "grp_scad": GRP_SCAD, "group_scad": GRP_SCAD,
    "sparse_grp_lasso": SPARSE_GRP_LASSO, "sparse_group_lasso": SPARSE_GRP_LASSO,
}


def canonical_family(name: str) -> str:
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key not in FAMILY_CODES:
        raise PenaltyError(f"unknown penalty {name!r}; choose from {', '.join(FAMILIES)}")
    return key


# ---------------------------------------------------------------------------
# Scalar operators
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def soft_threshold(u, lam, d):
    """``sign(u) * max(|u| - lam, 0) / d``."""
    a = abs(u) - lam
    if a <= 0.0:
        return 0.0
    return math.copysign(a / d, u)


@njit(cache=True, nogil=True)
def elastic_net_threshold(u, lam, alpha, w, d):
    a = abs(u) - w * alpha * lam
    if a <= 0.0:
        return 0.0
    return math.copysign(a / (d + w * (1.0 - alpha) * lam), u)


@njit(cache=True, nogil=True)
def mcp_threshold(u, lam, gamma, d):
    """MCP update; needs ``gamma * d > 1``.

    Inside ``|u| <= gamma*lam*d`` the soft threshold is rescaled by
    ``gamma / (gamma*d - 1)``; beyond it the coefficient is left unshrunk.
    """
    au = abs(u)
    if au > gamma * lam * d:
        return u / d
    a = au - lam
    if a <= 0.0:
        return 0.0
    return math.copysign(gamma * a / (gamma * d - 1.0), u)


@njit(cache=True, nogil=True)
def scad_threshold(u, lam, gamma, d):
    """SCAD update; needs ``(gamma - 1) * d > 1``."""
    au = abs(u)
    if au > gamma * lam * d:
        return u / d
    if au <= (d + 1.0) * lam:
        return soft_threshold(u, lam, d)
    return math.copysign(((gamma - 1.0) * au - gamma * lam) / ((gamma - 1.0) * d - 1.0), u)


# ---------------------------------------------------------------------------
# Group operators (whole-vector forms and the indexed forms used by the kernel)
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _norm_at(u, order, lo, hi):
    s = 0.0
    for t in range(lo, hi):
        v = u[order[t]]
        s += v * v
    return math.sqrt(s)


@njit(cache=True, nogil=True)
def _fill_zero(out, order, lo, hi):
    for t in range(lo, hi):
        out[order[t]] = 0.0


@njit(cache=True, nogil=True)
def _group_lasso_at(u, order, lo, hi, lam, d, out):
    nrm = _norm_at(u, order, lo, hi)
    if nrm <= lam:
        _fill_zero(out, order, lo, hi)
        return
    f = 1.0 - lam / nrm
    for t in range(lo, hi):
        i = order[t]
        out[i] = u[i] / d * f


@njit(cache=True, nogil=True)
def _group_radial_at(u, order, lo, hi, lam, gamma, d, scad, out):
    nrm = _norm_at(u, order, lo, hi)
    if nrm == 0.0:
        _fill_zero(out, order, lo, hi)
        return
    if nrm > gamma * lam * d:
        for t in range(lo, hi):
            i = order[t]
            out[i] = u[i] / d
        return
    r = scad_threshold(nrm, lam, gamma, d) if scad else mcp_threshold(nrm, lam, gamma, d)
    f = r / nrm
    for t in range(lo, hi):
        i = order[t]
        out[i] = u[i] * f


@njit(cache=True, nogil=True)
def _sparse_group_at(u, order, lo, hi, lam, tau, w, c, d, out):
    # inner coordinatewise soft threshold, divisor d
    s = 0.0
    for t in range(lo, hi):
        i = order[t]
        v = soft_threshold(u[i], w[i] * lam * tau, d)
        out[i] = v
        s += v * v
    nrm = math.sqrt(s)
    # outer group threshold on v; its level is c*lam*(1-tau)/d because v is
    # already divided by d
    lg = c * lam * (1.0 - tau)
    if nrm * d <= lg:
        _fill_zero(out, order, lo, hi)
        return
    f = 1.0 - lg / (d * nrm)
    for t in range(lo, hi):
        i = order[t]
        out[i] = out[i] * f


def _vec(u):
    u = np.ascontiguousarray(u, dtype=np.float64).ravel()
    return u, np.arange(u.shape[0]), 0, u.shape[0], np.empty_like(u)


def group_threshold(u, lam: float, d: float) -> np.ndarray:
    """Block soft threshold ``(u/d) * max(1 - lam/||u||, 0)``."""
    u, order, lo, hi, out = _vec(u)
    _group_lasso_at(u, order, lo, hi, float(lam), float(d), out)
    return out


def group_mcp_threshold(u, lam: float, gamma: float, d: float) -> np.ndarray:
    u, order, lo, hi, out = _vec(u)
    _group_radial_at(u, order, lo, hi, float(lam), float(gamma), float(d), False, out)
    return out


def group_scad_threshold(u, lam: float, gamma: float, d: float) -> np.ndarray:
    u, order, lo, hi, out = _vec(u)
    _group_radial_at(u, order, lo, hi, float(lam), float(gamma), float(d), True, out)
    return out


def sparse_group_threshold(u, lam: float, tau: float, w, c: float, d: float) -> np.ndarray:
    """Sparse group lasso update for one group: soft threshold, then group threshold."""
    u, order, lo, hi, out = _vec(u)
    w = np.broadcast_to(np.asarray(w, dtype=np.float64), u.shape).copy()
    _sparse_group_at(u, order, lo, hi, float(lam), float(tau), w, float(c), float(d), out)
    return out


# ---------------------------------------------------------------------------
# Full-vector update used by the solver
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def prox_update(u, out, fam, lam, d, gamma, alpha, tau, w, c, order, starts):
    """Apply family ``fam``'s update to every coordinate of ``u``.

    Groups are contiguous runs ``order[starts[k]:starts[k+1]]``.
    """
    p = u.shape[0]
    if fam == 0:
        for j in range(p):
            out[j] = soft_threshold(u[j], w[j] * lam, d)
    elif fam == 1:
        for j in range(p):
            out[j] = elastic_net_threshold(u[j], lam, alpha, w[j], d)
    elif fam == 2:
        for j in range(p):
            out[j] = mcp_threshold(u[j], w[j] * lam, gamma, d)
    elif fam == 3:
        for j in range(p):
            out[j] = scad_threshold(u[j], w[j] * lam, gamma, d)
    else:
        for k in range(starts.shape[0] - 1):
            lo, hi = starts[k], starts[k + 1]
            if fam == 4:
                _group_lasso_at(u, order, lo, hi, c[k] * lam, d, out)
            elif fam == 5:
                _group_radial_at(u, order, lo, hi, c[k] * lam, gamma, d, False, out)
            elif fam == 6:
                _group_radial_at(u, order, lo, hi, c[k] * lam, gamma, d, True, out)
            else:
                _sparse_group_at(u, order, lo, hi, lam, tau, w, c[k], d, out)


# ---------------------------------------------------------------------------
# Penalty values
# ---------------------------------------------------------------------------


def mcp_penalty(b, lam, gamma):
    """Elementwise MCP ``P_{lam,gamma}(b)``."""
    a = np.abs(b)
    lam = np.asarray(lam, dtype=np.float64)
    return np.where(a <= gamma * lam, lam * a - a * a / (2.0 * gamma), 0.5 * gamma * lam * lam)


def scad_penalty(b, lam, gamma):
    """Elementwise SCAD ``P_{lam,gamma}(b)``."""
    a = np.abs(b)
    lam = np.asarray(lam, dtype=np.float64)
    mid = -(a * a - 2.0 * gamma * lam * a + lam * lam) / (2.0 * (gamma - 1.0))
    return np.where(a <= lam, lam * a, np.where(a <= gamma * lam, mid, 0.5 * (gamma + 1.0) * lam * lam))


# ---------------------------------------------------------------------------
# Penalty specification
# ---------------------------------------------------------------------------


def _group_codes(groups, p: int):
    labels = np.asarray(groups).ravel()
    if labels.shape != (p,):
        raise PenaltyError(f"groups must have one label per variable ({p}), got {labels.shape[0]}")
    uniq, gid = np.unique(labels, return_inverse=True)
    return uniq, gid.astype(np.int64)


@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """A penalty family with its hyperparameters, validated on construction.

    ``groups`` holds one label per variable; any labels work and they are
    ordered by sorting. ``var_weights`` (``w``) default to one and
    ``grp_weights`` (``c``) to the square root of the group size. A zero
    weight leaves that variable or group unpenalized.
    """

    family: str
    n_vars: int
    gamma: float | None = None
    alpha: float = 1.0
    tau: float = 0.5
    groups: np.ndarray | None = None
    var_weights: np.ndarray | None = None
    grp_weights: np.ndarray | None = None
    label: str = ""
    # derived
    group_labels: np.ndarray = field(init=False, repr=False)
    group_ids: np.ndarray = field(init=False, repr=False)
    _order: np.ndarray = field(init=False, repr=False)
    _starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        fam = canonical_family(self.family)
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("family", fam)
        p = int(self.n_vars)
        if p < 1:
            raise PenaltyError("n_vars must be positive")
        set_("n_vars", p)

        gamma = self.gamma
        if fam in (MCP, GRP_MCP):
            gamma = 3.0 if gamma is None else float(gamma)
            if not gamma > 1.0:
                raise PenaltyError(f"MCP requires gamma > 1, got {gamma}")
        elif fam in (SCAD, GRP_SCAD):
            gamma = 3.7 if gamma is None else float(gamma)
            if not gamma > 2.0:
                raise PenaltyError(f"SCAD requires gamma > 2, got {gamma}")
        set_("gamma", gamma)
        if not 0.0 <= self.alpha <= 1.0:
            raise PenaltyError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.tau <= 1.0:
            raise PenaltyError(f"tau must lie in [0, 1], got {self.tau}")
        if fam != ELASTIC_NET:
            set_("alpha", 1.0)
        set_("alpha", float(self.alpha))
        set_("tau", float(self.tau))

        w = np.ones(p) if self.var_weights is None else np.asarray(self.var_weights, dtype=np.float64).ravel()
        if w.shape != (p,):
            raise PenaltyError(f"var_weights must have length {p}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise PenaltyError("var_weights must be finite and nonnegative")
        set_("var_weights", w)

        if fam in GROUP_FAMILIES:
            if self.groups is None:
                raise PenaltyError(f"penalty {fam!r} needs a group label for every variable")
            uniq, gid = _group_codes(self.groups, p)
        else:
            uniq, gid = np.zeros(1), np.zeros(p, dtype=np.int64)
        G = uniq.shape[0]
        sizes = np.bincount(gid, minlength=G)
        if self.grp_weights is None:
            c = np.sqrt(sizes.astype(np.float64))
        else:
            c = np.asarray(self.grp_weights, dtype=np.float64).ravel()
            if c.shape != (G,):
                raise PenaltyError(f"grp_weights must have one entry per group ({G})")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise PenaltyError("grp_weights must be finite and nonnegative")
        order = np.argsort(gid, kind="stable").astype(np.int64)
        starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        set_("groups", None if self.groups is None else np.asarray(self.groups).ravel())
        set_("grp_weights", c)
        set_("group_labels", uniq)
        set_("group_ids", gid)
        set_("_order", order)
        set_("_starts", starts)
        if not self.label:
            set_("label", fam)
        for arr in (w, c, gid, order, starts):
            arr.flags.writeable = False

    @property
    def is_group(self) -> bool:
        return self.family in GROUP_FAMILIES

    @property
    def is_convex(self) -> bool:
        return self.family in CONVEX_FAMILIES

    @property
    def code(self) -> int:
        return FAMILY_CODES[self.family]

    @property
    def n_groups(self) -> int:
        return self.group_labels.shape[0]

    def check_curvature(self, d: float) -> None:
        """Reject MCP/SCAD settings whose M-step is not a strict minimization."""
        if self.family in (MCP, GRP_MCP) and not self.gamma * d > 1.0:
            raise PenaltyError(
                f"{self.family}: gamma*d = {self.gamma * d:.6g} must exceed 1 "
                f"(gamma={self.gamma}, d={d:.6g}); increase gamma")
        if self.family in (SCAD, GRP_SCAD) and not (self.gamma - 1.0) * d > 1.0:
            raise PenaltyError(
                f"{self.family}: (gamma-1)*d = {(self.gamma - 1.0) * d:.6g} must exceed 1 "
                f"(gamma={self.gamma}, d={d:.6g}); increase gamma")

    def kernel_args(self) -> tuple:
        g = 0.0 if self.gamma is None else self.gamma
        return (self.code, g, self.alpha, self.tau, self.var_weights,
                self.grp_weights if self.is_group else np.zeros(1),
                self._order, self._starts if self.is_group else np.zeros(1, dtype=np.int64))

    def apply(self, u, lam: float, d: float) -> np.ndarray:
        """Full-vector update ``argmin_b d/2 ||b||^2 - u'b + P_lam(b)``."""
        u = np.ascontiguousarray(u, dtype=np.float64)
        out = np.empty_like(u)
        fam, g, a, t, w, c, order, starts = self.kernel_args()
        prox_update(u, out, fam, float(lam), float(d), g, a, t, w, c, order, starts)
        return out

    def group_norms(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=np.float64)
        return np.sqrt(np.bincount(self.group_ids, weights=beta * beta, minlength=self.n_groups))

    def value(self, beta, lam: float) -> float:
        """Penalty ``P_lam(beta)``."""
        b = np.asarray(beta, dtype=np.float64)
        w, fam = self.var_weights, self.family
        if fam == LASSO:
            return float(lam * np.sum(w * np.abs(b)))
        if fam == ELASTIC_NET:
            a = self.alpha
            return float(a * lam * np.sum(w * np.abs(b)) + 0.5 * (1 - a) * lam * np.sum(w * b * b))
        if fam == MCP:
            return float(np.sum(mcp_penalty(b, lam * w, self.gamma)))
        if fam == SCAD:
            return float(np.sum(scad_penalty(b, lam * w, self.gamma)))
        norms = self.group_norms(b)
        c = self.grp_weights
        if fam == GRP_LASSO:
            return float(lam * np.sum(c * norms))
        if fam == GRP_MCP:
            return float(np.sum(mcp_penalty(norms, lam * c, self.gamma)))
        if fam == GRP_SCAD:
            return float(np.sum(scad_penalty(norms, lam * c, self.gamma)))
        t = self.tau
        return float(lam * (1 - t) * np.sum(c * norms) + lam * t * np.sum(w * np.abs(b)))

    def penalized_mask(self) -> np.ndarray:
        """True for coordinates the penalty actually touches."""
        if self.is_group:
            return self.grp_weights[self.group_ids] > 0
        return self.var_weights > 0

    def lambda_max(self, grad) -> float:
        """Smallest ``lam`` for which ``beta = 0`` is a fixed point, given ``grad = X'y/n``.

        For the sparse group lasso this is the smaller of two valid upper
        bounds (pure lasso with weight ``tau*w`` and pure group with weight
        ``(1-tau)*c``).
        """
        from .errors import AllWeightsZeroError

        g = np.abs(np.asarray(grad, dtype=np.float64))
        w = self.var_weights
        if self.family in (GRP_LASSO, GRP_MCP, GRP_SCAD, SPARSE_GRP_LASSO):
            c = self.grp_weights
            norms = self.group_norms(g)
            pen_g = c > 0
        if self.family in (LASSO, ELASTIC_NET, MCP, SCAD):
            pen = w > 0
            if not pen.any():
                raise AllWeightsZeroError("every variable has zero penalty weight")
            mult = max(self.alpha, 1e-3) if self.family == ELASTIC_NET else 1.0
            return float(np.max(g[pen] / (w[pen] * mult)))
        if self.family != SPARSE_GRP_LASSO:
            if not pen_g.any():
                raise AllWeightsZeroError("every group has zero penalty weight")
            return float(np.max(norms[pen_g] / c[pen_g]))
        bounds = []
        pen = w > 0
        if self.tau > 0 and pen.any():
            bounds.append(np.max(g[pen] / (self.tau * w[pen])))
        if self.tau < 1 and pen_g.any():
            bounds.append(np.max(norms[pen_g] / ((1 - self.tau) * c[pen_g])))
        if not bounds:
            raise AllWeightsZeroError("sparse group lasso has no penalized coordinate")
        return float(min(bounds))

    def params(self) -> dict:
        out = {"family": self.family, "label": self.label, "alpha": self.alpha, "tau": self.tau,
               "gamma": self.gamma, "var_weights": self.var_weights.tolist()}
        if self.is_group:
            out["groups"] = self.groups.tolist()
            out["grp_weights"] = self.grp_weights.tolist()
        return out

    @classmethod
    def from_params(cls, params: dict, n_vars: int) -> "PenaltySpec":
        return cls(family=params["family"], n_vars=n_vars, gamma=params.get("gamma"),
                   alpha=params.get("alpha", 1.0), tau=params.get("tau", 0.5),
                   groups=params.get("groups"), var_weights=params.get("var_weights"),
                   grp_weights=params.get("grp_weights"), label=params.get("label", ""))


def make_specs(penalties, n_vars: int, *, gamma: float | None = None, alpha: float = 0.5,
               tau: float = 0.5, groups=None, var_weights=None, grp_weights=None) -> list[PenaltySpec]:
    """Build one spec per penalty name sharing the same hyperparameters.

    Non-group families ignore ``groups``. ``gamma`` applies to MCP and SCAD
    alike when given; otherwise each uses its own default.
    """
    if isinstance(penalties, str):
        penalties = [p for p in penalties.split(",") if p.strip()]
    specs = []
    for name in penalties:
        fam = canonical_family(name)
        specs.append(PenaltySpec(
            family=fam, n_vars=n_vars, gamma=gamma,
            alpha=alpha if fam == ELASTIC_NET else 1.0, tau=tau,
            groups=groups if fam in GROUP_FAMILIES else None,
            var_weights=var_weights,
            grp_weights=grp_weights if fam in GROUP_FAMILIES else None,
        ))
    return specs
