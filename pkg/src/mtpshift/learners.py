"""Candidate learners for the Super Learner library.

Every family shares one contract: ``fit(spec, X, y, weights, seed)`` returns
a :class:`FittedModel` whose ``predict`` maps a feature matrix to a vector of
predictions. Two tasks are supported, ``"regression"`` (squared error) and
``"binary"`` (probabilities under weighted log-loss, clipped to
``[PROB_CLIP, 1 - PROB_CLIP]``).

Families: ``mean``, ``glm`` (identity link for regression, logistic for
binary), ``gam`` (natural cubic spline basis + penalized fit), ``tree``,
``boosting`` and ``forest``. The three tree families are grown on
quantile-binned features, level by level.
"""

from __future__ import annotations

import math
import warnings
from functools import cached_property
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np
from scipy.special import expit

PROB_CLIP = 1e-6

REGRESSION = "regression"
BINARY = "binary"
TASKS = (REGRESSION, BINARY)

_DEFAULTS: dict[str, dict[str, Any]] = {
    "mean": {},
    "glm": {"max_iter": 50, "tol": 1e-8, "jitter": 1e-8},
    "gam": {"n_knots": 4, "penalty": 1e-4, "max_iter": 50, "tol": 1e-8},
    "tree": {"max_depth": 3, "min_samples_leaf": 1, "max_bins": 64},
    "boosting": {
        "n_rounds": 100,
        "learning_rate": 0.1,
        "max_depth": 2,
        "min_samples_leaf": 5,
        "subsample": 1.0,
        "reg_lambda": 1.0,
        "max_bins": 32,
    },
    "forest": {
        "n_trees": 50,
        "max_depth": 8,
        "min_samples_leaf": 5,
        "max_features": "sqrt",
        "max_bins": 32,
    },
}
_ALIASES = {"logistic": "glm", "linear": "glm", "lm": "glm", "rf": "forest", "gbm": "boosting"}

FAMILIES = tuple(_DEFAULTS)


class LearnerError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearnerSpec:
    """A named candidate: algorithm family, task, and hyperparameters."""

    name: str
    family: str
    task: str = REGRESSION
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        family = _ALIASES.get(self.family, self.family)
        if family not in _DEFAULTS:
            raise ValueError(f"unknown learner family {self.family!r}")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        unknown = set(self.params) - set(_DEFAULTS[family]) - {"seed"}
        if unknown:
            raise ValueError(f"{self.name}: unknown hyperparameters {sorted(unknown)}")
        merged = {**_DEFAULTS[family], **self.params}
        _validate_params(family, merged)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", merged)

    def for_task(self, task: str) -> "LearnerSpec":
        return LearnerSpec(self.name, self.family, task, dict(self.params))


def _validate_params(family, p):
    def positive_int(key, allow_zero=False):
        v = p[key]
        if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < (0 if allow_zero else 1):
            raise ValueError(f"{family}: {key} must be a {'nonnegative' if allow_zero else 'positive'} integer")

    if family in ("tree", "boosting", "forest"):
        positive_int("max_depth", allow_zero=True)
        positive_int("min_samples_leaf")
        positive_int("max_bins")
        if p["max_bins"] < 2:
            raise ValueError(f"{family}: max_bins must be at least 2")
    if family == "boosting":
        positive_int("n_rounds", allow_zero=True)
        if not 0 < p["learning_rate"] <= 1:
            raise ValueError("boosting: learning_rate must lie in (0, 1]")
        if not 0 < p["subsample"] <= 1:
            raise ValueError("boosting: subsample must lie in (0, 1]")
        if p["reg_lambda"] < 0:
            raise ValueError("boosting: reg_lambda must be nonnegative")
    if family == "forest":
        positive_int("n_trees")
        mf = p["max_features"]
        if not (mf in ("sqrt", "all") or (isinstance(mf, (int, float)) and mf > 0)):
            raise ValueError("forest: max_features must be 'sqrt', 'all' or a positive number")
    if family == "gam":
        positive_int("n_knots", allow_zero=True)
        if p["penalty"] < 0:
            raise ValueError("gam: penalty must be nonnegative")
    if family in ("glm", "gam"):
        positive_int("max_iter")


@dataclass(frozen=True, eq=False)
class FittedModel:
    spec: LearnerSpec
    p: int
    state: Any
    info: Mapping[str, Any] = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)


def _check_X(X, p=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-d")
    if p is not None and X.shape[1] != p:
        raise ValueError(f"feature dimension mismatch: model trained on {p} columns, got {X.shape[1]}")
    return X


def _clip_prob(p):
    return np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)


def _weighted_mean(y, w):
    return float(np.dot(w, y) / w.sum())


def fit(spec: LearnerSpec, X, y, weights=None, seed: Optional[int] = None) -> FittedModel:
    """Fit one candidate learner to ``(X, y)``.

    ``weights`` are nonnegative case weights; rescaling them by a constant
    leaves the fit unchanged. ``seed`` drives every random choice of the
    randomized families and falls back to ``spec.params['seed']`` or 0.
    """
    X = _check_X(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n < 1 or y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]} entries")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape[0] != n:
            raise ValueError("weights length does not match y")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise ValueError("weights sum to zero")
    if spec.task == BINARY and np.any((y < 0) | (y > 1)):
        raise ValueError("binary targets must lie in [0, 1]")
    if seed is None:
        seed = int(spec.params.get("seed", 0))
    p = X.shape[1]
    if p == 0:  # nothing to split or regress on
        return FittedModel(spec, 0, _weighted_mean(y, w), {"no_features": True})
    fitter = _FITTERS[spec.family]
    state, info = fitter(spec, X, y, w, seed)
    return FittedModel(spec, p, state, info)


def predict(model: FittedModel, X) -> np.ndarray:
    X = _check_X(X, model.p)
    if model.p == 0:
        out = _predict_mean(model, X)
    else:
        out = _PREDICTORS[model.spec.family](model, X)
    if model.spec.task == BINARY:
        out = _clip_prob(out)
    return out


# -- mean ---------------------------------------------------------------------


def _fit_mean(spec, X, y, w, seed):
    return _weighted_mean(y, w), {}


def _predict_mean(model, X):
    return np.full(X.shape[0], model.state)


# -- generalized linear models --------------------------------------------------


def _wls(Z, y, w):
    """Weighted least squares, falling back to a ridge solve when singular."""
    sw = np.sqrt(w)
    Zw = Z * sw[:, None]
    beta, _, rank, sv = np.linalg.lstsq(Zw, y * sw, rcond=None)
    if rank == Z.shape[1]:
        return beta, False
    gram = Zw.T @ Zw
    lam = 1e-8 * max(np.trace(gram) / gram.shape[0], 1e-300)
    beta = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), Zw.T @ (y * sw))
    return beta, True


def _log_loss(y, eta, w):
    # -sum w [y*eta - log(1 + e^eta)], stable in eta
    return float(np.dot(w, np.logaddexp(0.0, eta) - y * eta))


def irls_logistic(Z, y, w, *, max_iter=50, tol=1e-8, jitter=1e-8, penalty=None):
    """Weighted logistic regression by iteratively reweighted least squares.

    ``penalty`` is an optional per-coefficient ridge vector. A relative
    ``jitter`` is added to the normal equations. Each Newton step is halved
    until the penalized loss does not increase, so the loss history is
    nonincreasing. Returns ``(beta, loss_history, converged)``.
    """
    k = Z.shape[1]
    beta = np.zeros(k)
    pen = np.zeros(k) if penalty is None else np.asarray(penalty, dtype=float)

    def objective(b, eta):
        return _log_loss(y, eta, w) + 0.5 * float(np.dot(pen, b * b))

    eta = Z @ beta
    losses = [objective(beta, eta)]
    converged = False
    for _ in range(max_iter):
        mu, mu_c = expit(eta), expit(-eta)
        h = w * mu * mu_c
        # y - mu written so that neither tail rounds to zero
        grad = Z.T @ (w * (y * mu_c - (1.0 - y) * mu)) - pen * beta
        hess = (Z * h[:, None]).T @ Z + np.diag(pen)
        scale = np.trace(hess) / k if k else 0.0
        hess[np.diag_indices(k)] += jitter * max(scale, 1e-300)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta + t * step
            eta_c = Z @ cand
            loss_c = objective(cand, eta_c)
            if loss_c <= losses[-1] or t < 1e-10:
                break
            t *= 0.5
        if loss_c > losses[-1]:
            converged = True
            break
        delta = np.max(np.abs(cand - beta)) if k else 0.0
        beta, eta = cand, eta_c
        losses.append(loss_c)
        if delta < tol:
            converged = True
            break
    return beta, losses, converged


def _fit_glm(spec, X, y, w, seed):
    Z = np.column_stack([np.ones(X.shape[0]), X])
    if spec.task == REGRESSION:
        beta, singular = _wls(Z, y, w)
        return beta, {"ridge_fallback": singular}
    prm = spec.params
    beta, losses, converged = irls_logistic(
        Z, y, w, max_iter=prm["max_iter"], tol=prm["tol"], jitter=prm["jitter"]
    )
    return beta, {"loss_history": losses, "converged": converged}


def _predict_glm(model, X):
    beta = model.state
    eta = beta[0] + X @ beta[1:]
    if model.spec.task == BINARY:
        return expit(eta)
    return eta


# -- additive model on natural cubic splines ------------------------------------


def _ncs_columns(x, knots):
    """Natural cubic spline basis without the constant: x and K-2 curvature terms."""
    K = len(knots)
    cols = [x]
    if K < 3:
        return cols
    last, prev = knots[-1], knots[-2]

    def d(k):
        return (np.maximum(x - knots[k], 0.0) ** 3 - np.maximum(x - last, 0.0) ** 3) / (last - knots[k])

    d_prev = d(K - 2)
    for k in range(K - 2):
        cols.append(d(k) - d_prev)
    return cols


@dataclass(frozen=True)
class _GamBasis:
    lo: np.ndarray
    span: np.ndarray
    knots: tuple

    def transform(self, X):
        cols, nonlinear = [np.ones(X.shape[0])], [False]
        for j, knots in enumerate(self.knots):
            x = (X[:, j] - self.lo[j]) / self.span[j]
            c = _ncs_columns(x, knots)
            cols.extend(c)
            nonlinear.extend([False] + [True] * (len(c) - 1))
        return np.column_stack(cols), np.array(nonlinear)


def _gam_basis(X, n_knots):
    lo = X.min(axis=0) if X.shape[0] else np.zeros(X.shape[1])
    span = X.max(axis=0) - lo if X.shape[0] else np.ones(X.shape[1])
    span = np.where(span > 0, span, 1.0)
    knots = []
    for j in range(X.shape[1]):
        x = (X[:, j] - lo[j]) / span[j]
        uniq = np.unique(x)
        if uniq.size <= n_knots + 2 or n_knots == 0:
            knots.append(())  # too few distinct values for curvature terms
            continue
        interior = np.quantile(x, np.linspace(0, 1, n_knots + 2)[1:-1])
        k = np.unique(np.concatenate([[0.0], interior, [1.0]]))
        knots.append(tuple(k) if k.size >= 3 else ())
    return _GamBasis(lo, span, tuple(knots))


def _fit_gam(spec, X, y, w, seed):
    prm = spec.params
    basis = _gam_basis(X, prm["n_knots"])
    Z, nonlinear = basis.transform(X)
    # ridge on curvature terms, relative to each column's weighted energy
    energy = w @ (Z * Z)
    if spec.task == BINARY:
        energy = 0.25 * energy  # logistic variance is at most 1/4
    pen = prm["penalty"] * energy * nonlinear
    if spec.task == REGRESSION:
        sw = np.sqrt(w)
        Zw = Z * sw[:, None]
        gram = Zw.T @ Zw + np.diag(pen)
        lam = 1e-10 * max(np.trace(gram) / gram.shape[0], 1e-300)
        gram[np.diag_indices_from(gram)] += lam
        beta = np.linalg.solve(gram, Zw.T @ (y * sw))
        return (basis, beta), {}
    beta, losses, converged = irls_logistic(
        Z, y, w, max_iter=prm["max_iter"], tol=prm["tol"], penalty=pen
    )
    return (basis, beta), {"loss_history": losses, "converged": converged}


def _predict_gam(model, X):
    basis, beta = model.state
    Z, _ = basis.transform(X)
    eta = Z @ beta
    if model.spec.task == BINARY:
        return expit(eta)
    return eta


# -- histogram trees ------------------------------------------------------------


@dataclass(frozen=True)
class _Binner:
    thresholds: tuple  # per feature, sorted split candidates ("x <= t" goes left)

    @classmethod
    def fit(cls, X, max_bins):
        ths = []
        for j in range(X.shape[1]):
            uniq = np.unique(X[:, j])
            if uniq.size <= max_bins:
                t = (uniq[:-1] + uniq[1:]) / 2.0
            else:
                q = np.quantile(X[:, j], np.linspace(0, 1, max_bins + 1)[1:-1])
                t = np.unique(q)
                t = t[t < uniq[-1]]
            ths.append(t)
        return cls(tuple(ths))

    @cached_property
    def table(self) -> np.ndarray:
        """Thresholds padded with +inf to a common width, one row per feature."""
        width = max((len(t) for t in self.thresholds), default=0)
        out = np.full((len(self.thresholds), width), np.inf)
        for j, t in enumerate(self.thresholds):
            out[j, : len(t)] = t
        return out

    def transform(self, X):
        out = np.empty(X.shape, dtype=np.int64)
        for j, t in enumerate(self.thresholds):
            out[:, j] = np.searchsorted(t, X[:, j], side="left")
        return out


@dataclass(frozen=True)
class _Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            f = self.feature[nd]
            go_left = X[active, f] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X):
        return self.value[self.apply(X)]


def _grow_tree(Xb, binner, g, h, rows, *, max_depth, min_leaf, lam, max_features, rng):
    """Grow one tree on binned features, one level at a time.

    Leaf values are ``sum(g) / (sum(h) + lam)`` over the leaf's rows; a split
    is chosen to maximise ``G_L^2/(H_L+lam) + G_R^2/(H_R+lam) - G^2/(H+lam)``.
    With ``g = w*y, h = w, lam = 0`` this is a weighted least-squares tree.
    """
    n_feat = Xb.shape[1]
    n_cut = binner.table.shape[1]
    n_bins = n_cut + 1
    Xr = Xb[rows]
    rg, rh = g[rows], h[rows]
    G0, H0 = rg.sum(), rh.sum()
    feature, threshold, left, right = [np.array([-1])], [np.array([0.0])], [np.array([-1])], [np.array([-1])]
    gsum, hsum = [np.array([G0])], [np.array([H0])]
    n_nodes = 1
    node_of = np.zeros(rows.size, dtype=np.int64)  # local frontier index, -1 once settled
    frontier = np.array([0])
    for _ in range(max_depth):
        if frontier.size == 0 or n_feat == 0 or n_cut == 0:
            break
        m = frontier.size
        live = node_of >= 0
        loc = node_of[live]
        key = ((loc[:, None] * n_feat + np.arange(n_feat)) * n_bins + Xr[live]).ravel()
        size = m * n_feat * n_bins
        shape = (m, n_feat, n_bins)
        Gh = np.bincount(key, np.repeat(rg[live], n_feat), size).reshape(shape)
        Hh = np.bincount(key, np.repeat(rh[live], n_feat), size).reshape(shape)
        Ch = np.bincount(key, None, size).reshape(shape)
        GL = np.cumsum(Gh, axis=2)[:, :, :-1]
        HL = np.cumsum(Hh, axis=2)[:, :, :-1]
        CL = np.cumsum(Ch, axis=2)[:, :, :-1]
        Gt, Ht, Ct = GL[:, :1, -1:] + Gh[:, :1, -1:], HL[:, :1, -1:] + Hh[:, :1, -1:], CL[:, :1, -1:] + Ch[:, :1, -1:]
        GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - Gt**2 / (Ht + lam)
        # cuts past a feature's own threshold count leave the right side empty
        ok = (CL >= min_leaf) & (CR >= min_leaf) & (HL + lam > 0) & (HR + lam > 0) & np.isfinite(gain)
        if max_features < n_feat:
            drop = np.argsort(rng.random((m, n_feat)), axis=1)[:, max_features:]
            ok[np.arange(m)[:, None], drop, :] = False
        gain = np.where(ok, gain, -np.inf).reshape(m, -1)
        best = np.argmax(gain, axis=1)
        best_gain = gain[np.arange(m), best]
        root_score = np.abs(Gt[:, 0, 0]) ** 2 / np.maximum(Ht[:, 0, 0] + lam, 1e-300)
        split = best_gain > 1e-12 * root_score + 1e-300
        if not split.any():
            break
        sidx = np.flatnonzero(split)
        f, b = np.divmod(best[sidx], n_cut)
        k = sidx.size
        lids = n_nodes + 2 * np.arange(k)
        rids = lids + 1
        n_nodes += 2 * k
        ids = frontier[sidx]
        feat_new = np.full(2 * k, -1)
        feature.append(feat_new)
        threshold.append(np.zeros(2 * k))
        left.append(np.full(2 * k, -1))
        right.append(np.full(2 * k, -1))
        gl, hl = GL[sidx, f, b], HL[sidx, f, b]
        gsum.append(np.column_stack([gl, Gt[sidx, 0, 0] - gl]).ravel())
        hsum.append(np.column_stack([hl, Ht[sidx, 0, 0] - hl]).ravel())
        feature_all = np.concatenate(feature)
        threshold_all = np.concatenate(threshold)
        left_all, right_all = np.concatenate(left), np.concatenate(right)
        feature_all[ids], threshold_all[ids] = f, binner.table[f, b]
        left_all[ids], right_all[ids] = lids, rids
        feature, threshold, left, right = [feature_all], [threshold_all], [left_all], [right_all]
        # route rows of split nodes to their children; new local index = child order
        pos = np.full(m, -1)
        pos[sidx] = np.arange(k)
        new_node_of = np.full(rows.size, -1, dtype=np.int64)
        live_idx = np.flatnonzero(live)
        sp = pos[loc]
        moving = sp >= 0
        mi = live_idx[moving]
        spm = sp[moving]
        go_left = Xr[mi, f[spm]] <= b[spm]
        new_node_of[mi] = 2 * spm + np.where(go_left, 0, 1)
        node_of = new_node_of
        frontier = np.column_stack([lids, rids]).ravel()
    G, H = np.concatenate(gsum), np.concatenate(hsum)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(H + lam > 0, G / (H + lam), 0.0)
    return _Tree(
        np.concatenate(feature).astype(np.int64),
        np.concatenate(threshold),
        np.concatenate(left).astype(np.int64),
        np.concatenate(right).astype(np.int64),
        value,
    )


def _fit_tree(spec, X, y, w, seed):
    prm = spec.params
    binner = _Binner.fit(X, prm["max_bins"])
    Xb = binner.transform(X)
    rows = np.flatnonzero(w > 0)
    tree = _grow_tree(
        Xb, binner, w * y, w, rows,
        max_depth=prm["max_depth"], min_leaf=prm["min_samples_leaf"], lam=0.0,
        max_features=X.shape[1], rng=None,
    )
    return tree, {"n_leaves": int(np.sum(tree.feature < 0))}


def _predict_tree(model, X):
    return model.state.predict(X)


@dataclass(frozen=True)
class _Boosted:
    base: float
    trees: tuple
    rate: float
    y_range: tuple


def _fit_boosting(spec, X, y, w, seed):
    prm = spec.params
    rng = np.random.default_rng(seed)
    binner = _Binner.fit(X, prm["max_bins"])
    Xb = binner.transform(X)
    n = X.shape[0]
    ybar = _weighted_mean(y, w)
    binary = spec.task == BINARY
    if binary:
        ybar = min(max(ybar, PROB_CLIP), 1 - PROB_CLIP)
        base = math.log(ybar / (1 - ybar))
        lam = prm["reg_lambda"] * w.sum() / n
    else:
        base = ybar
        lam = 0.0
    F = np.full(n, base)
    trees = []
    positive = np.flatnonzero(w > 0)
    for _ in range(prm["n_rounds"]):
        if binary:
            mu = expit(F)
            g, h = w * (y - mu), w * mu * (1 - mu)
        else:
            g, h = w * (y - F), w
        rows = positive
        if prm["subsample"] < 1.0:
            m = max(1, int(round(prm["subsample"] * positive.size)))
            rows = np.sort(rng.choice(positive, m, replace=False))
        tree = _grow_tree(
            Xb, binner, g, h, rows,
            max_depth=prm["max_depth"], min_leaf=prm["min_samples_leaf"], lam=lam,
            max_features=X.shape[1], rng=rng,
        )
        F = F + prm["learning_rate"] * tree.value[tree.apply(X)]
        trees.append(tree)
    state = _Boosted(base, tuple(trees), prm["learning_rate"], (float(y[w > 0].min()), float(y[w > 0].max())))
    return state, {"n_rounds": len(trees)}


def _predict_boosting(model, X):
    st = model.state
    F = np.full(X.shape[0], st.base)
    for tree in st.trees:
        F += st.rate * tree.predict(X)
    if model.spec.task == BINARY:
        return expit(F)
    # residual fits can overshoot the training range; keep predictions inside it
    return np.clip(F, *st.y_range)


def _fit_forest(spec, X, y, w, seed):
    prm = spec.params
    rng = np.random.default_rng(seed)
    binner = _Binner.fit(X, prm["max_bins"])
    Xb = binner.transform(X)
    n, p = X.shape
    mf = prm["max_features"]
    if mf == "sqrt":
        k = max(1, int(math.floor(math.sqrt(p)))) if p else 0
    elif mf == "all":
        k = p
    elif isinstance(mf, float) and mf <= 1.0:
        k = max(1, int(math.ceil(mf * p))) if p else 0
    else:
        k = min(p, int(mf))
    trees = []
    for _ in range(prm["n_trees"]):
        counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
        bw = w * counts
        if bw.sum() <= 0:
            bw = w
        rows = np.flatnonzero(bw > 0)
        trees.append(
            _grow_tree(
                Xb, binner, bw * y, bw, rows,
                max_depth=prm["max_depth"], min_leaf=prm["min_samples_leaf"], lam=0.0,
                max_features=k, rng=rng,
            )
        )
    return tuple(trees), {"n_trees": len(trees), "max_features": k}


def _predict_forest(model, X):
    return np.mean([t.predict(X) for t in model.state], axis=0)


_FITTERS = {
    "mean": _fit_mean,
    "glm": _fit_glm,
    "gam": _fit_gam,
    "tree": _fit_tree,
    "boosting": _fit_boosting,
    "forest": _fit_forest,
}
_PREDICTORS = {
    "mean": _predict_mean,
    "glm": _predict_glm,
    "gam": _predict_gam,
    "tree": _predict_tree,
    "boosting": _predict_boosting,
    "forest": _predict_forest,
}


def default_library(task: str = REGRESSION, include_trees: bool = True) -> list[LearnerSpec]:
    """The standard ensemble: mean, GLM, GAM and, unless excluded, the tree learners."""
    lib = [
        LearnerSpec("mean", "mean", task),
        LearnerSpec("glm", "glm", task),
        LearnerSpec("gam", "gam", task),
    ]
    if include_trees:
        lib += [
            LearnerSpec("boosting", "boosting", task),
            LearnerSpec("forest", "forest", task),
        ]
    return lib


def library_from_config(entries, task: str) -> list[LearnerSpec]:
    """Build specs from ``[{"name": ..., "family": ..., **hyperparameters}]``."""
    specs, seen = [], set()
    for entry in entries:
        entry = dict(entry)
        family = entry.pop("family", None) or entry.get("name")
        name = entry.pop("name", family)
        if name in seen:
            raise ValueError(f"duplicate learner name {name!r}")
        seen.add(name)
        specs.append(LearnerSpec(name, family, task, entry))
    if not specs:
        raise ValueError("learner library is empty")
    return specs


def warn_fallback(model: FittedModel) -> None:
    if model.info.get("ridge_fallback"):
        warnings.warn(f"{model.spec.name}: singular design, used ridge-regularized solve", stacklevel=2)
