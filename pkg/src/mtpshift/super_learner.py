"""Cross-validated stacking of candidate learners with simplex weights."""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import learners as lrn
from .learners import BINARY, PROB_CLIP, REGRESSION, LearnerSpec


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold: np.ndarray  # 0-based fold index per unit
    V: int
    seed: int

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold, minlength=self.V)

    def __iter__(self):
        for v in range(self.V):
            yield np.flatnonzero(self.fold != v), np.flatnonzero(self.fold == v)


def make_folds(n: int, V: int, seed: int = 0) -> FoldAssignment:
    """Balanced random partition of ``n`` units into ``V`` folds."""
    if V < 2:
        raise ValueError("need at least 2 folds")
    if V > n:
        raise ValueError(f"cannot split {n} units into {V} folds")
    rng = np.random.default_rng(seed)
    fold = np.empty(n, dtype=np.int64)
    fold[rng.permutation(n)] = np.arange(n) % V
    fold.setflags(write=False)
    return FoldAssignment(fold, V, seed)


def cv_loss(y, pred, w, task) -> float:
    """Weighted mean loss: squared error, or negative log-likelihood."""
    if task == BINARY:
        q = np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
        per = -(y * np.log(q) + (1 - y) * np.log1p(-q))
    else:
        per = (y - pred) ** 2
    return float(np.dot(w, per) / w.sum())


def _loss_and_grad(alpha, Z, y, w, task):
    pred = Z @ alpha
    wn = w / w.sum()
    if task == BINARY:
        q = np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
        loss = -np.dot(wn, y * np.log(q) + (1 - y) * np.log1p(-q))
        inner = (q - y) / (q * (1 - q))
        inner = np.where((pred > PROB_CLIP) & (pred < 1 - PROB_CLIP), inner, 0.0)
        grad = Z.T @ (wn * inner)
    else:
        resid = pred - y
        loss = np.dot(wn, resid * resid)
        grad = 2.0 * (Z.T @ (wn * resid))
    return float(loss), grad


def simplex_weights(Z, y, w=None, task=REGRESSION, *, n_iter=500, step=0.5, tol=1e-10):
    """Convex weights minimizing the cross-validated loss of ``Z @ alpha``.

    Exponentiated-gradient descent started from uniform weights. The result
    is then compared with every unit vector and the best of these points is
    returned, so the ensemble loss never exceeds the best single candidate.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if w is None else np.asarray(w, dtype=float)
    J = Z.shape[1]
    alpha = np.full(J, 1.0 / J)
    loss, grad = _loss_and_grad(alpha, Z, y, w, task)
    for _ in range(n_iter):
        if J == 1:
            break
        logits = np.log(np.maximum(alpha, 1e-300)) - step * (grad - grad.min())
        new = np.exp(logits - logits.max())
        new /= new.sum()
        new_loss, new_grad = _loss_and_grad(new, Z, y, w, task)
        if new_loss > loss:
            step *= 0.5
            if step < 1e-12:
                break
            continue
        done = loss - new_loss < tol and np.max(np.abs(new - alpha)) < tol
        alpha, loss, grad = new, new_loss, new_grad
        if done:
            break
    vertex_losses = np.array([cv_loss(y, Z[:, j], w, task) for j in range(J)])
    best = int(np.argmin(vertex_losses))
    # ignore roundoff-sized wins so exact ties keep the uniform start
    if vertex_losses[best] < loss - 1e-14 * max(1.0, abs(loss)):
        alpha = np.zeros(J)
        alpha[best] = 1.0
    alpha = np.where(alpha < 0, 0.0, alpha)
    return alpha / alpha.sum()


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    candidates: tuple
    weights: np.ndarray
    cv_risks: dict  # candidate name -> CV loss
    ensemble_cv_risk: float
    task: str
    p: int
    oof: Optional[np.ndarray] = None
    warnings: tuple = field(default_factory=tuple)

    @property
    def names(self) -> list[str]:
        return [m.spec.name for m in self.candidates]

    def predict(self, X) -> np.ndarray:
        return ensemble_predict(self, X)


def _seed_for(seed, name, v):
    return int(zlib.crc32(f"{seed}:{name}:{v}".encode()))


def _fallback(y_tr, w_tr, n_out):
    if w_tr.sum() <= 0:
        return np.full(n_out, np.mean(y_tr))
    return np.full(n_out, np.dot(w_tr, y_tr) / w_tr.sum())


def fit_super_learner(
    X,
    y,
    library: Sequence[LearnerSpec],
    *,
    weights=None,
    task: str = REGRESSION,
    V: int = 5,
    seed: int = 0,
    folds: Optional[FoldAssignment] = None,
    groups=None,
) -> EnsembleModel:
    """Fit the Super Learner.

    ``groups`` maps rows to units; folds are then drawn over units so all
    rows of a unit land in the same fold. A candidate that fails on a fold
    gets the training-fold mean there, with a warning.
    """
    X = lrn._check_X(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if not library:
        raise ValueError("library is empty")
    names = [s.name for s in library]
    if len(set(names)) != len(names):
        raise ValueError("learner names must be unique within a library")
    for s in library:
        if s.task != task:
            raise ValueError(f"learner {s.name!r} has task {s.task!r}, expected {task!r}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)

    if groups is not None:
        uniq, row_unit = np.unique(np.asarray(groups), return_inverse=True)
        unit_folds = folds if folds is not None else make_folds(len(uniq), V, seed)
        row_fold = unit_folds.fold[row_unit]
    else:
        unit_folds = folds if folds is not None else make_folds(n, V, seed)
        row_fold = unit_folds.fold
    if row_fold.shape[0] != n:
        raise ValueError("fold assignment does not cover every row")

    J = len(library)
    Z = np.empty((n, J))
    notes = []
    for v in range(unit_folds.V):
        tr, te = np.flatnonzero(row_fold != v), np.flatnonzero(row_fold == v)
        for j, spec in enumerate(library):
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    m = lrn.fit(spec, X[tr], y[tr], w[tr], seed=_seed_for(seed, spec.name, v))
                    pred = lrn.predict(m, X[te])
                if not np.all(np.isfinite(pred)):
                    raise lrn.LearnerError("non-finite predictions")
            except (ValueError, np.linalg.LinAlgError, lrn.LearnerError, FloatingPointError) as exc:
                msg = f"{spec.name} failed on fold {v + 1}: {exc}; using fold mean"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
                pred = _fallback(y[tr], w[tr], te.size)
            Z[te, j] = pred
    if task == BINARY:
        Z = np.clip(Z, PROB_CLIP, 1 - PROB_CLIP)

    alpha = simplex_weights(Z, y, w, task)
    risks = {spec.name: cv_loss(y, Z[:, j], w, task) for j, spec in enumerate(library)}
    ens_risk = cv_loss(y, Z @ alpha, w, task)

    fitted = []
    for spec in library:
        try:
            m = lrn.fit(spec, X, y, w, seed=_seed_for(seed, spec.name, "full"))
            lrn.warn_fallback(m)
        except (ValueError, np.linalg.LinAlgError, lrn.LearnerError, FloatingPointError) as exc:
            msg = f"{spec.name} failed on full data: {exc}; using mean learner"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)
            m = lrn.fit(LearnerSpec(spec.name, "mean", task), X, y, w)
        fitted.append(m)
    return EnsembleModel(tuple(fitted), alpha, risks, ens_risk, task, X.shape[1], Z, tuple(notes))


def ensemble_predict(model: EnsembleModel, X) -> np.ndarray:
    X = lrn._check_X(X, model.p)
    out = np.zeros(X.shape[0])
    for a, m in zip(model.weights, model.candidates):
        if a > 0:
            out += a * lrn.predict(m, X)
    if model.task == BINARY:
        out = np.clip(out, PROB_CLIP, 1 - PROB_CLIP)
    return out
