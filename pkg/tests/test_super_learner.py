import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtpshift.learners import BINARY, REGRESSION, LearnerSpec, default_library
from mtpshift.super_learner import (
    EnsembleModel,
    cv_loss,
    ensemble_predict,
    fit_super_learner,
    make_folds,
    simplex_weights,
)


def lib(*fams, task=REGRESSION):
    return [LearnerSpec(f, f, task) for f in fams]


def assert_optimal(m, tol=1e-10):
    assert abs(m.weights.sum() - 1) <= tol and m.weights.min() >= 0
    assert m.ensemble_cv_risk <= min(m.cv_risks.values()) + tol


# -- folds


def test_fold_sizes():
    assert sorted(make_folds(10, 5, 0).sizes()) == [2] * 5
    assert sorted(make_folds(7, 3, 0).sizes()) == [2, 2, 3]


def test_folds_deterministic():
    np.testing.assert_array_equal(make_folds(50, 5, 9).fold, make_folds(50, 5, 9).fold)
    assert not np.array_equal(make_folds(50, 5, 9).fold, make_folds(50, 5, 10).fold)


def test_fold_errors():
    with pytest.raises(ValueError):
        make_folds(4, 5, 0)
    with pytest.raises(ValueError):
        make_folds(4, 1, 0)


@given(st.integers(2, 500), st.integers(2, 20), st.integers(0, 2**31))
def test_folds_balanced(n, V, seed):
    if V > n:
        return
    sizes = make_folds(n, V, seed).sizes()
    assert sizes.min() >= 1 and sizes.max() - sizes.min() <= 1 and sizes.sum() == n


# -- ensemble examples


def test_single_candidate_weight_one():
    rng = np.random.default_rng(0)
    m = fit_super_learner(rng.standard_normal((30, 2)), rng.standard_normal(30), lib("mean"))
    np.testing.assert_array_equal(m.weights, [1.0])


def test_noiseless_linear_concentrates():
    x = np.linspace(-1, 1, 50)[:, None]
    y = 3 * x[:, 0]
    m = fit_super_learner(x, y, lib("mean", "glm"), V=5, seed=1)
    assert m.names[int(np.argmax(m.weights))] == "glm"
    assert m.weights[1] > 0.99
    assert m.ensemble_cv_risk <= m.cv_risks["mean"]
    np.testing.assert_allclose(ensemble_predict(m, x), y, atol=1e-6)


def test_identical_candidates_stay_uniform():
    rng = np.random.default_rng(2)
    X, y = rng.standard_normal((60, 2)), rng.standard_normal(60)
    specs = [LearnerSpec("a", "glm"), LearnerSpec("b", "glm")]
    m = fit_super_learner(X, y, specs)
    np.testing.assert_allclose(m.weights, [0.5, 0.5], atol=1e-12)


def test_ensemble_predict_arithmetic():
    X = np.zeros((1, 1))
    m1 = fit_super_learner(np.zeros((4, 1)), [0.2] * 4, [LearnerSpec("a", "mean")], V=2)
    m2 = fit_super_learner(np.zeros((4, 1)), [0.4] * 4, [LearnerSpec("b", "mean")], V=2)
    cands = (m1.candidates[0], m2.candidates[0])
    half = EnsembleModel(cands, np.array([0.5, 0.5]), {}, 0.0, REGRESSION, 1)
    first = EnsembleModel(cands, np.array([1.0, 0.0]), {}, 0.0, REGRESSION, 1)
    assert ensemble_predict(half, X)[0] == pytest.approx(0.3)
    assert ensemble_predict(first, X)[0] == pytest.approx(0.2)
    with pytest.raises(ValueError):
        ensemble_predict(half, np.zeros((1, 2)))


def test_failing_candidate_gets_fold_mean():
    rng = np.random.default_rng(3)
    X, y = rng.standard_normal((20, 1)), rng.standard_normal(20)
    w = np.ones(20)
    folds = make_folds(20, 2, 0)
    w[folds.fold == 1] = 0.0  # fitting for fold 0 trains on zero total weight
    with pytest.warns(RuntimeWarning, match="failed on fold"):
        m = fit_super_learner(X, y, lib("mean", "glm"), weights=w, folds=folds)
    assert m.warnings


def test_rejects_duplicate_names_and_wrong_task():
    X, y = np.zeros((10, 1)), np.zeros(10)
    with pytest.raises(ValueError):
        fit_super_learner(X, y, [LearnerSpec("a", "mean"), LearnerSpec("a", "glm")])
    with pytest.raises(ValueError):
        fit_super_learner(X, y, lib("mean", task=BINARY))


def test_grouped_folds_keep_units_together():
    rng = np.random.default_rng(4)
    n = 40
    groups = np.repeat(np.arange(n // 2), 2)
    X, y = rng.standard_normal((n, 1)), (rng.random(n) < 0.5).astype(float)
    m = fit_super_learner(X, y, lib("mean", "glm", task=BINARY), task=BINARY, groups=groups)
    assert_optimal(m)


# -- properties


@pytest.mark.parametrize("task", [REGRESSION, BINARY])
def test_default_library_optimality(task):
    rng = np.random.default_rng(5)
    X = rng.standard_normal((300, 3))
    eta = X[:, 0] - X[:, 1] ** 2
    y = (rng.random(300) < 1 / (1 + np.exp(-eta))).astype(float) if task == BINARY else eta + rng.standard_normal(300)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = fit_super_learner(X, y, default_library(task), task=task, seed=3)
    assert_optimal(m)


def test_permuting_library_permutes_weights():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((200, 2))
    y = X[:, 0] + np.abs(X[:, 1]) + rng.standard_normal(200)
    specs = default_library(REGRESSION)
    a = fit_super_learner(X, y, specs, seed=11)
    order = [3, 0, 4, 2, 1]
    b = fit_super_learner(X, y, [specs[i] for i in order], seed=11)
    np.testing.assert_allclose(b.weights, a.weights[order], atol=1e-12)


def test_equal_weights_same_as_none():
    rng = np.random.default_rng(7)
    X, y = rng.standard_normal((80, 2)), rng.standard_normal(80)
    a = fit_super_learner(X, y, lib("mean", "glm", "gam"), seed=2)
    b = fit_super_learner(X, y, lib("mean", "glm", "gam"), weights=np.ones(80), seed=2)
    np.testing.assert_array_equal(a.weights, b.weights)
    np.testing.assert_array_equal(ensemble_predict(a, X), ensemble_predict(b, X))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.sampled_from([REGRESSION, BINARY]))
def test_simplex_weights_beat_every_vertex(seed, J, task):
    rng = np.random.default_rng(seed)
    n = 100
    if task == BINARY:
        y = (rng.random(n) < 0.4).astype(float)
        Z = np.clip(rng.random((n, J)), 1e-6, 1 - 1e-6)
    else:
        y = rng.standard_normal(n)
        Z = y[:, None] + rng.standard_normal((n, J)) * rng.uniform(0.1, 3, J)
    w = np.ones(n)
    alpha = simplex_weights(Z, y, w, task)
    assert abs(alpha.sum() - 1) <= 1e-10 and alpha.min() >= 0
    ens = cv_loss(y, Z @ alpha, w, task)
    assert ens <= min(cv_loss(y, Z[:, j], w, task) for j in range(J)) + 1e-10
