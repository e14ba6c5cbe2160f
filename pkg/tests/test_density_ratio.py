import warnings

import numpy as np
import pytest

from mtpshift.core import AnalysisFrame, ShiftPolicy, apply_shift
from mtpshift.density_ratio import PositivityError, build_stack, estimate_density_ratio, ratio_from_probability
from mtpshift.learners import BINARY, LearnerSpec, default_library

LOGISTIC = [LearnerSpec("logistic", "glm", BINARY)]


def gaussian_frame(n, seed, p=1, sd=1.0):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, p))
    A = sd * rng.standard_normal(n)
    return AnalysisFrame(W, A, A + rng.standard_normal(n))


# -- stack


def test_stack_shape_and_labels():
    fr = AnalysisFrame(np.arange(6.0).reshape(3, 2), [1.0, 2.0, 3.0], [0.0, 1.0, 2.0])
    st = build_stack(fr, ShiftPolicy.additive(1.0))
    assert st.features.shape == (6, 3)
    assert st.labels.sum() == 3 and np.count_nonzero(st.labels == 0) == 3
    np.testing.assert_array_equal(st.unit, [0, 0, 1, 1, 2, 2])
    np.testing.assert_array_equal(st.features[0::2, 1:], st.features[1::2, 1:])
    pol = ShiftPolicy.additive(1.0)
    np.testing.assert_array_equal(st.features[1::2, 0], [apply_shift(pol, a) for a in fr.A])


def test_stack_identity_rows_equal():
    fr = gaussian_frame(10, 0, p=2)
    st = build_stack(fr, ShiftPolicy.identity())
    np.testing.assert_array_equal(st.features[0::2], st.features[1::2])


def test_stack_multiplicative():
    fr = AnalysisFrame(np.zeros((2, 0)), [10.0, 4.0], [0.0, 1.0])
    st = build_stack(fr, ShiftPolicy.multiplicative(0.5))
    assert st.features[1, 0] == 5.0


# -- estimates


def test_identity_exact_by_default():
    est = estimate_density_ratio(gaussian_frame(100, 1), ShiftPolicy.identity(), default_library(BINARY))
    np.testing.assert_array_equal(est.r, 1.0)
    assert est.exact


def test_identity_fitted_logistic_near_one():
    est = estimate_density_ratio(gaussian_frame(1000, 2), ShiftPolicy.identity(), LOGISTIC, exact_identity=False)
    assert np.max(np.abs(est.r - 1)) < 0.15
    assert not est.exact


def test_gaussian_mean_ratio_near_one():
    for seed in range(3):
        est = estimate_density_ratio(gaussian_frame(2000, seed), ShiftPolicy.additive(0.5), LOGISTIC, seed=seed)
        assert 0.85 <= est.r.mean() <= 1.15
        assert np.all(est.r >= 0) and np.all(np.isfinite(est.r))


def test_gaussian_log_ratio_is_linear():
    # A ~ N(0, 1): log r(a) = c a - c^2 / 2
    fr = gaussian_frame(4000, 3)
    c = 0.5
    est = estimate_density_ratio(fr, ShiftPolicy.additive(c), LOGISTIC, seed=1)
    np.testing.assert_allclose(np.log(est.r), c * fr.A - c * c / 2, atol=0.1)


def test_label_swap_inverts_ratio():
    fr = gaussian_frame(1500, 4, p=2)
    pol = ShiftPolicy.additive(0.4)
    a = estimate_density_ratio(fr, pol, LOGISTIC, seed=2)
    b = estimate_density_ratio(fr, pol, LOGISTIC, seed=2, swap_labels=True)
    np.testing.assert_allclose(a.r * b.r, 1.0, rtol=1e-6)


def test_truncation_caps_weights_not_diagnostics():
    fr = gaussian_frame(1000, 5)
    pol = ShiftPolicy.additive(1.5)
    full = estimate_density_ratio(fr, pol, LOGISTIC, seed=0)
    cap = estimate_density_ratio(fr, pol, LOGISTIC, seed=0, truncation=2.0)
    assert full.max_r > 2.0
    assert cap.r.max() <= 2.0
    assert cap.max_r == full.max_r
    with pytest.raises(ValueError):
        estimate_density_ratio(fr, pol, LOGISTIC, truncation=0.0)


def test_positivity_error_on_separable_shift():
    rng = np.random.default_rng(6)
    A = rng.uniform(0, 1, 400)
    fr = AnalysisFrame(np.zeros((400, 0)), A, A)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(PositivityError):
            estimate_density_ratio(fr, ShiftPolicy.additive(50.0), LOGISTIC)


def test_ratio_from_probability_bounds():
    r = ratio_from_probability(np.array([0.0, 0.5, 1.0]))
    assert r[1] == 1.0
    assert 0 < r[0] < 1e-5 and np.isfinite(r[2]) and r[2] < 1.1e6


def test_deterministic_given_seed():
    fr = gaussian_frame(500, 7, p=2)
    pol = ShiftPolicy.additive(0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = estimate_density_ratio(fr, pol, default_library(BINARY), seed=9)
        b = estimate_density_ratio(fr, pol, default_library(BINARY), seed=9)
    np.testing.assert_array_equal(a.r, b.r)
