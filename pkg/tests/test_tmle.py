import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, logit

from mtpshift.core import AnalysisFrame, ShiftPolicy, fit_scaler
from mtpshift.density_ratio import DensityRatioEstimate
from mtpshift.learners import BINARY, REGRESSION, LearnerSpec, default_library
from mtpshift.tmle import (
    NuisanceFit,
    TargetedFit,
    TargetingError,
    estimate_shift,
    fit_initial_outcome,
    influence_curve,
    run_tmle,
    target,
    wald_interval,
)

Q_LIN = [LearnerSpec("mean", "mean"), LearnerSpec("glm", "glm")]
R_LIN = [LearnerSpec("mean", "mean", BINARY), LearnerSpec("glm", "glm", BINARY)]


def linear_frame(n, seed, p=2):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n, p))
    A = W.sum(1) * 0.5 + rng.standard_normal(n)
    Y = 1 + 2 * A + W.sum(1) + rng.standard_normal(n)
    return AnalysisFrame(W, A, Y)


def ratio_of(r):
    r = np.asarray(r, float)
    with np.errstate(invalid="ignore"):
        return DensityRatioEstimate(r, r / (1 + r), float(r.max()), float(r.mean()))


# -- initial outcome regression


def test_declared_bounds_constant_outcome():
    fr = AnalysisFrame(np.zeros((5, 1)), np.arange(5.0), np.full(5, 0.5))
    with pytest.warns(UserWarning, match="singular design"):  # W is a zero column
        nf = fit_initial_outcome(fr, ShiftPolicy.additive(1.0), Q_LIN, V=2, declared_bounds=(0, 1))
    np.testing.assert_allclose(nf.q_obs, 0.5)
    np.testing.assert_allclose(nf.q_shift, 0.5)


def test_mean_library_ignores_exposure():
    fr = linear_frame(100, 0)
    nf = fit_initial_outcome(fr, ShiftPolicy.additive(1.0), [LearnerSpec("mean", "mean")])
    y_s = nf.scaler.scale(fr.Y)
    np.testing.assert_allclose(nf.q_obs, y_s.mean())
    np.testing.assert_array_equal(nf.q_obs, nf.q_shift)


def test_noiseless_identity_predictions_agree():
    rng = np.random.default_rng(1)
    A = rng.standard_normal(50)
    fr = AnalysisFrame(np.zeros((50, 0)), A, A)
    nf = fit_initial_outcome(fr, ShiftPolicy.identity(), [LearnerSpec("glm", "glm")])
    assert np.max(np.abs(nf.q_shift - nf.q_obs)) < 1e-6


def test_predictions_clipped():
    fr = linear_frame(200, 2)
    nf = fit_initial_outcome(fr, ShiftPolicy.additive(3.0), Q_LIN)
    assert nf.q_shift.min() >= 1e-4 and nf.q_shift.max() <= 1 - 1e-4
    assert 0 < nf.extrapolated_fraction < 1


# -- targeting


def test_target_recovers_known_shift():
    # y - Q0 = delta on the logit scale, r = 1: epsilon must undo the offset exactly
    rng = np.random.default_rng(3)
    q0 = rng.uniform(0.2, 0.8, 200)
    y = expit(logit(q0) + 0.7)
    nf = NuisanceFit(q0, q0.copy(), fit_scaler([0, 1]), np.zeros(200), ratio=ratio_of(np.ones(200)))
    fl = target(nf, y)
    assert fl.epsilon == pytest.approx(0.7, abs=1e-10)
    assert fl.score_residual < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 20.0))
def test_target_solves_weighted_score(seed, spread):
    rng = np.random.default_rng(seed)
    n = 100
    q = np.clip(rng.random(n), 1e-4, 1 - 1e-4)
    y = rng.random(n)
    r = np.exp(spread * (rng.random(n) - 0.5))
    nf = NuisanceFit(q, q[::-1].copy(), fit_scaler([0, 1]), np.zeros(n), ratio=ratio_of(r))
    fl = target(nf, y)
    assert abs(np.dot(r, y - fl.q_obs)) / n < 1e-8


def test_target_rejects_nonfinite_weights():
    q = np.full(4, 0.5)
    nf = NuisanceFit(q, q, fit_scaler([0, 1]), np.zeros(4), ratio=ratio_of([1, 1, np.inf, 1]))
    with pytest.raises(TargetingError):
        target(nf, np.array([0.1, 0.2, 0.3, 0.4]))


# -- influence curve and interval


def test_ic_zero_for_perfect_fit():
    y = np.array([1.0, 3.0, 5.0])
    fr = AnalysisFrame(np.zeros((3, 0)), [0.0, 1.0, 2.0], y)
    sc = fit_scaler(y)
    s = sc.scale(y)
    nf = NuisanceFit(s, s, sc, fr.A, ratio=ratio_of(np.ones(3)))
    # a perfect Q* = Y under the identity policy
    ic = influence_curve(TargetedFit(0.0, s, s, 0.0, 0), nf, fr)
    np.testing.assert_allclose(ic, 0.0, atol=1e-12)


def test_ic_constant_q():
    y = np.array([0.0, 2.0, 7.0])
    fr = AnalysisFrame(np.zeros((3, 0)), [0.0, 1.0, 2.0], y)
    sc = fit_scaler(y)
    q = np.full(3, sc.scale(y.mean()))
    nf = NuisanceFit(q, q, sc, fr.A, ratio=ratio_of(np.ones(3)))
    ic = influence_curve(TargetedFit(0.0, q, q, 0.0, 0), nf, fr)
    # Ybar - psi with psi = Ybar
    np.testing.assert_allclose(ic, 0.0, atol=1e-12)


def test_wald_examples():
    assert wald_interval(np.zeros(5), 1.5) == (0.0, 1.5, 1.5)
    se, lo, hi = wald_interval([-1.0, 1.0], 0.0)
    assert se == pytest.approx(0.70710678, abs=1e-8)
    assert lo == pytest.approx(-1.3859293, abs=1e-6) and hi == pytest.approx(1.3859293, abs=1e-6)


# -- full pipeline


@pytest.mark.parametrize("lib", ["linear", "default"])
def test_identity_null(lib):
    fr = linear_frame(300, 4, p=3)
    ql, rl = (Q_LIN, R_LIN) if lib == "linear" else (default_library(REGRESSION), default_library(BINARY))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e = estimate_shift(fr, ShiftPolicy.identity(), ql, rl, seed=1)
    assert abs(e.psi_delta) < 1e-8
    assert e.ci_lo <= 0.0 <= e.ci_hi


def test_unadjusted_linear_effect():
    rng = np.random.default_rng(5)
    n = 2000
    A = rng.standard_normal(n)
    fr = AnalysisFrame(np.zeros((n, 0)), A, 2 * A + rng.standard_normal(n))
    e = estimate_shift(fr, ShiftPolicy.additive(1.0), Q_LIN, R_LIN, seed=2)
    assert abs(e.psi_delta - 2.0) < 3 * e.std_err


def test_pipeline_invariants():
    fr = linear_frame(500, 6)
    res = run_tmle(fr, ShiftPolicy.additive(0.5), Q_LIN, R_LIN, seed=3)
    e = res.estimate
    assert e.score_residual < 1e-8
    assert fr.Y.min() <= e.psi_shift <= fr.Y.max()
    assert abs(res.ic.mean()) <= 1e-6 * res.ic.std()
    assert e.psi_delta == e.psi_shift - e.psi_observed
    assert e.psi_observed == fr.Y.mean()
    assert e.n == 500


def test_deterministic():
    fr = linear_frame(300, 7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = estimate_shift(fr, ShiftPolicy.additive(0.5), default_library(REGRESSION), R_LIN, seed=4)
        b = estimate_shift(fr, ShiftPolicy.additive(0.5), default_library(REGRESSION), R_LIN, seed=4)
    assert a.as_dict() == b.as_dict()


def test_truncation_reported():
    fr = linear_frame(300, 8)
    pol = ShiftPolicy.additive(1.0, clamp_hi=float(np.quantile(fr.A, 0.9)))
    e = estimate_shift(fr, pol, Q_LIN, R_LIN)
    assert e.truncated_shift_count > 0


def test_empty_library_rejected():
    with pytest.raises(ValueError):
        estimate_shift(linear_frame(50, 0), ShiftPolicy.additive(1.0), [], R_LIN)
