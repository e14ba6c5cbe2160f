"""Targeted estimation of the mean outcome under a shifted exposure.

Pipeline: scale Y to [0, 1], fit the outcome regression with a Super
Learner, estimate the density ratio, fluctuate the outcome regression with a
weighted intercept-only logistic step, and unscale. The difference from the
observed mean ``Ybar`` is reported with an influence-curve Wald interval.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logit

from .core import AnalysisFrame, OutcomeScaler, ShiftEstimate, ShiftPolicy, fit_scaler, shift_frame
from .density_ratio import DensityRatioEstimate, estimate_density_ratio
from .learners import REGRESSION, LearnerSpec
from .super_learner import EnsembleModel, ensemble_predict, fit_super_learner

Q_CLIP = 1e-4
SCORE_TOL = 1e-8
Z_975 = 1.96


class TargetingError(RuntimeError):
    pass


@dataclass(eq=False)
class NuisanceFit:
    q_obs: np.ndarray  # scaled Qbar(A, W), clipped
    q_shift: np.ndarray  # scaled Qbar(A_d, W), clipped
    scaler: OutcomeScaler
    a_shift: np.ndarray
    truncated_shift_count: int = 0
    extrapolated_fraction: float = 0.0
    ratio: Optional[DensityRatioEstimate] = None
    outcome_model: Optional[EnsembleModel] = None

    @property
    def r(self) -> np.ndarray:
        if self.ratio is None:
            raise ValueError("density ratio has not been estimated")
        return self.ratio.r


@dataclass(frozen=True, eq=False)
class TargetedFit:
    epsilon: float
    q_obs: np.ndarray  # scaled Qbar*(A, W)
    q_shift: np.ndarray  # scaled Qbar*(A_d, W)
    score_residual: float
    iterations: int


@dataclass(frozen=True, eq=False)
class TmleResult:
    estimate: ShiftEstimate
    nuisance: NuisanceFit
    targeted: TargetedFit
    ic: np.ndarray


def _sub_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def fit_initial_outcome(
    frame: AnalysisFrame,
    policy: ShiftPolicy,
    library: Sequence[LearnerSpec],
    V: int = 5,
    seed: int = 0,
    declared_bounds=None,
) -> NuisanceFit:
    """Outcome regression on the scaled outcome, predicted at A and at A_d."""
    scaler = fit_scaler(frame.Y, declared_bounds)
    y_s = scaler.scale(frame.Y)
    a_d, n_trunc = shift_frame(frame, policy, return_truncated=True)
    lib = [s if s.task == REGRESSION else s.for_task(REGRESSION) for s in library]
    X = frame.design()
    model = fit_super_learner(X, y_s, lib, task=REGRESSION, V=V, seed=seed)
    q_obs = np.clip(ensemble_predict(model, X), Q_CLIP, 1 - Q_CLIP)
    if policy.is_identity:
        q_shift = q_obs.copy()
    else:
        q_shift = np.clip(ensemble_predict(model, frame.design(a_d)), Q_CLIP, 1 - Q_CLIP)
    outside = (a_d < frame.A.min()) | (a_d > frame.A.max())
    return NuisanceFit(
        q_obs, q_shift, scaler, a_d, n_trunc, float(outside.mean()), None, model
    )


def target(nuisance: NuisanceFit, y_scaled, max_iter: int = 100) -> TargetedFit:
    """Solve the weighted logistic fluctuation for its intercept.

    ``epsilon`` solves ``sum r_i (y_i - expit(logit(Q_i) + epsilon)) = 0``
    by Newton's method, with bisection as a safeguard.
    """
    y = np.asarray(y_scaled, dtype=float)
    r = nuisance.r
    if not np.all(np.isfinite(r)):
        raise TargetingError("density ratio weights are not finite")
    offset = logit(nuisance.q_obs)
    n = y.shape[0]
    total = r.sum()

    def score(eps):
        return float(np.dot(r, y - expit(offset + eps)))

    eps, s = 0.0, score(0.0)
    lo, hi = -np.inf, np.inf
    it = 0
    for it in range(1, max_iter + 1):
        if abs(s) <= 1e-15 * total:
            break
        if s > 0:
            lo = eps
        else:
            hi = eps
        q = expit(offset + eps)
        slope = float(np.dot(r, q * (1 - q)))
        step = s / slope if slope > 0 else np.sign(s)
        cand = eps + step
        if not (lo < cand < hi):
            if np.isfinite(lo) and np.isfinite(hi):
                cand = 0.5 * (lo + hi)
            else:
                cand = eps + np.sign(s) * max(1.0, abs(step))
        s_new = score(cand)
        if cand == eps or (abs(s_new) >= abs(s) and abs(s) <= 1e-13 * total):
            break
        eps, s = cand, s_new
    resid = abs(s) / n
    if not resid < SCORE_TOL:
        raise TargetingError(
            f"fluctuation did not converge in {max_iter} Newton steps (score {resid:.3g})"
        )
    return TargetedFit(
        eps,
        expit(offset + eps),
        expit(logit(nuisance.q_shift) + eps),
        resid,
        it,
    )


def influence_curve(targeted: TargetedFit, nuisance: NuisanceFit, frame: AnalysisFrame) -> np.ndarray:
    """Influence curve of the difference estimate, on the outcome's own scale."""
    sc = nuisance.scaler
    q_obs = sc.unscale(targeted.q_obs)
    q_shift = sc.unscale(targeted.q_shift)
    psi = q_shift.mean()
    y = frame.Y
    return nuisance.r * (y - q_obs) + q_shift - psi - (y - y.mean())


def wald_interval(ic, psi_delta: float, z: float = Z_975):
    """``(std_err, ci_lo, ci_hi)`` with ``std_err**2 = mean(ic**2) / n``."""
    ic = np.asarray(ic, dtype=float)
    n = ic.shape[0]
    if n < 2:
        raise ValueError("need at least 2 influence-curve values")
    se = float(np.sqrt(np.mean(ic * ic) / n))
    return se, psi_delta - z * se, psi_delta + z * se


def run_tmle(
    frame: AnalysisFrame,
    policy: ShiftPolicy,
    outcome_library: Sequence[LearnerSpec],
    ratio_library: Sequence[LearnerSpec],
    V: int = 5,
    seed: int = 0,
    declared_bounds=None,
    truncation: Optional[float] = None,
    exact_identity: bool = True,
) -> TmleResult:
    if not outcome_library or not ratio_library:
        raise ValueError("learner libraries must be nonempty")
    nuis = fit_initial_outcome(frame, policy, outcome_library, V, _sub_seed(seed, 0), declared_bounds)
    nuis.ratio = estimate_density_ratio(
        frame, policy, ratio_library, V, _sub_seed(seed, 1), truncation, exact_identity
    )
    y_s = nuis.scaler.scale(frame.Y)
    fl = target(nuis, y_s)
    ic = influence_curve(fl, nuis, frame)
    psi_obs = float(np.mean(frame.Y))
    if policy.is_identity and nuis.ratio.exact:
        # with r == 1 the score equation makes mean(Q*) equal Ybar; drop the roundoff
        psi_shift = psi_obs
    else:
        psi_shift = float(np.mean(nuis.scaler.unscale(fl.q_shift)))
    se, lo, hi = wald_interval(ic, psi_shift - psi_obs)
    est = ShiftEstimate(
        psi_shift=psi_shift,
        psi_observed=psi_obs,
        std_err=se,
        ci_lo=lo,
        ci_hi=hi,
        max_density_ratio=nuis.ratio.max_r,
        mean_density_ratio=nuis.ratio.mean_r,
        score_residual=fl.score_residual,
        n=frame.n,
        truncated_shift_count=nuis.truncated_shift_count,
        extrapolated_fraction=nuis.extrapolated_fraction,
        epsilon=fl.epsilon,
    )
    return TmleResult(est, nuis, fl, ic)


def estimate_shift(
    frame: AnalysisFrame,
    policy: ShiftPolicy,
    outcome_library: Sequence[LearnerSpec],
    ratio_library: Sequence[LearnerSpec],
    V: int = 5,
    seed: int = 0,
    **kwargs,
) -> ShiftEstimate:
    """Targeted estimate of the shift effect; see :func:`run_tmle`."""
    return run_tmle(frame, policy, outcome_library, ratio_library, V, seed, **kwargs).estimate
