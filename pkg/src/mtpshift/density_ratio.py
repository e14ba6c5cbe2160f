"""Density ratio of shifted to natural exposure, estimated by classification.

Each unit is duplicated: one copy keeps its observed exposure (label 0),
the other carries the shifted exposure (label 1). With balanced labels the
odds of a classifier trained on this stack equal the density ratio
``g_d(a | w) / g(a | w)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import AnalysisFrame, ShiftPolicy, shift_frame
from .learners import BINARY, PROB_CLIP, LearnerSpec
from .super_learner import EnsembleModel, ensemble_predict, fit_super_learner


class PositivityError(RuntimeError):
    """The classifier separates natural from shifted rows almost perfectly."""


@dataclass(frozen=True, eq=False)
class ClassificationStack:
    features: np.ndarray  # (2n, 1 + p), exposure in column 0
    labels: np.ndarray
    unit: np.ndarray  # index of the original unit per row

    @property
    def n_units(self) -> int:
        return self.features.shape[0] // 2


@dataclass(frozen=True, eq=False)
class DensityRatioEstimate:
    r: np.ndarray
    lambda_hat: np.ndarray
    max_r: float
    mean_r: float
    truncation_bound: Optional[float] = None
    n_clipped: int = 0
    model: Optional[EnsembleModel] = None
    exact: bool = False


def build_stack(frame: AnalysisFrame, policy: ShiftPolicy) -> ClassificationStack:
    """Interleave natural (even rows) and shifted (odd rows) copies of each unit."""
    n = frame.n
    a_d = shift_frame(frame, policy)
    feats = np.empty((2 * n, 1 + frame.p))
    feats[0::2, 0] = frame.A
    feats[1::2, 0] = a_d
    feats[0::2, 1:] = frame.W
    feats[1::2, 1:] = frame.W
    labels = np.tile([0.0, 1.0], n)
    unit = np.repeat(np.arange(n), 2)
    return ClassificationStack(feats, labels, unit)


def ratio_from_probability(lam):
    lam = np.clip(lam, PROB_CLIP, 1 - PROB_CLIP)
    return lam / (1.0 - lam)


def estimate_density_ratio(
    frame: AnalysisFrame,
    policy: ShiftPolicy,
    library: Sequence[LearnerSpec],
    V: int = 5,
    seed: int = 0,
    truncation: Optional[float] = None,
    exact_identity: bool = True,
    swap_labels: bool = False,
) -> DensityRatioEstimate:
    """Estimate ``r(a_i, w_i)`` at each unit's observed exposure.

    The identity policy leaves the exposure distribution unchanged, so its
    ratio is exactly one; ``exact_identity=False`` fits the classifier
    anyway. Diagnostics are computed before the optional ``truncation`` cap.
    """
    if truncation is not None and not truncation > 0:
        raise ValueError("truncation bound must be positive")
    if policy.is_identity and exact_identity:
        r = np.ones(frame.n)
        return DensityRatioEstimate(r, np.full(frame.n, 0.5), 1.0, 1.0, truncation, 0, None, True)

    stack = build_stack(frame, policy)
    labels = 1.0 - stack.labels if swap_labels else stack.labels
    lib = [s if s.task == BINARY else s.for_task(BINARY) for s in library]
    model = fit_super_learner(
        stack.features, labels, lib, task=BINARY, V=V, seed=seed, groups=stack.unit
    )
    lam = ensemble_predict(model, frame.design())
    at_clip = (lam <= PROB_CLIP * (1 + 1e-9)) | (lam >= (1 - PROB_CLIP) * (1 - 1e-15))
    n_clipped = int(np.count_nonzero(at_clip))
    if n_clipped > 0.5 * frame.n:
        raise PositivityError(
            f"{n_clipped} of {frame.n} units hit the probability clip; "
            "the shift leaves the support of the observed exposure"
        )
    r = ratio_from_probability(lam)
    max_r, mean_r = float(r.max()), float(r.mean())
    if truncation is not None:
        r = np.minimum(r, truncation)
    return DensityRatioEstimate(r, lam, max_r, mean_r, truncation, n_clipped, model, False)

