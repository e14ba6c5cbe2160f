"""Domain types shared by the estimation modules: analysis frames, shift
policies, outcome scaling and the result record of a shift analysis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class DegenerateOutcomeError(ValueError):
    """Outcome has no spread and no declared bounds, so it cannot be scaled."""


def _as_readonly(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class AnalysisFrame:
    """One cross-sectional slice of observed data ``(W, A, Y)``.

    ``W`` may have zero columns, which is how the unadjusted analysis is
    expressed.
    """

    W: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    unit_ids: Optional[np.ndarray] = None
    covariate_names: tuple = ()

    def __post_init__(self):
        A = _as_readonly(self.A).ravel()
        Y = _as_readonly(self.Y).ravel()
        n = A.shape[0]
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W.reshape(n, -1) if W.size else np.empty((n, 0))
        if W.ndim != 2:
            raise ValueError("W must be a 2-d matrix")
        W = _as_readonly(W)
        if n < 2:
            raise ValueError(f"need at least 2 units, got {n}")
        if Y.shape[0] != n or W.shape[0] != n:
            raise ValueError(
                f"length mismatch: A has {n}, Y has {Y.shape[0]}, W has {W.shape[0]} rows"
            )
        for name, arr in (("W", W), ("A", A), ("Y", Y)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        ids = self.unit_ids
        if ids is None:
            ids = np.arange(n)
        ids = np.array(ids, copy=True)
        if ids.shape[0] != n:
            raise ValueError("unit_ids length does not match n")
        ids.setflags(write=False)
        names = tuple(self.covariate_names)
        if not names:
            names = tuple(f"w{j + 1}" for j in range(W.shape[1]))
        if len(names) != W.shape[1]:
            raise ValueError("covariate_names length does not match W columns")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "unit_ids", ids)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.W.shape[1]

    def design(self, exposure: Optional[np.ndarray] = None) -> np.ndarray:
        """Feature matrix ``[a, w]`` with the exposure in column 0."""
        a = self.A if exposure is None else np.asarray(exposure, dtype=float)
        return np.column_stack([a, self.W])

    def unadjusted(self) -> "AnalysisFrame":
        return AnalysisFrame(np.empty((self.n, 0)), self.A, self.Y, self.unit_ids)


@dataclass(frozen=True)
class ShiftPolicy:
    """Deterministic shift of the exposure, ``a + c`` or ``k * a``, clamped.

    Build with :meth:`additive` or :meth:`multiplicative`.
    """

    kind: str
    value: float
    clamp_lo: Optional[float] = None
    clamp_hi: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("additive", "multiplicative"):
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if not np.isfinite(self.value):
            raise ValueError("shift value must be finite")
        if self.kind == "multiplicative" and not self.value > 0:
            raise ValueError("multiplicative shift requires k > 0")
        if (
            self.clamp_lo is not None
            and self.clamp_hi is not None
            and not self.clamp_lo < self.clamp_hi
        ):
            raise ValueError("clamp_lo must be below clamp_hi")

    @classmethod
    def additive(cls, c: float, clamp_lo=None, clamp_hi=None) -> "ShiftPolicy":
        return cls("additive", float(c), clamp_lo, clamp_hi)

    @classmethod
    def multiplicative(cls, k: float, clamp_lo=None, clamp_hi=None) -> "ShiftPolicy":
        return cls("multiplicative", float(k), clamp_lo, clamp_hi)

    @classmethod
    def identity(cls) -> "ShiftPolicy":
        return cls("additive", 0.0)

    @property
    def is_identity(self) -> bool:
        if self.kind == "additive":
            return self.value == 0.0
        return self.value == 1.0

    def raw(self, a):
        a = np.asarray(a, dtype=float)
        if self.kind == "additive":
            return a + self.value
        return a * self.value

    def __call__(self, a):
        out = self.raw(a)
        if self.clamp_lo is not None or self.clamp_hi is not None:
            out = np.clip(out, self.clamp_lo, self.clamp_hi)
        return out

    def label(self) -> str:
        sym = "+" if self.kind == "additive" else "x"
        return f"{sym}{self.value:g}"


def apply_shift(policy: ShiftPolicy, a: float) -> float:
    """Shift a single exposure value and clamp it to the policy bounds."""
    if policy.is_identity:
        return float(a)
    return float(policy(a))


def shift_frame(frame: AnalysisFrame, policy: ShiftPolicy, return_truncated=False):
    """Shifted exposure vector for every unit of ``frame``.

    With ``return_truncated`` the number of units whose shifted value was
    moved by a clamp is returned as well.
    """
    if policy.is_identity:
        a_d = frame.A.copy()
        return (a_d, 0) if return_truncated else a_d
    raw = policy.raw(frame.A)
    a_d = policy(frame.A)
    if return_truncated:
        return a_d, int(np.count_nonzero(a_d != raw))
    return a_d


@dataclass(frozen=True)
class OutcomeScaler:
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (np.isfinite(self.y_min) and np.isfinite(self.y_max)):
            raise ValueError("scaler bounds must be finite")
        if not self.y_min < self.y_max:
            raise DegenerateOutcomeError(
                f"y_min ({self.y_min}) must be below y_max ({self.y_max})"
            )

    @property
    def span(self) -> float:
        return self.y_max - self.y_min

    def scale(self, y):
        y = np.asarray(y, dtype=float)
        return np.clip((y - self.y_min) / self.span, 0.0, 1.0)

    def unscale(self, y_scaled):
        return self.y_min + self.span * np.asarray(y_scaled, dtype=float)


def fit_scaler(y, declared_bounds: Optional[Sequence[float]] = None) -> OutcomeScaler:
    """Scaler mapping ``y`` onto [0, 1], by declared bounds or observed range."""
    y = np.asarray(y, dtype=float)
    if declared_bounds is not None:
        lo, hi = (float(b) for b in declared_bounds)
        if np.any(y < lo) or np.any(y > hi):
            raise ValueError(f"outcome values fall outside declared bounds ({lo}, {hi})")
        return OutcomeScaler(lo, hi)
    lo, hi = float(np.min(y)), float(np.max(y))
    if lo == hi:
        raise DegenerateOutcomeError(
            f"outcome is constant ({lo}); declare bounds to scale it"
        )
    return OutcomeScaler(lo, hi)


@dataclass(frozen=True)
class ShiftEstimate:
    psi_shift: float
    psi_observed: float
    std_err: float
    ci_lo: float
    ci_hi: float
    max_density_ratio: float
    mean_density_ratio: float
    score_residual: float
    n: int = 0
    truncated_shift_count: int = 0
    extrapolated_fraction: float = 0.0
    epsilon: float = 0.0
    psi_delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "psi_delta", self.psi_shift - self.psi_observed)
        if self.std_err < 0:
            raise ValueError("std_err must be nonnegative")
        if not self.ci_lo <= self.psi_delta <= self.ci_hi:
            raise ValueError("confidence interval does not contain the estimate")

    def as_dict(self) -> dict:
        return {
            "psi_shift": self.psi_shift,
            "psi_observed": self.psi_observed,
            "psi_delta": self.psi_delta,
            "std_err": self.std_err,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "max_density_ratio": self.max_density_ratio,
            "mean_density_ratio": self.mean_density_ratio,
            "score_residual": self.score_residual,
            "n": self.n,
            "truncated_shift_count": self.truncated_shift_count,
            "extrapolated_fraction": self.extrapolated_fraction,
            "epsilon": self.epsilon,
        }
