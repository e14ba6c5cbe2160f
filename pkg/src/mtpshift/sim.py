"""Synthetic data-generating processes with known truth, and replication
studies of the estimator's bias, coverage and double robustness."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import AnalysisFrame, ShiftPolicy
from .learners import BINARY, REGRESSION, LearnerSpec
from .tmle import run_tmle

log = logging.getLogger(__name__)

OUTCOME_FAMILIES = ("linear", "quadratic", "interaction")


@dataclass(frozen=True)
class DgpSpec:
    """Structural model ``W ~ N(0, I)``, ``A = mu_A(W) + sigma_a e_A``,
    ``Y = mu_Y(A, W) + sigma_y e_Y``.

    ``mu_A(W) = exposure_intercept + W @ exposure_coefs`` and
    ``mu_Y = outcome_intercept + beta_a A + W @ outcome_coefs``, plus
    ``beta_aa A^2`` (quadratic) or ``beta_aw A w_1`` (interaction).
    The defaults are the acceptance design, whose additive +1 shift has
    true effect 2.
    """

    p: int = 4
    exposure_intercept: float = 0.0
    exposure_coefs: tuple = (0.5, 0.5, 0.0, 0.0)
    sigma_a: float = 1.0
    family: str = "linear"
    outcome_intercept: float = 10.0
    beta_a: float = 2.0
    outcome_coefs: tuple = (1.0, -1.0, 0.0, 0.0)
    beta_aa: float = 0.0
    beta_aw: float = 0.0
    sigma_y: float = 2.0

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("p must be nonnegative")
        if len(self.exposure_coefs) != self.p or len(self.outcome_coefs) != self.p:
            raise ValueError("coefficient vectors must have length p")
        if self.family not in OUTCOME_FAMILIES:
            raise ValueError(f"unknown outcome family {self.family!r}")
        if self.family == "interaction" and self.p < 1:
            raise ValueError("interaction family needs at least one covariate")
        if not self.sigma_a > 0:
            raise ValueError("sigma_a must be positive")
        if self.sigma_y < 0:
            raise ValueError("sigma_y must be nonnegative")

    def mu_a(self, W):
        return self.exposure_intercept + W @ np.asarray(self.exposure_coefs, dtype=float)

    def mu_y(self, A, W):
        out = self.outcome_intercept + self.beta_a * A + W @ np.asarray(self.outcome_coefs, dtype=float)
        if self.family == "quadratic":
            out = out + self.beta_aa * A * A
        elif self.family == "interaction":
            out = out + self.beta_aw * A * W[:, 0]
        return out

    def _draw(self, n, rng):
        W = rng.standard_normal((n, self.p))
        A = self.mu_a(W) + self.sigma_a * rng.standard_normal(n)
        e_y = rng.standard_normal(n)
        return W, A, e_y


def generate(dgp: DgpSpec, n: int, seed: int) -> AnalysisFrame:
    """``n`` independent draws from the structural equations."""
    rng = np.random.default_rng(seed)
    W, A, e_y = dgp._draw(n, rng)
    Y = dgp.mu_y(A, W) + dgp.sigma_y * e_y
    return AnalysisFrame(W, A, Y)


@dataclass(frozen=True)
class TruthReport:
    psi_shift: float
    psi_observed: float
    psi_delta: float
    mc_se_shift: float
    mc_se_observed: float
    mc_se_delta: float
    n_mc: int


def true_value(dgp: DgpSpec, policy: ShiftPolicy, n_mc: int = 1_000_000, seed: int = 0,
               chunk: int = 250_000) -> TruthReport:
    """Monte Carlo truth with common random numbers for both arms."""
    rng = np.random.default_rng(seed)
    sums = np.zeros(3)
    sq = np.zeros(3)
    done = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        W, A, e_y = dgp._draw(m, rng)
        noise = dgp.sigma_y * e_y
        y = dgp.mu_y(A, W) + noise
        yd = dgp.mu_y(policy(A), W) + noise
        cols = (yd, y, yd - y)
        for i, v in enumerate(cols):
            sums[i] += v.sum()
            sq[i] += np.dot(v, v)
        done += m
    mean = sums / n_mc
    var = np.maximum(sq / n_mc - mean**2, 0.0) * n_mc / max(n_mc - 1, 1)
    se = np.sqrt(var / n_mc)
    return TruthReport(mean[0], mean[1], mean[2], se[0], se[1], se[2], n_mc)


def closed_form_delta(dgp: DgpSpec, policy: ShiftPolicy) -> float:
    """Exact effect for linear outcome models without clamps."""
    if dgp.family != "linear" or policy.clamp_lo is not None or policy.clamp_hi is not None:
        raise ValueError("closed form only for unclamped shifts of linear outcome models")
    if policy.kind == "additive":
        return dgp.beta_a * policy.value
    return dgp.beta_a * (policy.value - 1.0) * dgp.exposure_intercept


@dataclass(frozen=True)
class EstimatorConfig:
    outcome_library: tuple
    ratio_library: tuple
    V: int = 5
    truncation: Optional[float] = None


def libraries(outcome: Sequence[str], ratio: Sequence[str], V: int = 5) -> EstimatorConfig:
    """Estimator config from learner family names, e.g. ``(["mean", "glm"], ["glm"])``."""
    return EstimatorConfig(
        tuple(LearnerSpec(f, f, REGRESSION) for f in outcome),
        tuple(LearnerSpec(f, f, BINARY) for f in ratio),
        V,
    )


CORRECT = ("mean", "glm")
GARBAGE = ("mean",)


@dataclass(frozen=True)
class ReplicationRecord:
    index: int
    psi_delta: float
    std_err: float
    ci_lo: float
    ci_hi: float
    score_residual: float
    max_density_ratio: float
    sl_excess_risk: float  # ensemble CV risk minus best candidate CV risk (max over both fits)
    sl_simplex_error: float


@dataclass
class ReplicationReport:
    cell: str
    n: int
    R: int
    truth: float
    mean_estimate: float
    bias: float
    sd: float
    mean_se: float
    coverage: float
    ci_width: float
    failures: int = 0
    records: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return self.failures <= 0.05 * self.R

    def row(self) -> dict:
        keys = ("cell", "n", "R", "truth", "mean_estimate", "bias", "sd", "mean_se", "coverage", "ci_width")
        return {k: getattr(self, k) for k in keys}


def _sl_audit(model):
    if model is None:
        return 0.0, 0.0
    excess = model.ensemble_cv_risk - min(model.cv_risks.values())
    w = model.weights
    simplex = max(abs(w.sum() - 1.0), float(-min(w.min(), 0.0)))
    return excess, simplex


def _one_replication(args):
    dgp, policy, cfg, n, seed, i = args
    ss = np.random.SeedSequence([seed, i])
    data_seed, est_seed = (int(s) for s in ss.generate_state(2))
    frame = generate(dgp, n, data_seed)
    res = run_tmle(frame, policy, cfg.outcome_library, cfg.ratio_library, cfg.V, est_seed,
                   truncation=cfg.truncation)
    e = res.estimate
    ex1, sx1 = _sl_audit(res.nuisance.outcome_model)
    ex2, sx2 = _sl_audit(res.nuisance.ratio.model)
    return ReplicationRecord(i, e.psi_delta, e.std_err, e.ci_lo, e.ci_hi, e.score_residual,
                             e.max_density_ratio, max(ex1, ex2), max(sx1, sx2))


def _safe_replication(args):
    try:
        return _one_replication(args)
    except Exception as exc:  # a failed replication is counted, not fatal
        return exc


def replicate(
    dgp: DgpSpec,
    policy: ShiftPolicy,
    config: EstimatorConfig,
    R: int,
    n: int,
    seed: int = 0,
    *,
    truth: Optional[float] = None,
    cell: str = "",
    jobs: int = 1,
) -> ReplicationReport:
    """Run the estimator on ``R`` independent frames and summarise it.

    ``truth`` defaults to a one-million-draw Monte Carlo evaluation.
    """
    if R < 2:
        raise ValueError("need at least 2 replications")
    if truth is None:
        truth = true_value(dgp, policy, seed=seed).psi_delta
    tasks = [(dgp, policy, config, n, seed, i) for i in range(R)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_safe_replication, tasks, chunksize=max(1, R // (4 * jobs))))
    else:
        out = [_safe_replication(t) for t in tasks]
    records = [o for o in out if isinstance(o, ReplicationRecord)]
    failures = R - len(records)
    for o in out:
        if not isinstance(o, ReplicationRecord):
            log.warning("replication failed: %s", o)
    if not records:
        raise RuntimeError(f"all {R} replications failed")
    est = np.array([r.psi_delta for r in records])
    se = np.array([r.std_err for r in records])
    lo = np.array([r.ci_lo for r in records])
    hi = np.array([r.ci_hi for r in records])
    return ReplicationReport(
        cell=cell,
        n=n,
        R=R,
        truth=float(truth),
        mean_estimate=float(est.mean()),
        bias=float(est.mean() - truth),
        sd=float(est.std(ddof=1)) if est.size > 1 else 0.0,
        mean_se=float(se.mean()),
        coverage=float(np.mean((lo <= truth) & (truth <= hi))),
        ci_width=float(np.mean(hi - lo)),
        failures=failures,
        records=records,
    )


DR_CELLS = {
    "both-correct": (CORRECT, CORRECT),
    "Q-correct/r-garbage": (CORRECT, GARBAGE),
    "Q-garbage/r-correct": (GARBAGE, CORRECT),
    "both-garbage": (GARBAGE, GARBAGE),
}


def double_robustness(
    dgp: DgpSpec = DgpSpec(),
    policy: ShiftPolicy = ShiftPolicy.additive(1.0),
    sizes: Sequence[int] = (500, 4000),
    R: int = 200,
    seed: int = 0,
    cells: Sequence[str] = tuple(DR_CELLS),
    truth: Optional[float] = None,
    jobs: int = 1,
) -> dict:
    """Misspecification matrix: ``{cell: [report per sample size]}``.

    A "garbage" nuisance is the intercept-only learner.
    """
    if truth is None:
        truth = true_value(dgp, policy, seed=seed).psi_delta
    out = {}
    for c_i, cell in enumerate(cells):
        q_lib, r_lib = DR_CELLS[cell]
        cfg = libraries(q_lib, r_lib)
        out[cell] = [
            replicate(dgp, policy, cfg, R, n, seed=seed + 1000 * c_i + s_i, truth=truth, cell=cell, jobs=jobs)
            for s_i, n in enumerate(sizes)
        ]
    return out


REPORT_COLUMNS = ("cell", "n", "R", "truth", "mean_estimate", "bias", "sd", "mean_se", "coverage", "ci_width")


def write_reports(reports: Sequence[ReplicationReport], csv_path=None, json_path=None) -> None:
    rows = [r.row() for r in reports]
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
            wr.writeheader()
            for row in rows:
                wr.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")


def dgp_from_dict(d: dict) -> DgpSpec:
    d = dict(d)
    for k in ("exposure_coefs", "outcome_coefs"):
        if k in d:
            d[k] = tuple(float(x) for x in d[k])
    return DgpSpec(**d)


def dgp_to_dict(dgp: DgpSpec) -> dict:
    return asdict(dgp)
