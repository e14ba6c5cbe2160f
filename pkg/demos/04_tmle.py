"""Targeted estimate of a shift effect on simulated data with a known answer."""

import numpy as np

from mtpshift import ShiftPolicy, estimate_shift
from mtpshift import sim

dgp = sim.DgpSpec()  # linear outcome with exposure coefficient 2
policy = ShiftPolicy.additive(1.0)
frame = sim.generate(dgp, 2000, seed=42)
print("true effect:", sim.closed_form_delta(dgp, policy))

cfg = sim.libraries(sim.CORRECT, sim.CORRECT)
est = estimate_shift(frame, policy, cfg.outcome_library, cfg.ratio_library, seed=0)
print(f"psi_obs   = {est.psi_observed:.3f}")
print(f"psi_shift = {est.psi_shift:.3f}")
print(f"delta     = {est.psi_delta:.3f}  (se {est.std_err:.3f}, 95% CI {est.ci_lo:.3f} to {est.ci_hi:.3f})")
print(f"targeting score residual {est.score_residual:.1e}, max density ratio {est.max_density_ratio:.2f}")

null = estimate_shift(frame, ShiftPolicy.identity(), cfg.outcome_library, cfg.ratio_library, seed=0)
print("identity policy delta:", null.psi_delta)
