"""Shift policies: additive and multiplicative changes to an exposure, with clamps."""

import numpy as np

from mtpshift import AnalysisFrame, ShiftPolicy, shift_frame

a = np.array([0.2, 0.5, 0.9, 0.97, 1.0])
print("exposure:           ", a)

up = ShiftPolicy.additive(0.1)
print("additive +0.1:      ", up(a))

capped = ShiftPolicy.multiplicative(1.05, clamp_hi=1.0)
print("x1.05, capped at 1: ", capped(a))

# A unit whose shifted value hits the clamp is counted as truncated.
frame = AnalysisFrame(np.zeros((5, 0)), a, np.zeros(5))
_, n_trunc = shift_frame(frame, capped, return_truncated=True)
print(f"truncated units: {n_trunc} of {frame.n}")

print("identity leaves A alone:", np.array_equal(ShiftPolicy.identity()(a), a))
