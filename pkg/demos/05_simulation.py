"""Small simulation: coverage with correct nuisances, and bias when both are the mean."""

from mtpshift import ShiftPolicy, sim

dgp, policy = sim.DgpSpec(), ShiftPolicy.additive(1.0)
truth = sim.true_value(dgp, policy, n_mc=200_000, seed=0)
print(f"Monte Carlo truth {truth.psi_delta:.4f} (mc se {truth.mc_se_delta:.4f})")

for cell in ("both-correct", "Q-garbage/r-correct", "both-garbage"):
    q_lib, r_lib = sim.DR_CELLS[cell]
    rep = sim.replicate(dgp, policy, sim.libraries(q_lib, r_lib), R=40, n=500, seed=1,
                        truth=truth.psi_delta, cell=cell)
    print(f"{cell:<22} bias {rep.bias:+.3f}  coverage {rep.coverage:.2f}  failures {rep.failures}")
