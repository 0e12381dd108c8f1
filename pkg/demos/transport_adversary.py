"""The inner problem on a two-point instance.

Two training points sit at unit fair distance.  The model is confident and
right on the first (margin 2, label 1) and right on the second (margin -1,
label 0).  With a transport budget of 0.25 the adversary can afford to move
half of the second point's mass onto the first point's features, where the
model's loss for label 0 is large.
"""
import numpy as np

from budro.fairmetric import CostMatrix
from budro.otsolver import (LossColumns, SolverConfig, corner_enumeration_oracle, dual_objective,
                            plan_marginals, solve_dual_bisection, solve_dual_sgd, solve_entropic)

R = LossColumns.from_margins([2.0, -1.0], [1, 0])
C = CostMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]])
eps = 0.25

print("loss matrix R (row = where mass lands, column = source point):")
print(np.round(R.dense(), 4))

# the dual is a piecewise-linear convex function of one variable
for eta in (0.0, 1.0, 1.8, 2.5, 5.0):
    print(f"M({eta:.1f}) = {dual_objective(R, C, eps, eta):.4f}")

exact = solve_dual_bisection(R, C, eps)
print(f"\nbisection: eta* = {exact.eta:.6f}, worst-case loss = {exact.primal_value:.6f}")
print("optimal plan:")
print(exact.plan.to_dense())
print("augmented-set weights (x1 label 0, x2 label 0, x1 label 1, x2 label 1):",
      plan_marginals(exact.plan, R.labels))

oracle = corner_enumeration_oracle(R, C, eps)
print(f"oracle:    eta* = {oracle.eta:.6f}, value = {oracle.primal_value:.6f}")

for gamma in (0.1, 0.01, 0.001):
    sol = solve_entropic(R, C, eps, gamma)
    print(f"entropic gamma={gamma:<6} value = {sol.primal_value:.6f}  cost = {sol.plan_cost:.4f}")

sgd = solve_dual_sgd(R, C, SolverConfig(epsilon=eps, batch_size=2, step_size=0.1, momentum=0.0,
                                        max_iters=5000, eta0=0.0, tol=1e-14))
print(f"dual SGD: eta = {sgd.eta:.6f}, dual value = {sgd.dual_value:.6f}")
