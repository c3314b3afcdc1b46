"""Wide tanh networks: curvature shrinks with width, SGD keeps pace with GD.

Part 1 sweeps the hidden width and fits the log-log slope of the Hessian
operator norm of f(w; x) at initialization (about -1/2).  Part 2 trains the
desk network with SGD and GD at the same large stepsize and compares the
step counts with the kernel-based budget log(1/(eps delta2)) / lambda0.

    python demos/wide_network.py
"""

import math

import numpy as np

from aimlab import NetworkSpec, SGDConfig, desk_dataset, init_weights, lambda0, make_nn_problem, run_gd, run_sgd
from aimlab.experiment import loglog_slope, width_point
from aimlab.rates import fit_rate

pc = {"input_dim": 16, "depth": 2, "n": 16, "activation": "tanh"}
widths = [64, 128, 256, 512, 1024, 2048]
res = [width_point(pc, m, 0) for m in widths]
for m, (_, op, lam) in zip(widths, res):
    print(f"width {m:5d}: hessian opnorm {op:.5f}  lambda0 {lam:.3e}")
print(f"log-log slope {loglog_slope(widths, [r[1] for r in res]):.3f}\n")

spec = NetworkSpec(input_dim=64, width=512, depth=2, activation="tanh")
X, y = desk_dataset(n=16, input_dim=64, seed=0)
prob = make_nn_problem(spec, init_weights(spec, 0), X, y)
w0 = prob.w_init
lam = lambda0(prob, w0)
beta = 2.0 * float(np.max(np.diag(prob.ntk(w0))))
eta = 0.5 / beta
l0 = prob.full_loss(w0)
budget = math.log(1 / (1e-3 * 0.1)) / lam
sgd = run_sgd(prob, w0, SGDConfig(eta=eta, T=int(3 * budget), seed=1, stop_loss=1e-3 * l0))
gd = run_gd(prob, w0, eta, int(3 * budget), stop_loss=1e-3 * l0)
print(f"eta = {eta:.2f}, lambda0 = {lam:.3e}, budget = {budget:.0f} steps")
print(f"SGD reached 1e-3 of the initial loss in {sgd.steps_taken} steps, GD in {gd.steps_taken}")
print(f"fitted loss factors: SGD {fit_rate(sgd).per_step_factor:.4f}, GD {fit_rate(gd).per_step_factor:.4f}")
