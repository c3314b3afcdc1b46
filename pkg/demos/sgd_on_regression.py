"""SGD on interpolating least squares, compared against the contraction theory.

Starts at distance 0.1 from the solution set, measures the growth, aiming and
smoothness constants on a ball, runs SGD for the predicted number of steps
and reports how often it succeeds and whether it ever left the ball.

    python demos/sgd_on_regression.py
"""

import numpy as np

from aimlab import RegionSpec, SGDConfig, derive_rng, make_regression, run_sgd
from aimlab.rates import escape_tally, fit_rate, iteration_bound, theoretical_factor
from aimlab.regularity import estimate_aiming, estimate_qg, estimate_sample_beta, estimate_uniform_aiming

prob = make_regression(8, 32, derive_rng(0, 1000))
rng = derive_rng(0, 0)

u = rng.standard_normal(prob.dim)
base = prob.project(u)
w0 = base + 0.1 * (u - base) / np.linalg.norm(u - base)
ball = RegionSpec.ball(w0, 1.0)

pts = ball.sample(prob, rng, 256)
alpha = estimate_qg(prob, ball, probes=pts).value
theta = estimate_aiming(prob, ball, probes=pts).value
rho = estimate_uniform_aiming(prob, ball, theta, rng=rng, probes=pts).value
beta = estimate_sample_beta(prob, ball, 64, rng=rng).value
eta = 0.5 / beta
print(f"alpha_hat={alpha:.4f} (exact {prob.alpha_qg:.4f})  theta_hat={theta:.6f}  rho_hat={rho:.2e}  beta_hat={beta:.4f}")

q = theoretical_factor(alpha, theta, beta, eta)
T = iteration_bound(alpha, theta, beta, eta, eps=0.01, delta2=0.1)
print(f"expected contraction per step {q:.4f}; predicted steps for eps=0.01, delta2=0.1: {T}")

runs = [run_sgd(prob, w0, SGDConfig(eta=eta, T=T, seed=s, monitors=[ball]), rng=derive_rng(0, 1 + s)) for s in range(200)]
success = np.mean([tr.dist[-1] ** 2 <= 0.01 * tr.dist[0] ** 2 for tr in runs])
tally = escape_tally(runs, 0, rho, theta, beta, eta, alpha, 1.0, 0.1)
fits = [fit_rate(tr, "dist2").per_step_factor for tr in runs[:20]]
print(f"success frequency {success:.3f}; escapes {tally.n_escaped}/{tally.n_runs} (bound {tally.bound:.3f})")
print(f"fitted dist^2 factor over 20 runs: mean {np.mean(fits):.4f}, max {np.max(fits):.4f} (theory {q:.4f})")
