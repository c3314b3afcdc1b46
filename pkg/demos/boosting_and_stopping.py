"""Boosting a constant success probability, and stopping-time bounds on chains.

    python demos/boosting_and_stopping.py
"""

import numpy as np

from aimlab import derive_rng, make_regression
from aimlab.boosting import bernstein_constants, lemma_success_bound, planted_mix, rejection_sample, samples_for_failure, small_ball_estimate
from aimlab.stoptime import default_grid, run_grid

prob = make_regression(8, 32, derive_rng(0, 1000))
rng = np.random.default_rng(0)
eps, lam, k = 1e-3, 2.0, 16

w = prob.project(rng.standard_normal(prob.dim)) + 0.05 * prob.X[0]
sb = small_ball_estimate(prob, w, 0.5, 4000, rng)
c1, c2 = bernstein_constants(0.5, sb.p_hat)
m = samples_for_failure(c2, k, k / 1600)
print(f"small-ball p_hat={sb.p_hat:.3f} -> c1={c1:.3f}, c2={c2:.3f}, m={m}, lemma bound {lemma_success_bound(k, m, lam, c2):.3f}")

cands, good = planted_mix(prob, k, eps, 10 * lam * eps / c1, rng)
res = rejection_sample(prob, cands, m, lam, eps, rng, c1=c1, c2=c2)
print(f"{good.sum()} good of {k}; admitted {res.admissible}; chosen {res.chosen}; all admitted good: {all(good[i] for i in res.admissible)}")

print("\nstopping-time grid (10^4 chains each):")
for r in run_grid(default_grid(), lambda i: derive_rng(0, i)):
    s, last = r.spec, r.stop[-1]
    con = "" if r.contraction is None else f"  contraction {r.contraction.empirical:.3f} (target {r.contraction.bound:.2f})"
    print(f"  q={s.q:<4} {s.noise:<9} zeta={s.zeta:<5} P(tau<=50)={last.empirical:.4f} (bound {last.bound:.3f}, sigma {last.sigma:.4f}){con}  {'ok' if r.passed else 'FAIL'}")
