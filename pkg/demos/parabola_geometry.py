"""Regularity of the parabola problem L(x, y) = 1/2 (y - a x^2)^2.

The zero set is the curve y = a x^2.  The loss is PL everywhere and aims
towards the nearest point of the curve near it, yet no single curve point
works as a quasar-convex center for every nearby (0, gamma).

    python demos/parabola_geometry.py
"""

import numpy as np

from aimlab import ParabolaProblem, RegionSpec
from aimlab.regularity import estimate_aiming, estimate_hessian_lipschitz, estimate_pl, estimate_qg, local_aiming_theta
from aimlab.testbed import quasar_inner_exact, quasar_violation_witness

p = ParabolaProblem(a=1.0)
rng = np.random.default_rng(0)

print("PL ratio |grad L|^2 / 2L at a few points (closed form 1 + 4 a^2 x^2):")
for w in ([0.0, 1.0], [1.0, 0.0], [0.5, -2.0]):
    w = np.array(w)
    g = p.full_grad(w)
    print(f"  w={w}  ratio={g @ g / (2 * p.full_loss(w)):.6f}")

print("\nLocal aiming on balls B_r(0): measured theta against the closed-form lower bound")
for r in (0.1, 0.05, 0.02):
    reg = RegionSpec.ball(np.zeros(2), r)
    pts = reg.sample(p, rng, 2000)
    theta = estimate_aiming(p, reg, probes=pts).value
    alpha = estimate_qg(p, reg, probes=pts).value
    L = estimate_hessian_lipschitz(p, reg, 200, rng).value
    pl = estimate_pl(p, reg, probes=pts).value
    print(f"  r={r:<5} theta_hat={theta:.6f}  bound={local_aiming_theta(L, alpha, r):.4f}  alpha_qg={alpha:.4f}  alpha_pl={pl:.4f}")

print("\nQuasar-convexity fails: a point (0, gamma) that points away from (x, a x^2)")
for x in (0.1, 0.5, 1.0):
    wit = quasar_violation_witness(1.0, x)
    print(f"  x={x}: gamma={wit[1]:.3g}, inner product={float(quasar_inner_exact(1.0, x, wit[1])):.3g}")
