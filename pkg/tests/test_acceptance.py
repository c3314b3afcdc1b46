"""Acceptance criteria 1-10, each at its stated tolerance and runtime limit.

Every test records one ``criterion N: PASS/FAIL`` line (shown in the pytest
terminal summary and printed to stdout) before asserting.
"""

import math
import time

import numpy as np
import pytest

from aimlab.boosting import bernstein_constants, lemma_success_bound, samples_for_failure
from aimlab.experiment import boost_trial, loglog_slope, measure_small_ball, width_point
from aimlab.network import NetworkSpec, desk_dataset, init_weights, lambda0, make_nn_problem
from aimlab.problem import RegionSpec, derive_rng, fd_grad_check
from aimlab.rates import binomial_sigma, escape_tally, fit_rate, iteration_bound, table1_exponents, table1_rates, theoretical_factor
from aimlab.regularity import (
    estimate_aiming,
    estimate_hessian_lipschitz,
    estimate_pl,
    estimate_qg,
    estimate_sample_beta,
    estimate_uniform_aiming,
    local_aiming_theta,
)
from aimlab.sgd import SGDConfig, one_step_contraction_mc, run_gd, run_sgd
from aimlab.stoptime import default_grid, run_grid
from aimlab.testbed import ManifoldIntersection, ParabolaProblem, make_regression, quasar_inner, quasar_violation_witness
from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance


class Criterion:
    """Times a criterion and records its verdict line."""

    def __init__(self, number, limit_s):
        self.number, self.limit = number, limit_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        return False

    def verdict(self, ok, detail):
        elapsed = time.perf_counter() - self.t0
        in_time = elapsed < self.limit
        passed = bool(ok) and in_time
        line = f"criterion {self.number:2d}: {'PASS' if passed else 'FAIL'}  ({elapsed:.1f}s / {self.limit:g}s)  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, detail
        assert in_time, f"runtime {elapsed:.1f}s exceeds {self.limit}s"


def desk_net(width=512, input_dim=64, depth=2, n=16, seed=0):
    spec = NetworkSpec(input_dim=input_dim, width=width, depth=depth, activation="tanh")
    X, y = desk_dataset(n=n, input_dim=input_dim, seed=seed)
    w = init_weights(spec, seed)
    return make_nn_problem(spec, w, X, y)


def test_criterion_01_gradient_oracle():
    with Criterion(1, 30) as c:
        rng = np.random.default_rng(1)
        problems = {
            "parabola": ParabolaProblem(1.0),
            "regression": make_regression(8, 32, derive_rng(0, 1000)),
            "circles": ManifoldIntersection.through_point(np.zeros(2), 3, derive_rng(0, 1000)),
            # depth counts weight matrices, so depth l has l - 1 hidden layers
            "tanh-1hidden": desk_net(width=16, input_dim=4, depth=2, n=5),
            "tanh-2hidden": desk_net(width=16, input_dim=4, depth=3, n=5),
            "tanh-3hidden": desk_net(width=16, input_dim=4, depth=4, n=5),
        }
        worst = {}
        for name, prob in problems.items():
            errs = [fd_grad_check(prob, rng.standard_normal(prob.dim), prob.sample(rng)) for _ in range(100)]
            worst[name] = max(errs)
        ok = all(v <= 1e-5 for v in worst.values())
        c.verdict(ok, "max fd error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_criterion_02_parabola_suite():
    with Criterion(2, 60) as c:
        p = ParabolaProblem(1.0)
        g = np.linspace(-2, 2, 200)
        W = np.array([[x, y] for x in g for y in g])
        ratios = []
        for w in W:
            L = p.full_loss(w)
            if L >= 1e-14:
                gr = p.full_grad(w)
                ratios.append(float(gr @ gr) / (2 * L))
        pl_min = min(ratios)

        missing = []
        for a in (0.5, 1.0, 3.0):
            for x in np.linspace(-2, 2, 81):
                if abs(x) < 0.1:
                    continue
                wit = quasar_violation_witness(a, x)
                # exact sign from the rational form, float evaluation must agree
                if wit is None or not quasar_inner(a, x, wit[1]) < 0:
                    missing.append((a, x))

        thetas, margins = [], []
        for r in (0.1, 0.05, 0.02):
            reg = RegionSpec.ball(np.zeros(2), r)
            rng = np.random.default_rng(7)
            pts = reg.sample(p, rng, 4000)
            th = estimate_aiming(p, reg, probes=pts).value
            al = estimate_qg(p, reg, probes=pts).value
            Lh = estimate_hessian_lipschitz(p, reg, 400, rng).value
            thetas.append(th)
            margins.append(th - (local_aiming_theta(Lh, al, r) - 0.05))
        monotone = all(a < b for a, b in zip(thetas, thetas[1:]))
        ok = pl_min >= 1 - 1e-9 and not missing and min(margins) >= 0 and monotone
        c.verdict(
            ok,
            f"grid-min PL={pl_min:.10f}, quasar witnesses missing={len(missing)}, "
            f"theta(r=.1,.05,.02)={[round(t, 6) for t in thetas]}, min margin={min(margins):.3f}",
        )


def test_criterion_03_one_step_contraction():
    with Criterion(3, 60) as c:
        prob = make_regression(8, 32, derive_rng(0, 1000))
        rng = derive_rng(0, 0)
        u = rng.standard_normal(32)
        base = prob.project(u)
        w0 = base + 0.5 * (u - base) / np.linalg.norm(u - base)
        reg = RegionSpec.ball(w0, 1.0)
        pts = reg.sample(prob, rng, 50)
        alpha = estimate_qg(prob, reg, probes=pts, min_valid=1).value
        theta = estimate_aiming(prob, reg, probes=pts, min_valid=1).value
        beta = estimate_sample_beta(prob, reg, 64, rng=rng).value
        excess = -math.inf
        for s in (0.1, 0.3, 0.5):
            eta = s / beta
            bound = theoretical_factor(alpha, theta, beta, eta)
            for w in pts:
                ratio, _ = one_step_contraction_mc(prob, w, eta, 0, None, exhaustive=True)
                excess = max(excess, ratio - bound)
        c.verdict(excess <= 1e-6, f"max(ratio - bound) over 150 cases = {excess:.2e}")


def test_criterion_04_convergence_and_escape():
    with Criterion(4, 120) as c:
        prob = make_regression(8, 32, derive_rng(0, 1000))
        rng = derive_rng(0, 0)
        r, d1, d2, eps, runs = 1.0, 0.1, 0.1, 0.01, 500
        u = rng.standard_normal(32)
        base = prob.project(u)
        w0 = base + d1 * r * (u - base) / np.linalg.norm(u - base)
        reg = RegionSpec.ball(w0, r)
        pts = reg.sample(prob, rng, 256)
        alpha = estimate_qg(prob, reg, probes=pts).value
        theta = estimate_aiming(prob, reg, probes=pts).value
        rho = estimate_uniform_aiming(prob, reg, theta, rng=rng, probes=pts).value
        beta = estimate_sample_beta(prob, reg, 64, rng=rng).value
        eta = 0.5 / beta
        T = iteration_bound(alpha, theta, beta, eta, eps, d2)
        trajs = [
            run_sgd(prob, w0, SGDConfig(eta=eta, T=T, seed=s, monitors=[reg], record_every=T), rng=derive_rng(0, 1 + s))
            for s in range(runs)
        ]
        succ = float(np.mean([tr.dist[-1] ** 2 <= eps * tr.dist[0] ** 2 for tr in trajs]))
        target = 1 - d1 - d2
        tally = escape_tally(trajs, 0, rho, theta, beta, eta, alpha, r, d1)
        ok_succ = succ >= target - 3 * binomial_sigma(target, runs)
        ok_esc = tally.empirical <= tally.bound + 3 * binomial_sigma(tally.bound, runs)
        c.verdict(
            ok_succ and ok_esc,
            f"T={T}, success={succ:.3f} (target {target:.2f}), escape={tally.empirical:.3f} "
            f"(bound {tally.bound:.3f}; stated form {tally.stated_bound:.2f})",
        )


def test_criterion_05_large_stepsize_parity():
    with Criterion(5, 120) as c:
        prob = desk_net()
        w0 = prob.w_init
        beta = 2.0 * float(np.max(np.diag(prob.ntk(w0))))
        eta = 0.5 / beta
        l0 = prob.full_loss(w0)
        sgd = run_sgd(prob, w0, SGDConfig(eta=eta, T=5000, seed=1, stop_loss=1e-3 * l0))
        gd = run_gd(prob, w0, eta, 5000, stop_loss=1e-3 * l0)
        fs, fg = fit_rate(sgd, "loss"), fit_rate(gd, "loss")
        log_ratio = math.log(fs.per_step_factor) / math.log(fg.per_step_factor)
        reached = sgd.loss[-1] <= 1e-3 * l0 and gd.loss[-1] <= 1e-3 * l0
        c.verdict(
            reached and 0.5 <= log_ratio <= 2.0,
            f"eta={eta:.2f}, SGD steps={sgd.steps_taken}, GD steps={gd.steps_taken}, "
            f"factors {fs.per_step_factor:.4f}/{fg.per_step_factor:.4f}, log ratio={log_ratio:.2f}",
        )


def test_criterion_06_width_scaling():
    with Criterion(6, 300) as c:
        pc = {"input_dim": 16, "depth": 2, "n": 16, "activation": "tanh"}
        widths = [64, 128, 256, 512, 1024, 2048]
        res = [width_point(pc, m, 0) for m in widths]
        norms, lams = [r[1] for r in res], [r[2] for r in res]
        slope = loglog_slope(widths, norms)
        prob = res[-1][0]
        pl = estimate_pl(prob, RegionSpec.ball(prob.w_init, 1.0), 64, rng=derive_rng(0, 0)).value
        ok = -0.65 <= slope <= -0.35 and all(v > 0 for v in lams) and pl >= 0.3 * lams[-1]
        c.verdict(ok, f"slope={slope:.3f}, min lambda0={min(lams):.2e}, PL(2048)={pl:.2e} vs 0.3*lambda0={0.3 * lams[-1]:.2e}")


def test_criterion_07_wide_net_budget():
    with Criterion(7, 180) as c:
        prob = desk_net()
        w0 = prob.w_init
        eps, d2, runs = 1e-3, 0.1, 50
        lam = lambda0(prob, w0)
        budget = math.log(1 / (eps * d2)) / lam
        beta = 2.0 * float(np.max(np.diag(prob.ntk(w0))))
        eta = 0.5 / beta
        l0 = prob.full_loss(w0)
        T = int(math.ceil(3 * budget))
        steps = []
        for s in range(runs):
            tr = run_sgd(prob, w0, SGDConfig(eta=eta, T=T, seed=s, stop_loss=eps * l0), rng=derive_rng(s, 0))
            steps.append(tr.steps_taken if tr.loss[-1] <= eps * l0 else math.inf)
        frac = float(np.mean([t <= 3 * budget for t in steps]))
        finite = [t for t in steps if math.isfinite(t)]
        c.verdict(
            frac >= 0.8,
            f"lambda0={lam:.2e}, budget={budget:.0f}, reached within 3x in {frac:.0%} of runs, "
            f"median steps={np.median(finite) if finite else math.nan:.0f}",
        )


def test_criterion_08_boosting():
    with Criterion(8, 60) as c:
        prob = make_regression(8, 32, derive_rng(0, 1000))
        bc = {"k": 16, "lam": 2.0, "eps": 1e-3, "tau": 0.5, "sb_samples": 4000, "bad_factor": 10.0}
        reps = 200
        p_hat = measure_small_ball(prob, bc, derive_rng(0, 0))
        c1, c2 = bernstein_constants(bc["tau"], p_hat)
        m = samples_for_failure(c2, bc["k"], bc["k"] / 1600.0)
        wins = [boost_trial(prob, bc, c1, c2, m, derive_rng(0, 1 + i))[0] for i in range(reps)]
        freq = float(np.mean(wins))
        bound = lemma_success_bound(bc["k"], m, bc["lam"], c2)
        explicit = 1 - math.exp(-1) - bc["k"] * math.exp(-c2 * m) - bc["lam"] ** -4
        ok = abs(bound - explicit) <= 1e-12 and freq >= bound - 3 * binomial_sigma(bound, reps)
        c.verdict(ok, f"p_hat={p_hat:.3f}, c1={c1:.3f}, c2={c2:.3f}, m={m}, success={freq:.3f} vs bound {bound:.3f}")


def test_criterion_09_stopping_times():
    with Criterion(9, 60) as c:
        res = run_grid(default_grid(N=10_000, T=50), lambda i: derive_rng(0, i))
        worst_ratio = max(max(ch.empirical / ch.bound for ch in r.stop) for r in res)
        n_con = sum(r.contraction is not None for r in res)
        ok = len(res) == 12 and all(r.passed for r in res)
        c.verdict(ok, f"{sum(r.passed for r in res)}/12 specs pass, max empirical/bound = {worst_ratio:.3f}, contraction checks={n_con}")


def test_criterion_10_rate_table():
    with Criterion(10, 1) as c:
        checks = []
        r = table1_rates(1, 1, 1, 1, 5.0)["rates"]
        checks.append(all(v == math.exp(-5.0) for v in r.values()))
        r = table1_rates(100, 100, 1, 1, 1e4)["rates"]
        checks.append(r["bassily"] == math.exp(-1.0) and r["aiming"] == math.exp(-100.0))
        checks.append(table1_exponents(1, 3, 2, 2)["aiming"] == 4.0)
        r = table1_rates(10, 10, 10, 1, 100)["rates"]
        checks.append(r["aiming"] == math.exp(-10.0) and r["vaswani"] == math.exp(-1.0) == r["bassily"])
        checks.append(theoretical_factor(1, 1, 1, 0.5) == 0.75 and iteration_bound(1, 1, 1, 0.5, 0.01, 0.1) == 28)
        dominated = True
        for kappa in (1.0, 3.0, 10.0, 100.0):
            for kappa_bar in (1.0, 2.5, 10.0, 1000.0):
                for theta in (0.2, 0.5, 1.0, 1.5, 2.0):
                    if theta ** 2 * kappa_bar <= 1:
                        continue
                    for t in range(1, 200):
                        rr = table1_rates(kappa, kappa_bar, 1.0, theta, t)["rates"]
                        if not (rr["aiming"] < rr["bassily"] or rr["bassily"] == 0.0):
                            dominated = False
        c.verdict(all(checks) and dominated, f"substitution examples {sum(checks)}/{len(checks)} exact, dominance {'holds' if dominated else 'violated'}")
