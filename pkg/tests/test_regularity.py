import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aimlab.errors import DegenerateGradient, JacobianTooRough, MissingProjector, NoSolutionInRegion, NoValidProbe, RadiusTooLarge
from aimlab.problem import FiniteSumProblem, RegionSpec
from aimlab.regularity import (
    aiming_ratio,
    cubic_remainder_check,
    estimate_aiming,
    estimate_full_beta,
    estimate_hessian_lipschitz,
    estimate_pl,
    estimate_qg,
    estimate_regularity,
    estimate_sample_beta,
    estimate_uniform_aiming,
    local_aiming_theta,
    lsq_aiming_params,
    pl_ratio,
    qg_ratio,
    strong_growth_ratio,
)
from aimlab.testbed import InterpLinearRegression, make_regression
from conftest import small_net


class Constant(FiniteSumProblem):
    def __init__(self):
        super().__init__(dim=3, n=2)

    def loss(self, w, z):
        return 1.0

    def grad(self, w, z):
        return np.zeros(3)


class Opposite(FiniteSumProblem):
    """Two samples whose gradients cancel everywhere."""

    def __init__(self):
        super().__init__(dim=2, n=2)

    def loss(self, w, z):
        return 1.0 + (w[0] if z == 0 else -w[0])

    def grad(self, w, z):
        return np.array([1.0, 0.0]) * (1 if z == 0 else -1)


def test_pl_ratio_examples(parabola, axis_regression, rng):
    assert pl_ratio(parabola, np.array([0.0, 1.0])) == pytest.approx(1.0)
    assert pl_ratio(parabola, np.array([1.0, 0.0])) == pytest.approx(5.0)
    for _ in range(5):
        w = rng.standard_normal(2)
        assert pl_ratio(axis_regression, w) == pytest.approx(1.0, rel=1e-12)


def test_qg_axis_regression(axis_regression, rng):
    reg = RegionSpec.ball(np.zeros(2), 2.0)
    assert estimate_qg(axis_regression, reg, 64, rng).value == pytest.approx(1.0, rel=1e-12)


def test_qg_parabola_near_origin(parabola, rng):
    # near S, L ~ g^2 / 2 and dist ~ |g| / sqrt(1 + 4 x^2), so the ratio tends to 1 + 4 x^2
    reg = RegionSpec.ball(np.zeros(2), 0.1)
    est = estimate_qg(parabola, reg, 2000, rng).value
    g = np.linspace(-0.1, 0.1, 201)
    grid = [qg_ratio(parabola, np.array([x, y])) for x in g for y in g if x * x + y * y <= 0.01]
    oracle = min(v for v in grid if v is not None)
    assert 1.0 - 1e-6 <= est <= 1.05
    assert est >= oracle - 1e-3


def test_probes_in_solution_set_are_counted(axis_regression):
    reg = RegionSpec.ball(np.zeros(2), 1.0)
    probes = np.array([[0.0, 0.3]] * 3 + [[0.5, 0.0]] * 32)
    est = estimate_qg(axis_regression, reg, probes=probes)
    assert est.n_valid == 32 and est.n_skipped == 3


def test_quorum_enforced(axis_regression):
    reg = RegionSpec.ball(np.zeros(2), 1.0)
    with pytest.raises(NoValidProbe):
        estimate_pl(axis_regression, reg, probes=np.array([[0.0, 0.2]] * 40))
    with pytest.raises(NoValidProbe):
        estimate_pl(axis_regression, reg, probes=np.array([[0.1, 0.2]] * 5))


def test_aiming_hand_example(parabola):
    assert aiming_ratio(parabola, np.array([0.0, 1.0])) == pytest.approx(1.0, rel=1e-10)


def test_aiming_local_bound(parabola, rng):
    reg = RegionSpec.ball(np.array([0.5, 0.25]), 0.05)
    pts = reg.sample(parabola, rng, 500)
    theta = estimate_aiming(parabola, reg, probes=pts).value
    alpha = estimate_qg(parabola, reg, probes=pts).value
    L = estimate_hessian_lipschitz(parabola, reg, 200, rng).value
    assert theta >= local_aiming_theta(L, alpha, 0.05)


def test_aiming_regression_is_two(regression, rng):
    reg = RegionSpec.tube(1.0)
    assert estimate_aiming(regression, reg, 64, rng).value == pytest.approx(2.0, abs=1e-10)


def test_missing_projector_errors(rng):
    prob = small_net(depth=2)
    reg = RegionSpec.ball(prob.w_init, 1.0)
    for fn in (estimate_qg, estimate_aiming):
        with pytest.raises(MissingProjector):
            fn(prob, reg, 40, rng)
    with pytest.raises(MissingProjector):
        estimate_uniform_aiming(prob, reg, 1.0, rng=rng)


def test_uniform_aiming_regression(regression, rng):
    reg = RegionSpec.tube(1.0)
    assert estimate_uniform_aiming(regression, reg, 2.0, rng=rng).value <= 1e-12
    assert estimate_uniform_aiming(regression, reg, 0.0, rng=rng).value == 0.0


def test_uniform_aiming_parabola_within_least_squares_bound(parabola, rng):
    r = 1.0
    reg = RegionSpec.ball(np.zeros(2), r)
    rho = estimate_uniform_aiming(parabola, reg, 1.0, rng=rng).value
    beta = estimate_sample_beta(parabola, reg, 64, rng=rng).value
    jac_lip = 2 * parabola.a  # the residual y - a x^2 has gradient (-2 a x, 1)
    assert 0 < rho <= 8 * r * r * jac_lip * math.sqrt(beta)


def test_uniform_aiming_needs_solutions(regression, rng):
    far = regression.project(np.zeros(32)) + 50 * regression.X[0]
    with pytest.raises(NoSolutionInRegion):
        estimate_uniform_aiming(regression, RegionSpec.ball(far, 1.0), 1.0, rng=rng)


def test_beta_regression(regression, rng):
    reg = RegionSpec.ball(regression.project(np.zeros(32)), 1.0)
    assert estimate_sample_beta(regression, reg, 64, rng=rng).value == pytest.approx(regression.beta_sample, rel=0.05)
    assert estimate_full_beta(regression, reg, 64, rng=rng).value == pytest.approx(regression.beta_full, rel=0.05)


def test_beta_linear_model(rng):
    x = rng.standard_normal(5)
    prob = InterpLinearRegression(x[None, :], np.zeros(1))
    reg = RegionSpec.ball(np.zeros(5), 1.0)
    assert estimate_sample_beta(prob, reg, 40, rng=rng).value == pytest.approx(float(x @ x), rel=1e-6)


def test_beta_constant_loss(rng):
    reg = RegionSpec.ball(np.zeros(3), 1.0)
    assert estimate_sample_beta(Constant(), reg, 40, rng=rng).value == 0.0


def test_beta_single_sample_agrees(parabola):
    reg = RegionSpec.ball(np.zeros(2), 0.1)
    a = estimate_sample_beta(parabola, reg, 64, rng=np.random.default_rng(9)).value
    b = estimate_full_beta(parabola, reg, 64, rng=np.random.default_rng(9)).value
    assert a == pytest.approx(b, rel=1e-8)


def test_beta_parabola_near_origin(parabola, rng):
    reg = RegionSpec.ball(np.zeros(2), 0.1)
    assert estimate_full_beta(parabola, reg, 64, rng=rng).value == pytest.approx(1.0, abs=0.06)


def test_strong_growth_single_sample(parabola):
    assert strong_growth_ratio(parabola, np.array([0.3, 0.5])) == pytest.approx(1.0)


def test_strong_growth_degenerate():
    with pytest.raises(DegenerateGradient):
        strong_growth_ratio(Opposite(), np.zeros(2))


def test_local_aiming_theta_examples():
    assert local_aiming_theta(0.0, 1.0, 5.0) == 2.0
    assert local_aiming_theta(1.0, 1.0, 0.6) == pytest.approx(1.0)
    with pytest.raises(RadiusTooLarge):
        local_aiming_theta(1.0, 1.0, 1.2)


def test_lsq_params_examples():
    assert lsq_aiming_params(0.0, 1.0, 1.0, 1.0) == (2.0, 0.0)
    assert lsq_aiming_params(1.0, 1.0, 1.0, 1.0) == (1.0, 8.0)
    with pytest.raises(JacobianTooRough):
        lsq_aiming_params(1.0, 4.0, 1.0, 2.0)


def test_cubic_remainder_regression_identity(regression, rng):
    res = cubic_remainder_check(regression, 50, rng, hess_lip=0.0, region=RegionSpec.tube(1.0))
    assert res.ok and abs(res.max_violation) <= 1e-12


def test_cubic_remainder_parabola(parabola, rng):
    R = 0.3
    probes = RegionSpec.ball(np.zeros(2), R).sample(parabola, rng, 400)
    # segments [w, proj(w)] stay within |x| <= 2R, where the analytic bound holds
    res = cubic_remainder_check(parabola, 0, rng, parabola.hessian_lipschitz_bound(2 * R), probes=probes)
    assert res.ok and res.max_violation <= 0.0


def test_cubic_remainder_on_solution_set(parabola, rng):
    res = cubic_remainder_check(parabola, 0, rng, 1.0, probes=np.array([[0.5, 0.25]]))
    assert res.max_violation == 0.0


def test_report_witnesses_reproduce(regression, parabola, rng):
    for prob, reg in ((regression, RegionSpec.tube(0.5)), (parabola, RegionSpec.ball(np.zeros(2), 0.2))):
        rep = estimate_regularity(prob, reg, 64, rng)
        again = rep.reproduce(prob)
        for k, v in again.items():
            assert v == pytest.approx(getattr(rep, k), rel=1e-8, abs=1e-15), k
        assert rep.alpha_qg <= rep.beta_bar_full
        d = rep.to_dict()
        assert d["kappa"] == pytest.approx(rep.beta_sample / rep.alpha_qg)


def test_pl_implies_qg(parabola, regression, rng):
    for prob, reg in ((parabola, RegionSpec.ball(np.zeros(2), 0.3)), (regression, RegionSpec.tube(1.0))):
        pts = reg.sample(prob, rng, 200)
        pl = estimate_pl(prob, reg, probes=pts).value
        qg = estimate_qg(prob, reg, probes=pts).value
        assert qg >= pl / 8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(33, 80))
def test_estimators_monotone_in_probe_set(seed, k):
    r = np.random.default_rng(seed)
    prob = make_regression(4, 10, r)
    reg = RegionSpec.tube(1.0)
    pts = reg.sample(prob, r, 80)
    sols = [prob.project(p) for p in reg.sample(prob, r, 8)]
    sub, full = pts[:k], pts
    for fn in (estimate_pl, estimate_qg, estimate_aiming):
        assert fn(prob, reg, probes=full).value <= fn(prob, reg, probes=sub).value
    a = estimate_uniform_aiming(prob, reg, 1.5, probes=sub, solutions=sols).value
    b = estimate_uniform_aiming(prob, reg, 1.5, probes=full, solutions=sols).value
    assert b >= a
