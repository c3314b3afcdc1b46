import math

import numpy as np
import pytest

from aimlab.errors import DegeneratePoint, InvalidStepsize, MissingProjector
from aimlab.problem import RegionSpec
from aimlab.rates import theoretical_factor
from aimlab.regularity import estimate_aiming, estimate_qg
from aimlab.sgd import (
    CSV_COLUMNS,
    SGDConfig,
    one_step_contraction_mc,
    read_trajectory_csv,
    run_gd,
    run_sgd,
    write_trajectory_csv,
)
from aimlab.testbed import InterpLinearRegression, make_regression
from conftest import small_net


def test_config_validation():
    with pytest.raises(InvalidStepsize):
        SGDConfig(eta=0.0, T=5)
    with pytest.raises(ValueError):
        SGDConfig(eta=0.1, T=0)
    assert SGDConfig(eta=0.1, T=1).stepsize_valid is None
    assert SGDConfig(eta=0.5, T=1, theta=2, beta=1).stepsize_valid
    assert not SGDConfig(eta=3.0, T=1, theta=2, beta=1).stepsize_valid


def test_start_in_solution_set_is_stationary(regression, rng):
    w0 = regression.project(rng.standard_normal(32))
    tr = run_sgd(regression, w0, SGDConfig(eta=0.5, T=20))
    assert np.all(tr.loss <= 1e-28)
    np.testing.assert_allclose(tr.final_w, w0, atol=1e-14)
    gd = run_gd(regression, w0, 0.5, 10)
    np.testing.assert_allclose(gd.final_w, w0, atol=1e-14)


def test_rank_one_newton_step(rng):
    x = rng.standard_normal(4)
    prob = InterpLinearRegression(x[None, :], np.array([1.3]))
    tr = run_sgd(prob, rng.standard_normal(4), SGDConfig(eta=1 / float(x @ x), T=1))
    assert tr.loss[-1] <= 1e-28
    assert tr.dist[-1] <= 1e-12


def test_huge_stepsize_diverges(regression, rng):
    eta = 1e3 / regression.beta_sample
    tr = run_sgd(regression, rng.standard_normal(32), SGDConfig(eta=eta, T=500))
    assert tr.diverged and tr.steps_taken < 500
    assert np.all(np.isfinite(tr.loss))


def test_gd_on_quadratic_meets_closed_form(regression, rng):
    w0 = rng.standard_normal(32)
    eta = 1 / regression.beta_full
    tr = run_gd(regression, w0, eta, 40)
    kappa_bar = regression.beta_full / regression.alpha_qg
    per_step = tr.loss[1:] / tr.loss[:-1]
    assert np.all(per_step <= (1 - 1 / kappa_bar) ** 2 + 1e-12)


def test_gd_parabola_converges(parabola):
    tr = run_gd(parabola, np.array([0.1, 0.2]), 0.1, 500)
    assert tr.loss[-1] <= 1e-8


def test_reproducible_bit_identical(regression, rng):
    w0 = rng.standard_normal(32)
    cfg = SGDConfig(eta=0.4, T=200, seed=5, batch=3, monitors=[RegionSpec.ball(w0, 1.0), RegionSpec.tube(2.0)])
    a, b = run_sgd(regression, w0, cfg), run_sgd(regression, w0, cfg)
    assert np.array_equal(a.loss, b.loss) and np.array_equal(a.final_w, b.final_w)
    assert a.escape_time == b.escape_time


def test_full_batch_equals_gd(regression, rng):
    w0 = rng.standard_normal(32)
    a = run_sgd(regression, w0, SGDConfig(eta=0.7, T=30, batch=8))
    b = run_gd(regression, w0, 0.7, 30)
    np.testing.assert_array_equal(a.final_w, b.final_w)
    np.testing.assert_array_equal(a.loss, b.loss)


def test_record_stride_and_exact_escape(regression, rng):
    w0 = regression.project(rng.standard_normal(32)) + 0.5 * regression.X[0]
    mon = RegionSpec.ball(w0, 0.05)
    tr = run_sgd(regression, w0, SGDConfig(eta=0.9, T=50, record_every=10, monitors=[mon], seed=1))
    assert list(tr.t) == [0, 10, 20, 30, 40, 50]
    assert tr.drift[0] == 0.0
    # escape is detected at the step it happens, not at the next record point
    assert tr.escape_time[0] is not None and 1 <= tr.escape_time[0]
    replay = run_sgd(regression, w0, SGDConfig(eta=0.9, T=tr.escape_time[0], seed=1))
    assert np.linalg.norm(replay.final_w - w0) > 0.05


def test_no_escape_means_drift_stays_inside(regression, rng):
    w0 = regression.project(rng.standard_normal(32)) + 0.05 * regression.X[1]
    for seed in range(10):
        tr = run_sgd(regression, w0, SGDConfig(eta=0.5, T=100, seed=seed, monitors=[RegionSpec.ball(w0, 1.0)]))
        if tr.escape_time[0] is None:
            assert np.all(tr.drift <= 1.0)
            assert np.all(tr.inside[0])


def test_tube_monitor_needs_projector(rng):
    prob = small_net(depth=2)
    with pytest.raises(MissingProjector):
        run_sgd(prob, prob.w_init, SGDConfig(eta=0.1, T=2, monitors=[RegionSpec.tube(1.0)]))


def test_stop_loss(regression, rng):
    w0 = rng.standard_normal(32)
    l0 = regression.full_loss(w0)
    tr = run_gd(regression, w0, 1.0, 10_000, stop_loss=1e-3 * l0)
    assert tr.loss[-1] <= 1e-3 * l0 and tr.steps_taken < 10_000


def test_csv_roundtrip(tmp_path, regression, rng):
    w0 = rng.standard_normal(32)
    tr = run_sgd(regression, w0, SGDConfig(eta=0.5, T=20, monitors=[RegionSpec.ball(w0, 0.5)]))
    write_trajectory_csv(tmp_path / "t.csv", tr)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = read_trajectory_csv(tmp_path / "t.csv")
    assert rows == tr.to_rows()
    assert all(r["inside_tube"] is None for r in rows)


def test_csv_without_projector_leaves_dist_empty(tmp_path):
    prob = small_net(depth=2)
    tr = run_gd(prob, prob.w_init, 0.1, 3)
    write_trajectory_csv(tmp_path / "t.csv", tr)
    assert all(r["dist"] is None for r in read_trajectory_csv(tmp_path / "t.csv"))


def test_contraction_single_sample_exact(rng):
    x = rng.standard_normal(5)
    prob = InterpLinearRegression(x[None, :], np.array([0.7]))
    beta = float(x @ x)
    eta = 1 / (2 * beta)
    mean, se = one_step_contraction_mc(prob, rng.standard_normal(5), eta, 20, rng)
    assert mean == pytest.approx((1 - eta * beta) ** 2, rel=1e-10)
    assert se == 0.0


def test_contraction_on_solution_set(regression, rng):
    with pytest.raises(DegeneratePoint):
        one_step_contraction_mc(regression, regression.project(np.zeros(32)), 0.1, 10, rng)


def test_contraction_mc_against_exhaustive_and_bound(rng):
    prob = make_regression(4, 12, rng)
    reg = RegionSpec.ball(prob.project(np.zeros(12)), 1.0)
    w = reg.sample(prob, rng, 1)[0]
    eta = 1 / (2 * prob.beta_sample)
    exact, _ = one_step_contraction_mc(prob, w, eta, 0, None, exhaustive=True)
    mean, se = one_step_contraction_mc(prob, w, eta, 4000, rng)
    assert abs(mean - exact) <= 4 * se + 1e-12
    # local constants at w itself make the bound applicable at this point
    alpha = estimate_qg(prob, reg, probes=w[None, :], min_valid=1).value
    theta = estimate_aiming(prob, reg, probes=w[None, :], min_valid=1).value
    assert mean <= theoretical_factor(alpha, theta, prob.beta_sample, eta) + 3 * se


def test_descent_lemma_moment_bound(regression, rng):
    w0 = regression.project(rng.standard_normal(32)) + 0.2 * regression.X[0]
    tr = run_sgd(regression, w0, SGDConfig(eta=0.5, T=50))
    beta = regression.beta_sample
    for w in [w0, tr.final_w]:
        for i in range(8):
            l = regression.loss(w, i)
            g = regression.grad(w, i)
            assert float(g @ g) <= 2 * beta * l * 1.05 + 1e-300
