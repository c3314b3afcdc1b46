"""Empirical estimators for the regularity constants of an interpolation problem.

Every estimator is an extremum of a defining ratio over probe points, so the
reported constant is reproduced exactly by re-evaluating the ratio at the
returned witness.  Minimum-type constants (PL, quadratic growth, aiming) are
therefore optimistic and maximum-type constants (smoothness, uniform-aiming
slack) pessimistic relative to the true infimum/supremum over the region.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import (
    DegenerateGradient,
    JacobianTooRough,
    MissingProjector,
    NoSolutionInRegion,
    NoValidProbe,
    RadiusTooLarge,
)
from .problem import EPS_FLOOR, RegionSpec, StochasticProblem

QUORUM = 32


class Estimate(NamedTuple):
    value: float
    witness: object
    n_valid: int
    n_skipped: int


# -- defining ratios ----------------------------------------------------------


def pl_ratio(problem, w) -> Optional[float]:
    """``||grad L||^2 / (2 L)``, or ``None`` below the loss floor."""
    L = problem.full_loss(w)
    if L < EPS_FLOOR:
        return None
    g = problem.full_grad(w)
    return float(g @ g) / (2.0 * L)


def qg_ratio(problem, w) -> Optional[float]:
    """``2 L / dist^2(w, S)``."""
    L = problem.full_loss(w)
    if L < EPS_FLOOR:
        return None
    d2 = float(np.sum((w - problem.project(w)) ** 2))
    if d2 == 0.0:
        return None
    return 2.0 * L / d2


def aiming_ratio(problem, w) -> Optional[float]:
    """``<grad L(w), w - proj_S(w)> / L(w)``."""
    L = problem.full_loss(w)
    if L < EPS_FLOOR:
        return None
    return float(problem.full_grad(w) @ (w - problem.project(w))) / L


def uniform_aiming_deficit(problem, w, v, theta) -> Optional[float]:
    """``(theta L(w) - <grad L(w), w - v>) / dist(w, S)`` (unclipped)."""
    L = problem.full_loss(w)
    if L < EPS_FLOOR:
        return None
    dist = float(np.linalg.norm(w - problem.project(w)))
    if dist == 0.0:
        return None
    return _deficit(theta, L, problem.full_grad(w), w, v, dist)


def _deficit(theta, L, g, w, v, dist):
    return (theta * L - float(g @ (w - v))) / dist


def strong_growth_ratio(problem, w) -> float:
    """``E ||grad l(w, z)||^2 / ||grad L(w)||^2`` by exact enumeration of a finite sum."""
    if problem.sample_count is None:
        raise TypeError("strong_growth_ratio needs a finite-sum problem")
    g = problem.full_grad(w)
    gn2 = float(g @ g)
    if math.sqrt(gn2) < 1e-10:
        raise DegenerateGradient("full gradient vanishes")
    second = math.fsum(float(np.sum(problem.grad(w, i) ** 2)) for i in problem.samples())
    return second / problem.sample_count / gn2


# -- probe machinery ----------------------------------------------------------


def _probe_points(problem, region, n_probes, rng, probes):
    if probes is not None:
        return np.atleast_2d(np.asarray(probes, dtype=np.float64))
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    return region.sample(problem, rng, n_probes)


def _extremum(ratio, points, sense, min_valid):
    best, witness, n_valid = None, None, 0
    for w in points:
        val = ratio(w)
        if val is None:
            continue
        n_valid += 1
        if best is None or (val < best if sense == "min" else val > best):
            best, witness = val, w.copy()
    skipped = len(points) - n_valid
    if n_valid < max(min_valid, 1):
        raise NoValidProbe(f"only {n_valid} valid probes (quorum {min_valid})", n_valid)
    return Estimate(float(best), witness, n_valid, skipped)


def _need_projector(problem):
    if not problem.has_projector:
        raise MissingProjector(f"{type(problem).__name__} has no projector")


def estimate_pl(problem, region, n_probes=256, rng=None, probes=None, min_valid=QUORUM) -> Estimate:
    """``min ||grad L||^2 / (2 L)`` over probes with ``L >= EPS_FLOOR``."""
    pts = _probe_points(problem, region, n_probes, rng, probes)
    return _extremum(lambda w: pl_ratio(problem, w), pts, "min", min_valid)


def estimate_qg(problem, region, n_probes=256, rng=None, probes=None, min_valid=QUORUM) -> Estimate:
    """``min 2 L / dist^2(w, S)`` over valid probes."""
    _need_projector(problem)
    pts = _probe_points(problem, region, n_probes, rng, probes)
    return _extremum(lambda w: qg_ratio(problem, w), pts, "min", min_valid)


def estimate_aiming(problem, region, n_probes=256, rng=None, probes=None, min_valid=QUORUM) -> Estimate:
    """``min <grad L(w), w - proj(w)> / L(w)`` over valid probes."""
    _need_projector(problem)
    pts = _probe_points(problem, region, n_probes, rng, probes)
    return _extremum(lambda w: aiming_ratio(problem, w), pts, "min", min_valid)


def estimate_uniform_aiming(
    problem,
    region,
    theta,
    n_probes=128,
    n_solutions=32,
    rng=None,
    probes=None,
    solutions=None,
    min_valid=QUORUM,
) -> Estimate:
    """``rho = max_{w, v} max(0, (theta L(w) - <grad L(w), w - v>) / dist(w, S))``.

    Solutions ``v`` are projections of fresh region samples that land inside
    the region.  The witness is the pair ``(w, v)`` with the largest deficit.
    """
    _need_projector(problem)
    pts = _probe_points(problem, region, n_probes, rng, probes)
    if solutions is None:
        raw = region.sample(problem, rng, n_solutions)
        solutions = [problem.project(p) for p in raw]
    sols = [np.asarray(v, dtype=np.float64) for v in solutions if region.kind == "tube" or region.contains(problem, v, slack=1e-12)]
    if not sols:
        raise NoSolutionInRegion("no projected sample landed inside the region")
    best, witness, n_valid = -math.inf, None, 0
    for w in pts:
        L = problem.full_loss(w)
        if L < EPS_FLOOR:
            continue
        dist = float(np.linalg.norm(w - problem.project(w)))
        if dist == 0.0:
            continue
        n_valid += 1
        g = problem.full_grad(w)
        for v in sols:
            val = _deficit(theta, L, g, w, v, dist)
            if val > best:
                best, witness = val, (w.copy(), v.copy())
    if n_valid < max(min_valid, 1):
        raise NoValidProbe(f"only {n_valid} valid probes (quorum {min_valid})", n_valid)
    return Estimate(max(0.0, best), witness, n_valid, len(pts) - n_valid)


def _lipschitz_search(grad_fn, region, problem, w, rng, power_steps, n_scales):
    """Largest gradient difference quotient found from ``w``.

    The direction is sharpened by a few power steps on difference quotients
    (so it aligns with the top curvature direction), then quotients are taken
    over step lengths from ``1e-4`` of the region diameter up to the diameter.
    """
    diam = 2.0 * region.radius
    h = 1e-4 * diam
    g0 = grad_fn(w)
    v = rng.standard_normal(w.size)
    v /= np.linalg.norm(v)
    for _ in range(power_steps):
        dv = (grad_fn(w + h * v) - grad_fn(w - h * v)) / (2 * h)
        nd = np.linalg.norm(dv)
        if nd == 0.0:
            break
        v = dv / nd
    best, best_w2 = None, None
    for s in np.geomspace(1e-4 * diam, diam, n_scales):
        for sgn in (1.0, -1.0):
            w2 = w + sgn * s * v
            if not region.contains(problem, w2):
                continue
            q = float(np.linalg.norm(grad_fn(w2) - g0)) / s
            if best is None or q > best:
                best, best_w2 = q, w2
    return best, best_w2


def _beta_estimate(problem, region, n_probes, rng, probes, per_sample, power_steps, n_scales, min_valid):
    rng = np.random.default_rng() if rng is None else rng
    rng_pts, rng_dir, rng_z = rng.spawn(3)
    pts = _probe_points(problem, region, n_probes, rng_pts, probes)
    if per_sample and problem.sample_count is not None:
        order = rng_z.permutation(problem.sample_count)
        zs = [int(order[k % problem.sample_count]) for k in range(len(pts))]
    elif per_sample:
        zs = [problem.sample(rng_z) for _ in range(len(pts))]
    else:
        zs = [None] * len(pts)
    best, witness, n_valid = None, None, 0
    for w, z in zip(pts, zs):
        fn = (lambda u, z=z: problem.grad(u, z)) if per_sample else problem.full_grad
        q, w2 = _lipschitz_search(fn, region, problem, w, rng_dir, power_steps, n_scales)
        if q is None:
            continue
        n_valid += 1
        if best is None or q > best:
            best, witness = q, (w.copy(), w2.copy(), z)
    if n_valid < max(min_valid, 1):
        raise NoValidProbe(f"only {n_valid} valid probe pairs (quorum {min_valid})", n_valid)
    return Estimate(float(best), witness, n_valid, len(pts) - n_valid)


def estimate_sample_beta(problem, region, n_probes=64, rng=None, probes=None, power_steps=8, n_scales=6, min_valid=QUORUM):
    """Max of ``||grad l(w, z) - grad l(w', z)|| / ||w - w'||`` over probe pairs in the region.

    For finite sums the sample attached to each probe cycles through a random
    permutation of the indices, so every sample is visited once
    ``n_probes >= n``.  Witness: ``(w, w', z)``.
    """
    return _beta_estimate(problem, region, n_probes, rng, probes, True, power_steps, n_scales, min_valid)


def estimate_full_beta(problem, region, n_probes=64, rng=None, probes=None, power_steps=8, n_scales=6, min_valid=QUORUM):
    """As :func:`estimate_sample_beta` for the full gradient ``grad L``."""
    return _beta_estimate(problem, region, n_probes, rng, probes, False, power_steps, n_scales, min_valid)


def lipschitz_quotient(grad_fn, w, w2) -> float:
    return float(np.linalg.norm(grad_fn(w2) - grad_fn(w)) / np.linalg.norm(w2 - w))


def estimate_hessian_lipschitz(problem, region, n_probes=64, rng=None, probes=None, rel_step=1e-3, min_valid=QUORUM):
    """Max second difference ``||grad L(w + h v) - 2 grad L(w) + grad L(w - h v)|| / h^2``.

    A lower estimate of the Lipschitz constant of ``Hess L`` over the region.
    """
    rng = np.random.default_rng() if rng is None else rng
    rng_pts, rng_dir = rng.spawn(2)
    pts = _probe_points(problem, region, n_probes, rng_pts, probes)
    h = rel_step * region.radius
    best, witness, n_valid = None, None, 0
    for w in pts:
        v = rng_dir.standard_normal(w.size)
        v /= np.linalg.norm(v)
        g0 = problem.full_grad(w)
        q = float(np.linalg.norm(problem.full_grad(w + h * v) - 2 * g0 + problem.full_grad(w - h * v))) / (h * h)
        n_valid += 1
        if best is None or q > best:
            best, witness = q, (w.copy(), v)
    if n_valid < max(min_valid, 1):
        raise NoValidProbe("no probes", n_valid)
    return Estimate(best, witness, n_valid, 0)


# -- closed-form constants ----------------------------------------------------


def local_aiming_theta(L_hess_lip, alpha, r) -> float:
    """Aiming constant ``2 - 5 L r / (3 alpha)`` for radius ``r < 6 alpha / (5 L)``."""
    if L_hess_lip > 0 and not r < 6.0 * alpha / (5.0 * L_hess_lip):
        raise RadiusTooLarge(f"r={r} must be below 6 alpha / (5 L) = {6.0 * alpha / (5.0 * L_hess_lip)}")
    return 2.0 - 5.0 * L_hess_lip * r / (3.0 * alpha)


def lsq_aiming_params(L_jac_lip, beta, alpha, r):
    """``(theta, rho) = (2 - r L sqrt(beta) / alpha, 8 r^2 L sqrt(beta))`` for least squares.

    Requires ``L <= 2 alpha / (r sqrt(beta))``.
    """
    sb = math.sqrt(beta)
    if L_jac_lip > 0 and L_jac_lip > 2.0 * alpha / (r * sb):
        raise JacobianTooRough(f"L={L_jac_lip} exceeds 2 alpha / (r sqrt(beta)) = {2.0 * alpha / (r * sb)}")
    return 2.0 - r * L_jac_lip * sb / alpha, 8.0 * r * r * L_jac_lip * sb


class CubicCheck(NamedTuple):
    max_violation: float
    ok: bool
    witness: Optional[np.ndarray]


def cubic_remainder_check(problem, n_pairs, rng, hess_lip, region=None, probes=None, rtol=1e-8) -> CubicCheck:
    """Check ``|L(w) + 1/2 <grad L(w), proj(w) - w>| <= (5 L / 12) ||w - proj(w)||^3``.

    Returns the largest signed violation (LHS minus bound) over the pairs and
    whether every pair is within ``rtol * (1 + ||w - proj(w)||^3)``.
    """
    _need_projector(problem)
    if probes is None:
        if region is None:
            raise ValueError("need a region or explicit probes")
        probes = region.sample(problem, rng, n_pairs)
    worst, witness, ok = -math.inf, None, True
    for w in np.atleast_2d(probes):
        wb = problem.project(w)
        d = float(np.linalg.norm(w - wb))
        lhs = abs(problem.full_loss(w) + 0.5 * float(problem.full_grad(w) @ (wb - w)))
        viol = lhs - 5.0 * hess_lip / 12.0 * d ** 3
        if viol > rtol * (1.0 + d ** 3):
            ok = False
        if viol > worst:
            worst, witness = viol, w.copy()
    return CubicCheck(worst, ok, witness)


# -- report -------------------------------------------------------------------


@dataclass
class RegularityReport:
    alpha_pl: Optional[float] = None
    alpha_qg: Optional[float] = None
    theta_aiming: Optional[float] = None
    rho_uniform: Optional[float] = None
    beta_sample: Optional[float] = None
    beta_bar_full: Optional[float] = None
    B_strong_growth: Optional[float] = None
    witness: dict = field(default_factory=dict)
    region: Optional[RegionSpec] = None
    n_probes: int = 0
    n_valid: dict = field(default_factory=dict)

    @property
    def kappa(self):
        if self.beta_sample is None or not self.alpha_qg:
            return None
        return self.beta_sample / self.alpha_qg

    @property
    def kappa_bar(self):
        if self.beta_bar_full is None or not self.alpha_qg:
            return None
        return self.beta_bar_full / self.alpha_qg

    def reproduce(self, problem) -> dict:
        """Re-evaluate each constant's defining ratio at its witness."""
        out = {}
        wit = self.witness
        if "alpha_pl" in wit:
            out["alpha_pl"] = pl_ratio(problem, wit["alpha_pl"])
        if "alpha_qg" in wit:
            out["alpha_qg"] = qg_ratio(problem, wit["alpha_qg"])
        if "theta_aiming" in wit:
            out["theta_aiming"] = aiming_ratio(problem, wit["theta_aiming"])
        if "rho_uniform" in wit:
            w, v = wit["rho_uniform"]
            out["rho_uniform"] = max(0.0, uniform_aiming_deficit(problem, w, v, wit["theta_used"]))
        if "beta_sample" in wit:
            w, w2, z = wit["beta_sample"]
            out["beta_sample"] = lipschitz_quotient(lambda u: problem.grad(u, z), w, w2)
        if "beta_bar_full" in wit:
            w, w2, _ = wit["beta_bar_full"]
            out["beta_bar_full"] = lipschitz_quotient(problem.full_grad, w, w2)
        if "B_strong_growth" in wit:
            out["B_strong_growth"] = strong_growth_ratio(problem, wit["B_strong_growth"])
        return out

    def to_dict(self):
        def enc(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, tuple):
                return [enc(e) for e in x]
            if isinstance(x, (np.integer,)):
                return int(x)
            return x

        keys = ["alpha_pl", "alpha_qg", "theta_aiming", "rho_uniform", "beta_sample", "beta_bar_full", "B_strong_growth"]
        out = {k: getattr(self, k) for k in keys}
        out["kappa"] = self.kappa
        out["kappa_bar"] = self.kappa_bar
        out["witness"] = {k: enc(v) for k, v in self.witness.items()}
        out["region"] = self.region.to_dict() if self.region is not None else None
        out["n_probes"] = self.n_probes
        out["n_valid"] = dict(self.n_valid)
        return out


def estimate_regularity(problem: StochasticProblem, region: RegionSpec, n_probes=128, rng=None, theta=None, n_solutions=32, beta_probes=None, min_valid=QUORUM) -> RegularityReport:
    """Run every estimator the problem supports on one region.

    Projector-dependent constants are skipped for problems without one.
    ``theta`` fixes the aiming level used for the uniform-aiming slack; by
    default the estimated aiming constant is used.
    """
    rng = np.random.default_rng() if rng is None else rng
    streams = rng.spawn(6)
    rep = RegularityReport(region=region, n_probes=n_probes)
    pts = region.sample(problem, streams[0], n_probes)
    est = estimate_pl(problem, region, probes=pts, min_valid=min_valid)
    rep.alpha_pl, rep.witness["alpha_pl"], rep.n_valid["alpha_pl"] = est.value, est.witness, est.n_valid
    if problem.has_projector:
        est = estimate_qg(problem, region, probes=pts, min_valid=min_valid)
        rep.alpha_qg, rep.witness["alpha_qg"], rep.n_valid["alpha_qg"] = est.value, est.witness, est.n_valid
        est = estimate_aiming(problem, region, probes=pts, min_valid=min_valid)
        rep.theta_aiming, rep.witness["theta_aiming"], rep.n_valid["theta_aiming"] = est.value, est.witness, est.n_valid
        th = rep.theta_aiming if theta is None else theta
        try:
            est = estimate_uniform_aiming(problem, region, th, n_solutions=n_solutions, rng=streams[1], probes=pts, min_valid=min_valid)
        except NoSolutionInRegion:
            est = None  # region misses S; the slack is undefined there
        if est is not None:
            rep.rho_uniform, rep.witness["rho_uniform"] = est.value, est.witness
            rep.witness["theta_used"] = th
            rep.n_valid["rho_uniform"] = est.n_valid
    nb = beta_probes or max(min_valid, min(n_probes, 64))
    est = estimate_sample_beta(problem, region, nb, rng=streams[2], min_valid=min_valid)
    rep.beta_sample, rep.witness["beta_sample"], rep.n_valid["beta_sample"] = est.value, est.witness, est.n_valid
    est = estimate_full_beta(problem, region, nb, rng=streams[3], min_valid=min_valid)
    rep.beta_bar_full, rep.witness["beta_bar_full"], rep.n_valid["beta_bar_full"] = est.value, est.witness, est.n_valid
    if problem.sample_count is not None:
        best, wit = None, None
        for w in pts:
            try:
                b = strong_growth_ratio(problem, w)
            except DegenerateGradient:
                continue
            if best is None or b > best:
                best, wit = b, w.copy()
        if best is not None:
            rep.B_strong_growth, rep.witness["B_strong_growth"] = best, wit
    return rep
