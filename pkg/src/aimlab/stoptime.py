"""Monte Carlo checks of the stopping-time bounds on synthetic nonnegative chains.

The chains follow ``U_{t+1} = q U_t xi_t + zeta_t eta_t`` with independent
nonnegative mean-one factors ``xi_t`` and ``eta_t``, so
``E[U_{t+1} | U_{0:t}] = q U_t + zeta_t`` holds exactly and both hypotheses
(with drift ``zeta``; with contraction ``q`` when ``zeta = 0``) are met by
construction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import PreconditionViolated
from .rates import binomial_sigma

NOISE_MODELS = ("none", "two_point", "uniform")


@dataclass(frozen=True)
class ChainSpec:
    """One synthetic chain family.

    ``noise`` selects ``xi``: ``"none"`` (``xi = 1``), ``"two_point"``
    (``xi = 1/p`` with probability ``p``, else 0; ``noise_param = p``) or
    ``"uniform"`` (``xi ~ U[1 - a, 1 + a]``; ``noise_param = a <= 1``).  The
    drift factor ``eta`` is ``U[0, 2]`` when ``drift_noise`` is set, else 1.
    ``U0`` is a point mass at ``u0`` or, with ``u0_spread = s > 0``, uniform
    on ``[u0 - s, u0 + s]``.
    """

    q: float = 1.0
    noise: str = "none"
    noise_param: float = 0.5
    zeta: float = 0.0
    drift_noise: bool = True
    u0: float = 1.0
    u0_spread: float = 0.0
    u: float = 10.0
    T: int = 50
    N: int = 10_000

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if self.noise not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.noise == "two_point" and not 0 < self.noise_param <= 1:
            raise ValueError("two-point probability must lie in (0, 1]")
        if self.noise == "uniform" and not 0 <= self.noise_param <= 1:
            raise ValueError("uniform half-width must lie in [0, 1]")
        if self.zeta < 0 or self.u <= 0 or self.T < 1 or self.N < 1:
            raise ValueError("need zeta >= 0, u > 0, T >= 1, N >= 1")
        if not 0 <= self.u0_spread <= self.u0:
            raise ValueError("U0 must stay nonnegative")

    @property
    def mean_u0(self) -> float:
        return self.u0

    def zeta_schedule(self, t) -> np.ndarray:
        return np.full(t, self.zeta)

    def to_dict(self):
        return asdict(self)


class ChainSample(NamedTuple):
    U: np.ndarray  # trials x (T + 1)
    tau: np.ndarray  # first t with U_t > u, or -1 for "never within the horizon"


def _xi(spec, rng, shape):
    if spec.noise == "none":
        return np.ones(shape)
    if spec.noise == "two_point":
        p = spec.noise_param
        return np.where(rng.random(shape) < p, 1.0 / p, 0.0)
    a = spec.noise_param
    return rng.uniform(1.0 - a, 1.0 + a, shape)


def simulate_chain(spec: ChainSpec, rng, T=None) -> ChainSample:
    """Simulate ``spec.N`` independent chains for ``T`` (default ``spec.T``) steps."""
    T = spec.T if T is None else int(T)
    N = spec.N
    U = np.empty((N, T + 1))
    if spec.u0_spread > 0:
        U[:, 0] = rng.uniform(spec.u0 - spec.u0_spread, spec.u0 + spec.u0_spread, N)
    else:
        U[:, 0] = spec.u0
    xi = _xi(spec, rng, (N, T))
    eta = rng.uniform(0.0, 2.0, (N, T)) if spec.drift_noise else np.ones((N, T))
    zeta = spec.zeta_schedule(T)
    for t in range(T):
        U[:, t + 1] = spec.q * U[:, t] * xi[:, t] + zeta[t] * eta[:, t]
    over = U > spec.u
    tau = np.where(over.any(axis=1), over.argmax(axis=1), -1)
    return ChainSample(U, tau)


def stopped_before(tau, t) -> np.ndarray:
    """Indicator of ``tau <= t`` (``tau = -1`` encodes no stop in the horizon)."""
    return (tau >= 0) & (tau <= t)


class BoundCheck(NamedTuple):
    empirical: float
    bound: float
    sigma: float
    passed: bool
    t: int


def stop_bound(spec: ChainSpec, t) -> float:
    """``(E U0 + sum_{i<t} zeta_i) / u``."""
    return (spec.mean_u0 + math.fsum(spec.zeta_schedule(t))) / spec.u


def check_stop_bound(spec: ChainSpec, t, rng, sample: Optional[ChainSample] = None) -> BoundCheck:
    """Compare the empirical ``P(tau <= t)`` to the drift bound, one-sided at 3 sigma."""
    if not 1 <= t <= spec.T:
        raise ValueError("t must lie in [1, T]")
    sample = simulate_chain(spec, rng) if sample is None else sample
    emp = float(np.mean(stopped_before(sample.tau, t)))
    bound = stop_bound(spec, t)
    sig = binomial_sigma(bound, spec.N)
    return BoundCheck(emp, bound, sig, emp <= bound + 3 * sig, int(t))


def stop_bound_curve(spec: ChainSpec, sample: ChainSample):
    """Rows ``(t, empirical, bound)`` for ``t = 1..T``."""
    return [(t, float(np.mean(stopped_before(sample.tau, t))), stop_bound(spec, t)) for t in range(1, spec.T + 1)]


def contraction_horizon(q, eps, delta2) -> int:
    """``ceil(log(1 / (delta2 eps)) / (1 - q))``."""
    if not 0 < q < 1:
        raise ValueError("need q in (0, 1)")
    return max(0, math.ceil(math.log(1.0 / (delta2 * eps)) / (1.0 - q)))


def check_contraction_bound(spec: ChainSpec, eps, delta1, delta2, rng) -> BoundCheck:
    """Empirical ``P(tau > t and U_t < eps U_0)`` at the contraction horizon.

    Success also requires that the chain has not stopped, so no value after
    ``tau`` enters the tally; this event is contained in the one the bound
    controls and the check is therefore conservative.  Compared one-sided
    against ``1 - delta1 - delta2`` with 3 sigma slack.
    """
    if spec.mean_u0 > delta1 * spec.u * (1 + 1e-12):
        raise PreconditionViolated(f"E U0 = {spec.mean_u0} exceeds delta1 * u = {delta1 * spec.u}")
    if spec.zeta != 0:
        raise PreconditionViolated("the contraction bound needs zero drift")
    if not spec.q < 1:
        raise PreconditionViolated("the contraction bound needs q < 1")
    t = contraction_horizon(spec.q, eps, delta2)
    sample = simulate_chain(spec, rng, T=max(t, 1))
    ok = ~stopped_before(sample.tau, t) & (sample.U[:, t] < eps * sample.U[:, 0])
    emp = float(np.mean(ok))
    target = 1.0 - delta1 - delta2
    sig = binomial_sigma(target, spec.N)
    return BoundCheck(emp, target, sig, emp >= target - 3 * sig, t)


def default_grid(N=10_000, T=50):
    """The 12 chain families: ``q in {1, 0.9, 0.5}`` x two noise models x ``zeta in {0, 0.01}``.

    Two-point noise uses ``p = 0.099``, so with ``U0 = 1`` and ``u = 10`` a single
    jump (to ``q / p``) nearly reaches the threshold and ``P(tau <= t)`` sits
    just under the bound ``0.1`` when ``q = 1``.
    """
    grid = []
    for q in (1.0, 0.9, 0.5):
        for noise, param in (("two_point", 0.099), ("uniform", 1.0)):
            for zeta in (0.0, 0.01):
                grid.append(ChainSpec(q=q, noise=noise, noise_param=param, zeta=zeta, u0=1.0, u=10.0, T=T, N=N))
    return grid


class GridResult(NamedTuple):
    spec: ChainSpec
    stop: list  # BoundCheck at every t in 1..T
    contraction: Optional[BoundCheck]
    passed: bool


def run_grid(specs, rng_for, eps=0.01, delta1=0.1, delta2=0.1):
    """Run both checks on every spec; ``rng_for(i)`` supplies the stream for spec ``i``.

    The contraction check only applies to specs with ``q < 1`` and no drift.
    """
    out = []
    for i, spec in enumerate(specs):
        rng = rng_for(i)
        sample = simulate_chain(spec, rng)
        stop = [check_stop_bound(spec, t, rng, sample=sample) for t in range(1, spec.T + 1)]
        con = None
        if spec.q < 1 and spec.zeta == 0:
            con = check_contraction_bound(spec, eps, delta1, delta2, rng)
        passed = all(c.passed for c in stop) and (con is None or con.passed)
        out.append(GridResult(spec, stop, con, passed))
    return out
