"""Small-ball estimates and rejection sampling to boost a constant success probability.

A run of SGD that succeeds with probability at least 1/2 is repeated ``k``
times; each candidate's loss is estimated on ``m`` fresh samples, and only
candidates whose empirical loss is at most ``lambda * eps`` are kept.  Under a
small-ball condition ``P(l(w, z) >= tau L(w)) >= p`` the empirical mean is at
least ``c1 L(w)`` with probability ``1 - exp(-c2 m)``, so every kept candidate
has ``L(w) <= lambda eps / c1`` with high probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import AllRejected, DegeneratePoint
from .problem import EPS_FLOOR


class SmallBallEstimate(NamedTuple):
    tau: float
    p_hat: float
    n_samples: int
    w: np.ndarray


def small_ball_estimate(problem, w, tau, n, rng) -> SmallBallEstimate:
    """Empirical frequency of ``l(w, z) >= tau L(w)`` over ``n`` i.i.d. samples."""
    if n < 1:
        raise ValueError("n must be >= 1")
    w = np.asarray(w, dtype=np.float64)
    L = problem.full_loss(w)
    if L < EPS_FLOOR:
        raise DegeneratePoint("small-ball probability is undefined at zero loss")
    hits = sum(problem.loss(w, problem.sample(rng)) >= tau * L for _ in range(n))
    return SmallBallEstimate(float(tau), hits / n, int(n), w.copy())


def bernstein_constants(tau, p):
    """``(c1, c2) = (p tau / 2, p / 4)``."""
    if not (0 < tau <= 1 and 0 < p <= 1):
        raise ValueError("need tau in (0, 1] and p in (0, 1]")
    return p * tau / 2.0, p / 4.0


def paley_zygmund(L_val, second_moment, tau) -> float:
    """Lower bound ``(1 - tau)^2 L^2 / E[l^2]`` on the small-ball probability."""
    if not second_moment > 0:
        raise ValueError("second moment must be positive")
    if not 0 <= tau <= 1:
        raise ValueError("tau must lie in [0, 1]")
    return min(1.0, max(0.0, (1.0 - tau) ** 2 * L_val ** 2 / second_moment))


def lemma_success_bound(k, m, lam, c2) -> float:
    """``1 - exp(-k/16) - k exp(-c2 m) - lam^(-k/4)``."""
    return 1.0 - math.exp(-k / 16.0) - k * math.exp(-c2 * m) - lam ** (-k / 4.0)


def samples_for_failure(c2, k, target) -> int:
    """Smallest ``m`` with ``k exp(-c2 m) <= target``."""
    return int(math.ceil(math.log(k / target) / c2))


@dataclass
class BoostResult:
    admissible: list
    means: np.ndarray
    chosen: Optional[int]
    k: int
    m: int
    lam: float
    eps: float
    lemma_bound: Optional[float] = None
    certified_bound: Optional[float] = None

    @property
    def empty(self) -> bool:
        return not self.admissible

    def to_dict(self):
        return {
            "admissible": [int(i) for i in self.admissible],
            "means": [float(v) for v in self.means],
            "chosen": self.chosen,
            "k": self.k,
            "m": self.m,
            "lambda": self.lam,
            "eps": self.eps,
            "lemma_bound": self.lemma_bound,
            "certified_bound": self.certified_bound,
        }


def rejection_sample(problem, candidates, m, lam, eps, rng, c1=None, c2=None) -> BoostResult:
    """Keep candidates whose mean loss on ``m`` fresh samples is at most ``lam * eps``.

    Each candidate gets its own child stream of ``rng`` so the estimates are
    independent across candidates.  The chosen index (0-based) is the smallest
    empirical mean in the admissible set, ties going to the lowest index; it is
    ``None`` when nothing is admitted.
    """
    k = len(candidates)
    if k < 1:
        raise ValueError("need at least one candidate")
    if m < 1:
        raise ValueError("m must be >= 1")
    if not lam > 1:
        raise ValueError("lambda must exceed 1")
    if not eps > 0:
        raise ValueError("eps must be positive")
    streams = rng.spawn(k)
    means = np.empty(k)
    for i, (w, sub) in enumerate(zip(candidates, streams)):
        zs = [problem.sample(sub) for _ in range(m)]
        means[i] = math.fsum(problem.loss(w, z) for z in zs) / m
    admissible = [i for i in range(k) if means[i] <= lam * eps]
    chosen = min(admissible, key=lambda i: (means[i], i)) if admissible else None
    return BoostResult(
        admissible=admissible,
        means=means,
        chosen=chosen,
        k=k,
        m=int(m),
        lam=float(lam),
        eps=float(eps),
        lemma_bound=None if c2 is None else lemma_success_bound(k, m, lam, c2),
        certified_bound=None if c1 is None else lam * eps / c1,
    )


def boost_sgd(problem, base_runner: Callable[[int], np.ndarray], k, m, lam, eps, rng, c1=None, c2=None):
    """Run ``base_runner(i)`` for ``i < k`` and filter the candidates.

    ``base_runner`` must return the final weights of an independent run keyed by
    ``i``.  Raises :class:`AllRejected` (carrying the result) when no candidate
    is admitted.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    candidates = [np.asarray(base_runner(i), dtype=np.float64) for i in range(k)]
    res = rejection_sample(problem, candidates, m, lam, eps, rng, c1=c1, c2=c2)
    if res.chosen is None:
        raise AllRejected("no candidate passed the empirical loss filter", res)
    return res, candidates[res.chosen]


def planted_mix(problem, k, eps, bad_loss, rng, p_good=0.5):
    """Candidates at exact loss levels around a regression solution set.

    Each candidate is good (``L in [0.1 eps, eps]``) with probability
    ``p_good`` and otherwise bad (``L in [bad_loss, 2 bad_loss]``).  Points are
    ``proj(u) + s (u - proj(u))`` for a random ``u`` with ``s`` solving the
    quadratic loss level exactly, so the problem must be a quadratic with a
    projector.  Returns ``(candidates, is_good)``.
    """
    cands, good = [], []
    for _ in range(k):
        u = rng.standard_normal(problem.dim)
        base = problem.project(u)
        d = u - base
        unit_loss = problem.full_loss(base + d)
        is_good = bool(rng.random() < p_good)
        target = eps * rng.uniform(0.1, 1.0) if is_good else bad_loss * rng.uniform(1.0, 2.0)
        cands.append(base + math.sqrt(target / unit_loss) * d)
        good.append(is_good)
    return cands, np.array(good)
