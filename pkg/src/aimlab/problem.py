"""Stochastic interpolation problems and the generic numerical oracles around them.

A problem is ``L(w) = E_z l(w, z)`` with nonnegative per-sample losses.  Sample
ids are opaque: an integer index for finite sums, anything else (e.g. a drawn
parameter vector) for general distributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import MissingProjector, NonFiniteValue

EPS_FLOOR = 1e-14
MACHINE_EPS = np.finfo(np.float64).eps


def derive_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    """Independent stream number ``index`` under ``master_seed``.

    Streams are keyed by the entropy pair ``(master_seed, index)`` so run ``i``
    of a sweep is reproducible without replaying runs ``0..i-1``.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


def compensated_sum(rows) -> np.ndarray:
    """Neumaier-compensated sum over the first axis of ``rows``."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] == 0:
        return np.zeros(rows.shape[1:])
    total = rows[0].copy()
    comp = np.zeros_like(total)
    for row in rows[1:]:
        t = total + row
        big = np.abs(total) >= np.abs(row)
        comp += np.where(big, (total - t) + row, (row - t) + total)
        total = t
    return total + comp


def check_finite(value, what="value"):
    if not np.all(np.isfinite(value)):
        raise NonFiniteValue(f"non-finite {what}")
    return value


class StochasticProblem:
    """Base class for ``L(w) = E l(w, z)``.

    Subclasses implement :meth:`sample`, :meth:`loss`, :meth:`grad` and
    :meth:`full_loss`; finite sums should derive from :class:`FiniteSumProblem`
    instead.  Problems with a known solution set override :meth:`project` and
    set ``has_projector``.
    """

    dim: int
    sample_count: Optional[int] = None
    has_projector: bool = False

    def sample(self, rng: np.random.Generator) -> Any:
        raise NotImplementedError

    def sample_batch(self, rng: np.random.Generator, size: int) -> list:
        return [self.sample(rng) for _ in range(size)]

    def loss(self, w: np.ndarray, z) -> float:
        raise NotImplementedError

    def grad(self, w: np.ndarray, z) -> np.ndarray:
        raise NotImplementedError

    def batch_grad(self, w: np.ndarray, zs: Sequence) -> np.ndarray:
        """Arithmetic mean of the sample gradients over ``zs``."""
        return compensated_sum([self.grad(w, z) for z in zs]) / len(zs)

    def full_loss(self, w: np.ndarray) -> float:
        raise NotImplementedError

    def full_grad(self, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def project(self, w: np.ndarray) -> np.ndarray:
        raise MissingProjector(f"{type(self).__name__} has no projector")


class FiniteSumProblem(StochasticProblem):
    """``L(w) = (1/n) sum_i l(w, i)`` with uniformly drawn indices."""

    def __init__(self, dim: int, n: int):
        self.dim = int(dim)
        self.sample_count = int(n)

    def sample(self, rng):
        return int(rng.integers(self.sample_count))

    def sample_batch(self, rng, size):
        # Without replacement so that a full batch is exactly the full gradient.
        if size >= self.sample_count:
            return list(range(self.sample_count))
        return sorted(int(i) for i in rng.choice(self.sample_count, size, replace=False))

    def samples(self) -> Iterable[int]:
        return range(self.sample_count)

    def full_loss(self, w):
        return math.fsum(self.loss(w, i) for i in self.samples()) / self.sample_count

    def full_grad(self, w):
        return self.batch_grad(w, list(self.samples()))


@dataclass(frozen=True)
class RegionSpec:
    """A ball ``B_r(center)`` or a tube ``{w : dist(w, S) <= r}``.

    For tubes ``center`` is optional and only anchors probe sampling.
    """

    kind: str
    radius: float
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("ball", "tube"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("region radius must be positive")
        if self.kind == "ball" and self.center is None:
            raise ValueError("ball region needs a center")
        if self.center is not None:
            object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", float(radius), np.asarray(center, dtype=np.float64))

    @classmethod
    def tube(cls, radius, anchor=None):
        return cls("tube", float(radius), None if anchor is None else np.asarray(anchor, dtype=np.float64))

    def contains(self, problem: StochasticProblem, w, slack=0.0) -> bool:
        if self.kind == "ball":
            return float(np.linalg.norm(np.asarray(w) - self.center)) <= self.radius + slack
        return dist_to_solution(problem, w) <= self.radius + slack

    def sample(self, problem: StochasticProblem, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` probe points, uniform in the ball (or in balls around solutions for tubes)."""
        d = problem.dim
        if self.kind == "ball":
            return self.center + uniform_ball(rng, n, d, self.radius)
        if not problem.has_projector:
            raise MissingProjector("tube regions need a projector")
        anchor = self.center if self.center is not None else np.zeros(d)
        pts = np.empty((n, d))
        offsets = uniform_ball(rng, n, d, self.radius)
        jitter = uniform_ball(rng, n, d, self.radius)
        for k in range(n):
            base = problem.project(anchor + jitter[k])
            pts[k] = base + offsets[k]
        return pts

    def to_dict(self):
        out = {"kind": self.kind, "radius": self.radius}
        if self.center is not None:
            out["center"] = self.center.tolist()
        return out


def uniform_ball(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    """``n`` points uniform in the centered ``d``-ball of the given radius."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.random(n) ** (1.0 / d)
    return g * rad[:, None]


def dist_to_solution(problem: StochasticProblem, w) -> float:
    if not problem.has_projector:
        raise MissingProjector(f"{type(problem).__name__} has no projector")
    w = np.asarray(w, dtype=np.float64)
    return float(np.linalg.norm(w - problem.project(w)))


def default_fd_step(w) -> float:
    return MACHINE_EPS ** (1.0 / 3.0) * (1.0 + float(np.max(np.abs(w), initial=0.0)))


def fd_grad_check(problem: StochasticProblem, w, z, step: Optional[float] = None) -> float:
    """Max coordinate error between ``grad`` and central differences of ``loss``.

    Errors are relative to ``max(1, ||grad||)``.
    """
    w = np.asarray(w, dtype=np.float64)
    h = default_fd_step(w) if step is None else float(step)
    if not h > 0:
        raise ValueError("step must be positive")
    g = check_finite(problem.grad(w, z), "gradient")
    fd = np.empty_like(w)
    wp = w.copy()
    for i in range(w.size):
        wi = w[i]
        wp[i] = wi + h
        up = problem.loss(wp, z)
        wp[i] = wi - h
        dn = problem.loss(wp, z)
        wp[i] = wi
        fd[i] = (up - dn) / (2.0 * h)
    check_finite(fd, "loss")
    denom = max(1.0, float(np.linalg.norm(g)))
    return float(np.max(np.abs(fd - g), initial=0.0) / denom)


def mc_full_loss(problem: StochasticProblem, w, n_samples: int, rng, exhaustive=False):
    """Sample mean and standard error of ``l(w, z)`` over i.i.d. draws.

    With ``exhaustive=True`` a finite sum is enumerated once instead of sampled,
    which reproduces ``full_loss`` exactly.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if exhaustive and problem.sample_count is not None:
        zs = list(range(problem.sample_count))
    else:
        zs = [problem.sample(rng) for _ in range(n_samples)]
    vals = np.array([problem.loss(w, z) for z in zs])
    check_finite(vals, "loss")
    if np.ptp(vals) == 0.0:
        # constant losses: report the value itself, exactly, with no spread
        return float(vals[0]), 0.0
    est = math.fsum(vals) / len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    return est, se
