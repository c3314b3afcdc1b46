"""Analytic problems with known solution sets, used as ground truth.

* :class:`ParabolaProblem` -- ``L(x, y) = 1/2 (y - a x^2)^2``: PL with constant 1
  near the origin, aiming locally, yet not quasar-convex around any solution.
* :class:`InterpLinearRegression` -- underdetermined least squares, affine ``S``.
* :class:`ManifoldIntersection` -- ``l(w, z) = 1/2 dist^2(w, Q_z)`` for circles
  through a common point, where ``||grad l||^2 = 2 l`` holds exactly.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import RankDeficient
from .problem import FiniteSumProblem

# ---------------------------------------------------------------------------
# Parabola
# ---------------------------------------------------------------------------


def _safeguarded_root(f, df, lo, hi, max_iter=200):
    """Root of ``f`` on ``[lo, hi]`` given ``f(lo) * f(hi) <= 0``.

    Newton steps are accepted only when they stay inside the current bracket;
    otherwise the bracket is bisected.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx < 0) == (flo < 0):
            lo, flo = x, fx
        else:
            hi, fhi = x, fx
        d = df(x)
        x_new = x - fx / d if d != 0.0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4 * np.finfo(float).eps * max(1.0, abs(x)) or hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
            return x_new
        x = x_new
    return x


def _cubic_real_roots(c3, c1, c0):
    """Real roots of ``c3 x^3 + c1 x + c0`` (``c3 > 0``), one per monotone piece."""
    p = lambda x: (c3 * x * x + c1) * x + c0
    dp = lambda x: 3 * c3 * x * x + c1

    def expand(start, direction, want_positive):
        step = 1.0 + abs(start)
        x = start + direction * step
        while (p(x) > 0) != want_positive:
            step *= 2.0
            x = start + direction * step
        return x

    if c1 >= 0:
        hi = expand(0.0, 1.0, True)
        lo = expand(0.0, -1.0, False)
        return [_safeguarded_root(p, dp, lo, hi)]

    crit = math.sqrt(-c1 / (3 * c3))
    roots = []
    # left piece (-inf, -crit]: p increasing, p(-inf) = -inf
    if p(-crit) >= 0:
        roots.append(_safeguarded_root(p, dp, expand(-crit, -1.0, False), -crit))
    # middle piece [-crit, crit]: p decreasing
    if p(-crit) >= 0 >= p(crit):
        roots.append(_safeguarded_root(p, dp, -crit, crit))
    # right piece [crit, inf)
    if p(crit) <= 0:
        roots.append(_safeguarded_root(p, dp, crit, expand(crit, 1.0, True)))
    return roots


def parabola_project(a, u, v):
    """Nearest point of ``{(x, a x^2)}`` to ``(u, v)``; ties go to the largest ``x``."""
    a, u, v = float(a), float(u), float(v)
    roots = _cubic_real_roots(2 * a * a, 1.0 - 2 * a * v, -u)
    best_x = _nearest_with_ties(
        sorted(set(roots), reverse=True), lambda x: (x - u) ** 2 + (a * x * x - v) ** 2
    )
    return np.array([best_x, a * best_x * best_x])


def _nearest_with_ties(cands, sqdist, rtol=1e-12):
    # cands must be ordered by preference; a later candidate wins only if strictly closer
    best, best_d = None, math.inf
    for c in cands:
        d = sqdist(c)
        if best is None or d < best_d - rtol * (1.0 + best_d):
            best, best_d = c, d
    return best


class ParabolaProblem(FiniteSumProblem):
    """Deterministic single-sample problem ``L(x, y) = 1/2 (y - a x^2)^2``."""

    has_projector = True

    def __init__(self, a=1.0):
        if not a > 0:
            raise ValueError("curvature a must be positive")
        super().__init__(dim=2, n=1)
        self.a = float(a)

    def loss(self, w, z=0):
        return 0.5 * (w[1] - self.a * w[0] ** 2) ** 2

    def grad(self, w, z=0):
        r = w[1] - self.a * w[0] ** 2
        return np.array([-2.0 * self.a * w[0] * r, r])

    def full_loss(self, w):
        return self.loss(w)

    def full_grad(self, w):
        return self.grad(w)

    def hessian(self, w):
        a, x, y = self.a, w[0], w[1]
        r = y - a * x * x
        return np.array([[-2 * a * r + 4 * a * a * x * x, -2 * a * x], [-2 * a * x, 1.0]])

    def project(self, w):
        return parabola_project(self.a, w[0], w[1])

    def hessian_lipschitz_bound(self, radius):
        """Frobenius bound on the third-derivative tensor over ``|x| <= radius``.

        Nonzero entries are ``L_xxx = 12 a^2 x`` and the three permutations of
        ``L_xxy = -2a``.
        """
        a = self.a
        return math.sqrt((12 * a * a * radius) ** 2 + 3 * (2 * a) ** 2)

    def to_dict(self):
        return {"name": "parabola", "a": self.a}


def quasar_inner(a, x, gamma):
    """``<grad L(z), z - (x, a x^2)>`` at ``z = (0, gamma)``, from the gradient."""
    p = ParabolaProblem(a)
    z = np.array([0.0, gamma])
    return float(p.grad(z) @ (z - np.array([x, a * x * x])))


def quasar_inner_exact(a, x, gamma) -> Fraction:
    """Same inner product, ``gamma^2 - gamma a x^2``, in exact rational arithmetic."""
    a, x, g = Fraction(a), Fraction(x), Fraction(gamma)
    return g * g - g * a * x * x


def quasar_violation_witness(a, x, grid=None):
    """A point ``(0, gamma)`` with negative alignment towards ``(x, a x^2)``.

    Scans ``grid`` (default: 64 log-spaced values below ``a x^2``) and returns
    the first strict violation, or ``None`` if the grid has none.
    """
    if x == 0:
        raise ValueError("x must be nonzero")
    top = a * x * x
    if grid is None:
        grid = top * np.logspace(-6, 0, 64, endpoint=False)
    for g in grid:
        if 0 < g < top and quasar_inner_exact(a, x, g) < 0:
            return np.array([0.0, float(g)])
    return None


# ---------------------------------------------------------------------------
# Linear regression
# ---------------------------------------------------------------------------


def _gram_factor(X):
    G = X @ X.T
    if np.linalg.cond(G) > 1e12:
        raise RankDeficient("X X^T is numerically singular")
    return cho_factor(G)


def regression_projector(X, y, w):
    """Orthogonal projection of ``w`` onto ``{w : X w = y}``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    fac = _gram_factor(X)
    return w - X.T @ cho_solve(fac, X @ w - y)


class InterpLinearRegression(FiniteSumProblem):
    """``l(w, i) = 1/2 (x_i . w - y_i)^2`` with ``n < d`` and full row rank."""

    has_projector = True

    def __init__(self, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        n, d = X.shape
        if y.shape != (n,):
            raise ValueError("X and y disagree on n")
        super().__init__(dim=d, n=n)
        self.X, self.y = X, y
        self._fac = _gram_factor(X)

    def residual(self, w):
        return self.X @ w - self.y

    def loss(self, w, i):
        r = float(self.X[i] @ w) - self.y[i]
        return 0.5 * r * r

    def grad(self, w, i):
        return (float(self.X[i] @ w) - self.y[i]) * self.X[i]

    def project(self, w):
        w = np.asarray(w, dtype=np.float64)
        return w - self.X.T @ cho_solve(self._fac, self.X @ w - self.y)

    @property
    def beta_sample(self):
        """Exact sample smoothness ``max_i ||x_i||^2``."""
        return float(np.max(np.sum(self.X ** 2, axis=1)))

    @property
    def beta_full(self):
        """Exact full smoothness ``lambda_max(X^T X) / n``."""
        return float(np.linalg.eigvalsh(self.X @ self.X.T)[-1] / self.sample_count)

    @property
    def alpha_qg(self):
        """Exact quadratic-growth constant ``lambda_min(X X^T) / n``."""
        return float(np.linalg.eigvalsh(self.X @ self.X.T)[0] / self.sample_count)

    def to_dict(self):
        return {"name": "regression", "X": self.X.tolist(), "y": self.y.tolist()}


def make_regression(n, d, rng, C=1.0, w_planted=None):
    """Rows uniform on the sphere of radius ``C``; labels ``y = X w_planted``."""
    if not n < d:
        raise ValueError("interpolation needs n < d")
    X = rng.standard_normal((n, d))
    X *= C / np.linalg.norm(X, axis=1, keepdims=True)
    if w_planted is None:
        w_planted = rng.standard_normal(d)
    return InterpLinearRegression(X, X @ w_planted)


# ---------------------------------------------------------------------------
# Circle intersection
# ---------------------------------------------------------------------------


def _circle_pair_points(c1, r1, c2, r2):
    d = float(np.linalg.norm(c2 - c1))
    if d == 0.0:
        return []
    a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
    h2 = r1 * r1 - a * a
    if h2 < -1e-12 * r1 * r1:
        return []
    h = math.sqrt(max(h2, 0.0))
    e = (c2 - c1) / d
    base = c1 + a * e
    perp = np.array([-e[1], e[0]])
    return [base + h * perp, base - h * perp]


class ManifoldIntersection(FiniteSumProblem):
    """``l(w, z) = 1/2 dist^2(w, Q_z)`` for circles ``Q_z`` sharing a point.

    The gradient at a circle's center is set to zero (the distance is not
    differentiable there).
    """

    has_projector = True

    def __init__(self, centers, radii):
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        radii = np.asarray(radii, dtype=np.float64).reshape(-1)
        if centers.shape[1] != 2 or len(radii) != len(centers):
            raise ValueError("need planar centers and one radius per circle")
        if np.any(radii <= 0):
            raise ValueError("radii must be positive")
        super().__init__(dim=2, n=len(radii))
        self.centers, self.radii = centers, radii
        self.solutions = self._common_points()
        if not self.solutions:
            raise ValueError("circles share no common point")

    def _on_all(self, p, tol=1e-9):
        return np.all(np.abs(np.linalg.norm(self.centers - p, axis=1) - self.radii) <= tol * (1 + self.radii))

    def _common_points(self):
        if self.sample_count == 1:
            return None
        cands = _circle_pair_points(self.centers[0], self.radii[0], self.centers[1], self.radii[1])
        return [p for p in cands if self._on_all(p)]

    def loss(self, w, z):
        g = float(np.linalg.norm(w - self.centers[z])) - self.radii[z]
        return 0.5 * g * g

    def grad(self, w, z):
        diff = w - self.centers[z]
        nrm = float(np.linalg.norm(diff))
        if nrm == 0.0:
            return np.zeros(2)
        return (nrm - self.radii[z]) * diff / nrm

    def project(self, w):
        w = np.asarray(w, dtype=np.float64)
        if self.solutions is None:
            diff = w - self.centers[0]
            nrm = np.linalg.norm(diff)
            if nrm == 0.0:
                diff, nrm = np.array([1.0, 0.0]), 1.0
            return self.centers[0] + self.radii[0] * diff / nrm
        cands = sorted(self.solutions, key=lambda p: -p[0])
        return _nearest_with_ties(cands, lambda p: float(np.sum((p - w) ** 2))).copy()

    @classmethod
    def through_point(cls, point, n, rng, spread=2.0):
        """``n`` circles with random centers, all passing through ``point``."""
        point = np.asarray(point, dtype=np.float64)
        centers = point + spread * rng.standard_normal((n, 2))
        radii = np.linalg.norm(centers - point, axis=1)
        return cls(centers, radii)

    def to_dict(self):
        return {"name": "circles", "centers": self.centers.tolist(), "radii": self.radii.tolist()}
