"""Power-iteration eigen/operator-norm estimators and finite-difference HVPs."""

from __future__ import annotations

from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import NonFiniteValue, NotConverged
from .problem import MACHINE_EPS


class OpNorm(NamedTuple):
    estimate: float
    converged: bool
    iterations: int


class MinEig(NamedTuple):
    value: float
    vector: np.ndarray
    residual: float


def fd_hvp(grad_fn: Callable[[np.ndarray], np.ndarray], w, v, h: Optional[float] = None):
    """Hessian-vector product by central differences of ``grad_fn`` along ``v``.

    The step along the unit direction is ``h`` (default ``eps^(1/3) (1 + |w|_inf)``),
    i.e. ``h / ||v||`` in units of ``v``.
    """
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nv = float(np.linalg.norm(v))
    if not nv > 0:
        raise ValueError("direction must be nonzero")
    if h is None:
        h = MACHINE_EPS ** (1.0 / 3.0) * (1.0 + float(np.max(np.abs(w))))
    eps = h / nv
    out = (grad_fn(w + eps * v) - grad_fn(w - eps * v)) / (2.0 * eps)
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue("non-finite Hessian-vector product")
    return out


def operator_norm(matvec, dim, tol=1e-6, max_iter=500, rng=None, raise_on_fail=False) -> OpNorm:
    """Largest ``|eigenvalue|`` of a symmetric operator given by ``matvec``.

    Runs ``v <- A v / ||A v||`` and reports ``||A v||`` for unit ``v``, i.e. the
    square root of the Rayleigh quotient of ``A^2``.  This converges even when
    ``A`` has a ``+/- lambda`` pair, where the plain Rayleigh quotient of ``A``
    oscillates.  Stops when successive estimates agree to relative ``tol``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, max_iter + 1):
        av = matvec(v)
        new = float(np.linalg.norm(av))
        if new == 0.0:
            return OpNorm(0.0, True, it)
        if abs(new - est) <= tol * new:
            return OpNorm(new, True, it)
        est = new
        v = av / new
    if raise_on_fail:
        raise NotConverged(f"power iteration did not converge in {max_iter} steps", est)
    return OpNorm(est, False, max_iter)


def gershgorin_upper(K) -> float:
    K = np.asarray(K)
    off = np.sum(np.abs(K), axis=1) - np.abs(np.diag(K))
    return float(np.max(np.diag(K) + off))


def min_eig(K, tol=1e-10, max_squarings=60, rng=None) -> MinEig:
    """Smallest eigenvalue of symmetric ``K`` by shifted power iteration.

    Powers of ``B = s I - K`` (``s`` the Gershgorin upper bound, so ``B`` is PSD
    with top eigenvalue ``s - lambda_min``) are formed by repeated squaring;
    the top eigenvector of ``B^(2^j)`` is read off by one matvec and checked
    against ``||K v - lambda v|| <= tol ||K||``.
    """
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if K.shape != (n, n):
        raise ValueError("K must be square")
    norm_k = float(np.linalg.norm(K, 2)) if n > 1 else abs(float(K[0, 0]))
    if n == 1:
        return MinEig(float(K[0, 0]), np.ones(1), 0.0)
    rng = np.random.default_rng(0) if rng is None else rng
    v0 = rng.standard_normal(n)
    s = gershgorin_upper(K)
    P = s * np.eye(n) - K
    scale = np.linalg.norm(P)
    if scale == 0.0:
        return MinEig(s, v0 / np.linalg.norm(v0), 0.0)
    P = P / scale
    v, lam, res = v0 / np.linalg.norm(v0), np.nan, np.inf
    for _ in range(max_squarings + 1):
        u = P @ v0
        nu = np.linalg.norm(u)
        if nu > 0:
            v = u / nu
            # two plain power steps on s I - K polish the direction
            for _ in range(2):
                v = s * v - K @ v
                v /= np.linalg.norm(v)
            lam = float(v @ K @ v)
            res = float(np.linalg.norm(K @ v - lam * v))
            if res <= tol * max(norm_k, np.finfo(float).tiny):
                return MinEig(lam, v, res)
        P = P @ P
        P /= np.linalg.norm(P)
        P = 0.5 * (P + P.T)
    raise NotConverged("shifted power iteration did not reach the residual target", lam)
