"""Closed-form rates and bounds, and their empirical counterparts."""

from __future__ import annotations

import math
from typing import NamedTuple, Optional

import numpy as np

from .errors import InsufficientData, InvalidStepsize, MonitorMissing
from .problem import EPS_FLOOR


def binomial_sigma(p, n) -> float:
    """Normal-approximation standard deviation of a frequency over ``n`` trials."""
    p = min(max(float(p), 0.0), 1.0)
    return math.sqrt(p * (1.0 - p) / n)


def _check_step(theta, beta, eta):
    if not eta > 0:
        raise InvalidStepsize(f"eta must be positive, got {eta}")
    if not eta < theta / beta:
        raise InvalidStepsize(f"eta={eta} must be below theta/beta = {theta / beta}")


def theoretical_factor(alpha, theta, beta, eta) -> float:
    """Expected one-step contraction ``1 - alpha eta (theta - beta eta)`` of ``dist^2``."""
    _check_step(theta, beta, eta)
    return 1.0 - alpha * eta * (theta - beta * eta)


def iteration_bound(alpha, theta, beta, eta, eps, delta2) -> int:
    """Iterations after which ``dist^2 <= eps dist_0^2`` with probability ``1 - delta2``
    (given the run stays in the region): ``ceil(log(1/(delta2 eps)) / (alpha eta (theta - beta eta)))``.
    """
    _check_step(theta, beta, eta)
    if not (0 < eps <= 1 and 0 < delta2 <= 1):
        raise ValueError("eps and delta2 must lie in (0, 1]")
    gap = alpha * eta * (theta - beta * eta)
    return max(0, math.ceil(math.log(1.0 / (delta2 * eps)) / gap))


def escape_bound(rho, theta, beta, eta, alpha, r, delta1) -> float:
    """Escape-probability bound ``(1 + 4 rho / ((theta - beta eta) alpha r)) delta1``."""
    return (1.0 + 4.0 * rho / ((theta - beta * eta) * alpha * r)) * delta1


RATE_NAMES = ("bassily", "vaswani", "khaled", "gower", "aiming")


def table1_exponents(kappa, kappa_bar, B, theta, A=None, alpha=None) -> dict:
    """Per-iteration exponents ``c`` of each ``exp(-c t)`` rate in the comparison table.

    The ``khaled`` rate ``exp(-t / (kappa_bar max(B, A / alpha)))`` needs ``A`` and
    ``alpha``; it is omitted otherwise.
    """
    for v in (kappa, kappa_bar, B, theta):
        if not v > 0:
            raise ValueError("all rate parameters must be positive")
    out = {
        "bassily": 1.0 / (kappa * kappa_bar),
        "vaswani": 1.0 / (B * kappa_bar),
        "gower": 1.0 / (kappa * kappa_bar),
        "aiming": theta * theta / kappa,
    }
    if A is not None and alpha is not None:
        out["khaled"] = 1.0 / (kappa_bar * max(B, A / alpha))
    return out


def table1_rates(kappa, kappa_bar, B, theta, t, A=None, alpha=None) -> dict:
    """Evaluate each rate at ``t`` and the crossover time against each alternative.

    All rates are ``exp(-c t)``, so the aiming rate is strictly better for every
    ``t > 0`` when its exponent is larger (crossover ``0``) and never otherwise
    (crossover ``inf``).
    """
    ex = table1_exponents(kappa, kappa_bar, B, theta, A, alpha)
    rates = {k: math.exp(-c * t) for k, c in ex.items()}
    mine = ex["aiming"]
    crossover = {k: (0.0 if mine > c else math.inf) for k, c in ex.items() if k != "aiming"}
    return {"t": t, "rates": rates, "exponents": ex, "crossover": crossover}


def rate_comparison_rows(kappa, kappa_bar, B, theta, ts, empirical=None):
    """Rows ``(t, empirical, rate...)`` for the comparison CSV."""
    rows = []
    for i, t in enumerate(ts):
        r = table1_rates(kappa, kappa_bar, B, theta, t)["rates"]
        row = {"t": t, "empirical": None if empirical is None else float(empirical[i])}
        row.update(r)
        rows.append(row)
    return rows


class RateFit(NamedTuple):
    per_step_factor: float
    window: tuple
    r_squared: float
    quantity: str
    n_points: int


def _fit_series(t, y, quantity, window):
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(t) < 5:
        raise InsufficientData(f"need >= 5 points above the floor, got {len(t)}")
    ly = np.log(y)
    tm, lm = t.mean(), ly.mean()
    sxx = float(np.sum((t - tm) ** 2))
    if sxx == 0.0:
        raise InsufficientData("window has a single time value")
    slope = float(np.sum((t - tm) * (ly - lm))) / sxx
    resid = ly - (lm + slope * (t - tm))
    sst = float(np.sum((ly - lm) ** 2))
    r2 = 1.0 if sst <= 1e-300 else max(0.0, min(1.0, 1.0 - float(np.sum(resid ** 2)) / sst))
    return RateFit(math.exp(slope), window, r2, quantity, len(t))


def fit_sequence(values, t=None, quantity="loss") -> RateFit:
    """Log-linear fit of a plain positive sequence (indexed ``0, 1, ...`` by default)."""
    values = np.asarray(values, dtype=np.float64)
    t = np.arange(len(values)) if t is None else np.asarray(t)
    return _fit_series(t, values, quantity, (int(t[0]), int(t[-1])))


def fit_rate(trajectory, quantity="loss", window=None) -> RateFit:
    """Per-step factor ``exp(slope)`` of ``log(quantity)`` against ``t``.

    ``quantity`` is ``"loss"`` or ``"dist2"``.  The default window is the last
    60% of the recorded steps that are inside every monitor and whose value
    exceeds ``100 * EPS_FLOOR``.
    """
    t = np.asarray(trajectory.t)
    if quantity == "loss":
        y = np.asarray(trajectory.loss)
    elif quantity == "dist2":
        y = np.asarray(trajectory.dist) ** 2
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    keep = np.isfinite(y) & (y > 100 * EPS_FLOOR)
    for flags in trajectory.inside.values():
        keep &= flags
    if window is not None:
        t0, t1 = window
        keep &= (t >= t0) & (t <= t1)
        idx = np.flatnonzero(keep)
    else:
        idx = np.flatnonzero(keep)
        idx = idx[len(idx) - int(math.ceil(0.6 * len(idx))):]
    if len(idx) < 5:
        raise InsufficientData(f"need >= 5 points above the floor, got {len(idx)}")
    return _fit_series(t[idx], y[idx], quantity, (int(t[idx[0]]), int(t[idx[-1]])))


class EscapeTally(NamedTuple):
    empirical: float
    bound: float
    n_runs: int
    n_escaped: int
    stated_bound: float


def _find_monitor(traj, monitor):
    if isinstance(monitor, int):
        return monitor if 0 <= monitor < len(traj.monitors) else None
    for k, m in enumerate(traj.monitors):
        if m.kind == monitor.kind and m.radius == monitor.radius:
            return k
    return None


def escape_tally(trajectories, monitor, rho, theta, beta, eta, alpha, r, delta1) -> EscapeTally:
    """Fraction of runs that left ``monitor`` against the escape bound.

    ``monitor`` is an index into each trajectory's monitors or a region matched
    by kind and radius.  ``stated_bound`` is the coarser ``5 delta1`` form.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories")
    escaped = 0
    for tr in trajectories:
        k = _find_monitor(tr, monitor)
        if k is None:
            raise MonitorMissing("trajectory does not carry the requested monitor")
        if tr.escape_time[k] is not None:
            escaped += 1
    n = len(trajectories)
    return EscapeTally(escaped / n, escape_bound(rho, theta, beta, eta, alpha, r, delta1), n, escaped, 5.0 * delta1)
