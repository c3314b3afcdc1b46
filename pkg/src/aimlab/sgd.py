"""Plain SGD and full-batch GD with exact region-escape monitoring."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegeneratePoint, InvalidStepsize, MissingProjector
from .problem import RegionSpec, derive_rng, dist_to_solution

DIVERGENCE_FACTOR = 1e12

CSV_COLUMNS = ("t", "loss", "dist", "drift", "inside_ball", "inside_tube")


@dataclass
class SGDConfig:
    """Stepsize, budget and monitoring for one run.

    ``monitors`` are regions checked after every step; a ball without an
    explicit center is not allowed, so callers build ``RegionSpec.ball(w0, r)``.
    ``stop_loss`` ends the run at the first recorded step whose full loss is at
    or below it.  ``theta``/``beta`` are optional and only feed the stepsize
    validity flag ``eta < theta / beta``.
    """

    eta: float
    T: int
    batch: int = 1
    seed: int = 0
    monitors: Sequence[RegionSpec] = ()
    record_every: int = 1
    stop_loss: Optional[float] = None
    theta: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise InvalidStepsize(f"eta must be positive and finite, got {self.eta}")
        if int(self.T) < 1:
            raise ValueError("T must be >= 1")
        if int(self.batch) < 1:
            raise ValueError("batch must be >= 1")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")
        self.T, self.batch, self.record_every = int(self.T), int(self.batch), int(self.record_every)
        self.monitors = tuple(self.monitors)

    @property
    def stepsize_valid(self) -> Optional[bool]:
        if self.theta is None or self.beta is None:
            return None
        return self.eta < self.theta / self.beta


@dataclass
class Trajectory:
    t: np.ndarray
    loss: np.ndarray
    dist: np.ndarray
    drift: np.ndarray
    inside: dict
    escape_time: dict
    monitors: tuple
    final_w: np.ndarray
    diverged: bool = False
    steps_taken: int = 0
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def monitor_key(self, kind):
        for k, m in enumerate(self.monitors):
            if m.kind == kind:
                return k
        return None

    def to_rows(self):
        kb, kt = self.monitor_key("ball"), self.monitor_key("tube")
        rows = []
        for i in range(len(self.t)):
            rows.append(
                {
                    "t": int(self.t[i]),
                    "loss": float(self.loss[i]),
                    "dist": None if math.isnan(self.dist[i]) else float(self.dist[i]),
                    "drift": float(self.drift[i]),
                    "inside_ball": None if kb is None else bool(self.inside[kb][i]),
                    "inside_tube": None if kt is None else bool(self.inside[kt][i]),
                }
            )
        return rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trajectory_csv(path, traj: Trajectory):
    """Write the trajectory with a fixed header; absent optional fields are empty cells."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(CSV_COLUMNS)
        for row in traj.to_rows():
            wr.writerow([_cell(row[c]) for c in CSV_COLUMNS])


def read_trajectory_csv(path):
    """Inverse of :func:`write_trajectory_csv` (rows as dicts, empties as ``None``)."""
    out = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"unexpected header {rd.fieldnames}")
        for row in rd:
            out.append(
                {
                    "t": int(row["t"]),
                    "loss": float(row["loss"]),
                    "dist": float(row["dist"]) if row["dist"] else None,
                    "drift": float(row["drift"]),
                    "inside_ball": (row["inside_ball"] == "1") if row["inside_ball"] else None,
                    "inside_tube": (row["inside_tube"] == "1") if row["inside_tube"] else None,
                }
            )
    return out


def _run(problem, w0, eta, T, step_grad, monitors, record_every, stop_loss, seed):
    w0 = np.array(w0, dtype=np.float64)
    w = w0.copy()
    for m in monitors:
        if m.kind == "tube" and not problem.has_projector:
            raise MissingProjector("tube monitor needs a projector")
    rec_t, rec_loss, rec_dist, rec_drift = [], [], [], []
    rec_inside = [[] for _ in monitors]
    escape = {k: None for k in range(len(monitors))}
    inside_now = [m.contains(problem, w) for m in monitors]
    for k, ok in enumerate(inside_now):
        if not ok:
            escape[k] = 0
    loss0 = problem.full_loss(w)
    diverged = False

    def record(t, loss):
        rec_t.append(t)
        rec_loss.append(loss)
        rec_dist.append(dist_to_solution(problem, w) if problem.has_projector else math.nan)
        rec_drift.append(float(np.linalg.norm(w - w0)))
        for k in range(len(monitors)):
            rec_inside[k].append(inside_now[k])

    record(0, loss0)
    t = 0
    done = stop_loss is not None and loss0 <= stop_loss
    while t < T and not done:
        g = step_grad(w)
        w = w - eta * g
        t += 1
        if not np.all(np.isfinite(w)):
            diverged = True
            break
        for k, m in enumerate(monitors):
            inside_now[k] = m.contains(problem, w)
            if not inside_now[k] and escape[k] is None:
                escape[k] = t
        if t % record_every == 0 or t == T:
            loss = problem.full_loss(w)
            if not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(loss0, 1e-300):
                diverged = True
                break
            record(t, loss)
            if stop_loss is not None and loss <= stop_loss:
                done = True
    return Trajectory(
        t=np.array(rec_t, dtype=np.int64),
        loss=np.array(rec_loss),
        dist=np.array(rec_dist),
        drift=np.array(rec_drift),
        inside={k: np.array(v, dtype=bool) for k, v in enumerate(rec_inside)},
        escape_time=escape,
        monitors=tuple(monitors),
        final_w=w,
        diverged=diverged,
        steps_taken=t,
        seed=seed,
    )


def run_sgd(problem, w0, config: SGDConfig, rng=None) -> Trajectory:
    """``w_{t+1} = w_t - eta * mean_{z in batch} grad l(w_t, z)``.

    Samples come from ``rng`` if given, else from the stream
    ``derive_rng(config.seed, 0)``.  A run that produces a non-finite iterate
    or whose recorded loss exceeds ``1e12`` times the initial loss stops early
    with ``diverged=True`` and the partial record.
    """
    rng = derive_rng(config.seed, 0) if rng is None else rng
    if config.batch == 1:
        step_grad = lambda w: problem.grad(w, problem.sample(rng))
    else:
        step_grad = lambda w: problem.batch_grad(w, problem.sample_batch(rng, config.batch))
    return _run(problem, w0, config.eta, config.T, step_grad, config.monitors, config.record_every, config.stop_loss, config.seed)


def run_gd(problem, w0, eta, T, monitors=(), record_every=1, stop_loss=None) -> Trajectory:
    """Deterministic full-gradient descent with the same record schema as SGD."""
    if not (eta > 0 and math.isfinite(eta)):
        raise InvalidStepsize(f"eta must be positive and finite, got {eta}")
    return _run(problem, w0, eta, int(T), problem.full_grad, tuple(monitors), int(record_every), stop_loss, None)


def contraction_ratio(problem, w, eta, z) -> float:
    """``dist^2(w - eta grad l(w, z), S) / dist^2(w, S)`` for one sample."""
    d2 = dist_to_solution(problem, w) ** 2
    wp = w - eta * problem.grad(w, z)
    return dist_to_solution(problem, wp) ** 2 / d2


def one_step_contraction_mc(problem, w, eta, n_samples, rng, exhaustive=False):
    """Mean and standard error of the one-step contraction ratio.

    With ``exhaustive=True`` on a finite sum the mean is the exact expectation
    over all samples (standard error reported as 0).
    """
    if not problem.has_projector:
        raise MissingProjector(f"{type(problem).__name__} has no projector")
    w = np.asarray(w, dtype=np.float64)
    if dist_to_solution(problem, w) < 1e-8:
        raise DegeneratePoint("w is (numerically) on the solution set")
    if exhaustive and problem.sample_count is not None:
        vals = [contraction_ratio(problem, w, eta, i) for i in problem.samples()]
        return math.fsum(vals) / len(vals), 0.0
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    vals = np.array([contraction_ratio(problem, w, eta, problem.sample(rng)) for _ in range(n_samples)])
    if np.ptp(vals) == 0.0:
        return float(vals[0]), 0.0
    return math.fsum(vals) / n_samples, float(np.std(vals, ddof=1) / math.sqrt(n_samples))
