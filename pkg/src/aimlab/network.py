"""Feedforward network with 1/sqrt(width) scaling and a linear output layer.

``a0 = x``, ``a_i = sigma(W_i a_{i-1} / sqrt(m_{i-1}))`` for ``i < l`` and
``f(w; x) = W_l a_{l-1} / sqrt(m_{l-1})``.  ``depth`` is ``l``, the number of
weight matrices; there are ``l - 1`` hidden layers, all of width ``m``.  No
biases.

Parameters travel as one flat float64 vector: layer-major, each matrix
row-major.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .errors import NonFiniteValue
from .problem import FiniteSumProblem
from .spectral import OpNorm, fd_hvp, min_eig, operator_norm

# name -> (sigma, sigma', sigma'', Lipschitz constant, smoothness constant)
ACTIVATIONS = {
    "tanh": (
        np.tanh,
        lambda h: 1.0 - np.tanh(h) ** 2,
        lambda h: -2.0 * np.tanh(h) * (1.0 - np.tanh(h) ** 2),
        1.0,
        4.0 / (3.0 * math.sqrt(3.0)),
    ),
    "sigmoid": (
        lambda h: 1.0 / (1.0 + np.exp(-h)),
        lambda h: np.exp(-h) / (1.0 + np.exp(-h)) ** 2,
        lambda h: (1.0 / (1.0 + np.exp(-h))) * (1 - 1.0 / (1.0 + np.exp(-h))) * (1 - 2.0 / (1.0 + np.exp(-h))),
        0.25,
        1.0 / (6.0 * math.sqrt(3.0)),
    ),
    "identity": (lambda h: h, lambda h: np.ones_like(h), lambda h: np.zeros_like(h), 1.0, 0.0),
}
_ACT_CODES = {"tanh": 1, "sigmoid": 2, "identity": 3}


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    width: int = 512
    depth: int = 2
    activation: str = "tanh"
    data_bound: float = 1.0

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.input_dim < 1:
            raise ValueError("depth, width and input_dim must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_widths(self) -> List[int]:
        """``[m_0, m_1, ..., m_{l-1}, 1]``."""
        return [self.input_dim] + [self.width] * (self.depth - 1) + [1]

    @property
    def shapes(self):
        mw = self.layer_widths
        return [(mw[i + 1], mw[i]) for i in range(self.depth)]

    @property
    def dim(self) -> int:
        return sum(a * b for a, b in self.shapes)

    @property
    def lipschitz(self):
        return ACTIVATIONS[self.activation][3]

    @property
    def smoothness(self):
        return ACTIVATIONS[self.activation][4]

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "width": self.width,
            "depth": self.depth,
            "activation": self.activation,
            "data_bound": self.data_bound,
        }


def unflatten(spec: NetworkSpec, w) -> List[np.ndarray]:
    """Per-layer views into the flat vector ``w``."""
    w = np.asarray(w)
    if w.shape != (spec.dim,):
        raise ValueError(f"expected {spec.dim} parameters, got shape {w.shape}")
    mats, off = [], 0
    for r, c in spec.shapes:
        mats.append(w[off : off + r * c].reshape(r, c))
        off += r * c
    return mats


def flatten(mats: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(m, dtype=np.float64).ravel() for m in mats])


def init_weights(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Flat i.i.d. N(0, 1) weights from a seeded stream."""
    return np.random.default_rng(seed).standard_normal(spec.dim)


def _forward_cache(spec, mats, X):
    sigma = ACTIVATIONS[spec.activation][0]
    acts, pre = [X], []
    a = X
    for i, W in enumerate(mats[:-1]):
        h = a @ W.T / math.sqrt(W.shape[1])
        pre.append(h)
        a = sigma(h)
        acts.append(a)
    W = mats[-1]
    out = (a @ W.T)[:, 0] / math.sqrt(W.shape[1])
    return out, acts, pre


def forward_batch(spec: NetworkSpec, w, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out, _, _ = _forward_cache(spec, unflatten(spec, w), X)
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue("network output overflowed")
    return out


def forward(spec: NetworkSpec, w, x) -> float:
    return float(forward_batch(spec, w, np.asarray(x)[None, :])[0])


def weighted_grad(spec: NetworkSpec, w, X, coeffs):
    """``sum_i coeffs[i] * grad_w f(w; x_i)`` by one batched reverse pass.

    Returns ``(gradient, outputs)``.
    """
    dsig = ACTIVATIONS[spec.activation][1]
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    mats = unflatten(spec, w)
    out, acts, pre = _forward_cache(spec, mats, X)
    c = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    grads = [None] * spec.depth
    W = mats[-1]
    s = math.sqrt(W.shape[1])
    grads[-1] = (c @ acts[-1])[None, :] / s
    delta = c[:, None] * W / s  # d/d a_{l-1}
    for i in range(spec.depth - 2, -1, -1):
        dh = delta * dsig(pre[i])
        s = math.sqrt(mats[i].shape[1])
        grads[i] = dh.T @ acts[i] / s
        if i > 0:
            delta = dh @ mats[i] / s
    g = flatten(grads)
    if not np.all(np.isfinite(g)):
        raise NonFiniteValue("non-finite network gradient")
    return g, out


def grad_params(spec: NetworkSpec, w, x) -> np.ndarray:
    g, _ = weighted_grad(spec, w, np.asarray(x)[None, :], [1.0])
    return g


def jacobian(spec: NetworkSpec, w, X) -> np.ndarray:
    """Per-sample parameter gradients stacked as an ``n x d`` matrix."""
    dsig = ACTIVATIONS[spec.activation][1]
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    mats = unflatten(spec, w)
    _, acts, pre = _forward_cache(spec, mats, X)
    blocks = [None] * spec.depth
    W = mats[-1]
    s = math.sqrt(W.shape[1])
    blocks[-1] = acts[-1] / s
    delta = np.broadcast_to(W / s, (n, W.shape[1]))
    for i in range(spec.depth - 2, -1, -1):
        dh = delta * dsig(pre[i])
        s = math.sqrt(mats[i].shape[1])
        blocks[i] = np.einsum("nj,nk->njk", dh, acts[i]).reshape(n, -1) / s
        if i > 0:
            delta = dh @ mats[i] / s
    J = np.concatenate(blocks, axis=1)
    if not np.all(np.isfinite(J)):
        raise NonFiniteValue("non-finite Jacobian")
    return J


def hvp(spec: NetworkSpec, w, x, v, h=None) -> np.ndarray:
    """``Hess_w f(w; x) @ v`` from central differences of :func:`grad_params`."""
    return fd_hvp(lambda u: grad_params(spec, u, x), w, v, h)


def hessian_opnorm(spec: NetworkSpec, w, x, tol=1e-6, max_iter=500, seed=0, raise_on_fail=False) -> OpNorm:
    """Power-iteration estimate of ``||Hess_w f(w; x)||_op``."""
    return operator_norm(
        lambda v: hvp(spec, w, x, v),
        spec.dim,
        tol=tol,
        max_iter=max_iter,
        rng=np.random.default_rng(seed),
        raise_on_fail=raise_on_fail,
    )


def ntk_assemble(spec: NetworkSpec, w, X) -> np.ndarray:
    """Gram matrix ``K[i, j] = <grad f(w; x_i), grad f(w; x_j)>``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("empty dataset")
    if np.any(np.linalg.norm(X, axis=1) > spec.data_bound * (1 + 1e-12)):
        raise ValueError("inputs exceed the data bound C")
    J = jacobian(spec, w, X)
    K = J @ J.T
    return 0.5 * (K + K.T)


def desk_dataset(n=16, input_dim=64, seed=0):
    """``n`` inputs uniform on the unit sphere with alternating +1/-1 labels."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, input_dim))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return X, y


class NetworkProblem(FiniteSumProblem):
    """``l_i(w) = (f(w; x_i) - y_i)^2`` so that ``L = (1/n) sum_i l_i = 1/2 ||F||^2``
    with residual map ``F_i = sqrt(2/n) (f(w; x_i) - y_i)``.

    No projector: the solution set is not available in closed form.
    """

    def __init__(self, spec: NetworkSpec, w_init, X, y):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(y)):
            raise ValueError("labels must be finite")
        if len(y) != X.shape[0]:
            raise ValueError("X and y disagree on n")
        super().__init__(dim=spec.dim, n=len(y))
        self.spec, self.X, self.y = spec, X, y
        self.w_init = np.asarray(w_init, dtype=np.float64)

    def loss(self, w, i):
        r = forward(self.spec, w, self.X[i]) - self.y[i]
        return r * r

    def grad(self, w, i):
        g, out = weighted_grad(self.spec, w, self.X[i : i + 1], [1.0])
        return 2.0 * (out[0] - self.y[i]) * g

    def batch_grad(self, w, zs):
        idx = np.asarray(zs, dtype=int)
        Xb = self.X[idx]
        r = forward_batch(self.spec, w, Xb) - self.y[idx]
        g, _ = weighted_grad(self.spec, w, Xb, 2.0 * r / len(idx))
        return g

    def residuals(self, w):
        return forward_batch(self.spec, w, self.X) - self.y

    def residual_map(self, w):
        return math.sqrt(2.0 / self.sample_count) * self.residuals(w)

    def full_loss(self, w):
        r = self.residuals(w)
        return math.fsum(r * r) / self.sample_count

    def full_grad(self, w):
        return self.batch_grad(w, np.arange(self.sample_count))

    def ntk(self, w=None):
        return ntk_assemble(self.spec, self.w_init if w is None else w, self.X)

    def objective_kernel(self, w=None):
        """``grad F grad F^T = (2/n) K``: its least eigenvalue is the PL constant of ``L``."""
        return (2.0 / self.sample_count) * self.ntk(w)

    def to_dict(self):
        return {"name": "network", "spec": self.spec.to_dict(), "n": self.sample_count}


def make_nn_problem(spec: NetworkSpec, w_init, X, y) -> NetworkProblem:
    return NetworkProblem(spec, w_init, X, y)


def lambda0(problem: NetworkProblem, w=None, tol=1e-10) -> float:
    """Least eigenvalue of the objective kernel ``(2/n) K`` at ``w`` (default ``w_init``)."""
    return min_eig(problem.objective_kernel(w), tol=tol).value


# -- checkpoints -------------------------------------------------------------

_MAGIC = b"AIMW"
_VERSION = 1
_LAYOUT_LAYER_MAJOR_ROW_MAJOR = 1


def save_weights(path, spec: NetworkSpec, w, seed: int = 0):
    """Write a checkpoint: little-endian header followed by float64 weights.

    Header: ``b"AIMW"``, u32 version, u32 layout tag (1 = layer-major,
    row-major), u64 seed, u32 activation code, u32 depth, u32 input_dim,
    u32 width, u64 parameter count.
    """
    w = np.asarray(w, dtype="<f8")
    if w.shape != (spec.dim,):
        raise ValueError("weight vector does not match spec")
    header = _MAGIC + struct.pack(
        "<IIQIIIIQ",
        _VERSION,
        _LAYOUT_LAYER_MAJOR_ROW_MAJOR,
        int(seed),
        _ACT_CODES[spec.activation],
        spec.depth,
        spec.input_dim,
        spec.width,
        spec.dim,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(w.tobytes())


def load_weights(path):
    """Inverse of :func:`save_weights`; returns ``(spec, w, seed)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a weight checkpoint")
    fmt = "<IIQIIIIQ"
    size = struct.calcsize(fmt)
    version, layout, seed, act, depth, m0, m, count = struct.unpack(fmt, data[4 : 4 + size])
    if version != _VERSION or layout != _LAYOUT_LAYER_MAJOR_ROW_MAJOR:
        raise ValueError("unsupported checkpoint version or layout")
    activation = {v: k for k, v in _ACT_CODES.items()}[act]
    spec = NetworkSpec(input_dim=m0, width=m, depth=depth, activation=activation)
    w = np.frombuffer(data[4 + size :], dtype="<f8").astype(np.float64)
    if w.size != count or count != spec.dim:
        raise ValueError("truncated checkpoint")
    return spec, w, seed
