"""Reverse-mode automatic differentiation over dense float64 arrays.

A dynamic tape: every operation on tensors that require gradients records
its parents and an adjoint closure, and ``backward`` replays the graph in
reverse topological order. The op set is exactly what the networks,
density-ratio evaluations and objectives in this package need; anything
fancier (general broadcasting, higher-order derivatives) is rejected so
the adjoint code stays auditable.

Broadcasting in elementwise ops is limited to three cases: identical
shapes, a scalar operand, or one operand whose shape is a trailing suffix
of the other's (broadcast over the leading axes).
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .special import digamma as _digamma_np
from .special import trigamma as _trigamma_np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "set_finite_checks",
    "finite_checks_enabled",
    "tensor",
    "backward",
    "detach",
    "add", "sub", "mul", "div", "neg", "matmul",
    "exp", "log", "square", "relu", "tanh", "sigmoid", "softplus",
    "digamma", "lgamma",
    "tsum", "tmean", "concat", "reshape", "clip_min",
    "pairwise_sq_dists", "logsumexp",
    "gaussian_sample", "split_rng",
]


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf while finite checks were enabled."""


_CHECK_FINITE = True


def set_finite_checks(enabled: bool) -> None:
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


def finite_checks_enabled() -> bool:
    return _CHECK_FINITE


def _check(data: np.ndarray, op: str) -> np.ndarray:
    if _CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")
    return data


class Tensor:
    """Dense float64 array participating in the gradient tape.

    ``requires_grad=True`` marks a leaf parameter. Interior nodes are
    created by the ops below; a node with no parents and no gradient
    requirement is a plain constant.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad=False, _parents=(), _vjps=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._vjps = _vjps

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = "param" if (self.requires_grad and not self._parents) else \
              ("node" if self._parents else "const")
        return f"Tensor({tag}, shape={self.shape})"

    # operator sugar; all defined in terms of the functional ops below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return _getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def tensor(data, requires_grad=False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def detach(t: Tensor) -> Tensor:
    """Same values, no tape node; downstream ops treat it as a constant."""
    return t.detach() if isinstance(t, Tensor) else Tensor(t)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, vjps, op):
    """Create a result tensor, recording parents only when a grad path exists."""
    _check(np.asarray(data, dtype=np.float64), op)
    tracked = [(p, v) for p, v in zip(parents, vjps) if _tracks(p)]
    if tracked:
        ps, vs = zip(*tracked)
        return Tensor(data, requires_grad=True, _parents=ps, _vjps=vs)
    return Tensor(data)


def _tracks(t: Tensor) -> bool:
    return t.requires_grad


def _broadcast_check(a: np.ndarray, b: np.ndarray, op: str):
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) > len(sb) and sa[len(sa) - len(sb):] == sb:
        return
    if len(sb) > len(sa) and sb[len(sb) - len(sa):] == sa:
        return
    raise ValueError(
        f"{op}: shapes {sa} and {sb} are not broadcast-compatible "
        "(only equal shapes, scalars, or trailing-suffix broadcasting over "
        "leading axes are supported)")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum an upstream gradient over the leading axes a broadcast added."""
    if grad.shape == tuple(shape):
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    extra = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(extra)))


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check(a.data, b.data, "add")
    out = a.data + b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g, a.shape),
                  lambda g: _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check(a.data, b.data, "sub")
    out = a.data - b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g, a.shape),
                  lambda g: _unbroadcast(g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check(a.data, b.data, "mul")
    out = a.data * b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g * b.data, a.shape),
                  lambda g: _unbroadcast(g * a.data, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check(a.data, b.data, "div")
    if np.any(b.data == 0.0):
        raise ZeroDivisionError("div: zero denominator")
    out = a.data / b.data
    return _node(out, (a, b),
                 (lambda g: _unbroadcast(g / b.data, a.shape),
                  lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.shape)),
                 "div")


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _node(-a.data, (a,), (lambda g: -g,), "neg")


# ---------------------------------------------------------------------------
# matrix multiply (2-D/3-D operands; 3-D batches broadcast against 2-D)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.ndim > 3 or b.ndim > 3:
        raise ValueError(f"matmul: expected 2-D or 3-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0]:
        raise ValueError(f"matmul: batch dimensions differ, {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def grad_a(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        return _unbroadcast(ga, a.shape)

    def grad_b(g):
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(gb, b.shape)

    return _node(out, (a, b), (grad_a, grad_b), "matmul")


# ---------------------------------------------------------------------------
# nonlinearities


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="ignore"):  # overflow surfaces as NonFiniteError
        out = np.exp(a.data)
    return _node(out, (a,), (lambda g: g * out,), "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log: non-positive argument")
    return _node(np.log(a.data), (a,), (lambda g: g / a.data,), "log")


def square(a) -> Tensor:
    a = _as_tensor(a)
    return _node(a.data * a.data, (a,), (lambda g: 2.0 * g * a.data,), "square")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    return _node(np.where(mask, a.data, 0.0), (a,), (lambda g: g * mask,), "relu")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), (lambda g: g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = np.where(a.data >= 0,
                   1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    return _node(out, (a,), (lambda g: g * out * (1.0 - out),), "sigmoid")


def softplus(a) -> Tensor:
    a = _as_tensor(a)
    # log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    out = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    sig = np.where(a.data >= 0,
                   1.0 / (1.0 + np.exp(-np.abs(a.data))),
                   np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))
    return _node(out, (a,), (lambda g: g * sig,), "softplus")


def digamma(a) -> Tensor:
    a = _as_tensor(a)
    out = _digamma_np(a.data)
    return _node(out, (a,), (lambda g: g * _trigamma_np(a.data),), "digamma")


def lgamma(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("lgamma: requires positive argument")
    out = np.frompyfunc(math.lgamma, 1, 1)(a.data).astype(np.float64)
    return _node(out, (a,), (lambda g: g * _digamma_np(a.data),), "lgamma")


# ---------------------------------------------------------------------------
# reductions, shaping, selection


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        gg = g if (keepdims or axis is None) else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.shape).copy()

    return _node(out, (a,), (grad,), "sum")


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]

    def grad(g):
        gg = g if (keepdims or axis is None) else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.shape).copy() / count

    return _node(out, (a,), (grad,), "mean")


def concat(tensors, axis=0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def make_grad(i):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offsets[i], offsets[i + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    return _node(out, tuple(ts), tuple(make_grad(i) for i in range(len(ts))), "concat")


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    out = a.data.reshape(shape)
    return _node(out, (a,), (lambda g: g.reshape(a.shape),), "reshape")


def _getitem(a, key) -> Tensor:
    a = _as_tensor(a)
    out = a.data[key]

    def grad(g):
        full = np.zeros(a.shape)
        np.add.at(full, key, g)
        return full

    return _node(out, (a,), (grad,), "getitem")


def clip_min(a, floor: float) -> Tensor:
    """Elementwise max with a constant floor; gradient passes only where unclipped."""
    a = _as_tensor(a)
    mask = a.data > floor
    out = np.where(mask, a.data, floor)
    return _node(out, (a,), (lambda g: g * mask,), "clip_min")


def pairwise_sq_dists(x, centers) -> Tensor:
    """Squared Euclidean distances between rows of ``x`` (m, d) and ``centers`` (n, d).

    Gradient flows to ``x`` only; centers are treated as constants. Uses the
    expanded-norm identity with a floor at zero to absorb cancellation.
    """
    x = _as_tensor(x)
    c = np.asarray(centers.data if isinstance(centers, Tensor) else centers, dtype=np.float64)
    if x.ndim != 2 or c.ndim != 2 or x.shape[1] != c.shape[1]:
        raise ValueError(f"pairwise_sq_dists: incompatible shapes {x.shape}, {c.shape}")
    xx = np.sum(x.data * x.data, axis=1)[:, None]
    cc = np.sum(c * c, axis=1)[None, :]
    out = np.maximum(xx + cc - 2.0 * x.data @ c.T, 0.0)

    def grad(g):
        # d/dx_i ||x_i - c_j||^2 = 2 (x_i - c_j)
        return 2.0 * (x.data * g.sum(axis=1, keepdims=True) - g @ c)

    return _node(out, (x,), (grad,), "pairwise_sq_dists")


def logsumexp(a, axis) -> Tensor:
    """Stable log-sum-exp along one axis; adjoint is the softmax weights."""
    a = _as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a.data - m), axis=axis)) + np.squeeze(m, axis=axis)
    soft = np.exp(a.data - np.expand_dims(out, axis))

    def grad(g):
        return np.expand_dims(g, axis) * soft

    return _node(out, (a,), (grad,), "logsumexp")


# ---------------------------------------------------------------------------
# sampling and RNG plumbing


def gaussian_sample(shape, mean, std=None, log_std=None, rng=None) -> Tensor:
    """Reparameterized Gaussian draw: mean + std * eps, eps ~ N(0, I).

    Gradients flow to ``mean`` and ``std`` (or ``log_std``); the noise is a
    constant. Exactly one of ``std``/``log_std`` must be given. ``std`` may
    be zero only when passed as a plain array (test convenience); a Tensor
    std must be positive.
    """
    if rng is None:
        raise ValueError("gaussian_sample: rng is required")
    if (std is None) == (log_std is None):
        raise ValueError("gaussian_sample: pass exactly one of std, log_std")
    mean = _as_tensor(mean)
    if log_std is not None:
        std_t = exp(_as_tensor(log_std))
    else:
        std_t = _as_tensor(std)
        if np.any(std_t.data < 0.0):
            raise ValueError("gaussian_sample: std must be non-negative")
    eps = Tensor(rng.standard_normal(shape))
    return add(mean, mul(std_t, eps))


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split an rng into n independent child streams (deterministic)."""
    return list(rng.spawn(n))


# ---------------------------------------------------------------------------
# reverse pass


def backward(root: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse-accumulate gradients of a scalar ``root``.

    Returns a map from each reachable gradient-requiring tensor to its
    gradient array, and mirrors the result on ``t.grad``. When ``params``
    is given, every listed parameter gets an entry (zeros if unreachable).
    """
    if root.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")

    # iterative post-order topological sort over the parent DAG
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    by_id: dict[int, Tensor] = {id(root): root}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in zip(node._parents, node._vjps):
            contrib = np.asarray(vjp(g), dtype=np.float64)
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + contrib
            else:
                grads[pid] = contrib
                by_id[pid] = parent

    result: dict[Tensor, np.ndarray] = {}
    for pid, t in by_id.items():
        if t.requires_grad and not t._parents:  # leaf parameters
            t.grad = grads[pid]
            result[t] = grads[pid]
    if params is not None:
        for p in params:
            if p not in result:
                z = np.zeros(p.shape)
                p.grad = z
                result[p] = z
    return result
