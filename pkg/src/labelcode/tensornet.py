"""Small reverse-mode autodiff over numpy arrays, dense nets and plain SGD.

Everything runs in float64. A :class:`Tensor` records the op that produced it;
``Tensor.backward`` walks the graph in reverse topological order and
accumulates ``.grad`` on every tensor that requires it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

LOG_CLAMP = 1e-12


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward
        self.name = name

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        grad = np.broadcast_to(np.asarray(grad, dtype=np.float64), self.shape)

        order = []
        seen = set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                t, expanded = stack.pop()
                if expanded:
                    order.append(t)
                    continue
                if id(t) in seen:
                    continue
                seen.add(id(t))
                stack.append((t, True))
                for p in t._parents:
                    if p.requires_grad and id(p) not in seen:
                        stack.append((p, False))

        visit(self)
        grads = {id(self): np.array(grad)}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if not t._parents:
                t.grad = g if t.grad is None else t.grad + g
                continue
            for parent, pg in zip(t._parents, t._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data + b.data,
        parents=(a, b),
        backward=lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a) -> Tensor:
    return Tensor(-a.data, parents=(a,), backward=lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor(
        a.data * b.data,
        parents=(a, b),
        backward=lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return Tensor(
        a.data @ b.data,
        parents=(a, b),
        backward=lambda g: (g @ b.data.T, a.data.T @ g),
    )


def tsum(a, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(out, parents=(a,), backward=backward)


def reshape(a, shape) -> Tensor:
    return Tensor(a.data.reshape(shape), parents=(a,), backward=lambda g: (g.reshape(a.shape),))


def transpose(a) -> Tensor:
    return Tensor(a.data.T, parents=(a,), backward=lambda g: (g.T,))


def tanh(a) -> Tensor:
    y = np.tanh(a.data)
    return Tensor(y, parents=(a,), backward=lambda g: (g * (1.0 - y * y),))


def relu(a) -> Tensor:
    mask = a.data > 0
    return Tensor(np.where(mask, a.data, 0.0), parents=(a,), backward=lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    y = _sigmoid(a.data)
    return Tensor(y, parents=(a,), backward=lambda g: (g * y * (1.0 - y),))


def softplus(a) -> Tensor:
    x = a.data
    y = np.logaddexp(0.0, x)
    return Tensor(y, parents=(a,), backward=lambda g: (g * _sigmoid(x),))


def tabs(a) -> Tensor:
    s = np.sign(a.data)
    return Tensor(np.abs(a.data), parents=(a,), backward=lambda g: (g * s,))


def identity(a) -> Tensor:
    return a


def log_softmax(a, axis=-1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    p = np.exp(y)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor(y, parents=(a,), backward=backward)


def softmax_t(a, axis=-1) -> Tensor:
    p = softmax(a.data, axis=axis)

    def backward(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor(p, parents=(a,), backward=backward)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- plain numpy helpers ----------------------------------------------------


def softmax(v, axis=-1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(p, target) -> float | np.ndarray:
    """``-sum(target * log(p))`` over the last axis, log clamped at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return -(target * np.log(np.maximum(p, LOG_CLAMP))).sum(axis=-1)


# -- layers -----------------------------------------------------------------

ACTIVATIONS = {"relu": relu, "tanh": tanh, "identity": identity, "sigmoid": sigmoid}


class Dense:
    def __init__(self, n_in: int, n_out: int, activation: str = "identity", rng=None, name="dense"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        limit = np.sqrt(6.0 / (n_in + n_out))
        self.W = Tensor(rng.uniform(-limit, limit, size=(n_in, n_out)), requires_grad=True, name=f"{name}.W")
        self.b = Tensor(np.zeros(n_out), requires_grad=True, name=f"{name}.b")
        self.activation = activation

    @property
    def n_in(self):
        return self.W.shape[0]

    @property
    def n_out(self):
        return self.W.shape[1]

    def parameters(self):
        return [self.W, self.b]

    def __call__(self, x: Tensor) -> Tensor:
        return ACTIVATIONS[self.activation](x @ self.W + self.b)


class NetGraph:
    """Ordered stack of dense layers.

    ``forward`` caches its output so ``backward`` can be driven by an
    upstream gradient of the same shape.
    """

    def __init__(self, layers: list[Dense]):
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer widths disagree: {a.n_out} -> {b.n_in}")
        self.layers = list(layers)
        self._out = None

    @classmethod
    def mlp(cls, widths, activations, rng, name="net"):
        if len(activations) != len(widths) - 1:
            raise ValueError("need one activation per layer")
        layers = [
            Dense(n_in, n_out, act, rng=rng, name=f"{name}{i}")
            for i, (n_in, n_out, act) in enumerate(zip(widths[:-1], widths[1:], activations))
        ]
        return cls(layers)

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def n_out(self):
        return self.layers[-1].n_out

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def weights(self) -> list[Tensor]:
        return [layer.W for layer in self.layers]

    def __call__(self, x) -> Tensor:
        x = as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.n_in:
            raise ValueError(f"input shape {x.shape} does not match layer width {self.n_in}")
        for layer in self.layers:
            x = layer(x)
        self._out = x
        return x

    forward = __call__

    def backward(self, upstream):
        if self._out is None:
            raise RuntimeError("backward() called before forward()")
        self._out.backward(upstream)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


# -- optimisation -----------------------------------------------------------


OPTIMIZERS = ("sgd", "adam")


@dataclass
class OptimConfig:
    lr: float = 1e-3
    group_multipliers: dict[str, float] = field(default_factory=dict)
    weight_decay: float = 0.0
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    method: str = "sgd"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.method not in OPTIMIZERS:
            raise ValueError(f"unsupported optimiser {self.method!r}; choose from {OPTIMIZERS}")
        if not all(0 <= b < 1 for b in self.adam_betas):
            raise ValueError("adam_betas must lie in [0, 1)")


def sgd_step(groups: dict[str, list[Tensor]], optim: OptimConfig) -> None:
    """In-place ``p -= lr * mult[group] * (grad + weight_decay * p)``."""
    for group, params in groups.items():
        step = optim.lr * optim.group_multipliers.get(group, 1.0)
        for p in params:
            g = p.grad if p.grad is not None else 0.0
            if optim.weight_decay:
                g = g + optim.weight_decay * p.data
            p.data = p.data - step * g


def zero_grads(groups: dict[str, list[Tensor]]) -> None:
    for params in groups.values():
        for p in params:
            p.grad = None


class Optimizer:
    """Stateful wrapper applying ``optim.method`` to named parameter groups.

    Adam uses bias-corrected first and second moments; weight decay is added
    to the gradient before either rule, and the group multiplier scales the
    step size in both.
    """

    def __init__(self, groups: dict[str, list[Tensor]], optim: OptimConfig):
        self.groups = groups
        self.optim = optim
        self.t = 0
        self._m = {id(p): np.zeros_like(p.data) for ps in groups.values() for p in ps}
        self._v = {id(p): np.zeros_like(p.data) for ps in groups.values() for p in ps}

    def zero_grad(self) -> None:
        zero_grads(self.groups)

    def step(self) -> None:
        if self.optim.method == "sgd":
            sgd_step(self.groups, self.optim)
            return
        self.t += 1
        b1, b2 = self.optim.adam_betas
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for group, params in self.groups.items():
            step = self.optim.lr * self.optim.group_multipliers.get(group, 1.0)
            for p in params:
                g = p.grad if p.grad is not None else np.zeros_like(p.data)
                if self.optim.weight_decay:
                    g = g + self.optim.weight_decay * p.data
                m = self._m[id(p)] = b1 * self._m[id(p)] + (1.0 - b1) * g
                v = self._v[id(p)] = b2 * self._v[id(p)] + (1.0 - b2) * g * g
                p.data = p.data - step * (m / c1) / (np.sqrt(v / c2) + self.optim.adam_eps)


# -- checkpoints ------------------------------------------------------------
#
# A checkpoint is a numpy ``.npz`` archive with one array per parameter,
# keyed "000_<name>", "001_<name>", ... in parameter order. Arrays keep their
# shapes and float64 payloads, so a load restores values bit for bit.


def save_parameters(params: list[Tensor], path: str | os.PathLike) -> None:
    arrays = {f"{i:03d}_{p.name or 'param'}": p.data for i, p in enumerate(params)}
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_parameters(params: list[Tensor], path: str | os.PathLike) -> None:
    with np.load(path) as archive:
        keys = sorted(archive.files)
        if len(keys) != len(params):
            raise ValueError(f"checkpoint holds {len(keys)} arrays, model has {len(params)}")
        for key, p in zip(keys, params):
            arr = archive[key]
            if arr.shape != p.shape:
                raise ValueError(f"{key}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(np.float64)
