"""Reverse-mode autodiff over dense float64 arrays.

Every network in the package (policy, value heads, BiGAN, RND, VAE) is built
from the handful of ops defined here. Graphs are recorded eagerly while the
forward pass runs; ``Tensor.backward`` walks the recorded tape once.
"""
from __future__ import annotations

import contextlib
import struct
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

__all__ = [
    "Tensor", "ParamSet", "AdamState", "Linear", "MLP",
    "no_grad", "is_grad_enabled", "adam_step", "finite_diff_check",
    "save_params", "load_params", "CheckpointError", "StaleTapeError",
]

_GRAD_ENABLED = True


class StaleTapeError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@contextlib.contextmanager
def no_grad():
    """Run ops without recording a tape (rollouts, scoring)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple = ()
        self._backward = None
        self._consumed = False

    # -- construction helpers -------------------------------------------------
    @classmethod
    def _make(cls, data, parents, backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._consumed = False
        tracked = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        if tracked:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other):
        other = _as_tensor(other)
        a_shape, b_shape = self.data.shape, other.data.shape

        def back(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._make(self.data + other.data, (self, other), back)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_as_tensor(other))

    def __rsub__(self, other):
        return _as_tensor(other) + (-self)

    def __mul__(self, other):
        other = _as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._make(a * b, (self, other), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._make(a / b, (self, other), back)

    def __matmul__(self, other):
        other = _as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            return g @ b.T, a.T @ g

        return Tensor._make(a @ b, (self, other), back)

    # -- elementwise ----------------------------------------------------------
    def tanh(self):
        y = np.tanh(self.data)
        return Tensor._make(y, (self,), lambda g: (g * (1.0 - y * y),))

    def relu(self):
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), lambda g: (g * mask,))

    def leaky_relu(self, slope: float = 0.2):
        x = self.data
        scale = np.where(x > 0, 1.0, slope)
        return Tensor._make(x * scale, (self,), lambda g: (g * scale,))

    def sigmoid(self):
        y = _sigmoid(self.data)
        return Tensor._make(y, (self,), lambda g: (g * y * (1.0 - y),))

    def softplus(self):
        x = self.data
        y = np.logaddexp(0.0, x)
        return Tensor._make(y, (self,), lambda g: (g * _sigmoid(x),))

    def exp(self):
        y = np.exp(self.data)
        return Tensor._make(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self.data
        return Tensor._make(np.log(x), (self,), lambda g: (g / x,))

    def abs(self):
        x = self.data
        return Tensor._make(np.abs(x), (self,), lambda g: (g * np.sign(x),))

    def square(self):
        x = self.data
        return Tensor._make(x * x, (self,), lambda g: (2.0 * g * x,))

    def clip(self, low: float, high: float):
        x = self.data
        inside = (x >= low) & (x <= high)
        return Tensor._make(np.clip(x, low, high), (self,), lambda g: (g * inside,))

    def minimum(self, other):
        other = _as_tensor(other)
        a, b = self.data, other.data
        pick_a = a <= b

        def back(g):
            return _unbroadcast(g * pick_a, a.shape), _unbroadcast(g * ~pick_a, b.shape)

        return Tensor._make(np.minimum(a, b), (self, other), back)

    def log_softmax(self):
        x = self.data
        shifted = x - x.max(axis=-1, keepdims=True)
        y = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        soft = np.exp(y)

        def back(g):
            return (g - soft * g.sum(axis=-1, keepdims=True),)

        return Tensor._make(y, (self,), back)

    # -- reductions / shape ---------------------------------------------------
    def sum(self, axis=None):
        x_shape = self.data.shape

        def back(g):
            if axis is None:
                return (np.broadcast_to(g, x_shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), x_shape).copy(),)

        return Tensor._make(np.asarray(self.data.sum(axis=axis)), (self,), back)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis) * (1.0 / n)

    def l1(self, axis=None):
        """Mean absolute value."""
        return self.abs().mean(axis)

    def l2(self, axis=None):
        """Mean squared value."""
        return self.square().mean(axis)

    def reshape(self, *shape):
        x_shape = self.data.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(x_shape),))

    @staticmethod
    def concat(tensors: list["Tensor"], axis: int = -1) -> "Tensor":
        tensors = [_as_tensor(t) for t in tensors]
        sizes = [t.data.shape[axis] for t in tensors]
        bounds = np.cumsum(sizes)[:-1]

        def back(g):
            return tuple(np.split(g, bounds, axis=axis))

        return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)

    # -- backward -------------------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar output, got shape {self.data.shape}")
        if self._consumed:
            raise StaleTapeError("backward already ran on this tape; run forward again")
        if not np.isfinite(self.data).all():
            raise FloatingPointError("non-finite loss")
        order = _topo(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf: accumulate
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
        for node in order:
            node._consumed = node._backward is not None
        self._consumed = True
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class ParamSet:
    """Named parameters, iterated in sorted-name order."""

    def __init__(self, tensors: dict[str, Tensor] | None = None):
        self._tensors: dict[str, Tensor] = {}
        self.version = 0
        for name, t in (tensors or {}).items():
            self.add(name, t)

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        if tensor.grad is None:
            tensor.grad = np.zeros_like(tensor.data)
        self._tensors[name] = tensor
        return tensor

    def update(self, other: "ParamSet", prefix: str = "") -> None:
        for name, t in other.items():
            self.add(prefix + name, t)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return sorted(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for name in self.names():
            yield name, self._tensors[name]

    def __iter__(self) -> Iterator[Tensor]:
        for _, t in self.items():
            yield t

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.grad = np.zeros_like(t.data)

    def clone(self) -> "ParamSet":
        out = ParamSet({n: Tensor(t.data.copy()) for n, t in self.items()})
        out.version = self.version
        return out

    def copy_from(self, other: "ParamSet") -> None:
        if self.names() != other.names():
            raise KeyError("parameter names differ")
        for name, t in self.items():
            np.copyto(t.data, other[name].data)

    def checksum(self) -> bytes:
        import hashlib

        h = hashlib.sha256()
        for name, t in self.items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(t.data).tobytes())
        return h.digest()


class AdamState:
    def __init__(self, params: ParamSet, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(params: ParamSet, state: AdamState) -> None:
    """One Adam update. Grads are left in place; the caller zeroes them."""
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    updates = {}
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        m = b1 * state.m[name] + (1.0 - b1) * p.grad
        v = b2 * state.v[name] + (1.0 - b2) * p.grad * p.grad
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if not np.isfinite(step).all():
            raise FloatingPointError(f"non-finite Adam update for {name!r}")
        updates[name] = (m, v, step)
    for name, p in params.items():
        m, v, step = updates[name]
        state.m[name], state.v[name] = m, v
        p.data -= step
    state.t = t
    params.version += 1


# -- layers -------------------------------------------------------------------

_ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "tanh": Tensor.tanh,
    "relu": Tensor.relu,
    "lrelu": lambda x: x.leaky_relu(0.2),
    "sigmoid": Tensor.sigmoid,
    "linear": lambda x: x,
}


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        std = gain * np.sqrt(2.0 / (n_in + n_out))
        self.weight = Tensor(rng.normal(0.0, std, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class MLP:
    """Stack of affine layers; ``features`` exposes the last hidden layer."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, activation: str = "tanh",
                 out_activation: str = "linear", out_gain: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("MLP needs at least input and output sizes")
        self.sizes = list(sizes)
        self.activation = activation
        self.out_activation = out_activation
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else 1.0
            self.layers.append(Linear(a, b, rng, gain=gain))
        self.params = ParamSet()
        for i, layer in enumerate(self.layers):
            self.params.add(f"l{i}.b", layer.bias)
            self.params.add(f"l{i}.w", layer.weight)

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    def _check(self, x) -> Tensor:
        x = _as_tensor(x)
        if x.data.ndim not in (1, 2) or x.data.shape[-1] != self.sizes[0]:
            raise ValueError(f"expected input with last dim {self.sizes[0]}, got {x.data.shape}")
        return x

    def forward(self, x, return_features: bool = False):
        x = self._check(x)
        act = _ACTIVATIONS[self.activation]
        h = x
        for layer in self.layers[:-1]:
            h = act(layer(h))
        out = _ACTIVATIONS[self.out_activation](self.layers[-1](h))
        if not np.isfinite(out.data).all():
            raise FloatingPointError("non-finite network output")
        return (out, h) if return_features else out

    __call__ = forward


# -- gradient checking --------------------------------------------------------

def finite_diff_check(loss_fn: Callable[[], Tensor], params: ParamSet | Iterable[Tensor],
                      h: float = 1e-5) -> float:
    """Max relative error between backprop grads and central differences.

    The error for each parameter tensor is ``|g - n| / max(|g| + |n|, 1e-12)``
    with vector 2-norms.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    tensors = list(params)
    for t in tensors:
        t.zero_grad()
    loss_fn().backward()
    analytic = [t.grad.copy() for t in tensors]
    worst = 0.0
    for t, g in zip(tensors, analytic):
        numeric = np.zeros_like(t.data)
        flat, nflat = t.data.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            nflat[i] = (up - down) / (2.0 * h)
        denom = max(np.linalg.norm(g) + np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(g - numeric) / denom))
    for t in tensors:
        t.zero_grad()
    return worst


# -- checkpoints --------------------------------------------------------------

_MAGIC = b"ADVK"
_FORMAT_VERSION = 1


def save_params(params: ParamSet | dict[str, Tensor], path) -> None:
    items = params.items() if isinstance(params, ParamSet) else sorted(params.items())
    chunks = []
    count = 0
    for name, t in items:
        raw = name.encode("utf-8")
        data = np.asarray(t.data, dtype="<f8", order="C")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        chunks.append(data.tobytes())
        count += 1
    header = _MAGIC + struct.pack("<II", _FORMAT_VERSION, count)
    Path(path).write_bytes(header + b"".join(chunks))


def load_params(path) -> ParamSet:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC:
        raise CheckpointError("bad magic")
    try:
        version, count = struct.unpack_from("<II", buf, 4)
        if version != _FORMAT_VERSION:
            raise CheckpointError(f"unsupported format version {version}")
        off = 12
        out = ParamSet()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            name = buf[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", buf, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", buf, off)
            off += 8 * rank
            n = int(np.prod(shape)) if rank else 1
            if off + 8 * n > len(buf):
                raise CheckpointError("truncated payload")
            data = np.frombuffer(buf, dtype="<f8", count=n, offset=off).astype(np.float64).reshape(shape)
            off += 8 * n
            out.add(name, Tensor(data))
    except struct.error as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc
    if off != len(buf):
        raise CheckpointError("trailing bytes after last entry")
    return out
