"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations executed while a :class:`GradTape` is active are recorded when at
least one operand is tracked by that tape (either watched directly or produced
by an earlier recorded operation).  :func:`backward` then sweeps the record in
reverse and accumulates vector-Jacobian products.

    >>> with GradTape() as tape:
    ...     x = tape.watch(Tensor([1.0, 2.0]))
    ...     y = (x * x).sum()
    >>> backward(y, tape)[0]
    array([2., 4.])
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GradTape",
    "TapeError",
    "backward",
    "matmul",
    "add",
    "sub",
    "mul",
    "softmax_rows",
    "layer_norm",
    "gelu",
    "reshape",
    "transpose",
    "index",
    "concat",
    "tsum",
    "cross_entropy",
]

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


class TapeError(RuntimeError):
    """Raised on misuse of a gradient tape."""


class Tensor:
    """Immutable float64 array with optional tape membership."""

    __slots__ = ("data", "_tape", "_node")
    __array_priority__ = 100

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self._tape = None
        self._node = -1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tracked = ", tracked" if self._tape is not None else ""
        return f"Tensor(shape={self.shape}{tracked})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self):
        return tsum(self)


_local = threading.local()


def _active_tapes() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


class GradTape:
    """Ordered record of primitive operations for one backward sweep.

    A tape belongs to the thread that entered it.  Nested tapes are allowed;
    only the innermost active tape records.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple, Callable]] = []
        self._watched: list[Tensor] = []
        self._consumed = False
        self.last_sweep: list[int] = []

    def __enter__(self) -> "GradTape":
        _active_tapes().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _active_tapes()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self._records)

    def watch(self, t) -> Tensor:
        """Track ``t`` as a differentiation input and return it."""
        if self._consumed:
            raise TapeError("tape already consumed by a backward sweep")
        if not isinstance(t, Tensor):
            t = Tensor(t)
        elif t._tape is not None:
            # a fresh leaf so the same data can be watched on several tapes
            t = Tensor(t.data)
        self._attach(t, (), None)
        self._watched.append(t)
        return t

    def _attach(self, out: Tensor, inputs: tuple, vjp) -> None:
        out._tape = self
        out._node = len(self._records)
        self._records.append((out, inputs, vjp))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _recording_tape(inputs: Sequence[Tensor]):
    stack = _active_tapes()
    if not stack:
        return None
    tape = stack[-1]
    if tape._consumed:
        return None
    for t in inputs:
        if t._tape is tape:
            return tape
    return None


def _emit(data: np.ndarray, inputs: tuple, vjp: Callable) -> Tensor:
    out = Tensor(data)
    tape = _recording_tape(inputs)
    if tape is not None:
        tape._attach(out, inputs, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def backward(output: Tensor, tape: GradTape, wrt: Sequence[Tensor] | None = None,
             seed=None) -> list[np.ndarray]:
    """Reverse sweep from ``output``; returns gradients for ``wrt``.

    ``wrt`` defaults to the watched inputs in watch order and may include any
    tensor recorded on ``tape``.  ``seed`` is the upstream gradient and may be
    omitted only for scalar outputs.  The tape is consumed.
    """
    if tape._consumed:
        raise TapeError("tape already consumed by a backward sweep")
    if not isinstance(output, Tensor) or output._tape is not tape:
        raise TapeError("output was not produced under this tape")
    if seed is None:
        if output.size != 1:
            raise TapeError(f"non-scalar output of shape {output.shape} needs an explicit seed")
        seed = np.ones(output.shape)
    else:
        seed = np.broadcast_to(np.asarray(seed, dtype=np.float64), output.shape)

    targets = list(tape._watched if wrt is None else wrt)
    for t in targets:
        if t._tape is not tape:
            raise TapeError("gradient requested for a tensor not recorded on this tape")
    keep = {t._node for t in targets}

    grads: dict[int, np.ndarray] = {output._node: np.array(seed, dtype=np.float64)}
    kept: dict[int, np.ndarray] = {}
    sweep = []
    for node in range(output._node, -1, -1):
        g = grads.pop(node, None)
        if g is None:
            continue
        sweep.append(node)
        if node in keep:
            kept[node] = g
        _, inputs, vjp = tape._records[node]
        if vjp is None:
            continue
        for inp, gi in zip(inputs, vjp(g)):
            if gi is None or inp._tape is not tape:
                continue
            prev = grads.get(inp._node)
            grads[inp._node] = gi if prev is None else prev + gi

    tape._consumed = True
    tape.last_sweep = sweep
    tape._records = []
    return [kept[t._node] if t._node in kept else np.zeros(t.shape) for t in targets]


# --- primitives -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _emit(np.matmul(ad, bd), (a, b), vjp)


def softmax_rows(a) -> Tensor:
    """Softmax along the last axis with max subtraction."""
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(y, (a,), vjp)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale by ``gamma`` and shift by ``beta``."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    xd = x.data
    n = xd.shape[-1]
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gd = gamma.data

    def vjp(g):
        dxhat = g * gd
        dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return (dx, _unbroadcast(g * xhat, gd.shape), _unbroadcast(g, beta.shape))

    return _emit(xhat * gd + beta.data, (x, gamma, beta), vjp)


def gelu(x) -> Tensor:
    """GELU, tanh approximation; the backward pass differentiates the same formula."""
    x = _as_tensor(x)
    xd = x.data
    u = _GELU_C * (xd + _GELU_A * xd ** 3)
    t = np.tanh(u)

    def vjp(g):
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * xd * xd)
        return (g * (0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du),)

    return _emit(0.5 * xd * (1.0 + t), (x,), vjp)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    old = x.shape
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes=None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))
    return _emit(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def index(x, key) -> Tensor:
    """Basic or advanced indexing; the gradient scatters back with accumulation."""
    x = _as_tensor(x)
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)

    return _emit(x.data[key], (x,), vjp)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(_as_tensor(t) for t in tensors)
    sizes = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return _emit(np.concatenate([t.data for t in ts], axis=axis), ts,
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def tsum(x) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    x = _as_tensor(x)
    shape = x.shape
    return _emit(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy of (B, C) logits against integer labels."""
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    b = logits.shape[0]
    rows = np.arange(b)
    loss = -logp[rows, labels].mean()

    def vjp(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        return (p * (float(g) / b),)

    return _emit(np.array(loss), (logits,), vjp)
