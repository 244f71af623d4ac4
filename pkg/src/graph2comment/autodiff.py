"""Minimal dense-tensor engine with reverse-mode differentiation.

Values live in numpy arrays; every primitive computes its forward result and,
when a Tape is active, registers the vector-Jacobian products needed by
backward(). Running ops without a tape gives plain (non-differentiable)
inference at no recording cost.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_vjps")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(DEFAULT_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._vjps = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{tag}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; every operator routes through the module primitives.
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)


class Tape:
    """Ordered record of primitive ops; context manager enabling recording.

    Also owns the seed for dropout masks: each dropout call gets a fresh
    counter so masks are reproducible from (seed, counter) alone and backward
    reuses the exact forward mask.
    """

    _active: "Tape | None" = None

    def __init__(self, seed: int = 0):
        self.nodes: list[Tensor] = []
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._dropout_calls = 0
        self._outer = None

    def __enter__(self):
        self._outer = Tape._active
        Tape._active = self
        return self

    def __exit__(self, *exc):
        Tape._active = self._outer
        return False

    def next_dropout_rng(self) -> np.random.Generator:
        key = np.array([self.seed, self._dropout_calls], dtype=np.uint64)
        self._dropout_calls += 1
        return np.random.Generator(np.random.Philox(key=key))


def active_tape() -> Tape | None:
    return Tape._active


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, vjps) -> Tensor:
    """Attach VJP closures when recording is on and some input needs grads."""
    tape = Tape._active
    if tape is not None:
        live = tuple((p, fn) for p, fn in vjps if p.requires_grad)
        if live:
            out.requires_grad = True
            out._vjps = live
            tape.nodes.append(out)
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    out = Tensor(a.data + b.data)
    return _record(out, [(a, lambda g: _unbroadcast(g, a.shape)),
                         (b, lambda g: _unbroadcast(g, b.shape))])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    out = Tensor(a.data - b.data)
    return _record(out, [(a, lambda g: _unbroadcast(g, a.shape)),
                         (b, lambda g: _unbroadcast(-g, b.shape))])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    out = Tensor(a.data * b.data)
    return _record(out, [(a, lambda g: _unbroadcast(g * b.data, a.shape)),
                         (b, lambda g: _unbroadcast(g * a.data, b.shape))])


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    out = Tensor(a.data / b.data)
    return _record(out, [(a, lambda g: _unbroadcast(g / b.data, a.shape)),
                         (b, lambda g: _unbroadcast(-g * a.data / (b.data ** 2), b.shape))])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)
    return _record(out, [(a, lambda g: g @ b.data.T),
                         (b, lambda g: a.data.T @ g)])


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose: expected 2-d tensor, got shape {a.shape}")
    out = Tensor(a.data.T)
    return _record(out, [(a, lambda g: g.T)])


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    except ValueError:
        raise ShapeError(
            "concat: incompatible shapes " + " and ".join(str(t.shape) for t in tensors)
        ) from None
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(k):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[k], offsets[k + 1])
            return g[tuple(sl)]
        return vjp

    return _record(out, [(t, make_vjp(k)) for k, t in enumerate(tensors)])


def slice_cols(a, start: int, stop: int) -> Tensor:
    """Slice along the last axis (used to split fused gate pre-activations)."""
    a = as_tensor(a)
    out = Tensor(a.data[..., start:stop])

    def vjp(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        return full

    return _record(out, [(a, vjp)])


def row_gather(table, ids) -> Tensor:
    """Gather rows of a 2-d table (embedding lookup)."""
    table = as_tensor(table)
    idx = np.asarray(ids, dtype=np.intp)
    if table.data.ndim != 2:
        raise ShapeError(f"row_gather: expected 2-d table, got shape {table.shape}")
    out = Tensor(table.data[idx])

    def vjp(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return full

    return _record(out, [(table, vjp)])


def pick(a, index) -> Tensor:
    """Select one element, returned as a scalar tensor."""
    a = as_tensor(a)
    out = Tensor(np.asarray(a.data[index]))

    def vjp(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return full

    return _record(out, [(a, vjp)])


def softmax(a) -> Tensor:
    """Softmax over the last axis, max-shifted for stability."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)

    def vjp(g):
        return s * (g - (g * s).sum(axis=-1, keepdims=True))

    return _record(out, [(a, vjp)])


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.data)
    out = Tensor(t)
    return _record(out, [(a, lambda g: g * (1.0 - t * t))])


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 1.0 / (1.0 + np.exp(-np.clip(a.data, -500, 500)))
    out = Tensor(s)
    return _record(out, [(a, lambda g: g * s * (1.0 - s))])


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, 0.0))
    return _record(out, [(a, lambda g: g * (a.data > 0.0))])


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data))
    return _record(out, [(a, lambda g: g / a.data)])


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.maximum(a.data, floor))
    return _record(out, [(a, lambda g: g * (a.data > floor))])


def dropout(a, rate: float, train: bool) -> Tensor:
    """Inverted dropout; identity when not training. Train mode needs a Tape."""
    a = as_tensor(a)
    if not train or rate == 0.0:
        out = Tensor(a.data.copy())
        return _record(out, [(a, lambda g: g)])
    tape = Tape._active
    if tape is None:
        raise RuntimeError("dropout(train=True) requires an active Tape for its mask seed")
    rng = tape.next_dropout_rng()
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * mask)
    return _record(out, [(a, lambda g: g * mask)])


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()

    return _record(out, [(a, vjp)])


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    n = a.data.size if axis is None else a.data.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape) / n

    return _record(out, [(a, vjp)])


def reduce_max(a, axis: int, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    out = Tensor(m if keepdims else m.squeeze(axis=axis))
    mask = (a.data == m)
    mask = mask / mask.sum(axis=axis, keepdims=True)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return mask * g

    return _record(out, [(a, vjp)])


def scalar_mul(a, c: float) -> Tensor:
    return mul(a, float(c))


def backward(loss: Tensor) -> None:
    """Populate .grad for everything reachable from a scalar loss."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")

    # Iterative post-order topological sort; each node is visited exactly once.
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node._vjps:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node.grad is None or not node._vjps:
            continue
        for parent, vjp in node._vjps:
            g = vjp(node.grad)
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


def grad_check(f, params, eps: float = 1e-5, max_samples: int = 64,
               seed: int = 0, grad_transform=None) -> float:
    """Max relative error between backward() and central finite differences.

    f is a zero-argument callable returning a scalar Tensor; it must be
    deterministic (dropout off). Up to max_samples coordinates per tensor are
    probed. The error for a coordinate is |a - n| / max(1, |a|, |n|), i.e.
    relative with an absolute floor so near-zero gradients do not blow up.
    grad_transform, when given, rewrites the analytic gradients before the
    comparison; it exists as a negative control so callers can prove the
    checker flags wrong gradients.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape():
        loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    if grad_transform is not None:
        analytic = grad_transform(analytic)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ana in zip(params, analytic):
        flat = p.data.reshape(-1)
        n_coords = flat.size
        if n_coords == 0:
            continue
        if n_coords <= max_samples:
            coords = np.arange(n_coords)
        else:
            coords = rng.choice(n_coords, size=max_samples, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            f_plus = float(f().data)
            flat[c] = orig - eps
            f_minus = float(f().data)
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(ana.reshape(-1)[c])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
    return worst
