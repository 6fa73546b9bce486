"""Dense float64 arrays with reverse-mode differentiation on a dynamic tape.

Every operation builds a fresh node; calling ``backward`` on a scalar loss
walks the recorded graph once. No graph reuse across steps.
"""

from __future__ import annotations

import numpy as np


class AutodiffError(Exception):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Node on the tape: a float64 ndarray plus backward closure."""

    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # -- graph walk ------------------------------------------------------

    def backward(self) -> None:
        if self.data.shape != ():
            raise AutodiffError("backward requires a scalar loss, got shape %r" % (self.shape,))
        topo, seen = [], set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node.parents:
                visit(p)
            topo.append(node)

        visit(self)
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(topo):
            if node._backward is None or not node.requires_grad:
                continue
            node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return multiply(self, -1.0)


def tensor(data) -> Tensor:
    if isinstance(data, Tensor):
        return data
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise AutodiffError("non-finite input")
    return Tensor(arr)


def _both(a, b):
    return tensor(a), tensor(b)


# -- arithmetic -----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _both(a, b)
    out = Tensor(a.data + b.data, (a, b))

    def back(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    out._backward = back
    return out


def subtract(a, b) -> Tensor:
    a, b = _both(a, b)
    out = Tensor(a.data - b.data, (a, b))

    def back(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(-g, b.shape))

    out._backward = back
    return out


def multiply(a, b) -> Tensor:
    a, b = _both(a, b)
    out = Tensor(a.data * b.data, (a, b))

    def back(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    out._backward = back
    return out


def matmul(a, b) -> Tensor:
    a, b = _both(a, b)
    out = Tensor(a.data @ b.data, (a, b))
    a_vec = a.data.ndim == 1
    b_vec = b.data.ndim == 1

    def back(g):
        # promote vector operands to matrices, differentiate, squeeze back
        ad_ = a.data[None, :] if a_vec else a.data
        bd = b.data[:, None] if b_vec else b.data
        gg = g
        if a_vec:
            gg = np.expand_dims(gg, -2)
        if b_vec:
            gg = np.expand_dims(gg, -1)
        ga = _unbroadcast(gg @ np.swapaxes(bd, -1, -2), ad_.shape)
        gb = _unbroadcast(np.swapaxes(ad_, -1, -2) @ gg, bd.shape)
        a._accumulate(ga.reshape(a.shape))
        b._accumulate(gb.reshape(b.shape))

    out._backward = back
    return out


def concat(parts, axis=0) -> Tensor:
    parts = [tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]

    def back(g):
        offset = 0
        for p, size in zip(parts, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + size)
            p._accumulate(g[tuple(index)])
            offset += size

    out._backward = back
    return out


def stack(parts, axis=0) -> Tensor:
    parts = [tensor(p) for p in parts]
    out = Tensor(np.stack([p.data for p in parts], axis=axis), tuple(parts))

    def back(g):
        for i, p in enumerate(parts):
            p._accumulate(np.take(g, i, axis=axis))

    out._backward = back
    return out


def rows(table, index) -> Tensor:
    """Gather rows of a 2-d table; backward scatter-adds."""
    table = tensor(table)
    index = np.asarray(index, dtype=np.intp)
    out = Tensor(table.data[index], (table,))

    def back(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, index, g)

    out._backward = back
    return out


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    out = Tensor(a.data.reshape(shape), (a,))

    def back(g):
        a._accumulate(g.reshape(a.shape))

    out._backward = back
    return out


# -- reductions -----------------------------------------------------------


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy())

    out._backward = back
    return out


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return multiply(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def _reduce_extreme(a, axis, argfn, redfn):
    a = tensor(a)
    out_data = redfn(a.data, axis=axis)
    out = Tensor(out_data, (a,))

    def back(g):
        # subgradient: route everything to the first extremal position
        idx = argfn(a.data, axis=axis)
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
        a._accumulate(grad)

    out._backward = back
    return out


def reduce_min(a, axis=0) -> Tensor:
    return _reduce_extreme(a, axis, np.argmin, np.min)


def reduce_max(a, axis=0) -> Tensor:
    return _reduce_extreme(a, axis, np.argmax, np.max)


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient goes to the first operand."""
    a, b = _both(a, b)
    out = Tensor(np.maximum(a.data, b.data), (a, b))

    def back(g):
        take_a = a.data >= b.data
        a._accumulate(_unbroadcast(g * take_a, a.shape))
        b._accumulate(_unbroadcast(g * ~take_a, b.shape))

    out._backward = back
    return out


def minimum(a, b) -> Tensor:
    a, b = _both(a, b)
    out = Tensor(np.minimum(a.data, b.data), (a, b))

    def back(g):
        take_a = a.data <= b.data
        a._accumulate(_unbroadcast(g * take_a, a.shape))
        b._accumulate(_unbroadcast(g * ~take_a, b.shape))

    out._backward = back
    return out


# -- elementwise nonlinearities -------------------------------------------


def _unary(a, value, local_grad):
    a = tensor(a)
    out = Tensor(value, (a,))

    def back(g):
        a._accumulate(g * local_grad)

    out._backward = back
    return out


def relu(a) -> Tensor:
    a = tensor(a)
    return _unary(a, np.maximum(a.data, 0.0), (a.data > 0).astype(np.float64))


def sigmoid(a) -> Tensor:
    a = tensor(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    return _unary(a, s, s * (1.0 - s))


def tanh(a) -> Tensor:
    a = tensor(a)
    t = np.tanh(a.data)
    return _unary(a, t, 1.0 - t * t)


def exp(a) -> Tensor:
    a = tensor(a)
    e = np.exp(a.data)
    return _unary(a, e, e)


def log(a) -> Tensor:
    a = tensor(a)
    return _unary(a, np.log(a.data), 1.0 / a.data)


def sqrt(a) -> Tensor:
    a = tensor(a)
    r = np.sqrt(a.data)
    with np.errstate(divide="ignore"):
        local = np.where(r > 0, 0.5 / np.where(r > 0, r, 1.0), 0.0)
    return _unary(a, r, local)


def absolute(a) -> Tensor:
    a = tensor(a)
    return _unary(a, np.abs(a.data), np.sign(a.data))


# -- norms, softmax, attention --------------------------------------------


def l1_norm(a, axis=-1) -> Tensor:
    return reduce_sum(absolute(a), axis=axis)


def l2_norm(a, axis=-1) -> Tensor:
    return sqrt(reduce_sum(multiply(a, a), axis=axis))


def softmax(a, axis=-1) -> Tensor:
    """Stable softmax (max-subtracted)."""
    a = tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, (a,))

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a._accumulate(y * (g - dot))

    out._backward = back
    return out


def log_softmax(a, axis=-1) -> Tensor:
    a = tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = Tensor(shifted - lse, (a,))

    def back(g):
        soft = np.exp(out.data)
        a._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

    out._backward = back
    return out


def attention(q, k, v) -> Tensor:
    """Scaled dot-product attention over the last two axes (rows = items)."""
    q, k, v = tensor(q), tensor(k), tensor(v)
    d = q.shape[-1]
    weights = softmax(multiply(matmul(q, transpose(k)), 1.0 / np.sqrt(d)), axis=-1)
    return matmul(weights, v)


def transpose(a) -> Tensor:
    a = tensor(a)
    out = Tensor(np.swapaxes(a.data, -1, -2), (a,))

    def back(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    out._backward = back
    return out


# -- parameters and optimization ------------------------------------------


class ParameterStore:
    """Named parameters, their gradient buffers, and optimizer state."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._state: dict[str, dict] = {}

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise AutodiffError("duplicate parameter %r" % name)
        p = Tensor(np.array(data, dtype=np.float64), requires_grad=True)
        self.params[name] = p
        return p

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        for name, arr in state.items():
            self.params[name].data = np.array(arr, dtype=np.float64)

    # -- checkpoint text format: header line, then name\tshape\tvalues ----

    def save(self, path, header_extra: str = "") -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("# privkg-params v1 %s\n" % header_extra)
            for name in sorted(self.params):
                p = self.params[name]
                shape = "x".join(str(s) for s in p.data.shape) or "scalar"
                values = ",".join("%.17g" % v for v in p.data.ravel())
                f.write("%s\t%s\t%s\n" % (name, shape, values))

    def load(self, path) -> str:
        with open(path, encoding="utf-8") as f:
            header = f.readline()
            if not header.startswith("# privkg-params v1"):
                raise AutodiffError("unrecognized checkpoint header: %r" % header)
            for line in f:
                name, shape, values = line.rstrip("\n").split("\t")
                dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
                arr = np.array([float(v) for v in values.split(",")], dtype=np.float64)
                self.params[name].data = arr.reshape(dims)
        return header[len("# privkg-params v1"):].strip()


class SGD:
    def __init__(self, store: ParameterStore, lr: float):
        self.store = store
        self.lr = lr

    def step(self) -> None:
        for name, p in self.store.params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise AutodiffError("non-finite gradient in %r" % name)
            p.data -= self.lr * p.grad
        self.store.zero_grad()


class Adam:
    def __init__(self, store: ParameterStore, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(p.data) for n, p in store.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in store.params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.store.params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise AutodiffError("non-finite gradient in %r" % name)
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * p.grad
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * p.grad ** 2
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.store.zero_grad()


def make_optimizer(store: ParameterStore, kind: str, lr: float):
    if kind == "adam":
        return Adam(store, lr)
    if kind == "sgd":
        return SGD(store, lr)
    raise AutodiffError("unknown optimizer %r" % kind)
