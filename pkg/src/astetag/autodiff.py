"""A small tape-based reverse-mode autodiff over float64 numpy arrays.

Every op that touches a tensor requiring gradients appends a node to the
thread's current :class:`Tape`.  Because nodes are appended in execution
order the tape is already topologically sorted, so :func:`backward` just walks
it in reverse once.

Only what the model and the losses need is here.  Binary ops follow numpy
broadcasting and reduce gradients back to each operand's shape.
"""
from __future__ import annotations

import contextlib
import math
import threading

import numpy as np
from scipy.special import erf

from . import kernels
from .errors import NotScalar, ShapeMismatch

LN_EPS = 1e-5
CHECK_FINITE = True

_local = threading.local()


class Tape:
    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def clear(self):
        for node in self.nodes:
            node.out._node = None
        self.nodes = []


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


def current_tape() -> Tape:
    t = getattr(_local, "tape", None)
    if t is None:
        t = _local.tape = Tape()
    return t


def _grad_enabled():
    return getattr(_local, "enabled", True)


@contextlib.contextmanager
def tape():
    """Run a block on a fresh tape (restoring the previous one afterwards)."""
    prev = getattr(_local, "tape", None)
    _local.tape = new = Tape()
    try:
        yield new
    finally:
        _local.tape = prev


@contextlib.contextmanager
def no_grad():
    prev = _grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._node = None
        self._acc = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __truediv__(self, c):
        if isinstance(c, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / c)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def zero_grad(self):
        self.grad = None


class Parameter(Tensor):
    """Trainable leaf: value, gradient accumulator, Adam moments."""

    def __init__(self, data, name=""):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    """Wrap an op result and record it when any parent needs a gradient."""
    out = Tensor(data)
    if CHECK_FINITE and not np.all(np.isfinite(out.data)):
        if all(np.all(np.isfinite(p.data)) for p in parents):
            raise FloatingPointError("non-finite value produced from finite inputs")
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        node = _Node(out, parents, backward)
        out._node = node
        current_tape().nodes.append(node)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ------------------------------------------------------------------ elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    """Elementwise (Hadamard) product."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def maximum_const(a, c):
    """``max(a, c)``; the gradient is 0 wherever ``a <= c``."""
    a = as_tensor(a)
    keep = a.data > c
    return _make(np.where(keep, a.data, c), (a,), lambda g: (g * keep,))


def minimum_const(a, c):
    """``min(a, c)``; the gradient is 0 wherever ``a >= c``."""
    a = as_tensor(a)
    keep = a.data < c
    return _make(np.where(keep, a.data, c), (a,), lambda g: (g * keep,))


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _make(out, (a,), lambda g: (g / a.data,))


def exp(a):
    a = as_tensor(a)
    e = np.exp(a.data)
    return _make(e, (a,), lambda g: (g * e,))


def power_const(a, p):
    a = as_tensor(a)
    out = a.data ** p
    return _make(out, (a,), lambda g: (g * p * a.data ** (p - 1),))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a):
    """Exact GELU, ``x * Phi(x)``."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return _make(x * cdf, (a,), lambda g: (g * (cdf + x * pdf),))


# ------------------------------------------------------------------ shape ops


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        if a.ndim < 2:
            raise ShapeMismatch(f"transpose needs >= 2 dims, got shape {a.shape}")
        axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
    inv = tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"cannot reshape {old} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(old),))


def broadcast_to(a, shape):
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} to {shape}") from None
    return _make(np.array(out), (a,), lambda g: (_unbroadcast(g, a.shape),))


def concat(tensors, axis=-1):
    ts = [as_tensor(t) for t in tensors]
    ax = axis % ts[0].ndim
    for t in ts[1:]:
        if t.ndim != ts[0].ndim or any(
                s != r for k, (s, r) in enumerate(zip(t.shape, ts[0].shape)) if k != ax):
            raise ShapeMismatch(f"concat: shapes {ts[0].shape} and {t.shape} "
                                f"differ off axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in ts])[:-1]
    return _make(np.concatenate([t.data for t in ts], axis=ax), tuple(ts),
                 lambda g: tuple(np.split(g, sizes, axis=ax)))


def gather_rows(table, idx):
    table = as_tensor(table)
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _make(table.data[idx], (table,), back)


# ------------------------------------------------------------------ reductions


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), back)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.shape[k] for k in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / count)


# ------------------------------------------------------------------ linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def back(g):
        ga = g @ b.data.T
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return _make(a.data @ b.data, (a, b), back)


def matmul_nt(a, b):
    """``a @ b.T`` for two 2-D tensors (attention scores)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"matmul_nt: shapes {a.shape} and {b.shape} are incompatible")
    return _make(a.data @ b.data.T, (a, b), lambda g: (g @ b.data, g.T @ a.data))


# ------------------------------------------------------------------ normalisation


def softmax(a):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    return _make(s, (a,),
                 lambda g: (s * (g - (g * s).sum(axis=-1, keepdims=True)),))


def layer_norm(a, eps=LN_EPS):
    """Normalise the last axis to zero mean and unit variance (no affine)."""
    a = as_tensor(a)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def back(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)

    return _make(y, (a,), back)


def attention(q, k, v):
    """Single-head scaled dot-product attention built from the primitives above."""
    scores = matmul_nt(q, k) * (1.0 / math.sqrt(q.shape[-1]))
    return matmul(softmax(scores), v)


def custom(parents, value, backward):
    """Record an op whose forward and vector-Jacobian product come from elsewhere
    (e.g. a fused kernel)."""
    return _make(value, tuple(as_tensor(p) for p in parents), backward)


# ------------------------------------------------------------------ backward


def backward(loss: Tensor):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad.

    Clears the tape afterwards, so a second call needs a fresh forward pass.
    """
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar loss, got shape {loss.shape}")
    tp = current_tape()
    if loss._node is None:
        tp.clear()
        return
    loss._acc = np.ones_like(loss.data)
    leaves = {}
    try:
        for node in reversed(tp.nodes):
            g = node.out._acc
            if g is None:
                continue
            node.out._acc = None
            grads = node.backward(g)
            for p, gp in zip(node.parents, grads):
                if not p.requires_grad or gp is None:
                    continue
                p._acc = gp if p._acc is None else p._acc + gp
                if p._node is None:
                    leaves[id(p)] = p
        for p in leaves.values():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            p.grad += p._acc
            p._acc = None
    finally:
        for node in tp.nodes:
            node.out._acc = None
            for p in node.parents:
                p._acc = None
        tp.clear()


def zero_grad(params):
    for p in params:
        p.zero_grad()


def check_gradients(f, params, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``f`` is a zero-argument callable that builds a scalar Tensor from
    ``params``.  The relative error of each coordinate uses the denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    params = list(params)
    for p in params:
        p.grad = np.zeros_like(p.data)
    with tape():
        backward(f())
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                fp = float(f().data)
                flat[k] = orig - h
                fm = float(f().data)
                flat[k] = orig
                num = (fp - fm) / (2.0 * h)
                ana = a.reshape(-1)[k]
                err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
                worst = max(worst, err)
    return worst


def adam_step(groups, b1=0.9, b2=0.999, eps=1e-8):
    """One Adam update over ``[(params, lr), ...]``; zeroes gradients after."""
    for params, lr in groups:
        for p in params:
            p.step += 1
            kernels.adam_update(p.data, p.grad, p.m, p.v, float(lr), b1, b2, eps, p.step)
            p.grad[...] = 0.0
