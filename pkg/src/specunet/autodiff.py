"""Dense-tensor reverse-mode autodiff over the operation set the operator needs.

Values are numpy arrays (row-major, f32 or f64); a ``Tensor`` wraps one value
together with its gradient slot and backward rule. Graphs are built dynamically
per step and consumed by a single backward pass.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A value in the computation graph.

    ``data`` is immutable by convention after construction; ``grad`` is
    lazily zero-initialized by accumulation during backward.
    """

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents", "_done")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._backward = None
        self._parents = ()
        self._done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


@dataclass
class Parameter:
    """A named trainable tensor.

    ``complex_pairs`` marks weights stored as trailing (re, im) pairs so the
    two parameter-count conventions can be reported side by side.
    """

    name: str
    tensor: Tensor = field(repr=False)
    complex_pairs: bool = False

    @property
    def data(self):
        return self.tensor.data

    @property
    def numel(self):
        return int(self.tensor.data.size)

    @property
    def complex_entries(self):
        return self.numel // 2 if self.complex_pairs else self.numel


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _check_dtypes(op, a, b):
    if a.data.dtype != b.data.dtype:
        raise TypeError(f"{op}: mixed dtypes {a.data.dtype} vs {b.data.dtype}")


def _unbroadcast(g, shape):
    """Reduce a gradient back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _accum(t, g):
    # grads are never mutated in place, so sharing the first contribution is safe
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _make(data, parents, backward):
    req = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=req)
    if req:
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_dtypes("add", a, b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ValueError(f"add: incompatible shapes {a.shape} vs {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_dtypes("sub", a, b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ValueError(f"sub: incompatible shapes {a.shape} vs {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_dtypes("mul", a, b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ValueError(f"mul: incompatible shapes {a.shape} vs {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def scale(a, c):
    a = as_tensor(a)
    c = a.data.dtype.type(c)
    data = a.data * c

    def backward(g):
        if a.requires_grad:
            _accum(a, g * c)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------------------
# channel mixing (1x1 convolution on channel-first feature maps)


def matmul_channels(x, w, bias):
    """Per-pixel channel matmul: y[b,o,i,j] = sum_c w[o,c] x[b,c,i,j] + bias[o]."""
    x, w, bias = as_tensor(x), as_tensor(w), as_tensor(bias)
    _check_dtypes("matmul_channels", x, w)
    _check_dtypes("matmul_channels", x, bias)
    if x.data.ndim != 4:
        raise ValueError(f"matmul_channels: expected [B,C,H,W] input, got {x.shape}")
    b_, c_in, h, wd = x.shape
    if w.data.ndim != 2 or w.shape[1] != c_in:
        raise ValueError(f"matmul_channels: weight {w.shape} does not match input channels {c_in}")
    c_out = w.shape[0]
    if bias.shape != (c_out,):
        raise ValueError(f"matmul_channels: bias {bias.shape} does not match out channels {c_out}")

    xf = x.data.reshape(b_, c_in, h * wd)
    yf = np.matmul(w.data, xf)
    yf += bias.data[:, None]
    data = yf.reshape(b_, c_out, h, wd)

    def backward(g):
        gf = g.reshape(b_, c_out, h * wd)
        if x.requires_grad:
            _accum(x, np.matmul(w.data.T, gf).reshape(b_, c_in, h, wd))
        if w.requires_grad:
            _accum(w, np.matmul(gf, xf.transpose(0, 2, 1)).sum(axis=0))
        if bias.requires_grad:
            _accum(bias, gf.sum(axis=(0, 2)))

    return _make(data, (x, w, bias), backward)


# ---------------------------------------------------------------------------
# nonlinearity


def _norm_cdf(x):
    return 0.5 * (1.0 + erf(x * x.dtype.type(_INV_SQRT2)))


def gelu(x):
    """Exact-erf GeLU: x * Phi(x), backward Phi(x) + x * phi(x)."""
    x = as_tensor(x)
    cdf = _norm_cdf(x.data)
    data = x.data * cdf

    def backward(g):
        if x.requires_grad:
            pdf = np.exp(-0.5 * x.data * x.data) * x.dtype.type(_INV_SQRT2PI)
            _accum(x, g * (cdf + x.data * pdf))

    return _make(data, (x,), backward)


# ---------------------------------------------------------------------------
# spatial resampling


def avgpool2(x):
    """2x average pooling on [B,C,H,W]; H and W must be even."""
    x = as_tensor(x)
    b_, c_, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avgpool2: extents must be even, got {(h, w)}")
    d = x.data
    data = (d[:, :, 0::2, 0::2] + d[:, :, 1::2, 0::2] + d[:, :, 0::2, 1::2] + d[:, :, 1::2, 1::2])
    data *= d.dtype.type(0.25)

    def backward(g):
        if x.requires_grad:
            quarter = g * g.dtype.type(0.25)
            gx = np.empty_like(x.data)
            gx[:, :, 0::2, 0::2] = quarter
            gx[:, :, 1::2, 0::2] = quarter
            gx[:, :, 0::2, 1::2] = quarter
            gx[:, :, 1::2, 1::2] = quarter
            _accum(x, gx)

    return _make(data, (x,), backward)


_BILINEAR_CACHE = {}


def bilinear2_matrix(n, dtype=np.float64):
    """[2n, n] interpolation matrix: half-pixel centers, edges clamped."""
    key = (n, np.dtype(dtype))
    mat = _BILINEAR_CACHE.get(key)
    if mat is None:
        mat = np.zeros((2 * n, n), dtype=dtype)
        for p in range(2 * n):
            src = (p + 0.5) / 2.0 - 0.5
            i0 = math.floor(src)
            t = src - i0
            mat[p, min(max(i0, 0), n - 1)] += 1.0 - t
            mat[p, min(max(i0 + 1, 0), n - 1)] += t
        mat.setflags(write=False)
        _BILINEAR_CACHE[key] = mat
    return mat


def upsample_bilinear2_array(x):
    """Non-graph 2x bilinear upsampling of the last two axes."""
    h, w = x.shape[-2:]
    ah = bilinear2_matrix(h, x.dtype)
    aw = bilinear2_matrix(w, x.dtype)
    return np.matmul(np.matmul(ah, x), aw.T)


def upsample_bilinear2(x):
    """2x bilinear upsampling on [B,C,H,W] (align-corners-false, edge clamp)."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    ah = bilinear2_matrix(h, x.dtype)
    aw = bilinear2_matrix(w, x.dtype)
    data = np.matmul(np.matmul(ah, x.data), aw.T)

    def backward(g):
        if x.requires_grad:
            _accum(x, np.matmul(np.matmul(ah.T, g), aw))

    return _make(data, (x,), backward)


# ---------------------------------------------------------------------------
# layout


def transpose(x, axes):
    x = as_tensor(x)
    data = np.ascontiguousarray(x.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def backward(g):
        if x.requires_grad:
            _accum(x, np.ascontiguousarray(g.transpose(inv)))

    return _make(data, (x,), backward)


def concat(a, b, axis):
    a, b = as_tensor(a), as_tensor(b)
    _check_dtypes("concat", a, b)
    data = np.concatenate([a.data, b.data], axis=axis)
    na = a.shape[axis]

    def backward(g):
        ga, gb = np.split(g, [na], axis=axis)
        if a.requires_grad:
            _accum(a, ga)
        if b.requires_grad:
            _accum(b, gb)

    return _make(data, (a, b), backward)


def index_select0(x, idx):
    """Gather rows along axis 0; backward scatter-adds."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    data = x.data[idx]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            np.add.at(gx, idx, g)
            _accum(x, gx)

    return _make(data, (x,), backward)


# ---------------------------------------------------------------------------
# reductions


def sum_axes(x, axes):
    x = as_tensor(x)
    axes = tuple(axes)
    data = x.data.sum(axis=axes)
    expand = tuple(sorted(a % x.data.ndim for a in axes))

    def backward(g):
        if x.requires_grad:
            ge = np.expand_dims(g, expand) if expand else g
            _accum(x, np.broadcast_to(ge, x.shape).copy())

    return _make(data, (x,), backward)


def sum_all(x):
    x = as_tensor(x)
    data = x.data.sum()

    def backward(g):
        if x.requires_grad:
            _accum(x, np.broadcast_to(g, x.shape).copy())

    return _make(data, (x,), backward)


def sqrt(x):
    """Elementwise square root; input must stay away from 0 for a finite grad."""
    x = as_tensor(x)
    data = np.sqrt(x.data)

    def backward(g):
        if x.requires_grad:
            _accum(x, g * (x.dtype.type(0.5) / data))

    return _make(data, (x,), backward)


# ---------------------------------------------------------------------------
# backward driver


def backward(root):
    """Reverse-mode sweep from a scalar root; the graph is consumed."""
    if root.data.shape != ():
        raise ValueError(f"backward: root must be a scalar, got shape {root.data.shape}")
    if root._done:
        raise RuntimeError("backward: graph already consumed (single-shot)")
    root._done = True

    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)
        # free the graph as we go
        node._backward = None
        node._parents = ()


def zero_grads(params):
    for p in params:
        p.tensor.grad = None
