"""Dense float64 tensors with reverse-mode automatic differentiation.

Tensors wrap numpy arrays and record operations on a tape whenever an input
requires gradient.  ``backward`` on a scalar walks the recorded nodes in
reverse record order and accumulates gradients into the leaves.

Binary elementwise operations require equal shapes; the only broadcasting
allowed is against a scalar (python number or 0-d tensor).  Callers that need
row- or column-wise scaling pre-shape operands with ``tile_rows`` /
``tile_cols``.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import DomainError, ShapeError

_SEQ = itertools.count()


class _Node:
    """One recorded operation: output, parents, and the vector-Jacobian product."""

    __slots__ = ("seq", "out", "parents", "vjp")

    def __init__(self, out: "Tensor", parents: tuple["Tensor", ...], vjp: Callable):
        self.seq = next(_SEQ)
        self.out = out
        self.parents = parents
        self.vjp = vjp


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are promoted to constant tensors
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def ones(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=requires_grad)


def ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones_like(t.data))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _record(out: Tensor, parents: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = _Node(out, parents, vjp)
    return out


def _check_binary_shapes(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (only scalar broadcast allowed)")


def _reduce_to(shape: tuple[int, ...], g: np.ndarray) -> np.ndarray:
    # gradient for a scalar operand of a broadcasted binary op
    if shape == g.shape:
        return g
    return np.asarray(g.sum(), dtype=np.float64).reshape(shape)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes(a, b, "add")
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (_reduce_to(a.shape, g), _reduce_to(b.shape, g)))


def sub(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes(a, b, "sub")
    out = Tensor(a.data - b.data)
    return _record(out, (a, b), lambda g: (_reduce_to(a.shape, g), _reduce_to(b.shape, -g)))


def mul(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes(a, b, "mul")
    out = Tensor(a.data * b.data)
    return _record(out, (a, b), lambda g: (_reduce_to(a.shape, g * b.data), _reduce_to(b.shape, g * a.data)))


def div(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_binary_shapes(a, b, "div")
    out = Tensor(a.data / b.data)
    return _record(
        out,
        (a, b),
        lambda g: (_reduce_to(a.shape, g / b.data), _reduce_to(b.shape, -g * a.data / (b.data * b.data))),
    )


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    return _record(out, (a,), lambda g: (g * (a.data > 0.0),))


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s)
    return _record(out, (a,), lambda g: (g * s * (1.0 - s),))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise DomainError("log: non-positive entry")
    out = Tensor(np.log(a.data))
    return _record(out, (a,), lambda g: (g / a.data,))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.data)
    out = Tensor(e)
    return _record(out, (a,), lambda g: (g * e,))


def absolute(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data))
    return _record(out, (a,), lambda g: (g * np.sign(a.data),))


def sqrt(a: Tensor) -> Tensor:
    if np.any(a.data < 0.0):
        raise DomainError("sqrt: negative entry")
    r = np.sqrt(a.data)
    # derivative at exactly zero is defined as zero to keep hinge losses finite
    return _record(Tensor(r), (a,), lambda g: (np.where(a.data > 0.0, 0.5 * g / np.where(a.data > 0.0, r, 1.0), 0.0),))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out = Tensor(np.clip(a.data, lo, hi))
    inside = (a.data >= lo) & (a.data <= hi)
    return _record(out, (a,), lambda g: (g * inside,))


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "relu": relu,
    "sigmoid": sigmoid,
    "log": log,
    "exp": exp,
    "abs": absolute,
    "sqrt": sqrt,
}


def elementwise(kind: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Dispatch by op kind; binary kinds take `b`, unary kinds reject it."""
    if kind not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise op '{kind}'")
    fn = _ELEMENTWISE[kind]
    if kind in ("add", "sub", "mul", "div"):
        if b is None:
            raise ValueError(f"{kind} is binary")
        return fn(a, b)
    if b is not None:
        raise ValueError(f"{kind} is unary")
    return fn(a)


# ---------------------------------------------------------------------------
# reductions


def _normalize_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(int(ax) for ax in axes)
    norm = []
    for ax in axes:
        if ax < -ndim or ax >= ndim:
            raise ShapeError(f"axis {ax} invalid for {ndim}-d tensor")
        norm.append(ax % ndim)
    if len(set(norm)) != len(norm):
        raise ShapeError(f"repeated axis in {axes}")
    return tuple(sorted(norm))


def _expand(g: np.ndarray, axes: tuple[int, ...], shape: tuple[int, ...]) -> np.ndarray:
    for ax in axes:
        g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum_(a: Tensor, axes=None) -> Tensor:
    axes = _normalize_axes(axes, a.data.ndim)
    out = Tensor(a.data.sum(axis=axes))
    return _record(out, (a,), lambda g: (_expand(g, axes, a.shape).copy(),))


def mean(a: Tensor, axes=None) -> Tensor:
    axes = _normalize_axes(axes, a.data.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = Tensor(a.data.mean(axis=axes))
    return _record(out, (a,), lambda g: (_expand(g, axes, a.shape) / n,))


def max_(a: Tensor, axes=None) -> Tensor:
    axes = _normalize_axes(axes, a.data.ndim)
    m = a.data.max(axis=axes)
    out = Tensor(m)

    def vjp(g):
        mask = a.data == _expand(m, axes, a.shape)
        count = mask.sum(axis=axes)
        return (mask * _expand(g / count, axes, a.shape),)

    return _record(out, (a,), vjp)


_REDUCE = {"sum": sum_, "mean": mean, "max": max_}


def reduce(kind: str, a: Tensor, axes=None) -> Tensor:
    if kind not in _REDUCE:
        raise ValueError(f"unknown reduce op '{kind}'")
    return _REDUCE[kind](a, axes)


def cumsum(a: Tensor) -> Tensor:
    """Cumulative sum along a 1-D tensor."""
    if a.data.ndim != 1:
        raise ShapeError("cumsum expects a 1-d tensor")
    out = Tensor(np.cumsum(a.data))
    return _record(out, (a,), lambda g: (np.cumsum(g[::-1])[::-1],))


# ---------------------------------------------------------------------------
# shape and gather ops


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape) if not isinstance(shape, int) else (shape,)
    if int(np.prod(shape)) != a.data.size:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor(a.data.reshape(shape))
    return _record(out, (a,), lambda g: (g.reshape(a.shape),))


def tile_rows(v: Tensor, rows: int) -> Tensor:
    """[n] -> [rows, n], each row a copy of v."""
    if v.data.ndim != 1:
        raise ShapeError("tile_rows expects a 1-d tensor")
    out = Tensor(np.tile(v.data, (rows, 1)))
    return _record(out, (v,), lambda g: (g.sum(axis=0),))


def tile_cols(v: Tensor, cols: int) -> Tensor:
    """[n] -> [n, cols], each column a copy of v."""
    if v.data.ndim != 1:
        raise ShapeError("tile_cols expects a 1-d tensor")
    out = Tensor(np.repeat(v.data[:, None], cols, axis=1))
    return _record(out, (v,), lambda g: (g.sum(axis=1),))


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows of a 2-d tensor; duplicate indices accumulate gradient."""
    if a.data.ndim != 2:
        raise ShapeError("gather_rows expects a 2-d tensor")
    idx = np.asarray(idx, dtype=np.intp)
    out = Tensor(a.data[idx])

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record(out, (a,), vjp)


def gather_pixels(a: Tensor, rows, cols) -> Tensor:
    """[C,h,w] sampled at m (row, col) sites -> [m, C]."""
    if a.data.ndim != 3:
        raise ShapeError("gather_pixels expects a 3-d tensor")
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    out = Tensor(a.data[:, rows, cols].T)

    def vjp(g):
        gt = np.zeros(a.data.shape[1:] + a.data.shape[:1])
        np.add.at(gt, (rows, cols), g)
        return (gt.transpose(2, 0, 1),)

    return _record(out, (a,), vjp)


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    """Stack two 2-d tensors along rows."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"concat_rows: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(np.concatenate([a.data, b.data], axis=0))
    split = a.shape[0]
    return _record(out, (a, b), lambda g: (g[:split], g[split:]))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.data @ b.data)
    return _record(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """[C,H,W] + per-channel bias [C]."""
    if x.data.ndim != 3 or b.data.ndim != 1 or x.shape[0] != b.shape[0]:
        raise ShapeError(f"add_bias: incompatible shapes {x.shape} and {b.shape}")
    out = Tensor(x.data + b.data[:, None, None])
    return _record(out, (x, b), lambda g: (g, g.sum(axis=(1, 2))))


# ---------------------------------------------------------------------------
# convolution and upsampling


def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate [C_in,H,W] with [C_out,C_in,k,k]."""
    if x.data.ndim != 3 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 3-d input and 4-d kernel, got {x.shape} and {kernel.shape}")
    c_in, h, w = x.shape
    c_out, c_k, kh, kw = kernel.shape
    if c_k != c_in:
        raise ShapeError(f"conv2d: input has {c_in} channels, kernel expects {c_k}")
    if kh != kw or kh % 2 != 1:
        raise ShapeError(f"conv2d: kernel must be square with odd size, got {kh}x{kw}")
    stride, padding = int(stride), int(padding)
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"conv2d: output would be empty for input {x.shape}, kernel {kh}")

    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    s0, s1, s2 = xp.strides
    cols = as_strided(xp, shape=(c_in, h_out, w_out, kh, kw), strides=(s0, s1 * stride, s2 * stride, s1, s2))
    out = Tensor(np.einsum("cijuv,ocuv->oij", cols, kernel.data, optimize=True))

    def vjp(g):
        gk = np.einsum("cijuv,oij->ocuv", cols, g, optimize=True)
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                gxp[:, u : u + stride * h_out : stride, v : v + stride * w_out : stride] += np.einsum(
                    "oij,oc->cij", g, kernel.data[:, :, u, v], optimize=True
                )
        gx = gxp[:, padding : padding + h, padding : padding + w] if padding else gxp
        return (gx, gk)

    return _record(out, (x, kernel), vjp)


def _interp_matrix(n_in: int, factor: int) -> np.ndarray:
    """Row-interpolation matrix [n_in*factor, n_in], align-corners=false."""
    n_out = n_in * factor
    m = np.zeros((n_out, n_in))
    src = np.clip((np.arange(n_out) + 0.5) / factor - 0.5, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    t = src - i0
    m[np.arange(n_out), i0] += 1.0 - t
    m[np.arange(n_out), i1] += t
    return m


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    if x.data.ndim != 3:
        raise ShapeError(f"upsample_bilinear expects [C,h,w], got {x.shape}")
    if factor not in (2, 4, 8):
        raise ShapeError(f"upsample factor must be 2, 4 or 8, got {factor}")
    _, h, w = x.shape
    r = _interp_matrix(h, factor)
    c = _interp_matrix(w, factor)
    out = Tensor(np.einsum("ai,cij,bj->cab", r, x.data, c, optimize=True))
    return _record(out, (x,), lambda g: (np.einsum("ai,cab,bj->cij", r, g, c, optimize=True),))


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires-grad leaf."""
    if loss.data.shape != ():
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if loss.node is None:
        if loss.grad is None:
            loss.grad = np.zeros_like(loss.data)
        loss.grad += 1.0
        return

    nodes = []
    seen = set()
    stack = [loss.node]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        for p in node.parents:
            if p.node is not None:
                stack.append(p.node)
    nodes.sort(key=lambda n: n.seq, reverse=True)

    pending: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in nodes:
        g = pending.pop(id(node.out), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.node is None:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += pg
            else:
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


def zero_grads(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()
