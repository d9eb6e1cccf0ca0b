"""Dense real tensors with reverse-mode automatic differentiation.

Every differentiable primitive records a node (parents + a backward closure)
on the result tensor when any operand requires gradients.  ``backward`` walks
the recorded graph in reverse topological order and consumes it.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit as _expit

DTYPE = np.float64

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operand shapes violate a primitive's contract."""

    def __init__(self, op: str, *shapes, detail: str = ""):
        shown = ", ".join(str(tuple(s)) for s in shapes)
        msg = f"{op}: incompatible shapes {shown}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.op = op
        self.shapes = shapes


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = "leaf"
        self.name = name

    # -- metadata -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> dict:
        return backward(self)

    # -- operator sugar -------------------------------------------------
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

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def __pow__(self, p):
        if p == 2:
            return square(self)
        raise NotImplementedError("only square is supported as a power")

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def _raise_item(t):
    raise ValueError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.op = op
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    if needs:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or not sb:
        return sa
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape, detail="not broadcastable") from None


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list:
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


def backward(root: Tensor) -> dict:
    """Back-propagate from a scalar ``root``.

    Returns a map ``{leaf tensor: gradient array}`` for every leaf that
    requires gradients and is reachable from ``root``.  Leaf ``.grad``
    attributes are accumulated as well.  The graph is consumed.
    """
    if root.data.size != 1:
        raise ShapeError("backward", root.shape, detail="root must be scalar-shaped")
    if not root.requires_grad:
        return {}
    order = _topo_order(root)
    grads = {id(root): np.ones_like(root.data)}
    leaves = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            leaves[id(node)] = (node, g)
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
        node._parents = ()
        node._backward = None
    result = {}
    for node, g in leaves.values():
        g = np.asarray(g, dtype=DTYPE).reshape(node.shape)
        node.grad = g if node.grad is None else node.grad + g
        result[node] = g
    return result


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return unbroadcast(g, sa), unbroadcast(g, sb)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return unbroadcast(g, sa), unbroadcast(-g, sb)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(ad * bd, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bw(g):
        ga = unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    return _make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,), "relu")


def maximum(a, floor: float) -> Tensor:
    """Elementwise ``max(a, floor)`` with a constant floor."""
    a = as_tensor(a)
    keep = a.data > floor
    return _make(np.where(keep, a.data, floor), (a,), lambda g: (g * keep,), "maximum")


def minimum(a, b) -> Tensor:
    """Elementwise minimum of two tensors; ties route the gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("minimum", a, b)
    pick_a = a.data <= b.data
    out = np.where(pick_a, a.data, b.data)

    def bw(g):
        return unbroadcast(g * pick_a, a.shape), unbroadcast(g * ~pick_a, b.shape)

    return _make(out, (a, b), bw, "minimum")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return _make(np.asarray(out), (a,), bw, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum_(a, axes, keepdims), 1.0 / max(count, 1))


def cumsum(a, axis: int) -> Tensor:
    a = as_tensor(a)

    def bw(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return _make(np.cumsum(a.data, axis=axis), (a,), bw, "cumsum")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", src, tuple(shape)) from None
    return _make(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, detail=f"bad axes {axes}")
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, axes)


def expand_dims(a, axis: int) -> Tensor:
    a = as_tensor(a)
    return reshape(a, np.expand_dims(a.data, axis).shape)


def getitem(a, index) -> Tensor:
    """Slicing / indexing; advanced indices scatter-add in backward."""
    a = as_tensor(a)
    shape = a.shape
    try:
        out = a.data[index]
    except IndexError as exc:
        raise ShapeError("getitem", shape, detail=str(exc)) from None
    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros(shape, dtype=DTYPE)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.asarray(out, dtype=DTYPE), (a,), bw, "getitem")


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in items)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat", detail="no operands")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts[1:]:
        if t.ndim != nd or any(t.shape[i] != ts[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError("concat", *[t.shape for t in ts], detail=f"axis={axis}")
    sizes = [t.shape[ax] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        out = []
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if not t.requires_grad:
                out.append(None)
                continue
            sl = [slice(None)] * nd
            sl[ax] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return tuple(out)

    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, bw, "concat")


def stack(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    return concat([expand_dims(t, axis) for t in ts], axis=axis)


def split(a, sizes: Sequence[int], axis: int = -1) -> list:
    a = as_tensor(a)
    ax = axis % a.ndim
    if sum(sizes) != a.shape[ax]:
        raise ShapeError("split", a.shape, detail=f"sizes {list(sizes)} along axis {axis}")
    out, lo = [], 0
    for s in sizes:
        sl = [slice(None)] * a.ndim
        sl[ax] = slice(lo, lo + s)
        out.append(getitem(a, tuple(sl)))
        lo += s
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul", a.shape, b.shape, detail="operands need rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape, detail="inner dimensions differ")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise ShapeError("matmul", a.shape, b.shape,
                             detail="batch dims not broadcastable") from None
    ad, bd = a.data, b.data

    def bw(g):
        ga = unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return _make(ad @ bd, (a, b), bw, "matmul")


# ---------------------------------------------------------------------------
# fused normalisation / activation primitives
# ---------------------------------------------------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw, "softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError("layer_norm", x.shape, gain.shape, bias.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data

    def bw(g):
        gx = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        gg = unbroadcast(g * xhat, gd.shape) if gain.requires_grad else None
        gb = unbroadcast(g, gd.shape) if bias.requires_grad else None
        return gx, gg, gb

    return _make(xhat * gd + bias.data, (x, gain, bias), bw, "layer_norm")


def depthwise_conv1d(x, weight, bias=None, padding: str = "zero") -> Tensor:
    """Per-feature 1-D convolution along time with 'same' output length.

    ``x`` is ``(..., T, D)``, ``weight`` is ``(K, D)`` with odd ``K``.
    Output ``y[t, d] = sum_k w[k, d] * x[t + k - K//2, d] (+ b[d])``; frames
    outside ``[0, T)`` are zero (``padding="zero"``) or repeat the nearest edge
    frame (``padding="edge"``).
    """
    x, weight = as_tensor(x), as_tensor(weight)
    k, d = weight.shape
    if x.shape[-1] != d or k % 2 == 0:
        raise ShapeError("depthwise_conv1d", x.shape, weight.shape,
                         detail="need x[..., D] and odd kernel (K, D)")
    if padding not in ("zero", "edge"):
        raise ValueError(f"unknown padding {padding!r}")
    half = k // 2
    t = x.shape[-2]
    pad = [(0, 0)] * (x.ndim - 2) + [(half, half), (0, 0)]
    xp = np.pad(x.data, pad, mode="constant" if padding == "zero" else "edge")
    wd = weight.data
    out = xp[..., 0:t, :] * wd[0]
    for j in range(1, k):
        out += xp[..., j:j + t, :] * wd[j]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def bw(g):
        gx = gw = gb = None
        if x.requires_grad:
            gxp = np.zeros(xp.shape, dtype=DTYPE)
            for j in range(k):
                gxp[..., j:j + t, :] += g * wd[j]
            gx = gxp[..., half:half + t, :].copy()
            if padding == "edge":
                gx[..., 0, :] += gxp[..., :half, :].sum(axis=-2)
                gx[..., -1, :] += gxp[..., half + t:, :].sum(axis=-2)
        if weight.requires_grad:
            g2 = g.reshape(-1, t, d)
            x2 = xp.reshape(-1, t + 2 * half, d)
            gw = np.stack([np.einsum("ntd,ntd->d", x2[:, j:j + t], g2) for j in range(k)])
        if bias is not None and bias.requires_grad:
            gb = g.reshape(-1, d).sum(axis=0)
        return (gx, gw, gb) if bias is not None else (gx, gw)

    return _make(out, parents, bw, "depthwise_conv1d")


def gru_sequence(x, h0, w_ih, w_hh, b_ih, b_hh) -> Tensor:
    """Run a GRU over a whole sequence as one recorded primitive.

    ``x`` is ``(L, T, I)`` for ``L`` independent lanes, ``h0`` is ``(L, H)``.
    Gate layout along the ``3H`` axis is ``[reset, update, candidate]``::

        r = sigma(x W_ir + b_ir + h W_hr + b_hr)
        z = sigma(x W_iz + b_iz + h W_hz + b_hz)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h

    Returns the hidden states ``(L, T, H)``.
    """
    x, h0 = as_tensor(x), as_tensor(h0)
    w_ih, w_hh, b_ih, b_hh = map(as_tensor, (w_ih, w_hh, b_ih, b_hh))
    lanes, steps, width = x.shape
    hidden = w_hh.shape[0]
    if (w_ih.shape != (width, 3 * hidden) or w_hh.shape != (hidden, 3 * hidden)
            or h0.shape != (lanes, hidden) or b_ih.shape != (3 * hidden,)
            or b_hh.shape != (3 * hidden,)):
        raise ShapeError("gru_sequence", x.shape, h0.shape, w_ih.shape, w_hh.shape,
                         b_ih.shape, b_hh.shape)
    H = hidden
    Wih, Whh, bhh = w_ih.data, w_hh.data, b_hh.data
    xs = np.ascontiguousarray(x.data.transpose(1, 0, 2))           # (T, L, I)
    gi = xs @ Wih + b_ih.data                                        # (T, L, 3H)
    gi[..., :2 * H] += bhh[:2 * H]                                   # r/z recurrent biases fold in
    bhn = bhh[2 * H:]
    hs = np.empty((steps + 1, lanes, H), dtype=DTYPE)
    rz = np.empty((steps, lanes, 2 * H), dtype=DTYPE)
    ns = np.empty((steps, lanes, H), dtype=DTYPE)
    hn = np.empty((steps, lanes, H), dtype=DTYPE)
    hs[0] = h0.data
    for t in range(steps):
        h = hs[t]
        gh = h @ Whh
        r_z = rz[t]
        np.add(gi[t, :, :2 * H], gh[:, :2 * H], out=r_z)
        _expit(r_z, out=r_z)
        np.add(gh[:, 2 * H:], bhn, out=hn[t])
        n = ns[t]
        np.multiply(r_z[:, :H], hn[t], out=n)
        n += gi[t, :, 2 * H:]
        np.tanh(n, out=n)
        nxt = hs[t + 1]
        np.subtract(h, n, out=nxt)
        nxt *= r_z[:, H:]
        nxt += n
    out = np.ascontiguousarray(hs[1:].transpose(1, 0, 2))

    def bw(g):
        g = g.transpose(1, 0, 2)                                     # (T, L, H)
        dgi = np.empty((steps, lanes, 3 * H), dtype=DTYPE)
        dgh = np.empty((steps, lanes, 3 * H), dtype=DTYPE)
        dh = np.zeros((lanes, H), dtype=DTYPE)
        omz = np.empty((lanes, H), dtype=DTYPE)
        dn = np.empty((lanes, H), dtype=DTYPE)
        WhhT = Whh.T
        for t in range(steps - 1, -1, -1):
            dh += g[t]
            h, n = hs[t], ns[t]
            r, z = rz[t, :, :H], rz[t, :, H:]
            np.subtract(1.0, z, out=omz)
            np.multiply(dh, omz, out=dn)
            dar, daz, dan = dgi[t, :, :H], dgi[t, :, H:2 * H], dgi[t, :, 2 * H:]
            np.multiply(n, n, out=dan)
            np.subtract(1.0, dan, out=dan)
            dan *= dn
            np.multiply(dan, hn[t], out=dar)
            dar *= r
            np.subtract(1.0, r, out=dn)
            dar *= dn
            np.subtract(h, n, out=daz)
            daz *= dh
            daz *= z
            daz *= omz
            dgh[t, :, :2 * H] = dgi[t, :, :2 * H]
            np.multiply(dan, r, out=dgh[t, :, 2 * H:])
            dh *= z
            dh += dgh[t] @ WhhT
        gx = (dgi @ Wih.T).transpose(1, 0, 2) if x.requires_grad else None
        flat_gi = dgi.reshape(-1, 3 * H)
        flat_gh = dgh.reshape(-1, 3 * H)
        gwih = xs.reshape(-1, width).T @ flat_gi if w_ih.requires_grad else None
        gwhh = hs[:-1].reshape(-1, H).T @ flat_gh if w_hh.requires_grad else None
        gbih = flat_gi.sum(axis=0) if b_ih.requires_grad else None
        gbhh = flat_gh.sum(axis=0) if b_hh.requires_grad else None
        return gx, dh, gwih, gwhh, gbih, gbhh

    return _make(out, (x, h0, w_ih, w_hh, b_ih, b_hh), bw, "gru_sequence")
