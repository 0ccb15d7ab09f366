"""N-dimensional tensors with reverse-mode automatic differentiation.

Every operation the generators and discriminators need is defined here:
2d convolution (via im2col matmuls), its transpose, instance normalization,
reflection padding, the usual activations, elementwise arithmetic and the
L1/mean reductions the losses are built from. Gradients flow through an
implicit graph of creator links; ``backward`` topologically orders it and
walks it once.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class GraphError(RuntimeError):
    """The differentiation graph was used incorrectly (e.g. backward from a non-scalar)."""


_node_counter = itertools.count(1)


class _GradMode(threading.local):
    enabled = True


_grad_mode = _GradMode()


@contextmanager
def no_grad():
    """Disable graph construction inside the block (inference mode)."""
    prev = _grad_mode.enabled
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


def grad_enabled() -> bool:
    return _grad_mode.enabled


class Tensor:
    """A numpy array plus an optional gradient and a creator link.

    ``data`` is float32 by default; float64 is used for gradient checking.
    Leaf tensors with ``requires_grad=True`` (parameters, or inputs under
    test) receive gradients in ``grad`` after ``backward``.
    """

    __slots__ = ("data", "grad", "requires_grad", "node_id", "op", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None, op: str = "leaf"):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_counter)
        self.op = op
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A leaf view of the same data, cut off from the graph."""
        return Tensor(self.data, requires_grad=False, op="leaf")

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self.op!r})"

    # Arithmetic sugar; floats/ints become constant tensors.
    def __add__(self, other):
        return add(self, _wrap(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        return mul(self, _wrap(other, self))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, _wrap(-1.0, self))


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.data.dtype))


def _result(data: np.ndarray, parents, op: str, backward_fn) -> Tensor:
    """Build an op result; record creator links only when a grad is wanted."""
    needs = _grad_mode.enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, op=op)
    if needs:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise ops and reductions
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(data, (a, b), "add", backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(data, (a, b), "sub", backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), "mul", backward_fn)


def tsum(a: Tensor) -> Tensor:
    data = a.data.sum()

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.shape).astype(a.data.dtype))

    return _result(data, (a,), "sum", backward_fn)


def tmean(a: Tensor) -> Tensor:
    n = a.data.size
    data = a.data.mean()

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g / n, a.shape).astype(a.data.dtype))

    return _result(data, (a,), "mean", backward_fn)


def l1_mean(a: Tensor, b: Tensor) -> Tensor:
    """Mean over all elements of |a - b|; subgradient 0 where a == b."""
    if a.shape != b.shape:
        raise ShapeError(f"l1_mean shapes differ: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size
    data = np.abs(diff).mean()

    def backward_fn(g):
        s = np.sign(diff) * (g / n)
        if a.requires_grad:
            a._accumulate(s.astype(a.data.dtype))
        if b.requires_grad:
            b._accumulate((-s).astype(b.data.dtype))

    return _result(data, (a, b), "l1_mean", backward_fn)


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    data = np.where(mask, a.data, 0).astype(a.data.dtype)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.where(mask, g, 0).astype(a.data.dtype))

    return _result(data, (a,), "relu", backward_fn)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0,1), got {slope}")
    mask = a.data > 0
    data = np.where(mask, a.data, slope * a.data).astype(a.data.dtype)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(np.where(mask, g, slope * g).astype(a.data.dtype))

    return _result(data, (a,), "leaky_relu", backward_fn)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate((g * (1.0 - t * t)).astype(a.data.dtype))

    return _result(t, (a,), "tanh", backward_fn)


def activation(a: Tensor, kind: str, slope: float = 0.2) -> Tensor:
    """Dispatch on an activation name: relu | leaky_relu | tanh | none."""
    if kind == "relu":
        return relu(a)
    if kind == "leaky_relu":
        return leaky_relu(a, slope)
    if kind == "tanh":
        return tanh(a)
    if kind == "none":
        return a
    raise ValueError(f"unknown activation kind {kind!r}")


# ---------------------------------------------------------------------------
# Padding
# ---------------------------------------------------------------------------

def _reflect_indices(n: int, pad: int) -> np.ndarray:
    idx = np.arange(-pad, n + pad)
    idx = np.where(idx < 0, -idx, idx)
    idx = np.where(idx >= n, 2 * n - 2 - idx, idx)
    return idx


def reflection_pad(a: Tensor, pad: int) -> Tensor:
    """Mirror the border without repeating the edge element."""
    if pad == 0:
        return a
    if a.data.ndim != 4:
        raise ShapeError(f"reflection_pad expects NCHW, got shape {a.shape}")
    n, c, h, w = a.shape
    if pad >= min(h, w):
        raise ShapeError(f"pad {pad} too large for spatial dims {h}x{w}")
    ih = _reflect_indices(h, pad)
    iw = _reflect_indices(w, pad)
    data = a.data[:, :, ih[:, None], iw[None, :]]

    def backward_fn(g):
        if a.requires_grad:
            gx = np.zeros_like(a.data)
            np.add.at(gx, (slice(None), slice(None), ih[:, None], iw[None, :]), g)
            a._accumulate(gx)

    return _result(data, (a,), "reflection_pad", backward_fn)


# ---------------------------------------------------------------------------
# Convolutions (im2col)
# ---------------------------------------------------------------------------

def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """[N,C,Hp,Wp] -> [N, C*kh*kw, Ho*Wo] patch matrix."""
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, xp_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patches back into [N,C,Hp,Wp]."""
    n, c, hp, wp = xp_shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    xp = np.zeros(xp_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, :, i, j]
    return xp


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlating 2d convolution over NCHW input, zero padding.

    kernel: [K, C, kh, kw], bias: [K]. Output spatial size follows
    floor((H + 2*padding - kh)/stride) + 1.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input and KCkhkw kernel, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    k, ck, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"kernel expects {ck} input channels, input has {c}")
    if bias.shape != (k,):
        raise ShapeError(f"bias shape {bias.shape} does not match {k} filters")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    ho = (xp.shape[2] - kh) // stride + 1
    wo = (xp.shape[3] - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride)
    wmat = kernel.data.reshape(k, -1)
    out = np.matmul(wmat, cols).reshape(n, k, ho, wo)
    out += bias.data.reshape(1, k, 1, 1)

    def backward_fn(g):
        gmat = g.reshape(n, k, ho * wo)
        if kernel.requires_grad:
            gw = np.tensordot(gmat, cols, axes=([0, 2], [0, 2]))
            kernel._accumulate(gw.reshape(kernel.shape))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gcols = np.matmul(wmat.T, gmat)
            gxp = _col2im(gcols, xp.shape, kh, kw, stride)
            if padding:
                gxp = gxp[:, :, padding : padding + h, padding : padding + w]
            x._accumulate(gxp)

    return _result(out, (x, kernel, bias), "conv2d", backward_fn)


def transposed_conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    stride: int = 2,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Adjoint of conv2d; upsamples by `stride`.

    kernel: [C_in, C_out, kh, kw]. Output spatial size is
    (H-1)*stride - 2*padding + kh + output_padding. For matched
    (kernel, stride, padding), <conv2d(x,k), y> == <x, transposed_conv2d(y,k)>.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"transposed_conv2d expects NCHW input, got {x.shape} and {kernel.shape}")
    n, c, h, w = x.shape
    ck, k, kh, kw = kernel.shape
    if ck != c:
        raise ShapeError(f"kernel expects {ck} input channels, input has {c}")
    if bias.shape != (k,):
        raise ShapeError(f"bias shape {bias.shape} does not match {k} output channels")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if not 0 <= output_padding < stride:
        raise ValueError(f"output_padding must lie in [0, stride), got {output_padding} with stride {stride}")

    hp = (h - 1) * stride + kh + output_padding
    wp = (w - 1) * stride + kw + output_padding
    ho = hp - 2 * padding
    wo = wp - 2 * padding
    if ho < 1 or wo < 1:
        raise ShapeError(f"padding {padding} leaves no output for input {h}x{w}")

    wmat = kernel.data.reshape(c, k * kh * kw)
    xmat = x.data.reshape(n, c, h * w)
    cols = np.matmul(wmat.T, xmat)
    outp = _col2im(cols, (n, k, hp, wp), kh, kw, stride)
    if padding:
        out = outp[:, :, padding : padding + ho, padding : padding + wo].copy()
    else:
        out = outp
    out += bias.data.reshape(1, k, 1, 1)

    def backward_fn(g):
        if padding:
            gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        else:
            gp = g
        gcols = _im2col(gp, kh, kw, stride)
        if x.requires_grad:
            gx = np.matmul(wmat, gcols)
            x._accumulate(gx.reshape(x.shape))
        if kernel.requires_grad:
            gw = np.tensordot(xmat, gcols, axes=([0, 2], [0, 2]))
            kernel._accumulate(gw.reshape(kernel.shape))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return _result(out, (x, kernel, bias), "transposed_conv2d", backward_fn)


# ---------------------------------------------------------------------------
# Instance normalization
# ---------------------------------------------------------------------------

def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) normalization over H*W, population variance."""
    if x.data.ndim != 4:
        raise ShapeError(f"instance_norm expects NCHW, got {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"gamma/beta must have shape ({c},), got {gamma.shape} and {beta.shape}")
    m = h * w
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)

    def backward_fn(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(1, c, 1, 1)
            s1 = dxhat.sum(axis=(2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(2, 3), keepdims=True)
            gx = (inv / m) * (m * dxhat - s1 - xhat * s2)
            x._accumulate(gx.astype(x.data.dtype))

    return _result(out.astype(x.data.dtype), (x, gamma, beta), "instance_norm", backward_fn)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(loss: Tensor):
    """Populate grads of every reachable tensor from a scalar loss.

    Grads accumulate additively, both across consumers within one graph
    and across repeated backward calls (zero grads between steps).
    """
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.shape}")

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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward_fn is not None:
            node._backward_fn(node.grad)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def gradient_check(fn, inputs, eps: float = 1e-5) -> float:
    """Max relative error between backward grads and central differences.

    `fn` maps tensors to a scalar Tensor; `inputs` are arrays (promoted to
    float64 leaf tensors). Relative error per element is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    """
    tensors = [Tensor(np.asarray(a, dtype=np.float64), requires_grad=True) for a in inputs]
    out = fn(*tensors)
    if out.data.size != 1:
        raise GraphError("gradient_check closure must return a scalar")
    backward(out)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    max_err = 0.0
    with no_grad():
        for t, ana in zip(tensors, analytic):
            flat = t.data.reshape(-1)
            ana_flat = ana.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = fn(*tensors).item()
                flat[i] = orig - eps
                f_minus = fn(*tensors).item()
                flat[i] = orig
                num = (f_plus - f_minus) / (2.0 * eps)
                denom = max(abs(ana_flat[i]), abs(num), 1e-6)
                err = abs(ana_flat[i] - num) / denom
                if err > max_err:
                    max_err = err
    return max_err
