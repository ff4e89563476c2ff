"""Reverse-mode autodiff over 4-D numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced.  Calling
``backward()`` on a scalar loss walks the recorded graph in reverse
topological order and accumulates d(loss)/d(node) into ``.grad``.
Gradients sum across fan-out, so weight sharing (the same parameter used
by several branches) needs no special handling.

Only the operations the decomposition network needs are provided.  The
heavy one is ``conv2d``; its stride-1 path packs input patches into
column blocks a few output rows at a time and hands them to BLAS, which
is what makes CPU training and inference tolerable.  All ops preserve
the input dtype: float32 is the working precision, float64 goes through
unchanged so finite-difference checks can run at full precision.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericError, ShapeError

__all__ = [
    "Tensor", "ConvParams", "ShapeError", "NumericError", "no_grad",
    "grad_enabled", "conv2d", "leaky_relu", "relu", "tanh",
    "upsample_nearest", "avg_pool", "box_mean", "mean", "spatial_mean",
    "mse", "square", "collect_parameters",
]

_GRAD_STACK = [True]


def grad_enabled() -> bool:
    return _GRAD_STACK[-1]


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference mode)."""
    _GRAD_STACK.append(False)
    try:
        yield
    finally:
        _GRAD_STACK.pop()


class Tensor:
    """An ndarray plus optional gradient tape bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable[[np.ndarray], None] | None = None

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...],
                backward_fn: Callable[[np.ndarray], None] | None) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        if backward_fn is not None and grad_enabled() and any(
                p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # -- inspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return self.data.item()

    def __repr__(self) -> str:
        flags = []
        if self.requires_grad:
            flags.append("requires_grad")
        extra = ", " + ",".join(flags) if flags else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{extra})"

    # -- graph --------------------------------------------------------------

    def detach(self) -> "Tensor":
        """Same values, cut off from the tape."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p._backward_fn is not None or p.requires_grad:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def _binary_operand(self, other: "Tensor") -> "Tensor":
        if other.data.shape != self.data.shape:
            raise ShapeError(
                f"shape mismatch {self.data.shape} vs {other.data.shape}")
        return other

    def __add__(self, other) -> "Tensor":
        if not isinstance(other, Tensor):
            a = self
            c = float(other)
            out = Tensor._result(a.data + c, (a,),
                                 lambda g, a=a: _accumulate(a, g))
            return out
        b = self._binary_operand(other)
        a = self

        def backward(g, a=a, b=b):
            _accumulate(a, g)
            _accumulate(b, g)

        return Tensor._result(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        if not isinstance(other, Tensor):
            return self.__add__(-float(other))
        b = self._binary_operand(other)
        a = self

        def backward(g, a=a, b=b):
            _accumulate(a, g)
            _accumulate(b, -g)

        return Tensor._result(a.data - b.data, (a, b), backward)

    def __rsub__(self, other) -> "Tensor":
        return (-self).__add__(float(other))

    def __neg__(self) -> "Tensor":
        a = self
        return Tensor._result(-a.data, (a,), lambda g, a=a: _accumulate(a, -g))

    def __mul__(self, other) -> "Tensor":
        a = self
        if not isinstance(other, Tensor):
            c = float(other)
            return Tensor._result(a.data * c, (a,),
                                  lambda g, a=a, c=c: _accumulate(a, g * c))
        b = self._binary_operand(other)

        def backward(g, a=a, b=b):
            _accumulate(a, g * b.data)
            _accumulate(b, g * a.data)

        return Tensor._result(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if not isinstance(other, Tensor):
            return self.__mul__(1.0 / float(other))
        b = self._binary_operand(other)
        a = self

        def backward(g, a=a, b=b):
            _accumulate(a, g / b.data)
            _accumulate(b, -g * a.data / (b.data * b.data))

        return Tensor._result(a.data / b.data, (a, b), backward)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._backward_fn is not None):
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# -- convolution ------------------------------------------------------------

_CHUNK_ROWS = 8  # output rows packed per GEMM call on the stride-1 path


class ConvParams:
    """Weights of one conv layer: weight (out,in,k,k) and bias (out,).

    Kernel size is 1 or 3 and padding is fixed at (k-1)//2 so stride-1
    layers preserve spatial size.
    """

    def __init__(self, weight: Tensor, bias: Tensor, stride: int = 1):
        if weight.data.ndim != 4 or weight.data.shape[2] != weight.data.shape[3]:
            raise ShapeError(f"weight must be (out,in,k,k), got {weight.shape}")
        k = weight.data.shape[2]
        if k not in (1, 3):
            raise ValueError(f"kernel size must be 1 or 3, got {k}")
        if stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {stride}")
        if bias.data.shape != (weight.data.shape[0],):
            raise ShapeError(
                f"bias shape {bias.shape} does not match {weight.data.shape[0]} filters")
        self.weight = weight
        self.bias = bias
        self.stride = stride
        self.padding = (k - 1) // 2

    @property
    def kernel_size(self) -> int:
        return self.weight.data.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weight.data.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.data.shape[0]

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def _pad2d(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    out[:, :, p:p + h, p:p + w] = x
    return out


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int, p: int) -> np.ndarray:
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * p - kh) // stride + 1
    wo = (wd + 2 * p - kw) // stride + 1
    xp = _pad2d(x, p)
    out = np.empty((n, o, ho, wo), dtype=x.dtype)
    if stride == 1 and kh == 1:
        wm = np.ascontiguousarray(w.reshape(o, c))
        for b in range(n):
            np.matmul(wm, xp[b].reshape(c, ho * wo), out=out[b].reshape(o, ho * wo))
        return out
    if stride == 1:
        # Column rows are ordered (dy, dx, channel); the weight matrix is
        # rearranged once to match.
        wm = np.ascontiguousarray(w.transpose(2, 3, 1, 0).reshape(kh * kw * c, o).T)
        col = np.empty((kh * kw * c, _CHUNK_ROWS * wo), dtype=x.dtype)
        for b in range(n):
            for y0 in range(0, ho, _CHUNK_ROWS):
                y1 = min(y0 + _CHUNK_ROWS, ho)
                m = (y1 - y0) * wo
                idx = 0
                for dy in range(kh):
                    for dx in range(kw):
                        col[idx * c:(idx + 1) * c, :m] = \
                            xp[b, :, y0 + dy:y1 + dy, dx:dx + wo].reshape(c, m)
                        idx += 1
                np.matmul(wm, col[:, :m], out=out[b, :, y0:y1, :].reshape(o, m))
        return out
    # Strided path: one small GEMM per kernel offset.  Only the semantic
    # head and the discriminator stride here, so sizes stay modest.
    out.fill(0.0)
    flat = out.reshape(n, o, ho * wo)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride]
            wm = np.ascontiguousarray(w[:, :, dy, dx])
            for b in range(n):
                flat[b] += wm @ patch[b].reshape(c, ho * wo)
    return out


def _conv_backward_input(g: np.ndarray, w: np.ndarray, stride: int, p: int,
                         in_shape: tuple[int, ...]) -> np.ndarray:
    n, c, h, wd = in_shape
    o, _, kh, kw = w.shape
    if stride == 1:
        # Correlation with the spatially flipped, channel-transposed kernel;
        # the padding that preserves size going forward also fits here.
        wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        return _conv_forward(g, wt, 1, p)
    ho, wo = g.shape[2], g.shape[3]
    gxp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=g.dtype)
    for dy in range(kh):
        for dx in range(kw):
            wm = np.ascontiguousarray(w[:, :, dy, dx].T)
            target = gxp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride]
            for b in range(n):
                target[b] += (wm @ g[b].reshape(o, ho * wo)).reshape(c, ho, wo)
    if p == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, p:p + h, p:p + wd])


def _conv_backward_weight(g: np.ndarray, xp: np.ndarray, stride: int,
                          w_shape: tuple[int, ...]) -> np.ndarray:
    o, c, kh, kw = w_shape
    n = g.shape[0]
    ho, wo = g.shape[2], g.shape[3]
    if stride == 1 and kh == 1:
        dw = np.zeros((o, c), dtype=g.dtype)
        for b in range(n):
            dw += g[b].reshape(o, ho * wo) @ xp[b].reshape(c, ho * wo).T
        return dw.reshape(o, c, 1, 1)
    if stride == 1:
        dwm = np.zeros((o, kh * kw * c), dtype=g.dtype)
        col = np.empty((kh * kw * c, _CHUNK_ROWS * wo), dtype=g.dtype)
        for b in range(n):
            for y0 in range(0, ho, _CHUNK_ROWS):
                y1 = min(y0 + _CHUNK_ROWS, ho)
                m = (y1 - y0) * wo
                idx = 0
                for dy in range(kh):
                    for dx in range(kw):
                        col[idx * c:(idx + 1) * c, :m] = \
                            xp[b, :, y0 + dy:y1 + dy, dx:dx + wo].reshape(c, m)
                        idx += 1
                dwm += g[b, :, y0:y1, :].reshape(o, m) @ col[:, :m].T
        return np.ascontiguousarray(
            dwm.reshape(o, kh, kw, c).transpose(0, 3, 1, 2))
    dw = np.zeros((o, c, kh, kw), dtype=g.dtype)
    for dy in range(kh):
        for dx in range(kw):
            patch = xp[:, :, dy:dy + stride * ho:stride, dx:dx + stride * wo:stride]
            acc = dw[:, :, dy, dx]
            for b in range(n):
                acc += g[b].reshape(o, ho * wo) @ patch[b].reshape(c, ho * wo).T
    return dw


def conv2d(x: Tensor, params: ConvParams) -> Tensor:
    """2-D cross-correlation with zero padding plus per-channel bias."""
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d input must be 4-D, got {x.shape}")
    if x.data.shape[1] != params.in_channels:
        raise ShapeError(
            f"conv2d expected {params.in_channels} input channels, got {x.data.shape[1]}")
    k, s, p = params.kernel_size, params.stride, params.padding
    n, c, h, wd = x.data.shape
    ho = (h + 2 * p - k) // s + 1
    wo = (wd + 2 * p - k) // s + 1
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"conv2d output would be {ho}x{wo} for input {h}x{wd}, k={k}, stride={s}")
    w, bias = params.weight, params.bias
    y = _conv_forward(x.data, w.data, s, p)
    y += bias.data.reshape(1, -1, 1, 1)
    record = grad_enabled() and (x.requires_grad or w.requires_grad
                                 or bias.requires_grad)
    if not record:
        return Tensor._result(y, (), None)
    xp = _pad2d(x.data, p)

    def backward(g, x=x, w=w, bias=bias, xp=xp, s=s, p=p):
        if x.requires_grad or x._backward_fn is not None:
            _accumulate(x, _conv_backward_input(g, w.data, s, p, x.data.shape))
        if w.requires_grad or w._backward_fn is not None:
            _accumulate(w, _conv_backward_weight(g, xp, s, w.data.shape))
        if bias.requires_grad or bias._backward_fn is not None:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return Tensor._result(y, (x, w, bias), backward)


# -- pointwise activations --------------------------------------------------

def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    a = x
    y = np.where(a.data > 0, a.data, a.data * a.dtype.type(slope))

    def backward(g, a=a, slope=slope):
        _accumulate(a, np.where(a.data > 0, g, g * a.dtype.type(slope)))

    return Tensor._result(y, (a,), backward)


def relu(x: Tensor) -> Tensor:
    a = x
    y = np.maximum(a.data, 0)

    def backward(g, a=a):
        _accumulate(a, np.where(a.data > 0, g, 0))

    return Tensor._result(y, (a,), backward)


def tanh(x: Tensor) -> Tensor:
    a = x
    y = np.tanh(a.data)

    def backward(g, a=a, y=y):
        _accumulate(a, g * (1.0 - y * y))

    return Tensor._result(y, (a,), backward)


# -- resampling -------------------------------------------------------------

def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    """Repeat each pixel factor x factor times along both spatial axes."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_nearest input must be 4-D, got {x.shape}")
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    a = x
    n, c, h, w = a.data.shape
    y = a.data.repeat(factor, axis=2).repeat(factor, axis=3)

    def backward(g, a=a, f=factor):
        n, c, h, w = a.data.shape
        _accumulate(a, g.reshape(n, c, h, f, w, f).sum(axis=(3, 5)))

    return Tensor._result(y, (a,), backward)


def avg_pool(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping factor x factor box average; spatial dims must divide."""
    if x.data.ndim != 4:
        raise ShapeError(f"avg_pool input must be 4-D, got {x.shape}")
    n, c, h, w = x.data.shape
    if h % factor or w % factor:
        raise ShapeError(
            f"avg_pool factor {factor} does not divide spatial size {h}x{w}")
    a = x
    y = a.data.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))

    def backward(g, a=a, f=factor):
        scale = a.dtype.type(1.0 / (f * f))
        _accumulate(a, (g * scale).repeat(f, axis=2).repeat(f, axis=3))

    return Tensor._result(y, (a,), backward)


# -- sliding box mean (SSIM building block) ---------------------------------

def _sliding_sum(a: np.ndarray, win: int) -> np.ndarray:
    """Sum over every win x win window, stride 1, valid positions only."""
    s = sliding_window_view(a, win, axis=2).sum(axis=-1)
    return sliding_window_view(s, win, axis=3).sum(axis=-1)


def box_mean(x: Tensor, win: int) -> Tensor:
    """Mean over every win x win window (stride 1, no padding)."""
    if x.data.ndim != 4:
        raise ShapeError(f"box_mean input must be 4-D, got {x.shape}")
    n, c, h, w = x.data.shape
    if h < win or w < win:
        raise ShapeError(f"box_mean window {win} exceeds input {h}x{w}")
    a = x
    inv = a.dtype.type(1.0 / (win * win))
    y = _sliding_sum(a.data, win) * inv

    def backward(g, a=a, win=win, inv=inv):
        # d/dx of a window mean spreads uniformly; summing g over every
        # window that touches a pixel is a correlation with a ones kernel,
        # done as a sliding sum over g padded by win-1 on each side.
        n, c, h, w = a.data.shape
        gp = np.zeros((n, c, h + win - 1, w + win - 1), dtype=g.dtype)
        gp[:, :, win - 1:win - 1 + g.shape[2], win - 1:win - 1 + g.shape[3]] = g
        _accumulate(a, _sliding_sum(gp, win) * inv)

    return Tensor._result(y, (a,), backward)


# -- reductions -------------------------------------------------------------

def mean(x: Tensor) -> Tensor:
    """Mean over all elements, returned as a scalar Tensor."""
    a = x
    y = np.asarray(a.data.mean(), dtype=a.dtype)

    def backward(g, a=a):
        _accumulate(a, np.full_like(a.data, g * (1.0 / a.data.size)))

    return Tensor._result(y, (a,), backward)


def spatial_mean(x: Tensor) -> Tensor:
    """Mean over the two spatial axes, keeping (n, c, 1, 1)."""
    if x.data.ndim != 4:
        raise ShapeError(f"spatial_mean input must be 4-D, got {x.shape}")
    a = x
    y = a.data.mean(axis=(2, 3), keepdims=True)

    def backward(g, a=a):
        h, w = a.data.shape[2], a.data.shape[3]
        _accumulate(a, g * (1.0 / (h * w)))

    return Tensor._result(y, (a,), backward)


def mse(x: Tensor, y: Tensor) -> Tensor:
    """Mean squared difference over all elements."""
    if x.data.shape != y.data.shape:
        raise ShapeError(f"mse shape mismatch {x.shape} vs {y.shape}")
    a, b = x, y
    d = a.data - b.data
    val = np.asarray((d * d).mean(), dtype=a.dtype)

    def backward(g, a=a, b=b, d=d):
        scale = g * (2.0 / d.size)
        _accumulate(a, d * scale)
        _accumulate(b, d * (-scale))

    return Tensor._result(val, (a, b), backward)


def square(x: Tensor) -> Tensor:
    a = x

    def backward(g, a=a):
        _accumulate(a, g * (2.0 * a.data))

    return Tensor._result(a.data * a.data, (a,), backward)


def collect_parameters(modules: Sequence) -> list[Tensor]:
    """Flatten .parameters() of each module into one ordered list."""
    out: list[Tensor] = []
    for m in modules:
        out.extend(m.parameters())
    return out
