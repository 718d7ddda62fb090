"""Reverse-mode automatic differentiation over float64 numpy arrays.

Only the primitives needed by the unrolled network and its loss are provided.
Each operation records its inputs and a closure computing input gradients
from the output gradient; :meth:`Tensor.backward` replays these closures in
reverse topological order.

Example::

    x = Tensor(np.random.randn(1, 2, 8, 8), requires_grad=True)
    k = Tensor(np.random.randn(4, 2, 3, 3), requires_grad=True)
    y = leaky_relu(conv2d(x, k, padding=1), 0.1)
    y.sum().backward()
    x.grad.shape  # (1, 2, 8, 8)
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import PreconditionError

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Run forward computations without recording a graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_tensor(value) -> "Tensor":
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """A dense float64 array that can take part in a recorded graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    # make ndarray <op> Tensor defer to the Tensor's reflected operator
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``grad`` of every reachable leaf.

        Gradients are summed into existing buffers, so calling this twice
        without zeroing doubles them.
        """
        if self.data.size != 1:
            raise PreconditionError(f"backward() needs a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# elementwise ---------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), backward)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)

    return _make(out, (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data**exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _make(out, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(out > 0, 0.5 / out, 0.0)
        return (g * d,)

    return _make(out, (a,), backward)


def tabs(a: Tensor) -> Tensor:
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) with zero gradient where clamped."""
    keep = a.data > floor
    return _make(np.where(keep, a.data, floor), (a,), lambda g: (g * keep,))


def magnitude(re: Tensor, im: Tensor) -> Tensor:
    """Pointwise sqrt(re**2 + im**2); gradient is taken as 0 at the origin."""
    out = np.sqrt(re.data * re.data + im.data * im.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(out > 0, 1.0 / out, 0.0)
        return g * re.data * inv, g * im.data * inv

    return _make(out, (re, im), backward)


def leaky_relu(a: Tensor, slope: float) -> Tensor:
    pos = a.data > 0
    out = np.where(pos, a.data, slope * a.data)
    return _make(out, (a,), lambda g: (np.where(pos, g, slope * g),))


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out = np.logaddexp(0.0, x)
    sig = np.exp(-np.logaddexp(0.0, -x))
    return _make(out, (a,), lambda g: (g * sig,))


def soft_threshold(a: Tensor, threshold: Tensor) -> Tensor:
    """sign(v) * max(|v| - lam, 0), with ``threshold`` broadcast against ``a``.

    A 1-D threshold of length C against an (N, C, H, W) input is applied per
    channel. The subgradient inside the dead zone is zero for both arguments.
    """
    threshold = _as_tensor(threshold)
    lam = threshold.data
    if np.any(lam < 0):
        raise PreconditionError("soft_threshold requires a non-negative threshold")
    if a.ndim == 4 and lam.ndim == 1:
        lam = lam.reshape(1, -1, 1, 1)
    sign = np.sign(a.data)
    shrunk = np.abs(a.data) - lam
    live = shrunk > 0
    out = np.where(live, sign * shrunk, 0.0)
    tshape = threshold.shape

    def backward(g):
        gl = live * g
        glam = -sign * gl
        if a.ndim == 4 and len(tshape) == 1:
            glam = glam.sum(axis=(0, 2, 3))
        else:
            glam = _unbroadcast(glam, tshape)
        return gl, glam

    return _make(out, (a, threshold), backward)


# reductions and shape ------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size // np.asarray(out).size

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return _make(np.asarray(out), (a,), backward)


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, slice)) or i is Ellipsis or i is None for i in items)


def getitem(a: Tensor, index) -> Tensor:
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.asarray(a.data[index]), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


# spatial -------------------------------------------------------------------


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded 2-D cross-correlation, NCHW layout, kernel (C_out, C_in, kH, kW)."""
    n, c_in, h, w = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise PreconditionError(f"conv2d: input has {c_in} channels, kernel expects {k_in}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise PreconditionError("conv2d: kernel sizes must be odd")
    if stride < 1 or padding < 0:
        raise PreconditionError("conv2d: stride must be positive and padding non-negative")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise PreconditionError("conv2d: kernel larger than padded input")
    if bias is not None and bias.shape != (c_out,):
        raise PreconditionError(f"conv2d: bias shape {bias.shape} != ({c_out},)")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1

    def im2col():
        # (N*Ho*Wo, C_in*kH*kW); rebuilt in backward rather than kept alive
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c_in * kh * kw)

    kmat = kernel.data.reshape(c_out, -1)
    out = im2col() @ kmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, c_out)
        gk = (gmat.T @ im2col()).reshape(kernel.shape) if kernel.requires_grad else None
        gb = gmat.sum(axis=0) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad and stride == 1:
            # full correlation of the output gradient with the flipped kernel
            q = (kh - 1 - padding, kw - 1 - padding)
            gpad = np.pad(g, ((0, 0), (0, 0), (max(q[0], 0),) * 2, (max(q[1], 0),) * 2))
            if q[0] < 0 or q[1] < 0:
                gpad = gpad[:, :, max(-q[0], 0) : gpad.shape[2] - max(-q[0], 0), max(-q[1], 0) : gpad.shape[3] - max(-q[1], 0)]
            gwin = sliding_window_view(gpad, (kh, kw), axis=(2, 3))
            gc = gwin.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c_out * kh * kw)
            kflip = kernel.data[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(c_out * kh * kw, c_in)
            gx = (gc @ kflip).reshape(n, h, w, c_in).transpose(0, 3, 1, 2)
        elif x.requires_grad:
            gcols = (gmat @ kmat).reshape(n, ho, wo, c_in, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        return (gx, gk) if bias is None else (gx, gk, gb)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _make(np.ascontiguousarray(out), parents, backward)


def downsample2(x: Tensor) -> Tensor:
    """2x2 mean pooling over the last two axes."""
    *lead, h, w = x.shape
    if h % 2 or w % 2:
        raise PreconditionError(f"downsample2 needs even spatial size, got {h}x{w}")
    out = x.data.reshape(*lead, h // 2, 2, w // 2, 2).mean(axis=(-3, -1))

    def backward(g):
        return (np.repeat(np.repeat(g, 2, axis=-2), 2, axis=-1) * 0.25,)

    return _make(out, (x,), backward)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling over the last two axes."""
    *lead, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=-2), 2, axis=-1)

    def backward(g):
        return (g.reshape(*lead, h, 2, w, 2).sum(axis=(-3, -1)),)

    return _make(out, (x,), backward)


def linear_map(x: Tensor, forward: Callable[[np.ndarray], np.ndarray], adjoint: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    """Apply a fixed real-linear operator whose adjoint is known."""
    return _make(forward(x.data), (x,), lambda g: (adjoint(g),))
