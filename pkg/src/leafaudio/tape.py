"""Reverse-mode automatic differentiation over numpy arrays.

A computation is recorded as a DAG of :class:`Var` nodes.  Every operation
stores its parent nodes and a vector-Jacobian-product closure; calling
:func:`backward` on a scalar root walks the graph in reverse topological
order and accumulates gradients into each leaf's ``grad`` attribute.

Only the operations this package needs exist here.  Operands that are not
``Var`` (python scalars, numpy arrays) are treated as constants and never
become graph nodes, which both keeps graphs small and preserves the float32
dtype of training graphs under NEP-50 promotion rules.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as _fft

__all__ = [
    "Var",
    "leaf",
    "constant",
    "backward",
    "exp",
    "log",
    "sqrt",
    "sin",
    "cos",
    "power",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "stack",
    "bank_correlate",
    "paired_square_sum",
    "depthwise_pool",
    "softmax_cross_entropy",
]


class Var:
    """A node holding a numpy value and, after ``backward``, its gradient."""

    __slots__ = ("value", "parents", "vjp", "requires_grad", "grad")

    # keep numpy from consuming Var operands elementwise
    __array_ufunc__ = None

    def __init__(self, value, parents=(), vjp=None, requires_grad=False):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.vjp = vjp
        self.requires_grad = requires_grad
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        return f"Var(shape={self.value.shape}, grad={'set' if self.grad is not None else 'none'})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return rsub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return rdiv(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def leaf(value) -> Var:
    """Differentiable graph input (a learnable parameter)."""
    return Var(value, requires_grad=True)


def constant(value) -> Var:
    """Non-differentiable graph input."""
    return Var(value)


def _value(x):
    return x.value if isinstance(x, Var) else x


def _node(value, parents, vjp) -> Var:
    live = tuple(p for p in parents if isinstance(p, Var) and p.requires_grad)
    if not live:
        return Var(value)
    return Var(value, parents, vjp, requires_grad=True)


def _unbroadcast(g, shape):
    """Sum gradient ``g`` down to ``shape`` (undo numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _live(x):
    return isinstance(x, Var) and x.requires_grad


def _grad_for(x, g):
    """Unbroadcast ``g`` onto operand ``x`` when ``x`` is a live Var."""
    if _live(x):
        return _unbroadcast(g, x.value.shape)
    return None


# -- elementwise arithmetic ---------------------------------------------


def add(a, b):
    va, vb = _value(a), _value(b)
    out = va + vb

    def vjp(g):
        return _grad_for(a, g), _grad_for(b, g)

    return _node(out, (a, b), vjp)


def sub(a, b):
    va, vb = _value(a), _value(b)
    out = va - vb

    def vjp(g):
        return _grad_for(a, g), _grad_for(b, -g)

    return _node(out, (a, b), vjp)


def rsub(a, b):
    """``b - a`` with ``a`` a Var and ``b`` a constant."""
    out = _value(b) - _value(a)

    def vjp(g):
        return (_grad_for(a, -g),)

    return _node(out, (a,), vjp)


def mul(a, b):
    va, vb = _value(a), _value(b)
    out = va * vb

    def vjp(g):
        ga = _grad_for(a, g * vb) if _live(a) else None
        gb = _grad_for(b, g * va) if _live(b) else None
        return ga, gb

    return _node(out, (a, b), vjp)


def div(a, b):
    va, vb = _value(a), _value(b)
    out = va / vb

    def vjp(g):
        ga = _grad_for(a, g / vb) if _live(a) else None
        gb = _grad_for(b, -g * va / (vb * vb)) if _live(b) else None
        return ga, gb

    return _node(out, (a, b), vjp)


def rdiv(a, b):
    """``b / a`` with ``a`` a Var and ``b`` a constant."""
    va, vb = _value(a), _value(b)
    out = vb / va

    def vjp(g):
        return (_grad_for(a, -g * vb / (va * va)),)

    return _node(out, (a,), vjp)


def neg(a):
    def vjp(g):
        return (_grad_for(a, -g),)

    return _node(-_value(a), (a,), vjp)


def power(a, b):
    """Elementwise ``a ** b``; ``b`` may be a scalar, array, or Var."""
    va, vb = _value(a), _value(b)
    out = va ** vb

    def vjp(g):
        ga = _grad_for(a, g * vb * va ** (vb - 1)) if _live(a) else None
        if _live(b):
            # d(a^b)/db = a^b * ln a; define the a -> 0 limit as 0.
            la = np.zeros_like(out)
            np.log(va, out=la, where=va > 0)
            gb = _unbroadcast(g * out * la, vb.shape)
        else:
            gb = None
        return ga, gb

    return _node(out, (a, b), vjp)


def exp(a):
    out = np.exp(_value(a))

    def vjp(g):
        return (_grad_for(a, g * out),)

    return _node(out, (a,), vjp)


def log(a):
    va = _value(a)

    def vjp(g):
        return (_grad_for(a, g / va),)

    return _node(np.log(va), (a,), vjp)


def sqrt(a):
    out = np.sqrt(_value(a))

    def vjp(g):
        return (_grad_for(a, g / (2.0 * out)),)

    return _node(out, (a,), vjp)


def sin(a):
    va = _value(a)

    def vjp(g):
        return (_grad_for(a, g * np.cos(va)),)

    return _node(np.sin(va), (a,), vjp)


def cos(a):
    va = _value(a)

    def vjp(g):
        return (_grad_for(a, -g * np.sin(va)),)

    return _node(np.cos(va), (a,), vjp)


# -- reductions and shape ops --------------------------------------------


def reduce_sum(a, axis=None, keepdims=False):
    va = _value(a)
    out = va.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if not keepdims and axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, va.shape),)

    return _node(out, (a,), vjp)


def reduce_mean(a, axis=None, keepdims=False):
    va = _value(a)
    count = va.size if axis is None else np.prod([va.shape[i] for i in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, shape):
    va = _value(a)

    def vjp(g):
        return (g.reshape(va.shape),)

    return _node(va.reshape(shape), (a,), vjp)


def getitem(a, index):
    va = _value(a)
    out = va[index]

    def vjp(g):
        acc = np.zeros_like(va)
        if _is_basic_index(index):
            acc[index] += g
        else:
            np.add.at(acc, index, g)
        return (acc,)

    return _node(out, (a,), vjp)


def _is_basic_index(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)


def stack(items, axis=0):
    vals = [_value(x) for x in items]
    out = np.stack(vals, axis=axis)

    def vjp(g):
        return tuple(_grad_for(x, np.take(g, i, axis=axis)) for i, x in enumerate(items))

    return _node(out, tuple(items), vjp)


def matmul(a, b):
    va, vb = _value(a), _value(b)
    out = va @ vb

    def vjp(g):
        ga = _grad_for(a, g @ vb.T) if _live(a) else None
        gb = _grad_for(b, va.T @ g) if _live(b) else None
        return ga, gb

    return _node(out, (a, b), vjp)


# -- DSP primitives -------------------------------------------------------


def bank_correlate(x, kernels):
    """Same-padded cross-correlation of a signal batch with a filter bank.

    ``x`` has shape (B, T), ``kernels`` (C, W) with W odd; the result has
    shape (B, C, T) with ``out[b, c, t] = sum_j x[b, t+j-h] * k[c, j]`` for
    ``h = (W-1)//2`` and zero padding outside the signal.  Computed by FFT
    with enough zero padding that the circular product equals the linear
    correlation exactly.
    """
    vx, vk = _value(x), _value(kernels)
    batch, n_samples = vx.shape
    n_kernels, width = vk.shape
    if width % 2 != 1:
        raise ValueError("kernel length must be odd")
    half = (width - 1) // 2
    # L >= T + h already keeps every used lag of the circular correlation
    # free of wrap-around (alias terms need L <= T + h - 1 to reach support)
    size = _fft.next_fast_len(max(n_samples + half, width), real=True)
    xf = _fft.rfft(vx, size, axis=-1)
    # kernel laid out circularly with its center at index 0, so the product
    # yields out[t] at array index t with no final roll
    shifted = np.zeros((n_kernels, size), dtype=vk.dtype)
    shifted[:, : width - half] = vk[:, half:]
    shifted[:, size - half:] = vk[:, :half]
    kf = _fft.rfft(shifted, axis=-1)
    full = _fft.irfft(xf[:, None, :] * np.conj(kf)[None, :, :], size, axis=-1)
    out = full[..., :n_samples]

    def vjp(g):
        gf = _fft.rfft(g, size, axis=-1)
        gk = gx = None
        if _live(kernels):
            spec = np.einsum("bf,bcf->cf", xf, np.conj(gf))
            dk_full = _fft.irfft(spec, size, axis=-1)
            gk = np.concatenate([dk_full[:, size - half:], dk_full[:, : width - half]], axis=-1)
            gk = gk.astype(vk.dtype, copy=False)
        if _live(x):
            spec = np.einsum("bcf,cf->bf", gf, kf)
            dx_full = _fft.irfft(spec, size, axis=-1)
            gx = dx_full[:, :n_samples].astype(vx.dtype, copy=False)
        return gx, gk

    return _node(out, (x, kernels), vjp)


def paired_square_sum(corr):
    """Squared l2-pooling over adjacent channel pairs.

    ``corr`` has shape (B, 2N, T); channel pairs (2n, 2n+1) act as the real
    and imaginary parts of one complex channel, so the output (B, N, T) is
    their squared modulus.  Fused so the backward pass scatters straight
    into one gradient buffer.
    """
    vc = _value(corr)
    even = vc[:, 0::2, :]
    odd = vc[:, 1::2, :]
    out = even * even
    out += odd * odd

    def vjp(g):
        acc = np.empty_like(vc)
        acc[:, 0::2, :] = g * even
        acc[:, 1::2, :] = g * odd
        acc *= 2.0
        return (acc,)

    return _node(out, (corr,), vjp)


def depthwise_pool(signal, kernels, stride):
    """Per-channel same-padded correlation followed by decimation.

    ``signal`` has shape (B, N, T), ``kernels`` (N, P) with P odd.  Channel n
    is correlated with kernel n under zero padding and sampled at indices
    0, stride, 2*stride, ...; the output has shape (B, N, M) with
    ``M = ceil(T / stride)``.
    """
    vf, vk = _value(signal), _value(kernels)
    batch, n_channels, n_samples = vf.shape
    _, width = vk.shape
    if width % 2 != 1:
        raise ValueError("kernel length must be odd")
    half = (width - 1) // 2
    n_frames = -(-n_samples // stride)
    padded = np.zeros((batch, n_channels, n_samples + width - 1), dtype=vf.dtype)
    padded[..., half: half + n_samples] = vf
    windows = sliding_window_view(padded, width, axis=2)[:, :, ::stride][:, :, :n_frames]
    out = np.einsum("bnmp,np->bnm", windows, vk)

    def vjp(g):
        gk = gf = None
        if _live(kernels):
            gk = np.einsum("bnm,bnmp->np", g, windows)
        if _live(signal):
            # scatter g[m] * k[j] into position m*stride + j, blockwise: with
            # q = m*stride + j = (m + dj)*stride + r the writes per dj are
            # contiguous (B, N, M, stride) panels instead of strided columns
            n_blocks = -(-(n_samples + width - 1) // stride)
            blocks = np.zeros((batch, n_channels, n_blocks + 1, stride), dtype=vf.dtype)
            g4 = g[:, :, :, None]
            for dj in range(-(-width // stride)):
                chunk = vk[:, dj * stride: (dj + 1) * stride]
                blocks[:, :, dj: dj + n_frames, : chunk.shape[1]] += g4 * chunk[None, :, None, :]
            acc = blocks.reshape(batch, n_channels, -1)
            gf = acc[..., half: half + n_samples]
        return gf, gk

    return _node(out, (signal, kernels), vjp)


def softmax_cross_entropy(logits, labels, reduction="mean"):
    """Cross entropy of softmax(logits) against integer labels.

    ``logits`` has shape (B, C), ``labels`` (B,).  Returns a scalar Var,
    either the batch mean or the batch sum of per-example losses.
    """
    vz = _value(logits)
    labels = np.asarray(labels)
    rows = np.arange(vz.shape[0])
    shifted = vz - vz.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    losses = -log_probs[rows, labels]
    scale = 1.0 / vz.shape[0] if reduction == "mean" else 1.0
    out = losses.sum() * scale

    def vjp(g):
        grad = np.exp(log_probs)
        grad[rows, labels] -= 1.0
        return (_grad_for(logits, (g * scale) * grad),)

    return _node(np.asarray(out, dtype=vz.dtype), (logits,), vjp)


# -- backward pass --------------------------------------------------------


def _toposort(root):
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
        for parent in node.parents:
            if isinstance(parent, Var) and parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root: Var, seed=1.0) -> None:
    """Accumulate d(root)/d(leaf) into ``grad`` of every reachable Var."""
    if not root.requires_grad:
        return
    order = _toposort(root)
    for node in order:
        node.grad = None
    root.grad = np.broadcast_to(np.asarray(seed, dtype=root.value.dtype), root.value.shape).copy()
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        grads = node.vjp(node.grad)
        for parent, grad in zip(node.parents, grads):
            if grad is None or not isinstance(parent, Var) or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = grad
            else:
                parent.grad = parent.grad + grad
