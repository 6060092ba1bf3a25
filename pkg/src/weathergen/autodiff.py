"""Minimal reverse-mode autodiff over channelled 1-D sequences.

Everything is double precision numpy. A forward pass builds a graph of
:class:`SequenceGrid` nodes; each node closes over its parents and a
backward rule. :func:`backward` walks the recorded graph once, in reverse
creation order (creation order is topological because operands always
exist before their result), and accumulates gradients into the grids and
into the :class:`ConvKernel` parameters.

Grids are (channels, length) matrices. Every operation also accepts a
leading batch axis, (batch, channels, length); the batch axis is never
mixed by any kernel, so per-item results are identical to running items
one at a time, and gradient reduction over the batch happens in numpy
index order (fixed, reproducible).

Parameter flattening order, relied on by the optimizer and checkpoints:
kernels in store order, each kernel contributing ``weights.ravel()`` in
C order (out-channel, in-channel, width) followed by its bias when one
exists.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import GraphError, NonFiniteError, ShapeError

_node_ids = itertools.count()


class SequenceGrid:
    """A channels-by-length value grid, optionally part of a recorded graph."""

    __slots__ = ("values", "grad", "_parents", "_backward", "_id", "_consumed")

    def __init__(self, values, _parents=(), _backward=None, _validate=True):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim not in (2, 3):
            raise ShapeError(
                f"grid values must be (channels, length) or (batch, channels, length), got shape {values.shape}"
            )
        if _validate and not np.isfinite(values).all():
            raise NonFiniteError("grid values contain non-finite entries")
        self.values = values
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self._id = next(_node_ids)
        self._consumed = False

    @property
    def channels(self):
        return self.values.shape[-2]

    @property
    def length(self):
        return self.values.shape[-1]

    @property
    def batch(self):
        return self.values.shape[0] if self.values.ndim == 3 else 1

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def __repr__(self):
        return f"SequenceGrid(shape={self.values.shape})"


class ConvKernel:
    """Convolution weights (out, in, width) plus optional per-out-channel bias."""

    __slots__ = ("weights", "bias", "wgrad", "bgrad")

    def __init__(self, weights, bias=None):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 3:
            raise ShapeError(f"kernel weights must be (out, in, width), got shape {weights.shape}")
        if weights.shape[2] < 1:
            raise ShapeError("kernel width must be >= 1")
        if not np.isfinite(weights).all():
            raise NonFiniteError("kernel weights contain non-finite entries")
        if bias is not None:
            bias = np.asarray(bias, dtype=np.float64)
            if bias.shape != (weights.shape[0],):
                raise ShapeError(
                    f"bias axis mismatch: expected ({weights.shape[0]},), got {bias.shape}"
                )
            if not np.isfinite(bias).all():
                raise NonFiniteError("kernel bias contains non-finite entries")
        self.weights = weights
        self.bias = bias
        self.wgrad = None
        self.bgrad = None

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def width(self):
        return self.weights.shape[2]

    @property
    def size(self):
        return self.weights.size + (0 if self.bias is None else self.bias.size)

    def zero_grad(self):
        self.wgrad = None
        self.bgrad = None

    def _acc_w(self, g):
        if self.wgrad is None:
            self.wgrad = np.zeros_like(self.weights)
        self.wgrad += g

    def _acc_b(self, g):
        if self.bgrad is None:
            self.bgrad = np.zeros_like(self.bias)
        self.bgrad += g


class ParameterStore:
    """Ordered, uniquely named collection of ConvKernels."""

    def __init__(self):
        self._names = []
        self._kernels = {}

    def add(self, name, kernel):
        if name in self._kernels:
            raise ShapeError(f"duplicate parameter name {name!r}")
        self._names.append(name)
        self._kernels[name] = kernel
        return kernel

    def __getitem__(self, name):
        return self._kernels[name]

    def __iter__(self):
        return ((n, self._kernels[n]) for n in self._names)

    def __len__(self):
        return len(self._names)

    @property
    def names(self):
        return list(self._names)

    @property
    def total_count(self):
        return sum(k.size for _, k in self)

    def flatten(self):
        """Parameters as one flat vector in the documented order."""
        parts = []
        for _, k in self:
            parts.append(k.weights.ravel())
            if k.bias is not None:
                parts.append(k.bias)
        return np.concatenate(parts) if parts else np.zeros(0)

    def load_flat(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.total_count,):
            raise ShapeError(f"flat vector length {theta.shape} != total_count {self.total_count}")
        pos = 0
        for _, k in self:
            n = k.weights.size
            k.weights[...] = theta[pos : pos + n].reshape(k.weights.shape)
            pos += n
            if k.bias is not None:
                k.bias[...] = theta[pos : pos + k.bias.size]
                pos += k.bias.size

    def gradients(self):
        """Accumulated gradients as a flat vector; untouched kernels read as zero."""
        parts = []
        for _, k in self:
            parts.append((k.wgrad if k.wgrad is not None else np.zeros_like(k.weights)).ravel())
            if k.bias is not None:
                parts.append(k.bgrad if k.bgrad is not None else np.zeros_like(k.bias))
        return np.concatenate(parts) if parts else np.zeros(0)

    def zero_grads(self):
        for _, k in self:
            k.zero_grad()


def _3d(a):
    return (a, True) if a.ndim == 3 else (a[None], False)


def dilated_conv(x, kernel, dilation=1):
    """Valid dilated convolution; output length = length - (width-1)*dilation."""
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if x.channels != kernel.in_channels:
        raise ShapeError(
            f"channel axis mismatch: input has {x.channels} channels, kernel expects {kernel.in_channels}"
        )
    span = (kernel.width - 1) * dilation + 1
    if x.length < span:
        raise ShapeError(
            f"insufficient length: input length {x.length} < required minimum {span} "
            f"for width {kernel.width} and dilation {dilation}"
        )
    v, batched = _3d(x.values)
    l_out = x.length - (kernel.width - 1) * dilation
    out = np.zeros((v.shape[0], kernel.out_channels, l_out))
    for k in range(kernel.width):
        out += np.matmul(kernel.weights[:, :, k], v[:, :, k * dilation : k * dilation + l_out])
    if kernel.bias is not None:
        out += kernel.bias[:, None]

    def _back(node):
        g, _ = _3d(node.grad)
        xg = np.zeros_like(v)
        wg = np.zeros_like(kernel.weights)
        for k in range(kernel.width):
            sl = slice(k * dilation, k * dilation + l_out)
            wg[:, :, k] = np.einsum("bot,bit->oi", g, v[:, :, sl])
            xg[:, :, sl] += np.matmul(kernel.weights[:, :, k].T, g)
        kernel._acc_w(wg)
        if kernel.bias is not None:
            kernel._acc_b(g.sum(axis=(0, 2)))
        x._accumulate(xg if batched else xg[0])

    return SequenceGrid(out if batched else out[0], (x,), _back, _validate=False)


def masked_day_conv(x, kernel, mask):
    """Two-column day convolution with the second (same-day) column masked.

    Output keeps the input length: position t (t >= 1, 0-based) combines the
    full column at t-1 and the mask-multiplied column at t; position 0 is the
    prepended zero column. No bias, no activation. Gradient cannot reach
    same-day entries whose mask bit is 0.
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (4,):
        raise ShapeError(f"mask must have 4 entries, got shape {mask.shape}")
    if x.channels != 4 or kernel.in_channels != 4:
        raise ShapeError(
            f"channel axis mismatch: day convolution needs 4 channels, got input {x.channels}, kernel {kernel.in_channels}"
        )
    if kernel.width != 2:
        raise ShapeError(f"day convolution kernel width must be 2, got {kernel.width}")
    if kernel.bias is not None:
        raise ShapeError("day convolution kernel carries no bias")
    if x.length < 2:
        raise ShapeError(f"insufficient length: input length {x.length} < required minimum 2")
    v, batched = _3d(x.values)
    w_prev = kernel.weights[:, :, 0]
    w_same = kernel.weights[:, :, 1] * mask[None, :]
    core = np.matmul(w_prev, v[:, :, :-1]) + np.matmul(w_same, v[:, :, 1:])
    out = np.concatenate([np.zeros((v.shape[0], kernel.out_channels, 1)), core], axis=2)

    def _back(node):
        g, _ = _3d(node.grad)
        gc = g[:, :, 1:]  # grad on the prepended zero column is discarded
        wg = np.zeros_like(kernel.weights)
        wg[:, :, 0] = np.einsum("bot,bit->oi", gc, v[:, :, :-1])
        wg[:, :, 1] = np.einsum("bot,bit->oi", gc, v[:, :, 1:]) * mask[None, :]
        kernel._acc_w(wg)
        xg = np.zeros_like(v)
        xg[:, :, :-1] += np.matmul(w_prev.T, gc)
        xg[:, :, 1:] += np.matmul(w_same.T, gc)
        x._accumulate(xg if batched else xg[0])

    return SequenceGrid(out if batched else out[0], (x,), _back, _validate=False)


def pointwise_conv(x, kernel):
    """1x1 convolution: per-position affine map across channels."""
    if kernel.width != 1:
        raise ShapeError(f"pointwise kernel width must be 1, got {kernel.width}")
    if x.channels != kernel.in_channels:
        raise ShapeError(
            f"channel axis mismatch: input has {x.channels} channels, kernel expects {kernel.in_channels}"
        )
    v, batched = _3d(x.values)
    out = np.matmul(kernel.weights[:, :, 0], v)
    if kernel.bias is not None:
        out += kernel.bias[:, None]

    def _back(node):
        g, _ = _3d(node.grad)
        kernel._acc_w(np.einsum("bot,bit->oi", g, v)[:, :, None])
        if kernel.bias is not None:
            kernel._acc_b(g.sum(axis=(0, 2)))
        xg = np.matmul(kernel.weights[:, :, 0].T, g)
        x._accumulate(xg if batched else xg[0])

    return SequenceGrid(out if batched else out[0], (x,), _back, _validate=False)


def activation(x, kind, eps=1e-3):
    """Elementwise nonlinearity: tanh, relu, softplus_eps or identity."""
    v = x.values
    if kind == "identity":
        out, back_mul = v, None
    elif kind == "tanh":
        out = np.tanh(v)
        back_mul = 1.0 - out * out
    elif kind == "relu":
        out = np.maximum(v, 0.0)
        back_mul = (v > 0.0).astype(np.float64)
    elif kind == "softplus_eps":
        out = np.logaddexp(0.0, v) + eps
        back_mul = expit(v)
    else:
        raise ShapeError(f"unknown activation kind {kind!r}")

    def _back(node):
        g = node.grad if back_mul is None else node.grad * back_mul
        x._accumulate(g)

    return SequenceGrid(out, (x,), _back, _validate=False)


def pad_left(x, n):
    """Prepend n zero columns (the causal padding of the input window)."""
    if n < 0:
        raise ShapeError(f"pad amount must be >= 0, got {n}")
    if n == 0:
        return x
    v = x.values
    z = np.zeros(v.shape[:-1] + (n,))
    out = np.concatenate([z, v], axis=-1)

    def _back(node):
        x._accumulate(node.grad[..., n:])

    return SequenceGrid(out, (x,), _back, _validate=False)


def pad_right(x, n):
    """Append n zero columns (unknown same-day slots)."""
    if n < 0:
        raise ShapeError(f"pad amount must be >= 0, got {n}")
    if n == 0:
        return x
    v = x.values
    z = np.zeros(v.shape[:-1] + (n,))
    out = np.concatenate([v, z], axis=-1)

    def _back(node):
        x._accumulate(node.grad[..., : v.shape[-1]])

    return SequenceGrid(out, (x,), _back, _validate=False)


def slice_time(x, start, stop):
    """Keep time positions [start, stop)."""
    out = x.values[..., start:stop]
    if out.shape[-1] == 0:
        raise ShapeError(f"empty time slice [{start}, {stop}) of length-{x.length} grid")

    def _back(node):
        g = np.zeros_like(x.values)
        g[..., start:stop] = node.grad
        x._accumulate(g)

    return SequenceGrid(out, (x,), _back, _validate=False)


def slice_channels(x, start, stop):
    """Keep channels [start, stop)."""
    out = x.values[..., start:stop, :]
    if out.shape[-2] == 0:
        raise ShapeError(f"empty channel slice [{start}, {stop}) of {x.channels}-channel grid")

    def _back(node):
        g = np.zeros_like(x.values)
        g[..., start:stop, :] = node.grad
        x._accumulate(g)

    return SequenceGrid(out, (x,), _back, _validate=False)


def concat_channels(grids):
    """Stack grids along the channel axis."""
    grids = list(grids)
    out = np.concatenate([g.values for g in grids], axis=-2)

    def _back(node):
        pos = 0
        for g in grids:
            c = g.channels
            g._accumulate(node.grad[..., pos : pos + c, :])
            pos += c

    return SequenceGrid(out, tuple(grids), _back, _validate=False)


def add(x, y):
    """Elementwise sum of two same-shape grids."""
    if x.values.shape != y.values.shape:
        raise ShapeError(f"shape mismatch in add: {x.values.shape} vs {y.values.shape}")
    out = x.values + y.values

    def _back(node):
        x._accumulate(node.grad)
        y._accumulate(node.grad)

    return SequenceGrid(out, (x, y), _back, _validate=False)


def sum_all(x):
    """Sum every entry (batch included) into a 1x1 scalar grid."""
    out = np.array([[x.values.sum()]])

    def _back(node):
        x._accumulate(np.full_like(x.values, node.grad[0, 0]))

    return SequenceGrid(out, (x,), _back, _validate=False)


def backward(loss, store):
    """Backpropagate from a recorded scalar loss; returns flat gradients.

    The returned vector follows the ParameterStore flattening order. Call
    ``store.zero_grads()`` before the next forward pass; a second backward
    on the same loss node is an error.
    """
    if not isinstance(loss, SequenceGrid) or loss.values.size != 1:
        raise GraphError("loss must be a single-element SequenceGrid")
    if not loss._parents:
        raise GraphError("backward before forward: loss is not a recorded computation")
    if loss._consumed:
        raise GraphError("repeated backward on the same recorded computation")
    val = float(loss.values.ravel()[0])
    if not np.isfinite(val):
        raise NonFiniteError(f"loss is not finite: {val}")
    loss._consumed = True

    nodes = []
    seen = set()
    stack = [loss]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        nodes.append(node)
        stack.extend(node._parents)
    nodes.sort(key=lambda n: n._id, reverse=True)

    loss.grad = np.ones_like(loss.values)
    for node in nodes:
        if node._backward is not None and node.grad is not None:
            node._backward(node)
    return store.gradients()


@dataclass
class AdamState:
    """Adam moments aligned to a ParameterStore's flattening."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8

    @classmethod
    def fresh(cls, n_params, lr=1e-3, beta1=0.9, beta2=0.999, eps_opt=1e-8):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ShapeError("beta1 and beta2 must lie in [0, 1)")
        return cls(np.zeros(n_params), np.zeros(n_params), 0, lr, beta1, beta2, eps_opt)


def adam_step(store, grads, state):
    """One bias-corrected Adam update, in place on store and state."""
    grads = np.asarray(grads, dtype=np.float64)
    n = store.total_count
    if grads.shape != (n,):
        raise ShapeError(f"gradient length {grads.shape} misaligned with {n} parameters")
    if state.first_moment.shape != (n,):
        raise ShapeError(f"optimizer state length {state.first_moment.shape} misaligned with {n} parameters")
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * grads
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * grads * grads
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    theta = store.flatten()
    theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps_opt)
    store.load_flat(theta)
