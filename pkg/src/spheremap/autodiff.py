"""Minimal reverse-mode autodiff over dense N x C x H x W tensors.

Exactly the operator set the encoder-decoder needs: convolution, transposed
convolution, max pooling, relu / sigmoid, batch normalization, channel
concatenation, nearest-neighbor upsampling, BCE and MSE losses, plus Adam
and a finite-difference gradient checker.

Training runs in float32; gradient checks build float64 tensors (the ops
preserve the input dtype).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import MissingGradient, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed=None):
        """Reverse-mode sweep from this (scalar unless seed given) tensor."""
        if seed is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without seed needs a scalar, got {self.shape}")
            seed = np.ones_like(self.data)
        order = []
        seen = set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        self._accumulate(seed)
        for t in reversed(order):
            if t._backward_fn is not None and t.grad is not None:
                t._backward_fn(t.grad)


def _needs_grad(*tensors):
    return any(t is not None and t.requires_grad for t in tensors)


def _make(data, parents, backward_fn):
    track = any(p.requires_grad for p in parents)
    return Tensor(
        data,
        requires_grad=track,
        _parents=tuple(parents) if track else (),
        _backward_fn=backward_fn if track else None,
    )


@dataclass
class Parameter:
    tensor: Tensor
    name: str

    def __post_init__(self):
        self.tensor.requires_grad = True

    @property
    def data(self):
        return self.tensor.data


# ---------------------------------------------------------------------------
# convolution family


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride=1, padding=0, dilation=1) -> Tensor:
    """Cross-correlation; weight (OC, C, KH, KW), optional bias (OC,)."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv2d needs 4D input/weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"channel mismatch: input {x.shape} vs weight {weight.shape}")
    OC, _, KH, KW = weight.shape
    out = kernels.conv_forward(x.data, weight.data, stride, padding, dilation)
    if out.shape[2] < 1 or out.shape[3] < 1:
        raise ShapeError(f"empty conv output for input {x.shape}, weight {weight.shape}")
    if bias is not None:
        out = out + bias.data.reshape(1, OC, 1, 1)

    def backward(g):
        if x.requires_grad:
            x._accumulate(kernels.conv_input_grad(
                g, weight.data, x.shape[2:], stride, padding, dilation))
        if weight.requires_grad:
            weight._accumulate(kernels.conv_weight_grad(
                x.data, g, KH, KW, stride, padding, dilation))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(out, parents, backward)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride=1, padding=0, dilation=1, output_padding=0) -> Tensor:
    """Fractionally-strided convolution; weight (C_in, C_out, KH, KW)."""
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d needs 4D tensors, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"channel mismatch: input {x.shape} vs weight {weight.shape}")
    if output_padding >= stride:
        raise ShapeError("output_padding must be < stride")
    _, C_out, KH, KW = weight.shape
    OH = (x.shape[2] - 1) * stride - 2 * padding + dilation * (KH - 1) + output_padding + 1
    OW = (x.shape[3] - 1) * stride - 2 * padding + dilation * (KW - 1) + output_padding + 1
    if OH < 1 or OW < 1:
        raise ShapeError(f"empty transposed conv output ({OH}x{OW}) for input {x.shape}")
    out = kernels.conv_input_grad(x.data, weight.data, (OH, OW), stride, padding, dilation)
    if bias is not None:
        out = out + bias.data.reshape(1, C_out, 1, 1)

    def backward(g):
        if x.requires_grad:
            x._accumulate(kernels.conv_forward(g, weight.data, stride, padding, dilation))
        if weight.requires_grad:
            weight._accumulate(kernels.conv_weight_grad(
                g, x.data, KH, KW, stride, padding, dilation))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    parents = (x, weight) + ((bias,) if bias is not None else ())
    return _make(out, parents, backward)


# ---------------------------------------------------------------------------
# pooling / resampling


def maxpool2d(x: Tensor, kernel=2, stride=None) -> Tensor:
    """Per-window max; gradient routed to the first argmax index on ties."""
    if stride is None:
        stride = kernel
    if kernel != stride:
        raise ShapeError("only kernel == stride pooling is supported")
    N, C, H, W = x.shape
    OH, OW = H // kernel, W // kernel
    trimmed = x.data[:, :, : OH * kernel, : OW * kernel]
    windows = trimmed.reshape(N, C, OH, kernel, OW, kernel).transpose(0, 1, 2, 4, 3, 5)
    flat = windows.reshape(N, C, OH, OW, kernel * kernel)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        if not x.requires_grad:
            return
        gx = np.zeros_like(x.data)
        gwin = np.zeros_like(flat)
        np.put_along_axis(gwin, arg[..., None], g[..., None], axis=-1)
        gwin = gwin.reshape(N, C, OH, OW, kernel, kernel).transpose(0, 1, 2, 4, 3, 5)
        gx[:, :, : OH * kernel, : OW * kernel] = gwin.reshape(N, C, OH * kernel, OW * kernel)
        x._accumulate(gx)

    return _make(out, (x,), backward)


def nearest_upsample2x(x: Tensor) -> Tensor:
    """2x nearest-neighbor upsampling; gradient sums each 2x2 block."""
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def backward(g):
        if x.requires_grad:
            N, C, H2, W2 = g.shape
            x._accumulate(g.reshape(N, C, H2 // 2, 2, W2 // 2, 2).sum(axis=(3, 5)))

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# elementwise


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0))

    return _make(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * out * (1.0 - out))

    return _make(out, (x,), backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ShapeError(f"concat spatial mismatch: {a.shape} vs {b.shape}")
    out = np.concatenate([a.data, b.data], axis=1)
    ca = a.shape[1]

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return _make(out, (a, b), backward)


def pad_circular_width(x: Tensor, pw: int) -> Tensor:
    """Wrap-pad the width axis; the adjoint folds the pads back in."""
    out = np.pad(x.data, ((0, 0), (0, 0), (0, 0), (pw, pw)), mode="wrap")

    def backward(g):
        if not x.requires_grad:
            return
        W = x.shape[3]
        gx = g[:, :, :, pw : pw + W].copy()
        gx[:, :, :, -pw:] += g[:, :, :, :pw]
        gx[:, :, :, :pw] += g[:, :, :, pw + W :]
        x._accumulate(gx)

    return _make(out, (x,), backward)


# ---------------------------------------------------------------------------
# batch normalization


def batchnorm2d(x: Tensor, gamma: Tensor, beta_shift: Tensor,
                running_mean: np.ndarray, running_var: np.ndarray,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel standardization then affine.

    In training mode the batch statistics are used (and the running buffers
    updated in place); eval mode uses the running buffers.
    """
    C = x.shape[1]
    if training:
        axes = (0, 2, 3)
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // C
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * (var * m / max(m - 1, 1))
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu.reshape(1, C, 1, 1)) * inv_std.reshape(1, C, 1, 1)
    out = gamma.data.reshape(1, C, 1, 1) * xhat + beta_shift.data.reshape(1, C, 1, 1)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta_shift.requires_grad:
            beta_shift._accumulate(g.sum(axis=(0, 2, 3)))
        if not x.requires_grad:
            return
        gx_hat = g * gamma.data.reshape(1, C, 1, 1)
        istd = inv_std.reshape(1, C, 1, 1)
        if training:
            m = x.data.size // C
            s1 = gx_hat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (gx_hat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            x._accumulate(istd / m * (m * gx_hat - s1 - xhat * s2))
        else:
            x._accumulate(gx_hat * istd)

    return _make(out, (x, gamma, beta_shift), backward)


# ---------------------------------------------------------------------------
# losses


def bce_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross entropy; predictions clamped to [1e-7, 1 - 1e-7]."""
    if pred.shape != target.shape:
        raise ShapeError(f"bce shape mismatch: {pred.shape} vs {target.shape}")
    lo, hi = 1e-7, 1.0 - 1e-7
    p = np.clip(pred.data, lo, hi)
    t = target.data
    n = p.size
    out = -(t * np.log(p) + (1.0 - t) * np.log1p(-p)).mean()

    def backward(g):
        if pred.requires_grad:
            inside = (pred.data > lo) & (pred.data < hi)
            pred._accumulate(g * inside * (p - t) / (p * (1.0 - p) * n))
        if target.requires_grad:
            target._accumulate(g * (np.log1p(-p) - np.log(p)) / n)

    return _make(np.asarray(out, dtype=pred.dtype), (pred, target), backward)


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size
    out = (diff * diff).mean()

    def backward(g):
        if pred.requires_grad:
            pred._accumulate(g * 2.0 * diff / n)
        if target.requires_grad:
            target._accumulate(g * -2.0 * diff / n)

    return _make(np.asarray(out, dtype=pred.dtype), (pred, target), backward)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: list[Parameter], state: AdamState) -> None:
    """One bias-corrected Adam update over all parameters; zeroes grads."""
    for p in params:
        if p.tensor.grad is None:
            raise MissingGradient(f"parameter {p.name!r} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p in params:
        g = p.tensor.grad
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        m = state.m[p.name]
        v = state.v[p.name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.tensor.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.tensor.grad = None


# ---------------------------------------------------------------------------
# verification


def finite_difference_check(op, inputs: list[Tensor], h: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central-difference grads.

    `op` maps the input tensors to a scalar Tensor; inputs should be float64.
    """
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()
    loss = op(*inputs)
    loss.backward()
    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = op(*inputs).item()
            flat[i] = orig - h
            lo = op(*inputs).item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
