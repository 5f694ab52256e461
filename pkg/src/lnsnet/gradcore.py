"""Differentiable primitives with explicit forward/backward pairs.

The network topology is fixed, so there is no tape: every op exposes a
forward function and a matching backward function, and callers chain the
backward calls in reverse order themselves. Arrays are plain ``numpy``
arrays; reductions are carried out in float64 regardless of input dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ShapeError

KERNEL_SIZE = 3
PADDING_MODES = ("zeros", "replicate")


def _as64(a):
    return np.asarray(a, dtype=np.float64)


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    dilation: int = 1
    has_bias: bool = True
    kernel_size: int = KERNEL_SIZE
    padding_mode: str = "zeros"

    def __post_init__(self):
        if self.padding_mode not in PADDING_MODES:
            raise InvalidArgument(f"unknown padding mode {self.padding_mode!r}")
        if self.kernel_size != KERNEL_SIZE:
            raise InvalidArgument(f"only 3x3 kernels are supported, got {self.kernel_size}")
        if self.dilation < 1:
            raise InvalidArgument(f"dilation must be a positive integer, got {self.dilation}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise InvalidArgument("channel counts must be positive")

    @property
    def padding(self) -> int:
        return self.dilation * (self.kernel_size - 1) // 2

    @property
    def weight_shape(self) -> tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels, self.kernel_size, self.kernel_size)

    @property
    def num_params(self) -> int:
        n = self.out_channels * self.in_channels * self.kernel_size**2
        return n + (self.out_channels if self.has_bias else 0)


def _check_conv_args(x, spec: ConvSpec, weights):
    if x.ndim != 3:
        raise ShapeError(f"conv input must be [C,H,W], got rank {x.ndim}")
    if x.shape[0] != spec.in_channels:
        raise ShapeError(
            f"conv input channels: expected {spec.in_channels}, got {x.shape[0]}"
        )
    if weights.shape != spec.weight_shape:
        raise ShapeError(f"conv weights: expected shape {spec.weight_shape}, got {weights.shape}")


def _pad(x, spec: ConvSpec):
    p = spec.padding
    mode = "constant" if spec.padding_mode == "zeros" else "edge"
    return np.pad(x, ((0, 0), (p, p), (p, p)), mode=mode)


def _unpad(gxp, spec: ConvSpec, h, w):
    """Adjoint of :func:`_pad`: fold gradient of the padded array onto the input."""
    p = spec.padding
    if spec.padding_mode == "zeros" or p == 0:
        return gxp[:, p:p + h, p:p + w].copy()
    g = gxp.copy()
    g[:, p, :] += g[:, :p, :].sum(axis=1)
    g[:, p + h - 1, :] += g[:, p + h:, :].sum(axis=1)
    g = g[:, p:p + h, :]
    g[:, :, p] += g[:, :, :p].sum(axis=2)
    g[:, :, p + w - 1] += g[:, :, p + w:].sum(axis=2)
    return g[:, :, p:p + w].copy()


def _taps(spec: ConvSpec):
    d = spec.dilation
    for ky in range(spec.kernel_size):
        for kx in range(spec.kernel_size):
            yield ky, kx, ky * d, kx * d


def conv2d_forward(x, spec: ConvSpec, weights, bias=None):
    """Same-size dilated 3x3 convolution (cross-correlation), zero padded by default."""
    x = _as64(x)
    weights = _as64(weights)
    _check_conv_args(x, spec, weights)
    _, h, w = x.shape
    xp = _pad(x, spec)
    out = np.zeros((spec.out_channels, h, w))
    for ky, kx, oy, ox in _taps(spec):
        out += np.tensordot(weights[:, :, ky, kx], xp[:, oy:oy + h, ox:ox + w], axes=1)
    if spec.has_bias and bias is not None:
        bias = _as64(bias)
        if bias.shape != (spec.out_channels,):
            raise ShapeError(f"conv bias: expected ({spec.out_channels},), got {bias.shape}")
        out += bias[:, None, None]
    return out


def conv2d_backward(grad_out, saved_input, spec: ConvSpec, weights):
    """Return ``(grad_input, grad_weights, grad_bias)``; grad_bias is None without bias."""
    x = _as64(saved_input)
    weights = _as64(weights)
    grad_out = _as64(grad_out)
    _check_conv_args(x, spec, weights)
    _, h, w = x.shape
    if grad_out.shape != (spec.out_channels, h, w):
        raise ShapeError(
            f"conv grad_out: expected {(spec.out_channels, h, w)}, got {grad_out.shape}"
        )
    xp = _pad(x, spec)
    gxp = np.zeros_like(xp)
    gw = np.zeros(spec.weight_shape)
    go = grad_out.reshape(spec.out_channels, -1)
    for ky, kx, oy, ox in _taps(spec):
        window = xp[:, oy:oy + h, ox:ox + w].reshape(spec.in_channels, -1)
        gw[:, :, ky, kx] = go @ window.T
        gxp[:, oy:oy + h, ox:ox + w] += np.tensordot(weights[:, :, ky, kx].T, grad_out, axes=1)
    grad_input = _unpad(gxp, spec, h, w)
    grad_bias = grad_out.sum(axis=(1, 2)) if spec.has_bias else None
    return grad_input, gw, grad_bias


def linear(x, weights):
    x = _as64(x)
    weights = _as64(weights)
    if x.ndim != 2 or weights.ndim != 2:
        raise ShapeError("linear expects 2-d input and weights")
    if x.shape[1] != weights.shape[0]:
        raise ShapeError(
            f"linear inner dimension: input has {x.shape[1]}, weights have {weights.shape[0]}"
        )
    return x @ weights


def linear_backward(grad_out, x, weights):
    """Return ``(grad_input, grad_weights)``."""
    grad_out = _as64(grad_out)
    return grad_out @ _as64(weights).T, _as64(x).T @ grad_out


def relu(x):
    x = _as64(x)
    return np.where(x > 0, x, 0.0)


def relu_backward(grad_out, x):
    # subgradient 0 at exactly 0
    return np.where(_as64(x) > 0, _as64(grad_out), 0.0)


def sigmoid(x):
    x = _as64(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out, s):
    """Backward of sigmoid given its *output* ``s``."""
    s = _as64(s)
    return _as64(grad_out) * s * (1.0 - s)


def grid_edges(length: int, cells: int):
    """Start offsets of ``cells`` adaptive cells over ``length``; last entry is ``length``."""
    return np.array([(a * length) // cells for a in range(cells + 1)], dtype=np.int64)


def _check_grid(h, w, grid):
    k_r, k_c = grid
    if k_r < 1 or k_c < 1:
        raise InvalidArgument(f"pool grid must be positive, got {grid}")
    if k_r > h or k_c > w:
        raise InvalidArgument(f"pool grid {grid} larger than image {h}x{w}")


def adaptive_avg_pool(x, grid):
    """Mean over each cell of a ``k_r x k_c`` grid; rows ordered cell-row-major."""
    x = _as64(x)
    if x.ndim != 3:
        raise ShapeError(f"pool input must be [C,H,W], got rank {x.ndim}")
    c, h, w = x.shape
    _check_grid(h, w, grid)
    re, ce = grid_edges(h, grid[0]), grid_edges(w, grid[1])
    out = np.empty((grid[0] * grid[1], c))
    for a in range(grid[0]):
        for b in range(grid[1]):
            out[a * grid[1] + b] = x[:, re[a]:re[a + 1], ce[b]:ce[b + 1]].mean(axis=(1, 2))
    return out


def adaptive_avg_pool_backward(grad_out, input_shape, grid):
    grad_out = _as64(grad_out)
    c, h, w = input_shape
    _check_grid(h, w, grid)
    if grad_out.shape != (grid[0] * grid[1], c):
        raise ShapeError(f"pool grad_out: expected {(grid[0] * grid[1], c)}, got {grad_out.shape}")
    re, ce = grid_edges(h, grid[0]), grid_edges(w, grid[1])
    gx = np.zeros((c, h, w))
    for a in range(grid[0]):
        for b in range(grid[1]):
            area = (re[a + 1] - re[a]) * (ce[b + 1] - ce[b])
            gx[:, re[a]:re[a + 1], ce[b]:ce[b + 1]] = (grad_out[a * grid[1] + b] / area)[:, None, None]
    return gx
