"""Gradient rescaling: reconstruction head, channel memory, GAL and GBL."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ShapeError

COLOR_COLS = slice(0, 3)
SPATIAL_COLS = slice(3, 5)


def recon_forward(z, w_r):
    """Per-pixel linear map ``[C_2,H,W] -> [5,H,W]``."""
    z = np.asarray(z, dtype=np.float64)
    w_r = np.asarray(w_r, dtype=np.float64)
    if w_r.ndim != 2 or w_r.shape != (z.shape[0], 5):
        raise ShapeError(f"reconstruction weights: expected ({z.shape[0]}, 5), got {w_r.shape}")
    return np.tensordot(w_r.T, z, axes=1)


def recon_backward(grad_xr, z, w_r):
    """Return ``(grad_z, grad_w_r)``."""
    grad_xr = np.asarray(grad_xr, dtype=np.float64)
    c = z.shape[0]
    grad_w = z.reshape(c, -1) @ grad_xr.reshape(5, -1).T
    grad_z = np.tensordot(np.asarray(w_r, dtype=np.float64), grad_xr, axes=1)
    return grad_z, grad_w


def channel_strength(w_r):
    """Mean |color weight| times mean |spatial weight| for each embedding channel."""
    a = np.abs(np.asarray(w_r, dtype=np.float64))
    if a.ndim != 2 or a.shape[1] != 5:
        raise ShapeError(f"reconstruction weights must be [C,5], got {a.shape}")
    return a[:, COLOR_COLS].mean(axis=1) * a[:, SPATIAL_COLS].mean(axis=1)


@dataclass(frozen=True)
class ChannelMemory:
    """EMA of past channel strengths; starts at all ones."""

    m: np.ndarray
    lam: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise InvalidArgument(f"memory coefficient must lie in (0,1), got {self.lam}")

    @classmethod
    def ones(cls, channels: int, lam: float = 0.1) -> "ChannelMemory":
        return cls(np.ones(channels), lam)

    def update(self, g) -> "ChannelMemory":
        g = np.asarray(g, dtype=np.float64)
        if np.any(g < 0):
            raise InvalidArgument("channel strength must be non-negative")
        return ChannelMemory(self.lam * g + (1.0 - self.lam) * self.m, self.lam)


def update_memory(mem: ChannelMemory, g) -> ChannelMemory:
    return mem.update(g)


def gal_factors(g, m):
    g = np.asarray(g, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if np.any(m <= 0):
        raise InvalidArgument("channel memory must be strictly positive")
    return g / (g + m)


def gal_scale(grad_z, g, m):
    """Backward of the adaptive layer: scale channel c by ``g_c / (g_c + m_c)``."""
    psi = gal_factors(g, m)
    grad_z = np.asarray(grad_z, dtype=np.float64)
    if grad_z.shape[0] != psi.shape[0]:
        raise ShapeError(f"gradient has {grad_z.shape[0]} channels, strength has {psi.shape[0]}")
    return grad_z * psi.reshape((-1,) + (1,) * (grad_z.ndim - 1))


def gbl_factors(contour, epsilon: float):
    b = np.asarray(contour, dtype=np.float64)
    return np.where(b <= epsilon, 1.0, -b)


def gbl_scale(grad, contour, epsilon: float):
    """Backward of the bi-directional layer: per pixel 1 off contours, ``-B`` on them.

    ``grad`` is ``[..., H, W]`` with the contour map broadcast over leading axes.
    """
    return np.asarray(grad, dtype=np.float64) * gbl_factors(contour, epsilon)


def gal_forward(z):
    return z


def gbl_forward(x):
    return x
