"""Non-iterative clustering: learned seed offsets and t-kernel assignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .errors import InvalidArgument, ShapeError


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


@dataclass(frozen=True)
class SeedGrid:
    """Regular ``k_r x k_c`` grid of coarse cluster centers over an ``H x W`` image."""

    height: int
    width: int
    k_r: int
    k_c: int

    @property
    def K(self) -> int:
        return self.k_r * self.k_c

    @property
    def shape(self) -> tuple[int, int]:
        return (self.k_r, self.k_c)

    @property
    def cell_h(self) -> float:
        return self.height / self.k_r

    @property
    def cell_w(self) -> float:
        return self.width / self.k_c

    @property
    def row_edges(self) -> np.ndarray:
        return gc.grid_edges(self.height, self.k_r)

    @property
    def col_edges(self) -> np.ndarray:
        return gc.grid_edges(self.width, self.k_c)

    def cell_bounds(self):
        """Per-seed inclusive ``(row_lo, row_hi, col_lo, col_hi)``, each of length K."""
        re, ce = self.row_edges, self.col_edges
        rows = np.repeat(np.arange(self.k_r), self.k_c)
        cols = np.tile(np.arange(self.k_c), self.k_r)
        return re[rows], re[rows + 1] - 1, ce[cols], ce[cols + 1] - 1

    @property
    def center_rows(self) -> np.ndarray:
        r0, r1, _, _ = self.cell_bounds()
        return (r0 + r1 + 1) // 2

    @property
    def center_cols(self) -> np.ndarray:
        _, _, c0, c1 = self.cell_bounds()
        return (c0 + c1 + 1) // 2

    @property
    def coarse_centers(self) -> np.ndarray:
        return self.center_rows * self.width + self.center_cols


def make_grid(height: int, width: int, requested_k: int) -> SeedGrid:
    if requested_k < 2:
        raise InvalidArgument(f"requested superpixel count must be >= 2, got {requested_k}")
    if requested_k > height * width:
        raise InvalidArgument(
            f"requested superpixel count {requested_k} exceeds pixel count {height * width}")
    k_r = int(_round_half_up(np.sqrt(requested_k * height / width)))
    k_r = min(max(k_r, 1), height)
    k_c = int(_round_half_up(requested_k / k_r))
    k_c = min(max(k_c, 1), width)
    return SeedGrid(height, width, k_r, k_c)


@dataclass
class SeedSet:
    indexes: np.ndarray      # flat pixel index per seed
    rows: np.ndarray
    cols: np.ndarray
    d_row: np.ndarray        # signed offsets in pixels
    d_col: np.ndarray
    ratios: np.ndarray       # F = sigmoid(Z^k W_s), [K,2]
    pooled: np.ndarray       # Z^k, [K,C]
    grid: SeedGrid

    @property
    def K(self) -> int:
        return len(self.indexes)


def seed_offsets(z_pooled, w_s, grid: SeedGrid) -> SeedSet:
    """Shift each coarse center inside its own cell by a learned ratio."""
    z_pooled = np.asarray(z_pooled, dtype=np.float64)
    if z_pooled.shape[0] != grid.K:
        raise ShapeError(f"pooled features have {z_pooled.shape[0]} rows, grid has K={grid.K}")
    ratios = gc.sigmoid(gc.linear(z_pooled, w_s))
    d_row = (ratios[:, 0] - 0.5) * grid.cell_h
    d_col = (ratios[:, 1] - 0.5) * grid.cell_w
    r0, r1, c0, c1 = grid.cell_bounds()
    rows = np.clip(_round_half_up(grid.center_rows + d_row), r0, r1)
    cols = np.clip(_round_half_up(grid.center_cols + d_col), c0, c1)
    return SeedSet(indexes=rows * grid.width + cols, rows=rows, cols=cols, d_row=d_row,
                   d_col=d_col, ratios=ratios, pooled=z_pooled, grid=grid)


def estimate_seeds(z, w_s, grid: SeedGrid) -> SeedSet:
    return seed_offsets(gc.adaptive_avg_pool(z, grid.shape), w_s, grid)


def pairwise_sq_dist(zf, zs):
    """``||zf_i - zs_k||^2`` for ``zf`` [N,C] and ``zs`` [K,C], clipped at 0."""
    d = (zf * zf).sum(1)[:, None] + (zs * zs).sum(1)[None, :] - 2.0 * (zf @ zs.T)
    return np.maximum(d, 0.0)


def t_kernel_assign(zf, zs):
    """Return ``(P, u)`` where ``u = (1+d)^-1/2`` and P is u row-normalized."""
    u = 1.0 / np.sqrt(1.0 + pairwise_sq_dist(zf, zs))
    return u / u.sum(axis=1, keepdims=True), u


def flat_features(z):
    z = np.asarray(z, dtype=np.float64)
    return z.reshape(z.shape[0], -1).T


def soft_assign(z, seeds: SeedSet):
    zf = flat_features(z)
    if seeds.indexes.min() < 0 or seeds.indexes.max() >= zf.shape[0]:
        raise InvalidArgument("seed index outside the image")
    return t_kernel_assign(zf, zf[seeds.indexes])[0]


def t_kernel_backward(grad_p, p, u, zf, zs):
    """Gradients of a loss w.r.t. pixel features ``zf`` and seed features ``zs``."""
    gu = (grad_p - (grad_p * p).sum(axis=1, keepdims=True)) / u.sum(axis=1, keepdims=True)
    gd = gu * (-0.5 * u**3)
    g_zf = 2.0 * (gd.sum(axis=1)[:, None] * zf - gd @ zs)
    g_zs = 2.0 * (gd.sum(axis=0)[:, None] * zs - gd.T @ zf)
    return g_zf, g_zs


def hard_labels(p):
    # argmax returns the first maximum, i.e. ties go to the lowest seed index
    return np.argmax(np.asarray(p), axis=1)


def nearest_seed_labels(zf, zs):
    """Same labels as ``hard_labels(t_kernel_assign(zf, zs)[0])`` without building P.

    The kernel is strictly decreasing in distance, so the argmax of P is the
    argmin of the squared distance (first minimum on ties).
    """
    return np.argmin(pairwise_sq_dist(zf, zs), axis=1)


def topn_mask(seeds: SeedSet, height: int, width: int, n: int):
    """0/1 mask of each pixel's ``n`` spatially (L1) nearest seeds, ties to lower k."""
    K = seeds.K
    if n > K:
        raise InvalidArgument(f"top-n {n} exceeds seed count {K}")
    if n < 1:
        raise InvalidArgument(f"top-n must be >= 1, got {n}")
    rr = np.repeat(np.arange(height), width)
    cc = np.tile(np.arange(width), height)
    dist = np.abs(rr[:, None] - seeds.rows[None, :]) + np.abs(cc[:, None] - seeds.cols[None, :])
    mask = np.zeros((height * width, K))
    if n == K:
        mask[:] = 1.0
        return mask
    key = dist * K + np.arange(K)[None, :]
    nearest = np.argpartition(key, n - 1, axis=1)[:, :n]
    np.put_along_axis(mask, nearest, 1.0, axis=1)
    return mask


def spatial_feature_gradients(z, rows, cols):
    """Finite-difference dZ/drow and dZ/dcol at the given pixels, each [K,C]."""
    c, h, w = z.shape
    rp, rm = np.minimum(rows + 1, h - 1), np.maximum(rows - 1, 0)
    cp, cm = np.minimum(cols + 1, w - 1), np.maximum(cols - 1, 0)
    dr_den = np.maximum(rp - rm, 1)
    dc_den = np.maximum(cp - cm, 1)
    dz_dr = (z[:, rp, cols] - z[:, rm, cols]) / dr_den
    dz_dc = (z[:, rows, cp] - z[:, rows, cm]) / dc_den
    return dz_dr.T, dz_dc.T


def seed_weight_gradient(grad_zs, z, seeds: SeedSet):
    """Straight-through gradient of a loss w.r.t. ``W_s``.

    The nearest-pixel lookup of seed features is treated as locally linear in
    the continuous seed position, with slope given by the finite-difference
    spatial gradient of ``Z`` at the seed pixel.
    """
    dz_dr, dz_dc = spatial_feature_gradients(np.asarray(z, dtype=np.float64), seeds.rows, seeds.cols)
    g_row = (grad_zs * dz_dr).sum(axis=1) * seeds.grid.cell_h
    g_col = (grad_zs * dz_dc).sum(axis=1) * seeds.grid.cell_w
    g_ratio = np.stack([g_row, g_col], axis=1)
    g_logit = gc.sigmoid_backward(g_ratio, seeds.ratios)
    return seeds.pooled.T @ g_logit
