"""Synthetic piecewise-constant images with known ground truth."""

from __future__ import annotations

import numpy as np

PALETTE = np.array([
    [200, 40, 40],
    [40, 160, 60],
    [40, 70, 200],
    [230, 210, 60],
    [150, 60, 180],
    [40, 190, 190],
], dtype=np.float64)


def quadrant_labels(h: int, w: int, split_row=None, split_col=None):
    """Four rectangular regions meeting at ``(split_row, split_col)``."""
    sr = h // 2 if split_row is None else split_row
    sc = w // 2 if split_col is None else split_col
    lab = np.zeros((h, w), dtype=np.int64)
    lab[:sr, sc:] = 1
    lab[sr:, :sc] = 2
    lab[sr:, sc:] = 3
    return lab


def random_region_labels(h: int, w: int, regions: int, rng: np.random.Generator):
    """Voronoi-style partition from ``regions`` random sites."""
    sites = np.column_stack([rng.uniform(0, h, regions), rng.uniform(0, w, regions)])
    rr, cc = np.mgrid[0:h, 0:w]
    d = (rr[..., None] - sites[:, 0]) ** 2 + (cc[..., None] - sites[:, 1]) ** 2
    return np.argmin(d, axis=-1).astype(np.int64)


def render(labels, colors, noise_sigma: float = 0.0, rng=None):
    """Paint ``labels`` with ``colors`` (0..255) plus Gaussian noise of std
    ``noise_sigma`` on the [0,1] scale; returns a uint8 raster."""
    img = np.asarray(colors, dtype=np.float64)[labels] / 255.0
    if noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        img = img + rng.normal(0.0, noise_sigma, img.shape)
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def four_color_image(h: int = 64, w: int = 64, noise_sigma: float = 0.02, seed: int = 0):
    """Quadrant image in four palette colors; returns ``(raster, gt_labels)``."""
    rng = np.random.default_rng(seed)
    lab = quadrant_labels(h, w)
    return render(lab, PALETTE[:4], noise_sigma, rng), lab


def random_task(h: int, w: int, seed: int, regions: int = 4, noise_sigma: float = 0.02):
    """Random Voronoi image with random colors; returns ``(raster, gt_labels)``."""
    rng = np.random.default_rng(seed)
    lab = random_region_labels(h, w, regions, rng)
    colors = rng.uniform(20, 235, size=(regions, 3))
    return render(lab, colors, noise_sigma, rng), lab
