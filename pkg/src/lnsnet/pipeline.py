"""Inference glue shared by the CLI and the experiment scripts."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import evalkit, model
from .imagefeat import FeatureImage, build_features
from .ncm import make_grid
from .trainer import ModelState


def segment_features(state: ModelState, image: FeatureImage, requested_k: int,
                     min_size_fraction: float = 0.25) -> evalkit.LabelMap:
    """FEM + NCM forward pass, hard labels, then connectivity enforcement."""
    grid = make_grid(image.height, image.width, requested_k)
    labels = model.segment_labels(state.params, image.features, grid, state.config.fem)
    return evalkit.enforce_connectivity(labels, min_size_fraction, num_superpixels=grid.K)


def segment_raster(state: ModelState, raster, requested_k: int,
                   min_size_fraction: float = 0.25) -> evalkit.LabelMap:
    image = build_features(raster, state.config.color_space)
    return segment_features(state, image, requested_k, min_size_fraction)


def overlay(raster, labels, color=(255, 0, 0)):
    """Copy of ``raster`` with superpixel boundary pixels painted ``color``."""
    out = np.array(raster, dtype=np.uint8, copy=True)
    out[evalkit.boundary_map(labels)] = color
    return out


def cluster_loss_on(state: ModelState, image: FeatureImage, requested_k: int) -> float:
    """Cluster loss of ``image`` under the current model (no update)."""
    grid = make_grid(image.height, image.width, requested_k)
    cfg = state.config.loss
    if cfg.n > grid.K:
        cfg = replace(cfg, n=grid.K)
    return model.evaluate_loss(state.params, image, grid, cfg, state.config.fem)[0].l_c
