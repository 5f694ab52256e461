"""Full network: FEM -> (NCM, reconstruction head), its loss and gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem, grm, loss, ncm
from .fem import FemConfig
from .imagefeat import FeatureImage
from .loss import LossConfig

FEM_PREFIXES = ("aspp", "conv1", "conv2")
SEED_WEIGHT = "seed.weight"
RECON_WEIGHT = "recon.weight"


def init_params(config: FemConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params = fem.init_fem_params(config, rng)
    bound = np.sqrt(1.0 / config.c_2)
    params[SEED_WEIGHT] = rng.uniform(-bound, bound, size=(config.c_2, 2))
    params[RECON_WEIGHT] = rng.uniform(-bound, bound, size=(config.c_2, 5))
    return params


def fem_param_names(params) -> list[str]:
    return [k for k in params if k.startswith(FEM_PREFIXES)]


def count_params(params) -> int:
    return int(sum(v.size for v in params.values()))


@dataclass
class ForwardResult:
    z: np.ndarray
    cache: dict
    seeds: ncm.SeedSet
    p: np.ndarray
    u: np.ndarray
    mask: np.ndarray | None = None
    p_tilde: np.ndarray | None = None
    q: np.ndarray | None = None
    x_r: np.ndarray | None = None

    @property
    def zf(self):
        return ncm.flat_features(self.z)


@dataclass
class LossTerms:
    l_c: float
    l_rc: float
    l_rs: float
    total: float

    @property
    def l_r_parts(self):
        return self.l_rc, self.l_rs


def forward(params, features, grid: ncm.SeedGrid, config: FemConfig = FemConfig(),
            topn: int | None = None, with_recon: bool = False, epsilon_div: float = 1e-12,
            target=None):
    """Embed, place seeds and soft-assign. With ``topn`` also build P~ and Q~.

    ``target`` replaces the computed Q~ (used to hold the self-training target
    fixed while probing the loss numerically).
    """
    z, cache = fem.fem_forward(features, params, config)
    seeds = ncm.estimate_seeds(z, params[SEED_WEIGHT], grid)
    zf = ncm.flat_features(z)
    p, u = ncm.t_kernel_assign(zf, zf[seeds.indexes])
    out = ForwardResult(z=z, cache=cache, seeds=seeds, p=p, u=u)
    if topn is not None:
        out.mask = ncm.topn_mask(seeds, grid.height, grid.width, min(topn, grid.K))
        out.p_tilde = loss.range_limited_assign(p, out.mask)
        out.q = loss.target_distribution(out.p_tilde, epsilon_div) if target is None else target
    if with_recon:
        out.x_r = grm.recon_forward(z, params[RECON_WEIGHT])
    return out


def segment_labels(params, features, grid: ncm.SeedGrid, config: FemConfig = FemConfig()):
    """Forward-only hard labels as an ``H x W`` map (no post-processing)."""
    z, _ = fem.fem_forward(features, params, config)
    seeds = ncm.estimate_seeds(z, params[SEED_WEIGHT], grid)
    zf = ncm.flat_features(z)
    return ncm.nearest_seed_labels(zf, zf[seeds.indexes]).reshape(grid.height, grid.width)


def evaluate_loss(params, image: FeatureImage, grid, loss_config: LossConfig = LossConfig(),
                  config: FemConfig = FemConfig(), target=None) -> tuple[LossTerms, ForwardResult]:
    fwd = forward(params, image.features, grid, config, topn=loss_config.n, with_recon=True,
                  epsilon_div=loss_config.epsilon_div, target=target)
    l_c = loss.cluster_loss(fwd.p, fwd.p_tilde, fwd.q, fwd.mask, loss_config.epsilon_div)
    l_rc, l_rs, _, _ = loss.recon_loss(fwd.x_r, image.features)
    total = l_c + loss_config.beta * (l_rc + loss_config.phi * l_rs)
    return LossTerms(l_c, l_rc, l_rs, total), fwd


@dataclass
class GradientOptions:
    """Which rescaling layers are active and which parameter groups need gradients."""

    gal: bool = True
    gbl: bool = True
    contour_epsilon: float = 0.1
    fem: bool = True
    seed: bool = True
    recon: bool = True


@dataclass
class GradientResult:
    terms: LossTerms
    grads: dict[str, np.ndarray]
    grad_z: np.ndarray | None = None          # gradient entering FEM, after GAL
    grad_z_raw: np.ndarray | None = None      # same, before GAL
    forward: ForwardResult | None = None
    extras: dict = field(default_factory=dict)


def compute_gradients(params, image: FeatureImage, grid: ncm.SeedGrid,
                      loss_config: LossConfig = LossConfig(), *, strength=None, memory=None,
                      options: GradientOptions = GradientOptions(),
                      config: FemConfig = FemConfig()) -> GradientResult:
    """Loss terms and gradients for one image.

    ``strength`` and ``memory`` are the channel strength ``g`` and memory ``m``
    used by GAL; both are required when ``options.gal`` is set.
    """
    terms, fwd = evaluate_loss(params, image, grid, loss_config, config)
    eps = loss_config.epsilon_div
    g_p = loss.cluster_loss_grad(fwd.p, fwd.mask, fwd.q, eps)
    zf = fwd.zf
    zs = zf[fwd.seeds.indexes]
    g_zf, g_zs = ncm.t_kernel_backward(g_p, fwd.p, fwd.u, zf, zs)
    g_zf = g_zf.copy()
    np.add.at(g_zf, fwd.seeds.indexes, g_zs)
    grad_z = g_zf.T.reshape(fwd.z.shape)

    _, _, g_color, g_spatial = loss.recon_loss(fwd.x_r, image.features)
    g_spatial = g_spatial * loss_config.phi
    if options.gbl:
        if image.contour is None:
            raise ValueError("GBL requires a contour map on the feature image")
        g_spatial = grm.gbl_scale(g_spatial, image.contour, options.contour_epsilon)
    g_xr = loss_config.beta * np.concatenate([g_color, g_spatial])
    g_z_rec, g_wr = grm.recon_backward(g_xr, fwd.z, params[RECON_WEIGHT])
    grad_z = grad_z + g_z_rec

    grads = {}
    if options.recon:
        grads[RECON_WEIGHT] = g_wr
    if options.seed:
        grads[SEED_WEIGHT] = ncm.seed_weight_gradient(g_zs, fwd.z, fwd.seeds)
    grad_z_raw = grad_z
    if options.gal:
        if strength is None or memory is None:
            raise ValueError("GAL requires channel strength and memory")
        grad_z = grm.gal_scale(grad_z, strength, memory)
    if options.fem:
        grads.update(fem.fem_backward(grad_z, fwd.cache, params, config))
    return GradientResult(terms=terms, grads=grads, grad_z=grad_z, grad_z_raw=grad_z_raw,
                          forward=fwd, extras={"grad_seed_features": g_zs})
