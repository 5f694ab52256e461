"""Small fixtures shared by several test modules."""

import numpy as np

from lnsnet import imagefeat, model, synthetic
from lnsnet.fem import FemConfig


def random_image(h, w, seed, with_contour=True):
    raster = np.random.default_rng(seed).integers(0, 256, (h, w, 3)).astype(np.uint8)
    return imagefeat.prepare_image(raster, with_contour=with_contour)


def two_region_image(h=8, w=8, seed=0):
    labels = np.zeros((h, w), dtype=np.int64)
    labels[:, w // 2:] = 1
    raster = synthetic.render(labels, synthetic.PALETTE[:2], 0.02, np.random.default_rng(seed))
    return imagefeat.prepare_image(raster), labels


def params_with_bias(seed, bias_scale=0.05):
    rng = np.random.default_rng(seed)
    params = model.init_params(FemConfig(), rng)
    for k in params:
        if k.endswith("bias"):
            params[k] = rng.normal(0, bias_scale, params[k].shape)
    return params
