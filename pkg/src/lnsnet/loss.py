"""Range-limited cluster loss and color/spatial reconstruction loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, LNSError, TrainingDiverged
from .grm import COLOR_COLS, SPATIAL_COLS


@dataclass(frozen=True)
class LossConfig:
    beta: float = 10.0
    phi: float = 1.0
    n: int = 9
    epsilon_div: float = 1e-12

    def __post_init__(self):
        if self.beta <= 0 or self.phi <= 0:
            raise InvalidArgument("beta and phi must be positive")
        if self.n < 1:
            raise InvalidArgument(f"top-n must be >= 1, got {self.n}")
        if self.epsilon_div <= 0:
            raise InvalidArgument("epsilon_div must be positive")


def range_limited_assign(p, mask):
    """Mask P to each pixel's top-n seeds and renormalize rows."""
    pm = np.asarray(p, dtype=np.float64) * mask
    s = pm.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise LNSError("range-limited assignment has an all-zero row")
    return pm / s


def target_distribution(p_tilde, epsilon_div: float = 1e-12):
    """Sharpened, cluster-size-normalized target ``Q~``."""
    p_tilde = np.asarray(p_tilde, dtype=np.float64)
    f = p_tilde.sum(axis=0)
    weight = np.where(f > epsilon_div, 1.0 / np.maximum(f, epsilon_div), 0.0)
    q = p_tilde**2 * weight[None, :]
    return q / np.maximum(q.sum(axis=1, keepdims=True), epsilon_div)


def kl_term(q, p_tilde, epsilon_div: float = 1e-12):
    """``sum_ik Q log Q - Q log P~`` with ``0 log 0 = 0``."""
    support = q > 0
    qs = q[support]
    return float(np.sum(qs * (np.log(qs) - np.log(np.maximum(p_tilde[support], epsilon_div)))))


def out_of_range_penalty(p, mask, epsilon_div: float = 1e-12):
    """Mean over pixels of out-of-range mass divided by in-range mass."""
    p = np.asarray(p, dtype=np.float64)
    inside = (p * mask).sum(axis=1)
    outside = (p * (1.0 - mask)).sum(axis=1)
    return float(np.mean(outside / (inside + epsilon_div)))


def cluster_loss(p, p_tilde, q, mask, epsilon_div: float = 1e-12):
    return kl_term(q, p_tilde, epsilon_div) + out_of_range_penalty(p, mask, epsilon_div)


def cluster_loss_grad(p, mask, q, epsilon_div: float = 1e-12):
    """Gradient of the cluster loss w.r.t. ``P``, holding ``Q~`` constant."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    pm = p * mask
    inside = pm.sum(axis=1, keepdims=True)
    outside = (p * (1.0 - mask)).sum(axis=1, keepdims=True)
    p_tilde = pm / inside
    # KL part through the renormalization P~ = P*M / sum(P*M)
    g_pt = np.where(q > 0, -q / np.maximum(p_tilde, epsilon_div), 0.0)
    g_p = mask * (g_pt - (g_pt * p_tilde).sum(axis=1, keepdims=True)) / inside
    denom = inside + epsilon_div
    g_p += ((1.0 - mask) / denom - mask * outside / denom**2) / n
    return g_p


def recon_loss(x_r, x):
    """Return ``(color_mse, spatial_mse, grad_color, grad_spatial)``.

    Gradients are those of the plain (unweighted) MSE terms w.r.t. the
    color and spatial halves of ``x_r``.
    """
    diff = np.asarray(x_r, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    dc, ds = diff[COLOR_COLS], diff[SPATIAL_COLS]
    l_rc = float(np.mean(dc**2))
    l_rs = float(np.mean(ds**2))
    return l_rc, l_rs, 2.0 * dc / dc.size, 2.0 * ds / ds.size


def total_loss(l_c, l_r, beta: float, task_id=None, epoch=None):
    if not (np.isfinite(l_c) and np.isfinite(l_r)):
        raise TrainingDiverged("non-finite loss", task_id=task_id, epoch=epoch)
    return l_c + beta * l_r
