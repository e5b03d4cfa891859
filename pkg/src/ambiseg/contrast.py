"""Margin-shifted supervised contrastive loss on point features.

Per anchor, intra-pair similarities are exponentiated with the margin
subtracted, inter-pair similarities without it, and the loss is the negative
log share of the intra mass.  Anchors with no inter neighbor are excluded
from the layer mean.  The anchor's self pair (similarity 1) is part of the
intra sums; it shifts the value but contributes zero gradient.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError

_EXP_ARG_WARN = 700.0


@dataclass
class ContrastConfig:
    tau: float = 0.3              # temperature on the similarity scale
    norm_epsilon: float = 1e-12   # guard for zero-norm feature vectors

    def __post_init__(self):
        if not self.tau > 0:
            raise DataError("tau must be > 0")
        if not self.norm_epsilon > 0:
            raise DataError("norm_epsilon must be > 0")


@dataclass
class PointLossInput:
    """Feature-space view of one anchor's neighborhood."""

    anchor_feature: np.ndarray
    intra_features: list = field(default_factory=list)   # includes the anchor
    inter_features: list = field(default_factory=list)
    margin: float = 0.0


def cosine_sim(u, v, eps: float = 1e-12) -> float:
    """Cosine similarity, eps-guarded norms, clamped to [-1, 1]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    s = float(u @ v / (max(np.sqrt(u @ u), eps) * max(np.sqrt(v @ v), eps)))
    return min(1.0, max(-1.0, s))


def pair_embeddings(sims_intra, sims_inter, m: float, tau: float):
    """Exponentiated similarities: exp((s - m)/tau) intra, exp(s/tau) inter."""
    sims_intra = np.asarray(sims_intra, dtype=np.float64)
    sims_inter = np.asarray(sims_inter, dtype=np.float64)
    arg_intra = (sims_intra - m) / tau
    arg_inter = sims_inter / tau
    biggest = max(
        np.abs(arg_intra).max() if arg_intra.size else 0.0,
        np.abs(arg_inter).max() if arg_inter.size else 0.0,
    )
    if biggest > _EXP_ARG_WARN:
        warnings.warn(f"exp argument magnitude {biggest:.3g} may overflow")
    return np.exp(arg_intra), np.exp(arg_inter)


def point_loss(inp: PointLossInput, cfg: ContrastConfig) -> float:
    """Contrastive loss of one anchor; strictly positive when inter pairs exist."""
    if len(inp.intra_features) < 1:
        raise DataError("intra set must contain at least the anchor")
    if len(inp.inter_features) < 1:
        raise DataError("point_loss needs at least one inter pair")
    eps = cfg.norm_epsilon
    sims_intra = [cosine_sim(inp.anchor_feature, f, eps) for f in inp.intra_features]
    sims_inter = [cosine_sim(inp.anchor_feature, f, eps) for f in inp.inter_features]
    emb_intra, emb_inter = pair_embeddings(sims_intra, sims_inter, inp.margin, cfg.tau)
    sum_intra = float(emb_intra.sum())
    sum_inter = float(emb_inter.sum())
    return float(np.log(sum_intra + sum_inter) - np.log(sum_intra))


def zero_margin_reference(sims_intra, sims_inter, tau: float) -> float:
    """Plain supervised contrastive objective, evaluated directly.

    Cross-check path for point_loss with margin 0: computes
    -log(sum exp(s+/tau) / sum exp(s/tau over all pairs)) with no margin
    machinery at all.
    """
    sims_intra = np.asarray(sims_intra, dtype=np.float64)
    sims_inter = np.asarray(sims_inter, dtype=np.float64)
    num = np.exp(sims_intra / tau).sum()
    den = num + np.exp(sims_inter / tau).sum()
    return float(-np.log(num / den))


def _as_layer_arrays(features, nbr_idx, intra_mask, margins):
    features = np.ascontiguousarray(features, dtype=np.float64)
    nbr_idx = np.ascontiguousarray(nbr_idx, dtype=np.int64)
    intra_mask = np.ascontiguousarray(intra_mask, dtype=bool)
    margins = np.ascontiguousarray(margins, dtype=np.float64)
    n = features.shape[0]
    if nbr_idx.shape[0] != n or intra_mask.shape != nbr_idx.shape or margins.shape != (n,):
        raise DataError("layer arrays are not row-aligned")
    return features, nbr_idx, intra_mask, margins


def layer_loss(features, nbr_idx, intra_mask, margins, cfg: ContrastConfig) -> float:
    """Mean point loss over the anchors that have at least one inter neighbor.

    Returns 0 when no such anchor exists.  Delegates to the same kernel as
    layer_loss_grad, so the two values are bit-identical.
    """
    loss, _, _ = _layer_loss_grad_raw(features, nbr_idx, intra_mask, margins, cfg)
    return loss


def layer_loss_grad(features, nbr_idx, intra_mask, margins, cfg: ContrastConfig):
    """Layer loss plus its gradient with respect to every feature row."""
    loss, grad, _ = _layer_loss_grad_raw(features, nbr_idx, intra_mask, margins, cfg)
    return loss, grad


def _layer_loss_grad_raw(features, nbr_idx, intra_mask, margins, cfg):
    features, nbr_idx, intra_mask, margins = _as_layer_arrays(
        features, nbr_idx, intra_mask, margins
    )
    return kernels.layer_loss_grad(
        features, nbr_idx, intra_mask, margins, cfg.tau, cfg.norm_epsilon
    )
