"""Per-point ambiguity from neighborhood label mixing.

A point whose k-neighborhood is single-label gets ambiguity 0; a point whose
neighborhood contains no other same-label point gets 1; in between, the two
closeness centralities (neighbor count over squared-distance sum, for the
intra and inter subsets) feed an inverse sigmoid.

The vectorized map and the scalar per-point pipeline share operation order
and exp flavor, so they agree bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import DataError
from .knn import NeighborIndex, NeighborPartition, knn_all, partition_layer

# saturate the sigmoid past this argument instead of evaluating exp
_SIGMOID_CUTOFF = 500.0


@dataclass
class AmbiguityConfig:
    beta: float = 0.04        # sigmoid sharpness on the centrality gap
    k: int = 24               # neighborhood size (anchor included)
    epsilon: float = 1e-12    # guard for zero distance sums

    def __post_init__(self):
        if not self.beta > 0:
            raise DataError("beta must be > 0")
        if self.k < 2:
            raise DataError("k must be >= 2")
        if not self.epsilon > 0:
            raise DataError("epsilon must be > 0")


@dataclass
class AmbiguityMap:
    """Ambiguity in [0, 1] for every point of one resolution layer."""

    values: np.ndarray
    layer: int = 0


def closeness(count: int, dist_sum: float, epsilon: float = 1e-12) -> float:
    """Closeness centrality: subset size over its squared-distance sum."""
    if count < 1:
        raise DataError("closeness needs a non-empty subset")
    if dist_sum < 0:
        raise DataError("distance sum must be >= 0")
    return count / max(dist_sum, epsilon)


def inverse_sigmoid(cc_plus: float, cc_minus: float, beta: float) -> float:
    """1 / (1 + exp(beta * (cc_plus - cc_minus))), saturating past +-500."""
    delta = beta * (cc_plus - cc_minus)
    if delta > _SIGMOID_CUTOFF:
        return 0.0
    if delta < -_SIGMOID_CUTOFF:
        return 1.0
    return float(1.0 / (1.0 + np.exp(delta)))


def ambiguity_point(part: NeighborPartition, cfg: AmbiguityConfig) -> float:
    """Piecewise ambiguity of one anchor from its neighborhood partition.

    The full neighborhood size is taken from the partition itself, so layers
    where k was clamped keep the all-intra => 0 semantics.
    """
    n_intra = len(part.intra)
    k_eff = n_intra + len(part.inter)
    if n_intra == k_eff:
        return 0.0
    if n_intra == 1:
        return 1.0
    return inverse_sigmoid(
        closeness(n_intra, part.d_plus, cfg.epsilon),
        closeness(len(part.inter), part.d_minus, cfg.epsilon),
        cfg.beta,
    )


def ambiguity_map(cloud: PointCloud, index: NeighborIndex, cfg: AmbiguityConfig,
                  layer: int = 0) -> AmbiguityMap:
    """Ambiguity of every point, vectorized over the whole cloud."""
    if index.n != cloud.n:
        raise DataError("index does not match cloud")
    nbr_idx, nbr_d2 = knn_all(index, cfg.k)
    intra_count, d_plus, d_minus, _ = partition_layer(nbr_idx, nbr_d2, cloud.labels)
    values = ambiguity_values(intra_count, d_plus, d_minus, cfg.k, cfg)
    return AmbiguityMap(values=values, layer=layer)


def ambiguity_values(intra_count, d_plus, d_minus, k: int, cfg: AmbiguityConfig):
    """Piecewise ambiguity on array-form partitions (see ambiguity_point)."""
    inter_count = k - intra_count
    values = np.zeros(intra_count.shape[0], dtype=np.float64)
    values[intra_count == 1] = 1.0
    mid = (intra_count > 1) & (intra_count < k)
    if mid.any():
        cc_plus = intra_count[mid] / np.maximum(d_plus[mid], cfg.epsilon)
        cc_minus = inter_count[mid] / np.maximum(d_minus[mid], cfg.epsilon)
        delta = cfg.beta * (cc_plus - cc_minus)
        core = 1.0 / (1.0 + np.exp(np.clip(delta, -_SIGMOID_CUTOFF, _SIGMOID_CUTOFF)))
        values[mid] = np.where(
            delta > _SIGMOID_CUTOFF, 0.0,
            np.where(delta < -_SIGMOID_CUTOFF, 1.0, core),
        )
    return values
