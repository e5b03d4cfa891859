"""Exact k-nearest-neighbor queries and intra/inter neighborhood partitions.

Ordering contract: the anchor is always entry 0 at squared distance 0, the
remaining entries follow (squared distance, point index) ascending.  At desk
scale a tuned brute-force scan beats tree structures, so the index is a thin
wrapper validating its positions; every query is exact by construction.

Distances are squared euclidean throughout; no square root is ever taken.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError


@dataclass
class NeighborIndex:
    """Validated positions ready for exact kNN queries."""

    positions: np.ndarray  # (n, 3) float64, contiguous

    @property
    def n(self) -> int:
        return self.positions.shape[0]


@dataclass
class NeighborPartition:
    """One anchor's neighborhood split by label agreement.

    ``intra`` holds same-label neighbor indices (anchor included), ``inter``
    the rest; ``d_plus`` / ``d_minus`` are the squared-distance sums of each
    subset, the anchor contributing a zero term to ``d_plus``.
    """

    anchor: int
    intra: np.ndarray
    inter: np.ndarray
    d_plus: float
    d_minus: float


def build_index(positions) -> NeighborIndex:
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise DataError(f"positions must be (n, 3), got {positions.shape}")
    if positions.shape[0] < 1:
        raise DataError("need at least one point")
    if not np.isfinite(positions).all():
        raise DataError("non-finite coordinate")
    return NeighborIndex(positions=positions)


def knn(index: NeighborIndex, anchor: int, k: int):
    """K nearest neighbors of one anchor as [(point index, squared distance)]."""
    n = index.n
    if not 1 <= k <= n:
        raise DataError(f"k={k} out of range [1, {n}]")
    if not 0 <= anchor < n:
        raise DataError(f"anchor {anchor} out of range")
    diff = index.positions - index.positions[anchor]
    d2 = (diff * diff).sum(axis=1)
    d2[anchor] = -np.inf
    order = np.argsort(d2, kind="stable")[:k]
    d2[anchor] = 0.0
    return [(int(i), float(d2[i])) for i in order]


def knn_all(index: NeighborIndex, k: int):
    """kNN of every point at once; returns (idx, d2) arrays of shape (n, k)."""
    if not 1 <= k <= index.n:
        raise DataError(f"k={k} out of range [1, {index.n}]")
    return kernels.knn_all(index.positions, k)


def partition(neighbors, labels, anchor: int) -> NeighborPartition:
    """Split a knn() result into intra/inter sets with squared-distance sums.

    Sums accumulate sequentially in neighbor order, matching the array path
    bit for bit.
    """
    labels = np.asarray(labels)
    ref = labels[anchor]
    intra, inter = [], []
    d_plus = 0.0
    d_minus = 0.0
    for idx, d2 in neighbors:
        if labels[idx] == ref:
            intra.append(idx)
            d_plus += d2
        else:
            inter.append(idx)
            d_minus += d2
    return NeighborPartition(
        anchor=anchor,
        intra=np.asarray(intra, dtype=np.int64),
        inter=np.asarray(inter, dtype=np.int64),
        d_plus=d_plus,
        d_minus=d_minus,
    )


def partition_layer(nbr_idx, nbr_d2, labels):
    """Array-form partitions for a whole layer.

    Returns (intra_count, d_plus, d_minus, intra_mask) where intra_mask[i, j]
    says whether the j-th neighbor of anchor i shares its label.
    """
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    intra_mask = np.ascontiguousarray(labels[nbr_idx] == labels[:, None])
    intra_count, d_plus, d_minus = kernels.partition_sums(
        np.ascontiguousarray(nbr_d2), intra_mask
    )
    return intra_count, d_plus, d_minus, intra_mask
