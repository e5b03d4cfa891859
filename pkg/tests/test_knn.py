"""Exact kNN ordering and neighborhood partitions against brute force."""

import numpy as np
import pytest

from ambiseg import (DataError, SceneSpec, build_index, generate_scene, knn,
                     knn_all, partition, partition_layer)


def brute_force_knn(positions, anchor, k):
    """Anchor first, then remaining points by (squared distance, index)."""
    diff = positions - positions[anchor]
    d2 = (diff * diff).sum(axis=1)
    rest = sorted((d2[j], j) for j in range(len(positions)) if j != anchor)
    return [(anchor, 0.0)] + [(j, d) for d, j in rest[:k - 1]]


class TestKnn:
    def test_collinear_tie_broken_by_index(self):
        idx = build_index(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0.]]))
        assert knn(idx, 1, 3) == [(1, 0.0), (0, 1.0), (2, 1.0)]

    def test_k_one_is_self(self):
        idx = build_index(np.random.default_rng(0).normal(0, 1, (5, 3)))
        assert knn(idx, 3, 1) == [(3, 0.0)]

    def test_k_out_of_range(self):
        idx = build_index(np.zeros((2, 3)))
        with pytest.raises(DataError):
            knn(idx, 0, 3)

    def test_single_point_index(self):
        idx = build_index(np.array([[1.0, 2.0, 3.0]]))
        assert knn(idx, 0, 1) == [(0, 0.0)]

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            build_index(np.array([[0, 0, np.nan]]))

    def test_duplicates_anchor_still_first(self):
        # coincident points: the anchor owns slot 0 even against smaller indices
        pos = np.array([[1, 1, 1], [1, 1, 1], [1, 1, 1.]])
        idx = build_index(pos)
        assert knn(idx, 2, 2) == [(2, 0.0), (0, 0.0)]
        all_idx, all_d2 = knn_all(idx, 3)
        for anchor in range(3):
            assert all_idx[anchor, 0] == anchor

    @pytest.mark.parametrize("k", [1, 5, 24])
    def test_matches_brute_force(self, k):
        rng = np.random.default_rng(13)
        pos = rng.uniform(-1, 1, (200, 3))
        index = build_index(pos)
        all_idx, all_d2 = knn_all(index, k)
        for anchor in range(0, 200, 7):
            expect = brute_force_knn(pos, anchor, k)
            assert knn(index, anchor, k) == expect
            assert all_idx[anchor].tolist() == [i for i, _ in expect]
            assert np.array_equal(all_d2[anchor], np.array([d for _, d in expect]))

    def test_grid_positions_with_ties(self):
        # integer grid produces many exactly-equal distances
        g = np.stack(np.meshgrid(np.arange(4), np.arange(4), np.arange(2)),
                     axis=-1).reshape(-1, 3).astype(float)
        index = build_index(g)
        all_idx, _ = knn_all(index, 8)
        for anchor in range(g.shape[0]):
            expect = brute_force_knn(g, anchor, 8)
            assert all_idx[anchor].tolist() == [i for i, _ in expect]


class TestPartition:
    def test_all_intra(self):
        labels = np.zeros(6, dtype=int)
        nbrs = [(0, 0.0), (1, 1.0), (2, 2.0), (3, 3.0)]
        part = partition(nbrs, labels, 0)
        assert len(part.intra) == 4 and len(part.inter) == 0
        assert part.d_minus == 0.0

    def test_hand_sum(self):
        # anchor + 2 intra at d2=1, 2 inter at d2=4
        labels = np.array([0, 0, 0, 1, 1])
        nbrs = [(0, 0.0), (1, 1.0), (2, 1.0), (3, 4.0), (4, 4.0)]
        part = partition(nbrs, labels, 0)
        assert len(part.intra) == 3 and part.d_plus == 2.0
        assert len(part.inter) == 2 and part.d_minus == 8.0

    def test_two_plane_boundary_anchor(self):
        cloud = generate_scene(SceneSpec(kind="two-plane", n=16, noise=0.0))
        index = build_index(cloud.positions)
        part = partition(knn(index, 7, 3), cloud.labels, 7)
        assert sorted(part.intra.tolist()) == [6, 7]
        assert part.inter.tolist() == [8]
        assert part.d_plus == 1.0 and part.d_minus == 1.0

    def test_counts_and_sums_conserved(self):
        rng = np.random.default_rng(3)
        pos = rng.normal(0, 2, (120, 3))
        labels = rng.integers(0, 4, 120)
        index = build_index(pos)
        k = 16
        nbr_idx, nbr_d2 = knn_all(index, k)
        intra_count, d_plus, d_minus, mask = partition_layer(nbr_idx, nbr_d2, labels)
        assert (intra_count >= 1).all()
        total = nbr_d2.sum(axis=1)
        np.testing.assert_allclose(d_plus + d_minus, total, rtol=1e-12)
        for anchor in range(0, 120, 11):
            part = partition(knn(index, anchor, k), labels, anchor)
            assert len(part.intra) == intra_count[anchor]
            assert part.d_plus == d_plus[anchor]
            assert part.d_minus == d_minus[anchor]

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        pos = rng.normal(0, 1, (60, 3))
        labels = rng.integers(0, 3, 60)
        k = 9
        idx_a, d2_a = knn_all(build_index(pos), k)
        stats_a = partition_layer(idx_a, d2_a, labels)[:3]
        perm = rng.permutation(60)
        idx_b, d2_b = knn_all(build_index(pos[perm]), k)
        stats_b = partition_layer(idx_b, d2_b, labels[perm])[:3]
        inv = np.argsort(perm)
        for a, b in zip(stats_a, stats_b):
            # anchor i of the permuted cloud is original anchor perm[i]
            np.testing.assert_array_equal(a, b[inv])
