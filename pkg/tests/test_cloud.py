"""Cloud data model, ASCII round trips, scenes, and FPS downsampling."""

import numpy as np
import pytest

from ambiseg import (DataError, PointCloud, SceneSpec, fps_downsample,
                     generate_scene, load_ascii, save_ascii)


def random_cloud(rng, n=None, dims=None, classes=None):
    n = n or int(rng.integers(1, 40))
    dims = dims if dims is not None else int(rng.integers(0, 4))
    classes = classes or int(rng.integers(1, 5))
    return PointCloud(
        positions=rng.normal(0, 100, (n, 3)) * 10.0 ** rng.integers(-6, 6),
        features=rng.normal(0, 1, (n, dims)),
        labels=rng.integers(0, classes, n),
        num_classes=classes,
    )


class TestAsciiFormat:
    def test_minimal_parse(self, tmp_path):
        path = tmp_path / "c.pts"
        path.write_text("points 2 feature_dims 0 classes 2\n0 0 0 0\n1 0 0 1\n")
        cloud = load_ascii(path)
        assert cloud.n == 2
        assert cloud.num_classes == 2
        assert cloud.labels.tolist() == [0, 1]
        assert cloud.positions[1, 0] == 1.0

    def test_comments_skipped(self, tmp_path):
        path = tmp_path / "c.pts"
        path.write_text("# a comment\npoints 1 feature_dims 1 classes 1\n"
                        "# another\n0.5 0 0 2.25 0\n")
        cloud = load_ascii(path)
        assert cloud.features[0, 0] == 2.25

    def test_label_out_of_range_reports_line(self, tmp_path):
        path = tmp_path / "c.pts"
        path.write_text("points 2 feature_dims 0 classes 2\n0 0 0 0\n1 0 0 5\n")
        with pytest.raises(DataError, match="label out of range, line 3"):
            load_ascii(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "c.pts"
        path.write_text("point_count 2\n")
        with pytest.raises(DataError, match="malformed header, line 1"):
            load_ascii(path)

    def test_row_arity_mismatch_reports_line(self, tmp_path):
        path = tmp_path / "c.pts"
        path.write_text("points 1 feature_dims 0 classes 1\n0 0 0 0 99\n")
        with pytest.raises(DataError, match="line 2"):
            load_ascii(path)

    def test_non_finite_value_rejected(self, tmp_path):
        path = tmp_path / "c.pts"
        path.write_text("points 1 feature_dims 0 classes 1\nnan 0 0 0\n")
        with pytest.raises(DataError, match="non-finite value, line 2"):
            load_ascii(path)

    def test_single_point_file_has_two_lines(self, tmp_path):
        cloud = PointCloud(np.zeros((1, 3)), np.zeros((1, 0)),
                           np.zeros(1, dtype=int), 1)
        path = tmp_path / "c.pts"
        save_ascii(cloud, path)
        assert len(path.read_text().strip().splitlines()) == 2

    def test_save_deterministic(self, tmp_path):
        cloud = random_cloud(np.random.default_rng(7))
        a, b = tmp_path / "a.pts", tmp_path / "b.pts"
        save_ascii(cloud, a)
        save_ascii(cloud, b)
        assert a.read_bytes() == b.read_bytes()

    def test_round_trip_100_random_clouds(self, tmp_path):
        # 17 significant digits are lossless for float64
        rng = np.random.default_rng(42)
        path = tmp_path / "c.pts"
        for _ in range(100):
            cloud = random_cloud(rng)
            save_ascii(cloud, path)
            back = load_ascii(path)
            assert np.array_equal(back.positions, cloud.positions)
            assert np.array_equal(back.features, cloud.features)
            assert np.array_equal(back.labels, cloud.labels)
            assert back.num_classes == cloud.num_classes


class TestCloudInvariants:
    def test_rejects_empty(self):
        with pytest.raises(DataError):
            PointCloud(np.zeros((0, 3)), np.zeros((0, 0)), np.zeros(0, int), 1)

    def test_rejects_bad_label(self):
        with pytest.raises(DataError, match="label"):
            PointCloud(np.zeros((2, 3)), np.zeros((2, 0)), np.array([0, 3]), 2)

    def test_rejects_non_finite(self):
        pos = np.zeros((2, 3))
        pos[1, 1] = np.inf
        with pytest.raises(DataError):
            PointCloud(pos, np.zeros((2, 0)), np.zeros(2, int), 1)

    def test_arrays_are_readonly(self):
        cloud = random_cloud(np.random.default_rng(0))
        with pytest.raises(ValueError):
            cloud.positions[0, 0] = 1.0


class TestScenes:
    def test_two_plane_integer_line(self):
        cloud = generate_scene(SceneSpec(kind="two-plane", n=16, noise=0.0, seed=3))
        expect = np.zeros((16, 3))
        expect[:, 0] = np.arange(16)
        assert np.array_equal(cloud.positions, expect)
        assert cloud.labels.tolist() == [0] * 8 + [1] * 8

    def test_two_plane_custom_boundary(self):
        cloud = generate_scene(SceneSpec(kind="two-plane", n=10, boundary=2.5))
        assert cloud.labels.tolist() == [0] * 3 + [1] * 7

    @pytest.mark.parametrize("kind", ["two-plane", "checkerboard", "clusters"])
    def test_same_seed_same_cloud(self, kind):
        spec = SceneSpec(kind=kind, n=128, noise=0.05, seed=11)
        a = generate_scene(spec)
        b = generate_scene(spec)
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.labels, b.labels)

    def test_checkerboard_labels_match_cell_parity(self):
        spec = SceneSpec(kind="checkerboard", n=400, cells=2, noise=0.0, seed=5)
        cloud = generate_scene(spec)
        cx = np.floor(cloud.positions[:, 0] / spec.cell_size).astype(int)
        cy = np.floor(cloud.positions[:, 1] / spec.cell_size).astype(int)
        assert np.array_equal(cloud.labels, (cx + cy) % 2)

    def test_two_plane_noise_free_rule(self):
        spec = SceneSpec(kind="two-plane", n=801, noise=0.0, seed=2)
        cloud = generate_scene(spec)
        rule = (cloud.positions[:, 0] > (spec.n - 1) / 2).astype(int)
        assert np.array_equal(cloud.labels, rule)

    def test_clusters_regeneration_rule(self):
        spec = SceneSpec(kind="clusters", n=90, clusters=3, noise=0.0, seed=9)
        assert np.array_equal(generate_scene(spec).labels,
                              generate_scene(spec).labels)

    def test_clusters_too_few_points(self):
        with pytest.raises(DataError, match="cluster"):
            generate_scene(SceneSpec(kind="clusters", n=2, clusters=3))

    def test_unknown_kind(self):
        with pytest.raises(DataError):
            SceneSpec(kind="spiral", n=8)


def brute_force_fps(positions, target, start):
    """Independent FPS oracle: literal greedy selection over all pairs."""
    n = positions.shape[0]
    chosen = [start]
    while len(chosen) < target:
        best_d, best_i = -1.0, None
        for j in range(n):
            if j in chosen:
                continue
            d = min(((positions[j] - positions[c]) ** 2).sum() for c in chosen)
            if d > best_d:
                best_d, best_i = d, j
        chosen.append(best_i)
    return sorted(chosen)


class TestFps:
    def test_square_corners(self):
        cloud = PointCloud(
            np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.]]),
            np.zeros((4, 0)), np.zeros(4, int), 1)
        sub, parent = fps_downsample(cloud, 2, start=0)
        assert parent.tolist() == [0, 3]

    def test_target_equals_n_is_identity(self):
        cloud = random_cloud(np.random.default_rng(1), n=17)
        sub, parent = fps_downsample(cloud, 17)
        assert parent.tolist() == list(range(17))
        assert np.array_equal(sub.positions, cloud.positions)

    def test_target_one_is_start(self):
        cloud = random_cloud(np.random.default_rng(2), n=9)
        sub, parent = fps_downsample(cloud, 1, start=4)
        assert parent.tolist() == [4]

    def test_target_out_of_range(self):
        cloud = random_cloud(np.random.default_rng(3), n=5)
        with pytest.raises(DataError):
            fps_downsample(cloud, 6)
        with pytest.raises(DataError):
            fps_downsample(cloud, 0)

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            n = int(rng.integers(4, 30))
            cloud = PointCloud(rng.uniform(0, 5, (n, 3)), np.zeros((n, 0)),
                               np.zeros(n, int), 1)
            target = int(rng.integers(1, n + 1))
            start = int(rng.integers(0, n))
            _, parent = fps_downsample(cloud, target, start)
            assert parent.tolist() == brute_force_fps(cloud.positions, target, start)

    def test_selected_min_distance_non_increasing_in_target(self):
        rng = np.random.default_rng(21)
        cloud = PointCloud(rng.uniform(0, 10, (40, 3)), np.zeros((40, 0)),
                           np.zeros(40, int), 1)

        def min_pair_dist(idx):
            pos = cloud.positions[idx]
            diff = pos[:, None, :] - pos[None, :, :]
            d2 = (diff * diff).sum(-1)
            np.fill_diagonal(d2, np.inf)
            return d2.min()

        prev = np.inf
        for target in range(2, 41, 4):
            _, parent = fps_downsample(cloud, target)
            cur = min_pair_dist(parent)
            assert cur <= prev + 1e-12
            prev = cur

    def test_labels_and_features_carried(self):
        cloud = random_cloud(np.random.default_rng(4), n=20, dims=2, classes=3)
        sub, parent = fps_downsample(cloud, 7)
        assert np.array_equal(sub.labels, cloud.labels[parent])
        assert np.array_equal(sub.features, cloud.features[parent])
