"""Point cloud data model, ASCII I/O, synthetic scenes, and FPS downsampling.

The interchange format is a plain ASCII file:

    points <n> feature_dims <D> classes <C>
    x y z f_1 ... f_D label
    ...

One data line per point, single spaces, reals printed with 17 significant
digits (lossless for float64), label a base-10 integer in [0, C).  Lines
starting with ``#`` are comments.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DataError


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass
class PointCloud:
    """Labeled 3D points with optional per-point feature channels.

    Immutable after construction; arrays are marked non-writeable so a cloud
    can be shared across threads.
    """

    positions: np.ndarray          # (n, 3) float64
    features: np.ndarray           # (n, d) float64, d >= 0
    labels: np.ndarray             # (n,) int64 in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        self.positions = _readonly(np.ascontiguousarray(self.positions, dtype=np.float64))
        self.features = _readonly(np.ascontiguousarray(self.features, dtype=np.float64))
        self.labels = _readonly(np.ascontiguousarray(self.labels, dtype=np.int64))
        n = self.positions.shape[0]
        if n < 1:
            raise DataError("cloud must contain at least one point")
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise DataError(f"positions must be (n, 3), got {self.positions.shape}")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise DataError("features must have one row per point")
        if self.labels.shape != (n,):
            raise DataError("labels must have one entry per point")
        if self.num_classes < 1:
            raise DataError("num_classes must be positive")
        if not np.isfinite(self.positions).all() or not np.isfinite(self.features).all():
            raise DataError("non-finite coordinate or feature value")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise DataError("label out of range")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def feature_dims(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "PointCloud":
        """Sub-cloud at the given point indices (order preserved)."""
        indices = np.asarray(indices, dtype=np.int64)
        return PointCloud(
            positions=self.positions[indices],
            features=self.features[indices],
            labels=self.labels[indices],
            num_classes=self.num_classes,
        )


@dataclass
class LayerStack:
    """Per-resolution clouds; layer 0 is the input, deeper layers are subsets.

    ``parents[s]`` maps each point of layer ``s`` to its index in layer
    ``s - 1`` (``parents[0]`` is None).
    """

    layers: list = field(default_factory=list)
    parents: list = field(default_factory=list)

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass
class SceneSpec:
    """Parameters of a synthetic labeled scene.

    kind: "two-plane" (points along x, split at ``boundary``),
    "checkerboard" (``cells`` x ``cells`` grid of ``cell_size`` squares,
    label = cell parity) or "clusters" (``clusters`` gaussian blobs on a
    circle, label = generating blob).  ``noise`` jitters positions after
    labels are assigned, which is how transition-region ambiguity appears.
    """

    kind: str = "two-plane"
    n: int = 2048
    noise: float = 0.0
    seed: int = 0
    boundary: float | None = None      # two-plane; default (n - 1) / 2
    cells: int = 2                     # checkerboard grid side
    cell_size: float = 10.0            # checkerboard cell edge length
    clusters: int = 3                  # cluster count = class count
    spread: float = 3.0                # cluster blob standard deviation
    ring_radius: float = 10.0          # circle the cluster centers sit on

    def __post_init__(self):
        if self.kind not in ("two-plane", "checkerboard", "clusters"):
            raise DataError(f"unknown scene kind {self.kind!r}")
        if self.n < 2:
            raise DataError("scene needs at least 2 points")
        if self.noise < 0:
            raise DataError("noise must be >= 0")


def generate_scene(spec: SceneSpec) -> PointCloud:
    """Deterministic synthetic scene for the given spec and seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "two-plane":
        boundary = (spec.n - 1) / 2.0 if spec.boundary is None else spec.boundary
        base = np.zeros((spec.n, 3), dtype=np.float64)
        base[:, 0] = np.arange(spec.n, dtype=np.float64)
        labels = (base[:, 0] > boundary).astype(np.int64)
        num_classes = 2
    elif spec.kind == "checkerboard":
        if spec.n < 2:
            raise DataError("checkerboard needs at least 2 points")
        cells = spec.cells
        cell_ids = np.arange(spec.n, dtype=np.int64) % (cells * cells)
        cx = cell_ids % cells
        cy = cell_ids // cells
        base = np.zeros((spec.n, 3), dtype=np.float64)
        base[:, 0] = (cx + rng.uniform(0.0, 1.0, spec.n)) * spec.cell_size
        base[:, 1] = (cy + rng.uniform(0.0, 1.0, spec.n)) * spec.cell_size
        labels = ((cx + cy) % 2).astype(np.int64)
        num_classes = 2
    else:  # clusters
        k = spec.clusters
        if spec.n < k:
            raise DataError(f"{spec.n} points cannot cover {k} cluster classes")
        angles = 2.0 * np.pi * np.arange(k) / k
        centers = np.stack(
            [spec.ring_radius * np.cos(angles), spec.ring_radius * np.sin(angles), np.zeros(k)],
            axis=1,
        )
        labels = (np.arange(spec.n, dtype=np.int64) % k).astype(np.int64)
        base = centers[labels] + rng.normal(0.0, spec.spread, (spec.n, 3))
        num_classes = k
    positions = base
    if spec.noise > 0:
        positions = base + rng.normal(0.0, spec.noise, (spec.n, 3))
    return PointCloud(
        positions=positions,
        features=np.zeros((spec.n, 0), dtype=np.float64),
        labels=labels,
        num_classes=num_classes,
    )


def fps_downsample(cloud: PointCloud, target: int, start: int = 0):
    """Farthest-point-sampling subset of ``target`` points.

    Greedy selection begins at ``start``; argmax ties break toward the
    smallest index.  Selected indices are returned sorted ascending, so the
    sub-cloud preserves the source ordering and ``target == n`` yields the
    identity mapping.

    Returns (sub-cloud, parent_index) where parent_index[i] is the source
    index of the i-th selected point.
    """
    if not 1 <= target <= cloud.n:
        raise DataError(f"fps target {target} out of range [1, {cloud.n}]")
    if not 0 <= start < cloud.n:
        raise DataError(f"fps start {start} out of range")
    selected = kernels.fps_select(cloud.positions, target, start)
    parent_index = np.sort(selected)
    return cloud.take(parent_index), parent_index


# --- ASCII I/O -------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def save_ascii(cloud: PointCloud, path) -> None:
    """Write the ASCII interchange format; byte-deterministic per cloud."""
    lines = [f"points {cloud.n} feature_dims {cloud.feature_dims} classes {cloud.num_classes}"]
    for i in range(cloud.n):
        parts = [_fmt(v) for v in cloud.positions[i]]
        parts += [_fmt(v) for v in cloud.features[i]]
        parts.append(str(int(cloud.labels[i])))
        lines.append(" ".join(parts))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def load_ascii(path) -> PointCloud:
    """Parse the ASCII interchange format, reporting errors with line numbers."""
    with open(path, "r", encoding="ascii") as fh:
        raw = fh.read().splitlines()

    header = None
    header_line = 0
    data_lines = []
    for lineno, line in enumerate(raw, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if header is None:
            header = stripped
            header_line = lineno
        else:
            data_lines.append((lineno, stripped))

    if header is None:
        raise DataError(f"{path}: empty file, no header")
    tok = header.split()
    if len(tok) != 6 or tok[0] != "points" or tok[2] != "feature_dims" or tok[4] != "classes":
        raise DataError(f"malformed header, line {header_line}")
    try:
        n, dims, classes = int(tok[1]), int(tok[3]), int(tok[5])
    except ValueError:
        raise DataError(f"malformed header, line {header_line}") from None
    if n < 1 or dims < 0 or classes < 1:
        raise DataError(f"malformed header, line {header_line}")
    if len(data_lines) != n:
        raise DataError(f"expected {n} data lines, found {len(data_lines)}")

    positions = np.empty((n, 3), dtype=np.float64)
    features = np.empty((n, dims), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    width = 3 + dims + 1
    for row, (lineno, line) in enumerate(data_lines):
        cols = line.split()
        if len(cols) != width:
            raise DataError(f"expected {width} columns, got {len(cols)}, line {lineno}")
        try:
            values = [float(c) for c in cols[:-1]]
            label = int(cols[-1])
        except ValueError:
            raise DataError(f"unparseable value, line {lineno}") from None
        if not all(np.isfinite(v) for v in values):
            raise DataError(f"non-finite value, line {lineno}")
        if not 0 <= label < classes:
            raise DataError(f"label out of range, line {lineno}")
        positions[row] = values[:3]
        features[row] = values[3:]
        labels[row] = label
    return PointCloud(positions=positions, features=features, labels=labels, num_classes=classes)
