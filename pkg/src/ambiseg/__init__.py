"""Ambiguity-aware adaptive-margin contrastive learning for point clouds.

Per-point ambiguity is estimated from how mixed a point's spatial
neighborhood is across labels, mapped to a per-point decision margin, and
used to shift a supervised contrastive objective that trains a small
encoder-decoder segmentation network alongside cross-entropy.
"""

from .ambiguity import (AmbiguityConfig, AmbiguityMap, ambiguity_map,
                        ambiguity_point, closeness, inverse_sigmoid)
from .backend import ACTIVE_BACKEND
from .cloud import (LayerStack, PointCloud, SceneSpec, fps_downsample,
                    generate_scene, load_ascii, save_ascii)
from .contrast import (ContrastConfig, PointLossInput, cosine_sim, layer_loss,
                       layer_loss_grad, pair_embeddings, point_loss)
from .errors import AmbisegError, ConfigError, DataError, NumericError
from .knn import (NeighborIndex, NeighborPartition, build_index, knn, knn_all,
                  partition, partition_layer)
from .margin import (MarginRegime, MarginSpec, boundary_satisfied, margin,
                     margins_from_ambiguity, preset, regime)
from .model import (Metrics, NetConfig, TrainConfig, build_layer_stack,
                    cross_entropy, evaluate, forward, joint_loss, load_model,
                    save_model, train)

__version__ = "0.1.0"
