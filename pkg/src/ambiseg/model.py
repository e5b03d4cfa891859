"""Desk-scale encoder-decoder point network with joint training.

The encoder repeats (pointwise affine, relu, channelwise max over the
aggregation neighborhood, farthest-point downsample); the decoder walks back
up copying each point's nearest coarse feature, concatenating the skip
feature, and applying an affine + relu; a final affine produces class
logits.  The margin-shifted contrastive loss attaches to the post-relu
feature of every resolution, bottleneck included, and is combined with the
prediction cross-entropy through a balance weight.

Everything is float64 and full-batch, so runs are bit-deterministic for a
fixed seed and backend, and finite-difference gradient checks are
meaningful.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .ambiguity import AmbiguityConfig, ambiguity_values
from .cloud import LayerStack, PointCloud, fps_downsample
from .contrast import ContrastConfig
from .errors import DataError, NumericError
from .knn import partition_layer
from .margin import MarginSpec, margins_from_ambiguity, preset


@dataclass
class NetConfig:
    stages: int = 2
    widths: tuple = (32, 64)       # encoder channel size per stage
    downsample_ratio: int = 4
    aggregation_k: int = 8         # pooling neighborhood (anchor included)
    head_width: int = 32           # full-resolution decoder channels
    seed: int = 0
    fps_start: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.stages < 1:
            raise DataError("stages must be >= 1")
        if len(self.widths) != self.stages:
            raise DataError("widths must list one channel size per stage")
        if self.downsample_ratio < 2:
            raise DataError("downsample_ratio must be >= 2")
        if self.aggregation_k < 1 or self.head_width < 1:
            raise DataError("aggregation_k and head_width must be >= 1")


@dataclass
class TrainConfig:
    lr: float = 0.01
    epochs: int = 100
    momentum: float = 0.9
    balance: float = 0.1           # weight on cross-entropy vs contrastive sum
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    ambiguity: AmbiguityConfig = field(default_factory=AmbiguityConfig)
    margin: MarginSpec = field(default_factory=lambda: preset("s3dis"))

    def __post_init__(self):
        if not self.lr > 0:
            raise DataError("lr must be > 0")
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if not 0.0 <= self.balance <= 1.0:
            raise DataError("balance must be in [0, 1]")


@dataclass
class Metrics:
    confusion: np.ndarray          # (C, C), rows = truth, cols = prediction
    oa: float
    macc: float
    miou: float
    boundary_band_acc: float


# --- layer stack -------------------------------------------------------------


def build_layer_stack(cloud: PointCloud, net: NetConfig) -> LayerStack:
    """Input cloud plus one FPS-downsampled layer per encoder stage."""
    stack = LayerStack(layers=[cloud], parents=[None])
    for _ in range(net.stages):
        prev = stack.layers[-1]
        target = prev.n // net.downsample_ratio
        if target < net.aggregation_k + 1:
            raise DataError(
                f"layer of {target} points would shrink below aggregation_k+1 "
                f"({net.aggregation_k + 1})"
            )
        sub, parent = fps_downsample(prev, target, net.fps_start)
        stack.layers.append(sub)
        stack.parents.append(parent)
    return stack


# fixed conditioning constants: the input gain spreads the unit-radius
# positions so pointwise relu features differentiate early, and the head
# gain scales the logit affine so the classification path trains at the
# same constant learning rate as the deep feature path
_INPUT_GAIN = 4.0
_HEAD_GAIN = 8.0


def input_width(cloud: PointCloud) -> int:
    """Channel count of the network input built by _input_features."""
    return 3 + cloud.feature_dims + 1


def _input_features(cloud: PointCloud):
    """Network input: centered unit-radius positions, raw feature channels,
    and a constant channel.

    The constant channel keeps every input (and hence every contrasted
    feature) bounded away from the zero vector; points on the centering
    plane would otherwise start with near-zero features, whose cosine
    gradients blow up as 1/norm.
    """
    center = cloud.positions.mean(axis=0)
    centered = cloud.positions - center
    radius = np.sqrt((centered * centered).sum(axis=1).max())
    centered *= _INPUT_GAIN / max(radius, 1e-12)
    ones = np.ones((cloud.n, 1))
    return np.ascontiguousarray(np.concatenate([centered, cloud.features, ones], axis=1))


# --- parameters --------------------------------------------------------------


def _feat_width(net: NetConfig, layer: int) -> int:
    if layer == net.stages:
        return net.widths[-1]
    if layer >= 1:
        return net.widths[layer - 1]
    return net.head_width


def param_order(net: NetConfig):
    names = []
    for s in range(1, net.stages + 1):
        names += [f"enc{s}.w", f"enc{s}.b"]
    for s in range(net.stages - 1, -1, -1):
        names += [f"dec{s}.w", f"dec{s}.b"]
    names += ["head.w", "head.b"]
    return names


def init_params(net: NetConfig, d_in: int, num_classes: int, rng=None):
    """Seeded uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    if rng is None:
        rng = np.random.default_rng(net.seed)
    params = {}

    def affine(name, fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"{name}.w"] = rng.uniform(-bound, bound, (fan_in, fan_out))
        params[f"{name}.b"] = np.zeros(fan_out)

    for s in range(1, net.stages + 1):
        fan_in = d_in if s == 1 else net.widths[s - 2]
        affine(f"enc{s}", fan_in, net.widths[s - 1])
    for s in range(net.stages - 1, -1, -1):
        skip = net.widths[s - 1] if s >= 1 else d_in
        affine(f"dec{s}", _feat_width(net, s + 1) + skip, _feat_width(net, s))
    affine("head", net.head_width, num_classes)
    return params


# --- precomputed geometry ----------------------------------------------------


@dataclass
class _LayerLossData:
    nbr_idx: np.ndarray
    intra_mask: np.ndarray
    margins: np.ndarray
    ambiguity: np.ndarray


@dataclass
class TrainingPrep:
    """Position- and label-derived quantities, constant across epochs."""

    stack: LayerStack
    net: NetConfig
    inputs: np.ndarray
    labels: np.ndarray
    agg_nbr: list
    sel: list
    near: list
    loss_data: list
    d_in: int
    num_classes: int


def _forward_geometry(stack: LayerStack, net: NetConfig):
    agg_nbr, sel, near = [], [], []
    for s in range(net.stages):
        pos = stack.layers[s].positions
        k = min(net.aggregation_k, pos.shape[0])
        agg_nbr.append(kernels.knn_all(pos, k)[0])
        sel.append(stack.parents[s + 1])
        near.append(kernels.nearest_index(stack.layers[s + 1].positions, pos))
    return agg_nbr, sel, near


def prepare_training(cloud: PointCloud, net: NetConfig, cfg: TrainConfig) -> TrainingPrep:
    stack = build_layer_stack(cloud, net)
    agg_nbr, sel, near = _forward_geometry(stack, net)
    loss_data = []
    for s in range(net.stages + 1):
        layer = stack.layers[s]
        k = min(cfg.ambiguity.k, layer.n)
        nbr_idx, nbr_d2 = kernels.knn_all(layer.positions, k)
        intra_count, d_plus, d_minus, intra_mask = partition_layer(
            nbr_idx, nbr_d2, layer.labels
        )
        amb = ambiguity_values(intra_count, d_plus, d_minus, k, cfg.ambiguity)
        margins = margins_from_ambiguity(amb, cfg.margin)
        loss_data.append(
            _LayerLossData(nbr_idx=nbr_idx, intra_mask=intra_mask,
                           margins=margins, ambiguity=amb)
        )
    return TrainingPrep(
        stack=stack, net=net,
        inputs=_input_features(cloud), labels=cloud.labels.copy(),
        agg_nbr=agg_nbr, sel=sel, near=near, loss_data=loss_data,
        d_in=input_width(cloud), num_classes=cloud.num_classes,
    )


# --- forward / backward ------------------------------------------------------


def _forward_cache(params, prep: TrainingPrep):
    net = prep.net
    stages = net.stages
    enc_in = [prep.inputs]
    enc_cache = []
    for s in range(1, stages + 1):
        pre = enc_in[s - 1] @ params[f"enc{s}.w"] + params[f"enc{s}.b"]
        act = np.maximum(pre, 0.0)
        pooled, argmax = kernels.maxpool_forward(act, prep.agg_nbr[s - 1])
        enc_in.append(np.ascontiguousarray(pooled[prep.sel[s - 1]]))
        enc_cache.append((pre, argmax))
    feats = [None] * (stages + 1)
    feats[stages] = enc_in[stages]
    dec_cache = [None] * stages
    for s in range(stages - 1, -1, -1):
        upsampled = feats[s + 1][prep.near[s]]
        cat = np.concatenate([upsampled, enc_in[s]], axis=1)
        pre = cat @ params[f"dec{s}.w"] + params[f"dec{s}.b"]
        feats[s] = np.maximum(pre, 0.0)
        dec_cache[s] = (cat, pre)
    logits = _HEAD_GAIN * (feats[0] @ params["head.w"]) + _HEAD_GAIN * params["head.b"]
    return enc_in, feats, logits, enc_cache, dec_cache


def forward(params, stack: LayerStack, net: NetConfig):
    """Decoder features at every resolution plus class logits.

    Standalone entry point; training reuses the cached variant internally.
    """
    agg_nbr, sel, near = _forward_geometry(stack, net)
    prep = TrainingPrep(
        stack=stack, net=net, inputs=_input_features(stack.layers[0]),
        labels=stack.layers[0].labels, agg_nbr=agg_nbr, sel=sel, near=near,
        loss_data=[], d_in=input_width(stack.layers[0]),
        num_classes=stack.layers[0].num_classes,
    )
    _, feats, logits, _, _ = _forward_cache(params, prep)
    return feats, logits


def _backward(params, prep: TrainingPrep, enc_in, feats, enc_cache, dec_cache,
              d_logits, d_feats_extra):
    stages = prep.net.stages
    grads = {"head.w": _HEAD_GAIN * (feats[0].T @ d_logits), "head.b": _HEAD_GAIN * d_logits.sum(axis=0)}
    d_feats = [
        d_feats_extra[s].copy() if d_feats_extra.get(s) is not None
        else np.zeros_like(feats[s])
        for s in range(stages + 1)
    ]
    d_feats[0] += _HEAD_GAIN * (d_logits @ params["head.w"].T)
    skip_grads = [None] * stages
    for s in range(stages):
        cat, pre = dec_cache[s]
        d_pre = d_feats[s] * (pre > 0.0)
        grads[f"dec{s}.w"] = cat.T @ d_pre
        grads[f"dec{s}.b"] = d_pre.sum(axis=0)
        d_cat = d_pre @ params[f"dec{s}.w"].T
        up_width = feats[s + 1].shape[1]
        d_feats[s + 1] += kernels.scatter_add_rows(
            prep.near[s], np.ascontiguousarray(d_cat[:, :up_width]),
            feats[s + 1].shape[0],
        )
        skip_grads[s] = d_cat[:, up_width:]
    d_enc = d_feats[stages]
    for s in range(stages, 0, -1):
        pre, argmax = enc_cache[s - 1]
        d_pooled = np.zeros_like(pre)
        d_pooled[prep.sel[s - 1]] = d_enc
        d_act = kernels.maxpool_backward(d_pooled, prep.agg_nbr[s - 1], argmax,
                                         pre.shape[0])
        d_pre = d_act * (pre > 0.0)
        grads[f"enc{s}.w"] = enc_in[s - 1].T @ d_pre
        grads[f"enc{s}.b"] = d_pre.sum(axis=0)
        d_enc = d_pre @ params[f"enc{s}.w"].T
        if s - 1 >= 1:
            d_enc = d_enc + skip_grads[s - 1]
    return grads


# --- objectives --------------------------------------------------------------


def cross_entropy(logits, labels) -> float:
    """Mean negative log softmax probability of the true class (max-shifted)."""
    return _cross_entropy_grad(logits, labels)[0]


def _cross_entropy_grad(logits, labels):
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    loss = float((lse - shifted[np.arange(n), labels]).mean())
    probs = np.exp(shifted - lse[:, None])
    probs[np.arange(n), labels] -= 1.0
    return loss, probs / n


def joint_loss(ce: float, am_per_layer, balance: float) -> float:
    """balance * ce + (1 - balance) * sum of per-layer contrastive losses."""
    if not 0.0 <= balance <= 1.0:
        raise DataError("balance must be in [0, 1]")
    return balance * ce + (1.0 - balance) * sum(am_per_layer)


def loss_and_grads(params, prep: TrainingPrep, cfg: TrainConfig):
    """Joint objective with parameter gradients; one full-batch step's work."""
    enc_in, feats, logits, enc_cache, dec_cache = _forward_cache(params, prep)
    ce, d_logits = _cross_entropy_grad(logits, prep.labels)
    am_losses = []
    d_feats_extra = {}
    for s in range(prep.net.stages + 1):
        ld = prep.loss_data[s]
        loss_s, grad_s, _ = kernels.layer_loss_grad(
            feats[s], ld.nbr_idx, ld.intra_mask, ld.margins,
            cfg.contrast.tau, cfg.contrast.norm_epsilon,
        )
        am_losses.append(loss_s)
        d_feats_extra[s] = (1.0 - cfg.balance) * grad_s
    total = joint_loss(ce, am_losses, cfg.balance)
    grads = _backward(params, prep, enc_in, feats, enc_cache, dec_cache,
                      cfg.balance * d_logits, d_feats_extra)
    return total, ce, am_losses, grads, logits


# --- training loop -----------------------------------------------------------


def train(cloud: PointCloud, net: NetConfig, cfg: TrainConfig):
    """Full-batch gradient descent with momentum; returns (params, epoch log).

    Ambiguities, margins, and neighborhood partitions depend only on
    positions and labels, so they are computed once up front.  The log holds
    one row per epoch with the losses and overall accuracy at that epoch's
    parameters, before the update.
    """
    prep = prepare_training(cloud, net, cfg)
    params = init_params(net, prep.d_in, prep.num_classes)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    log = []
    for epoch in range(1, cfg.epochs + 1):
        total, ce, am_losses, grads, logits = loss_and_grads(params, prep, cfg)
        if not np.isfinite(total):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        preds = np.argmax(logits, axis=1)
        log.append({
            "epoch": epoch,
            "l_ce": ce,
            "l_am_sum": sum(am_losses),
            "l_joint": total,
            "oa": float((preds == prep.labels).mean()),
        })
        for k in params:
            velocity[k] = cfg.momentum * velocity[k] - cfg.lr * grads[k]
            params[k] = params[k] + velocity[k]
    return params, log


# --- evaluation --------------------------------------------------------------


def evaluate(params, cloud: PointCloud, net: NetConfig, ambiguity) -> Metrics:
    """Segmentation metrics; argmax ties resolve to the smallest class index.

    ``ambiguity`` supplies per-point values for the boundary-band accuracy
    (accuracy over points with ambiguity > 0; vacuously 1 when none exist).
    """
    d_in = input_width(cloud)
    if params["enc1.w"].shape[0] != d_in:
        raise DataError(
            f"model/cloud shape mismatch: model expects {params['enc1.w'].shape[0]} "
            f"input channels, cloud provides {d_in}"
        )
    if params["head.b"].shape[0] != cloud.num_classes:
        raise DataError(
            f"model/cloud shape mismatch: model has {params['head.b'].shape[0]} "
            f"classes, cloud declares {cloud.num_classes}"
        )
    stack = build_layer_stack(cloud, net)
    _, logits = forward(params, stack, net)
    preds = np.argmax(logits, axis=1)
    labels = cloud.labels
    c = cloud.num_classes
    confusion = np.bincount(labels * c + preds, minlength=c * c).reshape(c, c)

    truth_count = confusion.sum(axis=1)
    pred_count = confusion.sum(axis=0)
    diag = np.diag(confusion)
    oa = float(diag.sum() / cloud.n)
    present = truth_count > 0
    macc = float((diag[present] / truth_count[present]).mean())
    union = truth_count + pred_count - diag
    seen = union > 0
    miou = float((diag[seen] / union[seen]).mean())

    amb = np.asarray(getattr(ambiguity, "values", ambiguity), dtype=np.float64)
    band = amb > 0
    band_acc = float((preds[band] == labels[band]).mean()) if band.any() else 1.0
    return Metrics(confusion=confusion, oa=oa, macc=macc, miou=miou,
                   boundary_band_acc=band_acc)


# --- model file --------------------------------------------------------------

_MAGIC = b"ABSG"
_VERSION = 1


def save_model(path, params, net: NetConfig, num_classes: int, d_in: int) -> None:
    """Versioned little-endian blob: magic, version, JSON shape table, arrays."""
    names = param_order(net)
    header = {
        "net": {
            "stages": net.stages,
            "widths": list(net.widths),
            "downsample_ratio": net.downsample_ratio,
            "aggregation_k": net.aggregation_k,
            "head_width": net.head_width,
            "seed": net.seed,
            "fps_start": net.fps_start,
        },
        "num_classes": num_classes,
        "d_in": d_in,
        "arrays": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_model(path):
    """Read a model blob back as (params, net, num_classes, d_in)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise DataError(f"{path}: not a model file (bad magic)")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != _VERSION:
        raise DataError(f"{path}: unsupported model version {version}")
    hlen = struct.unpack("<Q", blob[8:16])[0]
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    net = NetConfig(**header["net"])
    params = {}
    offset = 16 + hlen
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        params[entry["name"]] = arr.reshape(shape).astype(np.float64)
        offset += count * 8
    if offset != len(blob):
        raise DataError(f"{path}: trailing bytes after parameter arrays")
    return params, net, header["num_classes"], header["d_in"]
