"""Flat key=value run configuration.

A config file holds dotted keys, one per line, ``#`` comments allowed:

    scene.kind = two-plane
    scene.n = 2048
    train.lambda = 0.1

Unknown keys are rejected by name.  Defaults follow the reference
hyperparameters (k=24, beta=0.04, lambda=0.1, lr=0.01, 100 epochs).
"""

from dataclasses import dataclass, replace

from .ambiguity import AmbiguityConfig
from .cloud import SceneSpec
from .contrast import ContrastConfig
from .errors import ConfigError
from .margin import MarginSpec, preset
from .model import NetConfig, TrainConfig


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str):
    return tuple(int(t.strip()) for t in text.split(","))


def _parse_opt_float(text: str):
    return None if text.lower() == "none" else float(text)


@dataclass
class RunConfig:
    scene_kind: str = "two-plane"
    scene_n: int = 2048
    scene_noise: float = 0.0
    scene_seed: int = 0
    scene_boundary: float | None = None
    scene_cells: int = 2
    scene_cell_size: float = 10.0
    scene_clusters: int = 3
    scene_spread: float = 3.0
    scene_ring_radius: float = 10.0
    scene_path: str = ""

    ambiguity_k: int = 24
    ambiguity_beta: float = 0.04
    ambiguity_epsilon: float = 1e-12

    contrast_tau: float = 0.3
    contrast_norm_epsilon: float = 1e-12

    margin_preset: str = "s3dis"
    margin_mu: float | None = None
    margin_nu: float | None = None
    margin_clamp: bool = False

    net_stages: int = 2
    net_widths: tuple = (32, 64)
    net_ratio: int = 4
    net_aggregation_k: int = 8
    net_head_width: int = 32
    net_seed: int = 0
    net_fps_start: int = 0

    train_lr: float = 0.01
    train_epochs: int = 100
    train_momentum: float = 0.9
    train_lambda: float = 0.1

    output_dir: str = "runs"

    def scene_spec(self) -> SceneSpec:
        return SceneSpec(
            kind=self.scene_kind, n=self.scene_n, noise=self.scene_noise,
            seed=self.scene_seed, boundary=self.scene_boundary,
            cells=self.scene_cells, cell_size=self.scene_cell_size,
            clusters=self.scene_clusters, spread=self.scene_spread,
            ring_radius=self.scene_ring_radius,
        )

    def ambiguity_config(self) -> AmbiguityConfig:
        return AmbiguityConfig(beta=self.ambiguity_beta, k=self.ambiguity_k,
                               epsilon=self.ambiguity_epsilon)

    def contrast_config(self) -> ContrastConfig:
        return ContrastConfig(tau=self.contrast_tau,
                              norm_epsilon=self.contrast_norm_epsilon)

    def margin_spec(self) -> MarginSpec:
        if self.margin_mu is not None or self.margin_nu is not None:
            if self.margin_mu is None or self.margin_nu is None:
                raise ConfigError("margin.mu and margin.nu must be set together")
            return MarginSpec(mu=self.margin_mu, nu=self.margin_nu,
                              clamp_at_zero=self.margin_clamp)
        return preset(self.margin_preset)

    def net_config(self) -> NetConfig:
        return NetConfig(
            stages=self.net_stages, widths=self.net_widths,
            downsample_ratio=self.net_ratio,
            aggregation_k=self.net_aggregation_k,
            head_width=self.net_head_width, seed=self.net_seed,
            fps_start=self.net_fps_start,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.train_lr, epochs=self.train_epochs,
            momentum=self.train_momentum, balance=self.train_lambda,
            contrast=self.contrast_config(),
            ambiguity=self.ambiguity_config(),
            margin=self.margin_spec(),
        )


_KEYS = {
    "scene.kind": ("scene_kind", str),
    "scene.n": ("scene_n", int),
    "scene.noise": ("scene_noise", float),
    "scene.seed": ("scene_seed", int),
    "scene.boundary": ("scene_boundary", _parse_opt_float),
    "scene.cells": ("scene_cells", int),
    "scene.cell_size": ("scene_cell_size", float),
    "scene.clusters": ("scene_clusters", int),
    "scene.spread": ("scene_spread", float),
    "scene.ring_radius": ("scene_ring_radius", float),
    "scene.path": ("scene_path", str),
    "ambiguity.k": ("ambiguity_k", int),
    "ambiguity.beta": ("ambiguity_beta", float),
    "ambiguity.epsilon": ("ambiguity_epsilon", float),
    "contrast.tau": ("contrast_tau", float),
    "contrast.norm_epsilon": ("contrast_norm_epsilon", float),
    "margin.preset": ("margin_preset", str),
    "margin.mu": ("margin_mu", _parse_opt_float),
    "margin.nu": ("margin_nu", _parse_opt_float),
    "margin.clamp": ("margin_clamp", _parse_bool),
    "net.stages": ("net_stages", int),
    "net.widths": ("net_widths", _parse_int_tuple),
    "net.ratio": ("net_ratio", int),
    "net.aggregation_k": ("net_aggregation_k", int),
    "net.head_width": ("net_head_width", int),
    "net.seed": ("net_seed", int),
    "net.fps_start": ("net_fps_start", int),
    "train.lr": ("train_lr", float),
    "train.epochs": ("train_epochs", int),
    "train.momentum": ("train_momentum", float),
    "train.lambda": ("train_lambda", float),
    "output.dir": ("output_dir", str),
}


def set_key(cfg: RunConfig, key: str, value: str, where: str = "") -> RunConfig:
    """Return a copy of ``cfg`` with one dotted key set from its string form."""
    key = key.strip()
    if key not in _KEYS:
        raise ConfigError(f"unknown config key {key!r}{where}")
    attr, cast = _KEYS[key]
    try:
        parsed = cast(value.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}{where}: {exc}") from None
    return replace(cfg, **{attr: parsed})


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse key=value lines on top of defaults (or a given base config)."""
    cfg = base if base is not None else RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected key = value, line {lineno}")
        key, value = stripped.split("=", 1)
        cfg = set_key(cfg, key, value, where=f", line {lineno}")
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def apply_overrides(cfg: RunConfig, assignments) -> RunConfig:
    """Apply ``key=value`` strings (CLI overrides beat the config file)."""
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg = set_key(cfg, key, value)
    return cfg
