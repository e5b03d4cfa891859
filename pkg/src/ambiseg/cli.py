"""Command-line front end.

Subcommands: ``synth`` (write a synthetic scene), ``ambiguity`` (per-point
ambiguity/margin CSV, optional shaded PLY), ``train`` (fit the model, write
model blob + loss curve), ``eval`` (metrics report), ``ablate`` (margin
preset sweep).  Exit codes: 0 success, 1 usage, 2 data/config error,
3 numeric abort.
"""

import argparse
import os
import statistics
import sys

import numpy as np

from .ambiguity import AmbiguityConfig, ambiguity_map
from .cloud import PointCloud, SceneSpec, generate_scene, load_ascii, save_ascii
from .config import RunConfig, apply_overrides, load_config
from .errors import ConfigError, DataError, NumericError
from .knn import build_index
from .margin import (ABLATION_PRESETS, MarginSpec, margins_from_ambiguity,
                     preset, regime)
from .model import evaluate, input_width, load_model, save_model, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; the contract here is 1
    def error(self, message):
        raise _UsageError(message)


def _fmt(value: float, digits: str = ".12g") -> str:
    return format(float(value), digits)


def write_ply(path, positions, ambiguity_values) -> None:
    """Binary little-endian PLY with a white-to-black ambiguity ramp."""
    n = positions.shape[0]
    gray = np.rint(255.0 * (1.0 - np.asarray(ambiguity_values))).astype(np.uint8)
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        "comment ambiguity shading, white=0 black=1\n"
        f"element vertex {n}\n"
        "property double x\nproperty double y\nproperty double z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    dtype = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"),
                      ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    rows = np.empty(n, dtype=dtype)
    rows["x"], rows["y"], rows["z"] = positions[:, 0], positions[:, 1], positions[:, 2]
    rows["red"] = rows["green"] = rows["blue"] = gray
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(rows.tobytes())


def _scene_spec_from_args(args) -> SceneSpec:
    kwargs = {"kind": args.scene, "n": args.n, "noise": args.noise, "seed": args.seed}
    for flag, field in (("boundary", "boundary"), ("cells", "cells"),
                        ("cell_size", "cell_size"), ("clusters", "clusters"),
                        ("spread", "spread"), ("ring_radius", "ring_radius")):
        value = getattr(args, flag)
        if value is not None:
            kwargs[field] = value
    return SceneSpec(**kwargs)


def _margin_spec_from_args(args) -> MarginSpec:
    if args.mu is not None or args.nu is not None:
        if args.mu is None or args.nu is None:
            raise ConfigError("--mu and --nu must be given together")
        return MarginSpec(mu=args.mu, nu=args.nu, clamp_at_zero=args.clamp)
    return preset(args.margin)


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    cfg = apply_overrides(cfg, getattr(args, "set", None))
    return cfg


def _scene_for_run(cfg: RunConfig) -> PointCloud:
    if cfg.scene_path:
        return load_ascii(cfg.scene_path)
    return generate_scene(cfg.scene_spec())


def _layer0_ambiguity(cloud: PointCloud, cfg: RunConfig):
    acfg = AmbiguityConfig(beta=cfg.ambiguity_beta,
                           k=min(cfg.ambiguity_k, cloud.n),
                           epsilon=cfg.ambiguity_epsilon)
    return ambiguity_map(cloud, build_index(cloud.positions), acfg)


def _write_curve(path, log) -> None:
    lines = ["epoch,l_ce,l_am_sum,l_joint,oa"]
    for row in log:
        lines.append(",".join([
            str(row["epoch"]), _fmt(row["l_ce"]), _fmt(row["l_am_sum"]),
            _fmt(row["l_joint"]), _fmt(row["oa"]),
        ]))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# --- subcommands -------------------------------------------------------------


def cmd_synth(args) -> int:
    cloud = generate_scene(_scene_spec_from_args(args))
    save_ascii(cloud, args.output)
    print(f"wrote {args.output}: points={cloud.n} classes={cloud.num_classes}")
    return 0


def cmd_ambiguity(args) -> int:
    cloud = load_ascii(args.input)
    acfg = AmbiguityConfig(beta=args.beta, k=args.k)
    amap = ambiguity_map(cloud, build_index(cloud.positions), acfg)
    spec = _margin_spec_from_args(args)
    margins = margins_from_ambiguity(amap.values, spec)
    lines = ["index,a,m,regime"]
    for i in range(cloud.n):
        lines.append(
            f"{i},{_fmt(amap.values[i], '.17g')},{_fmt(margins[i], '.17g')},"
            f"{regime(float(margins[i])).value}"
        )
    with open(args.output, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    if args.ply:
        write_ply(args.ply, cloud.positions, amap.values)
    n_band = int((amap.values > 0).sum())
    print(f"wrote {args.output}: {cloud.n} points, {n_band} in the ambiguous band")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out_dir = args.out_dir if args.out_dir else cfg.output_dir
    cloud = _scene_for_run(cfg)
    net = cfg.net_config()
    params, log = train(cloud, net, cfg.train_config())
    os.makedirs(out_dir, exist_ok=True)
    curve_path = os.path.join(out_dir, "curve.csv")
    model_path = os.path.join(out_dir, "model.bin")
    _write_curve(curve_path, log)
    save_model(model_path, params, net, cloud.num_classes, input_width(cloud))
    last = log[-1]
    print(f"wrote {model_path} and {curve_path}")
    print(f"final epoch {last['epoch']}: l_joint={_fmt(last['l_joint'])} "
          f"oa={_fmt(last['oa'])}")
    return 0


def cmd_eval(args) -> int:
    params, net, _, _ = load_model(args.model)
    cloud = load_ascii(args.cloud)
    acfg = AmbiguityConfig(beta=args.beta, k=min(args.k, cloud.n))
    amap = ambiguity_map(cloud, build_index(cloud.positions), acfg)
    metrics = evaluate(params, cloud, net, amap)
    print(f"{'metric':<20}{'value':>12}")
    for name, value in (("oa", metrics.oa), ("macc", metrics.macc),
                        ("miou", metrics.miou),
                        ("boundary_band_acc", metrics.boundary_band_acc)):
        print(f"{name:<20}{value:>12.6f}")
    print("oa,macc,miou,boundary_band_acc")
    print(",".join(_fmt(v) for v in (metrics.oa, metrics.macc, metrics.miou,
                                     metrics.boundary_band_acc)))
    return 0


def cmd_ablate(args) -> int:
    base = _load_run_config(args)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    if not seeds:
        raise ConfigError("--seeds must list at least one seed")
    lines = ["preset,seed,oa,miou,boundary_band_acc"]
    for name in ABLATION_PRESETS:
        per_seed = []
        for seed in seeds:
            cfg = apply_overrides(base, [
                f"margin.preset={name}", "margin.mu=none", "margin.nu=none",
                f"scene.seed={seed}", f"net.seed={seed}",
            ])
            cloud = _scene_for_run(cfg)
            net = cfg.net_config()
            params, _ = train(cloud, net, cfg.train_config())
            metrics = evaluate(params, cloud, net, _layer0_ambiguity(cloud, cfg))
            per_seed.append(metrics)
            lines.append(f"{name},{seed},{_fmt(metrics.oa)},{_fmt(metrics.miou)},"
                         f"{_fmt(metrics.boundary_band_acc)}")
            print(f"{name} seed={seed}: oa={metrics.oa:.4f} "
                  f"band_acc={metrics.boundary_band_acc:.4f}")
        lines.append(",".join([
            name, "median",
            _fmt(statistics.median(m.oa for m in per_seed)),
            _fmt(statistics.median(m.miou for m in per_seed)),
            _fmt(statistics.median(m.boundary_band_acc for m in per_seed)),
        ]))
    with open(args.output, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.output}")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ambiseg",
                     description="ambiguity-aware contrastive point segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--scene", required=True,
                   choices=["two-plane", "checkerboard", "clusters"])
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--boundary", type=float, default=None)
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--cell-size", dest="cell_size", type=float, default=None)
    p.add_argument("--clusters", type=int, default=None)
    p.add_argument("--spread", type=float, default=None)
    p.add_argument("--ring-radius", dest="ring_radius", type=float, default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ambiguity", help="per-point ambiguity and margins")
    p.add_argument("input", help="ASCII point cloud file")
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--beta", type=float, default=0.04)
    p.add_argument("--margin", default="s3dis", help="margin preset name")
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--nu", type=float, default=None)
    p.add_argument("--clamp", action="store_true")
    p.add_argument("--ply", default=None, help="also write a shaded PLY here")
    p.add_argument("-o", "--output", default="amb.csv")
    p.set_defaults(func=cmd_ambiguity)

    p = sub.add_parser("train", help="train on a scene, write model + curve")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("-o", "--out-dir", dest="out_dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a cloud")
    p.add_argument("model", help="model blob from train")
    p.add_argument("cloud", help="ASCII point cloud file")
    p.add_argument("--k", type=int, default=24)
    p.add_argument("--beta", type=float, default=0.04)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="margin preset sweep over seeds")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("-o", "--output", default="ablate.csv")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (DataError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
