"""Command-line surface: generate, train, eval, predict, rasterize-preview.

Every command is deterministic given its config and seed, and every output file
embeds the resolved config. Exit codes: 0 success, 2 config error, 3 data
error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .baselines import ConstantVelocityPredictor, KalmanPredictor
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import export_scenes, generate_scenarios, ingest_external, make_windows
from .errors import ConfigError, DataError, NumericalError
from .metrics import evaluate
from .semantic_map import map_saliency, rasterize
from .training import train, write_log
from .vae import ModelPredictor, sample_predictions
from .visualize import save_prediction_figure, save_raster_preview


def _load_scenes(path) -> list:
    p = Path(path)
    if not p.exists():
        raise DataError(f"scene file not found: {p}")
    return ingest_external(p)


def _dataset(config: RunConfig, scenes):
    data = []
    for scene in scenes:
        data.extend(make_windows(scene, None, config.t_range(), config.horizon,
                                 config.radius))
    if not data:
        raise DataError("no valid windows could be extracted from the scenes")
    return data


def cmd_generate(args) -> int:
    config = load_config(args.config, args.set)
    scenes = generate_scenarios(config.synthetic, args.n if args.n is not None else config.n_scenes)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_scenes(scenes, out)
    print(f"wrote {len(scenes)} scenes to {out}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config, args.set)
    scenes = _load_scenes(args.data)
    dataset = _dataset(config, scenes)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = None
    start_step = 0
    if args.resume:
        model, meta = load_checkpoint(args.resume)
        start_step = meta["step"]
    model, log = train(dataset, config, model, checkpoint_dir=out_dir,
                       start_step=start_step)
    if config.epochs == 0:
        # the epoch loop never ran; still checkpoint the seeded initialization
        save_checkpoint(out_dir / "latest.npz", model, start_step, config.to_dict())
    write_log(log, out_dir / "log.jsonl")
    final = log[-1]["loss"] if log else float("nan")
    print(f"trained on {len(dataset)} windows; steps={len(log)}; final loss={final:.4f}")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config, args.set)
    scenes = _load_scenes(args.data)
    dataset = _dataset(config, scenes)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        jobs.append((args.tag or "model", ModelPredictor(model)))
    for name in (args.baselines.split(",") if args.baselines else []):
        name = name.strip().lower()
        if name == "cv":
            jobs.append(("constant_velocity", ConstantVelocityPredictor()))
        elif name in ("kf", "ekf"):
            jobs.append(("kalman_filter", KalmanPredictor()))
        elif name:
            raise ConfigError(f"unknown baseline {name!r} (expected cv or kf)")
    if not jobs:
        raise ConfigError("nothing to evaluate: pass --checkpoint and/or --baselines")

    for tag, predictor in jobs:
        report = evaluate(predictor, dataset, config.k_list, config.seed,
                          horizon=config.horizon, model_tag=tag,
                          config_echo=config.to_dict())
        report.save(out_dir / f"report_{tag}.json", out_dir / f"report_{tag}.txt")
        print(report.to_text_table().rstrip())
    return 0


def _find_window(config: RunConfig, scenes, scene_id, target, start):
    scene = None
    if scene_id is None:
        scene = scenes[0]
    else:
        for candidate in scenes:
            if candidate.scene_id == scene_id:
                scene = candidate
                break
        if scene is None:
            raise DataError(f"scene {scene_id!r} not found")
    target = target or (scene.objects_of_interest[0] if scene.objects_of_interest else None)
    if target is None:
        raise DataError("scene has no objects of interest; pass --target")
    pairs = make_windows(scene, [target], config.t_range(), config.horizon, config.radius)
    if not pairs:
        raise DataError("no valid window for the requested target")
    for window, truth in pairs:
        if start is None or window.start_index == start:
            return window, truth
    raise DataError(f"no window starts at frame {start}")


def cmd_predict(args) -> int:
    config = load_config(args.config, args.set)
    scenes = _load_scenes(args.data)
    model, _ = load_checkpoint(args.checkpoint)
    window, truth = _find_window(config, scenes, args.scene_id, args.target, args.start)

    k = args.k if args.k is not None else max(config.k_list)
    prediction = sample_predictions(window, model, k, config.horizon, config.seed)

    payload = {
        "scene_id": window.scene_id,
        "target_id": window.target_id,
        "start_index": window.start_index,
        "config": config.to_dict(),
        "prediction": prediction.to_payload(),
    }
    attention = None
    if args.attention or args.figure:
        from .windows import collate
        batch = collate([window], dtype=next(model.parameters()).dtype)
        with torch.no_grad():
            _, attention = model.observe(batch, collect_attention=True)
    if args.attention and attention is not None:
        payload["attention"] = {
            "map": None if attention["map"] is None else attention["map"][0].tolist(),
            "social": [None if w is None else w[0].tolist() for w in attention["social"]],
            "agent_ids": [list(ns.agent_ids) for ns in window.neighbors],
        }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2)

    if args.figure:
        saliency = None
        if args.saliency and model.mode.uses_map:
            saliency = map_saliency(window.raster, model.map_encoder,
                                    lambda feats: (feats ** 2).sum())
        save_prediction_figure(args.figure, window, prediction, truth,
                               attention=attention, saliency=saliency)
    print(f"wrote predictions to {out}")
    return 0


def cmd_rasterize_preview(args) -> int:
    config = load_config(args.config, args.set)
    scenes = _load_scenes(args.data)
    scene = scenes[0] if args.scene_id is None else next(
        (s for s in scenes if s.scene_id == args.scene_id), None)
    if scene is None:
        raise DataError(f"scene {args.scene_id!r} not found")
    target = args.target or (scene.objects_of_interest[0] if scene.objects_of_interest else None)
    if target is None:
        raise DataError("scene has no objects of interest; pass --target")
    if not 0 <= args.t < len(scene.frames):
        raise DataError(f"frame {args.t} out of range (scene has {len(scene.frames)} frames)")
    state = scene.frames[args.t].agents.get(target)
    if state is None or not state.valid:
        raise DataError(f"target {target!r} is missing or invalid at frame {args.t}")

    from .geometry import build_local_frame
    raster = rasterize(scene.vector_map, build_local_frame(state))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_raster_preview(out, raster, mark_anchor=args.mark_anchor)
    print(f"wrote raster preview to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trajvae",
                                     description="Trajectory forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="config override, dotted keys allowed")

    p = sub.add_parser("generate", help="write a synthetic scene file")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None, help="number of scenes")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model on a scene file")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint and/or baselines")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baselines", default="", help="comma list: cv,kf")
    p.add_argument("--tag", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="sample predictions for one target")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scene-id", default=None)
    p.add_argument("--target", default=None)
    p.add_argument("--start", type=int, default=None, help="first observed frame index")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--figure", default=None, help="also render a figure to this path")
    p.add_argument("--attention", action="store_true", help="export attention weights")
    p.add_argument("--saliency", action="store_true", help="overlay map saliency")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rasterize-preview", help="render one local raster as PNG")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scene-id", default=None)
    p.add_argument("--target", default=None)
    p.add_argument("--t", type=int, default=0)
    p.add_argument("--mark-anchor", action="store_true")
    p.set_defaults(func=cmd_rasterize_preview)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, KeyError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
