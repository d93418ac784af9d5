"""Command-line interface: train, eval, predict, ablate, flops, gen-data.

Every command accepts ``--config`` (YAML) plus ``--set section.key=value``
overrides and ``--seed``.  Commands exit 0 on success and print a one-line
``error: ...`` to stderr otherwise.  Setting ``TEFORMER_DETERMINISTIC=1``
forces single-threaded deterministic execution.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .ablation import COMPONENTS, run_ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .complexity import count_params_flops
from .config import (
    PAPER_SCALE_REFERENCE,
    ModelConfig,
    RunConfig,
    paper_scale,
    parse_config,
)
from .data import (
    Palette,
    Sample,
    default_palette,
    gen_synthetic,
    load_dataset,
    read_manifest,
    save_dataset,
    tile_windows,
)
from .errors import ConfigurationError, TrainingDiverged
from .fusion import SegmentationOutput
from .metrics import compute_metrics
from .model import build_model
from .plots import save_ablation_bars, save_class_bars, save_loss_curve
from .train import evaluate, image_to_tensor, train_loop
from .validation import pad_to_multiple


def _apply_determinism():
    if os.environ.get("TEFORMER_DETERMINISTIC") == "1":
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True, warn_only=True)


def _load_split(cfg: RunConfig, split: str) -> tuple[list[Sample], Palette]:
    d = cfg.data
    if d.source == "synthetic":
        # deterministic disjoint splits: one generator seed per split
        offset = {"train": 0, "val": 1, "test": 2}[split]
        count = d.count if split == "train" else max(d.count // 5, 8)
        samples = gen_synthetic(count, d.size, d.num_classes, d.seed + offset)
        palette = _palette_from_config(cfg)
        return samples, palette
    root = Path(d.root)
    if not root.exists():
        raise ConfigurationError(f"data.root '{root}' does not exist")
    if (root / "palette.json").exists():
        samples, palette = load_dataset(root, split)
    else:
        raise ConfigurationError(f"{root} has no palette.json; run gen-data or provide one")
    tiled = []
    for s in samples:
        h, w = s.mask.shape
        if h <= d.tile and w <= d.tile:
            tiled.append(s)
            continue
        for y, x in tile_windows(h, w, d.tile, d.stride):
            tiled.append(
                Sample(s.image[y : y + d.tile, x : x + d.tile].copy(),
                       s.mask[y : y + d.tile, x : x + d.tile].copy(),
                       f"{s.id}_y{y}_x{x}")
            )
    return tiled, palette


def _palette_from_config(cfg: RunConfig) -> Palette:
    if cfg.data.palette is not None:
        return Palette([tuple(c) for c in cfg.data.palette], ignore_index=cfg.data.ignore_index)
    return default_palette(cfg.model.num_classes, ignore_index=cfg.data.ignore_index)


def emit_prediction(output: SegmentationOutput, palette: Palette, out_dir: str | Path,
                    sample_ids: list[str], probabilities: bool = False) -> list[Path]:
    """Write `<id>_pred.png` (colorized) and `<id>_ids.png` (raw labels) per sample."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    class_maps = output.class_map.cpu().numpy().astype(np.uint8)
    written = []
    for i, sid in enumerate(sample_ids):
        ids_img = Image.fromarray(class_maps[i])
        color_img = Image.fromarray(palette.encode(class_maps[i]))
        p_color = out_dir / f"{sid}_pred.png"
        p_ids = out_dir / f"{sid}_ids.png"
        color_img.save(p_color)
        ids_img.save(p_ids)
        written += [p_color, p_ids]
        if probabilities:
            probs = output.probabilities[i].cpu().numpy().astype(np.float32)
            pages = [Image.fromarray(ch, mode="F") for ch in probs]
            p_prob = out_dir / f"{sid}_prob.tif"
            pages[0].save(p_prob, save_all=True, append_images=pages[1:])
            written.append(p_prob)
    return written


def _config_from_args(args) -> RunConfig:
    cfg = parse_config(getattr(args, "config", None), getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        cfg = RunConfig(
            model=dataclasses.replace(cfg.model, seed=args.seed),
            train=dataclasses.replace(cfg.train, seed=args.seed),
            data=dataclasses.replace(cfg.data, seed=args.seed),
        )
    return cfg


def _metrics_payload(cfg: RunConfig, report, params: int, flops: int, wall_time: float) -> dict:
    def clean(v):
        return None if v is None else v

    return {
        "config_hash": cfg.config_hash,
        "seed": cfg.train.seed,
        "per_class": {
            "iou": [clean(v) for v in report.per_class_iou],
            "f1": [clean(v) for v in report.per_class_f1],
        },
        "miou": report.miou,
        "mf1": report.mf1,
        "pa": report.pa,
        "boundary_f1": report.boundary_f1,
        "params": params,
        "flops": flops,
        "wall_time_s": wall_time,
    }


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_set, _ = _load_split(cfg, "train")
    val_set, _ = _load_split(cfg, "val")
    model = build_model(cfg.model)
    ckpt_meta = {"config": cfg.to_dict(), "config_hash": cfg.config_hash}
    result = train_loop(
        model, train_set, cfg.train, cfg.model.num_classes, cfg.data.ignore_index,
        val_dataset=val_set, out_dir=out_dir, checkpoint_meta=ckpt_meta,
    )
    save_loss_curve(result.losses, out_dir / "loss_curve.png")
    final_report = result.val_history[-1][1]
    save_class_bars(final_report, out_dir / "class_scores.png")
    params, flops = count_params_flops(model, (cfg.train.crop, cfg.train.crop))
    payload = _metrics_payload(cfg, final_report, params, flops, result.wall_time_s)
    (out_dir / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"trained {cfg.train.iterations} iterations; "
          f"final loss {result.losses[-1]:.4f}; val mIoU {final_report.miou:.4f}")
    print(f"artifacts in {out_dir}")
    return 0


def _restore(checkpoint: str) -> tuple[torch.nn.Module, RunConfig]:
    state, meta = load_checkpoint(checkpoint)
    if "config" not in meta:
        raise ConfigurationError(f"checkpoint {checkpoint} carries no config metadata")
    raw = meta["config"]
    cfg = RunConfig(
        model=ModelConfig(**raw["model"]),
        train=dataclasses.replace(RunConfig().train, **raw["train"]),
        data=dataclasses.replace(RunConfig().data, **raw["data"]),
    )
    model = build_model(cfg.model)
    model.load_state_dict(state)
    return model, cfg


def cmd_eval(args) -> int:
    model, cfg = _restore(args.checkpoint)
    if args.config or args.set:
        file_cfg = parse_config(args.config, args.set or [])
        cfg = RunConfig(model=cfg.model, train=file_cfg.train, data=file_cfg.data)
    samples, _ = _load_split(cfg, args.split)
    started = time.perf_counter()
    report = evaluate(model, samples, cfg.model.num_classes, cfg.data.ignore_index,
                      cfg.train.batch_size)
    wall = time.perf_counter() - started
    params, flops = count_params_flops(model, (cfg.train.crop, cfg.train.crop))
    payload = _metrics_payload(cfg, report, params, flops, wall)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True))
    print(f"{args.split}: mIoU {report.miou:.4f} mF1 {report.mf1:.4f} PA {report.pa:.4f} "
          f"boundaryF1 {report.boundary_f1:.4f} over {len(samples)} tiles")
    return 0


def cmd_predict(args) -> int:
    model, cfg = _restore(args.checkpoint)
    palette = _palette_from_config(cfg)
    image_path = Path(args.image)
    if not image_path.exists():
        raise ConfigurationError(f"image '{image_path}' does not exist")
    image = np.asarray(Image.open(image_path).convert("RGB"))
    padded, (h, w) = pad_to_multiple(image, 32)
    model.eval()
    with torch.no_grad():
        out = model(image_to_tensor(padded)[None])
    cropped = SegmentationOutput(
        logits=out.logits,
        probabilities=out.probabilities[..., :h, :w],
        class_map=out.class_map[..., :h, :w],
    )
    written = emit_prediction(cropped, palette, args.out, [image_path.stem],
                              probabilities=args.probs)
    print(f"wrote {', '.join(str(p) for p in written)}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    components = [c.strip() for c in args.components.split(",") if c.strip()]
    seeds = tuple(range(args.seeds))

    def progress(name, seed, report):
        print(f"[{name} seed={seed}] mIoU {report.miou:.4f}", flush=True)

    report = run_ablation(cfg, components=components, seeds=seeds,
                          out_csv=args.out, progress=progress)
    save_ablation_bars(report.rows, Path(args.out).with_suffix(".png"))
    for row in report.rows:
        print(f"{row.name}: median mIoU {row.miou:.4f} mF1 {row.mf1:.4f} PA {row.pa:.4f}")
    print(f"report written to {args.out}")
    return 0


def cmd_flops(args) -> int:
    if args.paper_scale:
        model_cfg = paper_scale()
        size = 512
    else:
        cfg = _config_from_args(args)
        model_cfg = cfg.model
        size = cfg.train.crop
    model = build_model(model_cfg)
    params, flops = count_params_flops(model, (size, size))
    print(f"input {size}x{size}: params {params / 1e6:.2f}M, mult-accs {flops / 1e9:.2f}G")
    if args.paper_scale:
        ref = PAPER_SCALE_REFERENCE
        print(
            f"published full-scale reference (for context, not asserted): "
            f"{ref['params_m']:.2f}M params, {ref['flops_g']:.2f}G FLOPs"
        )
    return 0


def cmd_gen_data(args) -> int:
    cfg = _config_from_args(args)
    num_classes = args.classes or cfg.data.num_classes
    seed = args.seed if args.seed is not None else cfg.data.seed
    samples = gen_synthetic(args.count, args.size, num_classes, seed)
    palette = default_palette(num_classes, ignore_index=cfg.data.ignore_index)
    save_dataset(samples, args.out, palette, seed=seed)
    print(f"wrote {len(samples)} samples ({args.size}x{args.size}, {num_classes} classes) to {args.out}")
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="YAML config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value, e.g. train.lr=1e-4")
    p.add_argument("--seed", type=int, default=None, help="override every seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="teformer",
                                     description="texture-aware edge-guided segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_common(p)
    p.add_argument("--out", default="runs/train", help="output directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="val", choices=("train", "val", "test"))
    p.add_argument("--out", default="metrics.json")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="segment one image")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", default="predictions")
    p.add_argument("--probs", action="store_true", help="also write 32-bit probability raster")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("ablate", help="run the component ablation study")
    _add_common(p)
    p.add_argument("--components", default=",".join(COMPONENTS),
                   help=f"comma-separated subset of {COMPONENTS}")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds per variant")
    p.add_argument("--out", default="ablation.csv")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("flops", help="report parameter and mult-acc counts")
    _add_common(p)
    p.add_argument("--paper-scale", action="store_true",
                   help="use the full-scale guess preset at 512x512")
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("gen-data", help="generate the synthetic texture dataset")
    _add_common(p)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--classes", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)
    return parser


def main(argv: list[str] | None = None) -> int:
    _apply_determinism()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, TrainingDiverged, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
