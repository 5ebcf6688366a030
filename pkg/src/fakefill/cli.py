"""Command-line entry point: prepare, train, eval, inpaint, grid.

Exit codes: 0 success, 2 usage/config/data error, 3 numerical failure.
Every command is deterministic given its arguments and config file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from . import data
from .checkpoint import load_checkpoint
from .config import dump_config, load_config
from .errors import FakefillError, TrainingDivergence
from .metrics import write_report_csv
from .model import Generator, build_generator
from .trainer import evaluation_mask, evaluate_model, load_parameters, run_training

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _load_generator(checkpoint_path: str) -> tuple[Generator, object]:
    ckpt = load_checkpoint(checkpoint_path)
    generator = build_generator(ckpt.model, seed=0)
    load_parameters(generator, ckpt.tensors, "g")
    generator.eval()
    return generator, ckpt


def cmd_prepare(args) -> int:
    manifest = data.build_manifest(args.data_root, args.val_fraction, args.seed)
    for rel in manifest.skipped:
        print(f"skipped (unreadable): {rel}", file=sys.stderr)
    data.save_manifest(manifest, args.out)
    print(f"train={len(manifest.ids('train'))} val={len(manifest.ids('val'))}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set or [])
    if args.print_config:
        print(dump_config(cfg), end="")
        return EXIT_OK
    manifest_path = Path(cfg.paths.manifest)
    if not manifest_path.exists():
        print(f"error: manifest not found: {manifest_path}", file=sys.stderr)
        return EXIT_USAGE
    manifest = data.load_manifest(manifest_path, cfg.paths.data_root)
    result = run_training(cfg, manifest, resume=args.resume)
    print(f"done: steps={cfg.train.steps} checkpoint={result.checkpoint_path} log={result.log_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set or [])
    generator, ckpt = _load_generator(args.checkpoint)
    manifest = data.load_manifest(cfg.paths.manifest, cfg.paths.data_root)
    mean_rgb = None
    if cfg.train.fill == "dataset_mean":
        mean_rgb = data.dataset_mean_rgb(manifest, ckpt.model.resolution)
    reports = evaluate_model(
        generator, ckpt.model, manifest, args.split, args.mask,
        cfg.mask, cfg.train.seed, cfg.train.fill, mean_rgb,
    )
    out = Path(args.out)
    raw_out = out.with_name(out.stem + "_raw" + out.suffix)
    write_report_csv(reports["composited"], out)
    write_report_csv(reports["raw"], raw_out)
    comp, raw = reports["composited"], reports["raw"]
    print(
        f"mask={args.mask} composited psnr={comp.mean_psnr_db:.4f}dB ssim={comp.mean_ssim:.4f} "
        f"({out}) | raw psnr={raw.mean_psnr_db:.4f}dB ssim={raw.mean_ssim:.4f} ({raw_out})"
    )
    return EXIT_OK


def _load_mask_file(path: str, resolution: int) -> torch.Tensor:
    try:
        with Image.open(path) as img:
            img = img.convert("L")
            if img.size != (resolution, resolution):
                raise FakefillError(
                    f"mask file {path} is {img.size[0]}x{img.size[1]}, "
                    f"expected {resolution}x{resolution}"
                )
            arr = (np.asarray(img) >= 128).astype(np.float32)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise FakefillError(f"cannot read mask file {path}: {exc}") from exc
    return torch.from_numpy(arr)[None, None]


def cmd_inpaint(args) -> int:
    generator, ckpt = _load_generator(args.checkpoint)
    resolution = ckpt.model.resolution
    x = data.load_image(args.image, resolution)
    if args.mask_file:
        mask = _load_mask_file(args.mask_file, resolution)
    else:
        mask = data.center_mask(resolution, resolution // 2)
    masked, gen_input = data.apply_mask(x, mask)
    with torch.no_grad():
        out = generator(gen_input)
    composited = out.final * mask + x * (1.0 - mask)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    for tag, img in (("input", masked), ("raw", out.final), ("composited", composited)):
        data.save_png(img, prefix.with_name(f"{prefix.name}_{tag}.png"))
    print(f"wrote {prefix.name}_input.png, {prefix.name}_raw.png, {prefix.name}_composited.png in {prefix.parent}")
    return EXIT_OK


def cmd_grid(args) -> int:
    cfg = load_config(args.config, args.set or [])
    generator, ckpt = _load_generator(args.checkpoint)
    manifest = data.load_manifest(cfg.paths.manifest, cfg.paths.data_root)
    known = {rel for rel, _ in manifest.entries}
    ids = [s.strip() for s in args.ids.split(",") if s.strip()]
    unknown = [i for i in ids if i not in known]
    if not ids or unknown:
        print(f"error: unknown image ids: {', '.join(unknown) or '(none given)'}", file=sys.stderr)
        return EXIT_USAGE
    resolution = ckpt.model.resolution
    pad = 2
    tiles = []
    with torch.no_grad():
        for image_id in ids:
            x = data.load_image(manifest.resolve(image_id), resolution)
            mask = evaluation_mask(image_id, args.mask, cfg.mask, resolution, cfg.train.seed)
            masked, gen_input = data.apply_mask(x, mask, cfg.train.fill)
            out = generator(gen_input)
            composited = out.final * mask + x * (1.0 - mask)
            tiles.append([data.to_uint8(x), data.to_uint8(masked), data.to_uint8(composited)])
    rows = len(tiles)
    grid = np.full(
        (rows * resolution + (rows - 1) * pad, 3 * resolution + 2 * pad, 3), 255, np.uint8
    )
    for r, row in enumerate(tiles):
        for c, tile in enumerate(row):
            y0 = r * (resolution + pad)
            x0 = c * (resolution + pad)
            grid[y0 : y0 + resolution, x0 : x0 + resolution] = tile
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(grid, mode="RGB").save(args.out, format="PNG")
    print(f"wrote {rows}x3 grid to {args.out}")
    return EXIT_OK


def _add_set_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--set", action="append", metavar="SECTION.KEY=VALUE",
        help="override a config value (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fakefill",
        description="Two-stage GAN inpainting with per-scale fakeness attention maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="scan a dataset directory and write a train/val manifest")
    p.add_argument("--data-root", required=True)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="run adversarial training from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", help="checkpoint file to continue from")
    p.add_argument("--print-config", action="store_true", help="dump the merged config and exit")
    _add_set_flag(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a split and write PSNR/SSIM report CSVs")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mask", choices=["center", "free"], default="center")
    p.add_argument("--split", choices=["train", "val"], default="val")
    p.add_argument("--out", required=True)
    _add_set_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inpaint", help="inpaint one image; writes input/raw/composited PNGs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--mask", choices=["center"], default="center")
    p.add_argument("--mask-file", help="binary mask PNG (>=128 marks the hole) at model resolution")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("grid", help="ground-truth / input / output comparison grid")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ids", required=True, help="comma-separated manifest image ids")
    p.add_argument("--mask", choices=["center", "free"], default="center")
    p.add_argument("--out", required=True)
    _add_set_flag(p)
    p.set_defaults(func=cmd_grid)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FakefillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
