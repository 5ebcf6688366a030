#!/usr/bin/env python3
"""Overfit smoke experiment: memorize 16 tiny synthetic images.

Trains the micro model for 2000 steps on a fixed 16-image set with the
center mask and reports composited train-set PSNR before and after, plus
the reconstruction-loss ratio.  Mirrors the experiment the acceptance
suite pins (PSNR >= 28 dB, final L_re < 25% of the initial value); takes
roughly 6-7 minutes on a 2-core CPU.

    python scripts/overfit_smoke.py --workdir /tmp/overfit
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import torch  # noqa: E402

from fakefill.config import LossWeights, MaskSpec, ModelConfig, Paths, RunConfig, TrainConfig  # noqa: E402
from fakefill.data import apply_mask, build_manifest, center_mask, load_batch, write_toy_dataset  # noqa: E402
from fakefill.losses import reconstruction_loss  # noqa: E402
from fakefill.trainer import evaluate_model, init_state, sample_batch, train_step  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--report-every", type=int, default=250)
    args = parser.parse_args()

    workdir = Path(args.workdir)
    data_root = workdir / "images"
    write_toy_dataset(data_root, 16, resolution=16, seed=5)
    manifest = build_manifest(data_root, val_fraction=0.0, seed=0)

    cfg = RunConfig(
        paths=Paths(data_root=str(data_root), manifest=str(workdir / "m.tsv"),
                    out_dir=str(workdir / "run")),
        model=ModelConfig(resolution=16, base_width=8, disc_base_width=16, disc_max_width=128),
        mask=MaskSpec(mode="center", center_size=8),
        loss=LossWeights(),
        train=TrainConfig(batch_size=16, steps=args.steps, lr_g=2e-4, lr_d=2e-4, seed=3),
    )
    state = init_state(cfg, manifest)

    ids = manifest.ids("train")
    x_all = load_batch(manifest, ids, cfg.model.resolution)
    _, gen_in_all = apply_mask(
        x_all, center_mask(cfg.model.resolution, cfg.mask.center_size).expand(len(ids), -1, -1, -1)
    )

    def probe():
        with torch.no_grad():
            out = state.generator(gen_in_all)
            l_re = reconstruction_loss(x_all, out.coarse, out.final).item()
        report = evaluate_model(state.generator, cfg.model, manifest, "train", "center",
                                cfg.mask, cfg.train.seed)
        return report["composited"].mean_psnr_db, l_re

    psnr0, l_re0 = probe()
    print(f"step 0: composited train PSNR {psnr0:.2f} dB, L_re {l_re0:.4f}")
    start = time.time()
    for step in range(args.steps):
        train_step(state, sample_batch(state))
        if (step + 1) % args.report_every == 0:
            p, l = probe()
            print(f"step {step + 1}: PSNR {p:.2f} dB, L_re {l:.4f}, "
                  f"elapsed {time.time() - start:.0f}s", flush=True)
    psnr1, l_re1 = probe()
    print(f"final: PSNR {psnr0:.2f} -> {psnr1:.2f} dB, L_re ratio {l_re1 / l_re0:.3f}")
    print("OK" if psnr1 >= 28.0 and psnr1 > psnr0 and l_re1 < 0.25 * l_re0 else "BELOW THRESHOLD")


if __name__ == "__main__":
    main()
