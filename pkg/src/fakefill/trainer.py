"""Alternating adversarial training with seeded, resumable state.

One logical training stream owns all parameter mutation.  Every source of
randomness (batch selection, per-step mask sampling) flows through a
single numpy Generator whose state is serialized into checkpoints, so a
resumed run continues exactly where the uninterrupted run would be.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import MaskSpec, ModelConfig, RunConfig
from .data import DatasetManifest, apply_mask, center_mask, dataset_mean_rgb, free_form_mask, load_image, sample_mask
from .errors import CheckpointError, DataError, TrainingDivergence
from .losses import (
    LossBreakdown,
    adversarial_loss_d,
    adversarial_loss_g,
    dam_loss,
    reconstruction_loss,
)
from .metrics import MetricsReport, MetricsRow, aggregate, evaluate_pair
from .model import Discriminator, Generator, build_discriminator, build_generator


class Adam:
    """Bias-corrected Adam over named parameters.

    Owning the update rule keeps the moment tensors trivially serializable
    as named float32 blocks, which the checkpoint round-trip contract
    (bit-exact resume) depends on.  Parameters with no gradient are
    skipped, matching the usual convention.
    """

    def __init__(self, named_params, lr: float, beta1: float, beta2: float, eps: float):
        self.params = [(name, p) for name, p in named_params]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: torch.zeros_like(p) for name, p in self.params}
        self.v = {name: torch.zeros_like(p) for name, p in self.params}

    def zero_grad(self) -> None:
        for _, p in self.params:
            p.grad = None

    @torch.no_grad()
    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m.mul_(self.beta1).add_(g, alpha=1.0 - self.beta1)
            v.mul_(self.beta2).addcmul_(g, g, value=1.0 - self.beta2)
            p.addcdiv_(m / bc1, (v / bc2).sqrt().add_(self.eps), value=-self.lr)


@dataclass
class TrainState:
    cfg: RunConfig
    manifest: DatasetManifest
    generator: Generator
    discriminator: Discriminator
    opt_g: Adam
    opt_d: Adam
    rng: np.random.Generator
    step: int = 0
    mean_rgb: torch.Tensor | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def image(self, image_id: str) -> torch.Tensor:
        if image_id not in self._cache:
            self._cache[image_id] = load_image(
                self.manifest.resolve(image_id), self.cfg.model.resolution
            )
        return self._cache[image_id]


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    history: list[LossBreakdown]


LOG_HEADER = "step,l_re,l_adv_d,l_adv_g,l_dam,l_total"


def _sig6(v: float) -> str:
    return f"{v:.6g}"


def stable_seed(image_id: str, seed: int) -> int:
    """Process-independent 63-bit seed from (image id, global seed)."""
    digest = hashlib.sha256(f"{seed}:{image_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def init_state(cfg: RunConfig, manifest: DatasetManifest) -> TrainState:
    cfg.validate()
    generator = build_generator(cfg.model, cfg.train.seed)
    discriminator = build_discriminator(cfg.model, cfg.train.seed + 1)
    opt_g = Adam(
        generator.named_parameters(),
        cfg.train.lr_g, cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps,
    )
    opt_d = Adam(
        discriminator.named_parameters(),
        cfg.train.lr_d, cfg.train.adam_beta1, cfg.train.adam_beta2, cfg.train.adam_eps,
    )
    mean_rgb = None
    if cfg.train.fill == "dataset_mean":
        mean_rgb = dataset_mean_rgb(manifest, cfg.model.resolution)
    return TrainState(
        cfg=cfg,
        manifest=manifest,
        generator=generator,
        discriminator=discriminator,
        opt_g=opt_g,
        opt_d=opt_d,
        rng=np.random.default_rng(cfg.train.seed),
        mean_rgb=mean_rgb,
    )


def state_to_checkpoint(state: TrainState) -> Checkpoint:
    tensors: dict[str, np.ndarray] = {}
    for prefix, module, opt in (
        ("g", state.generator, state.opt_g),
        ("d", state.discriminator, state.opt_d),
    ):
        for name, p in module.named_parameters():
            tensors[f"{prefix}.param.{name}"] = p.detach().numpy().astype("<f4")
        for name, _ in opt.params:
            tensors[f"{prefix}.m.{name}"] = opt.m[name].numpy().astype("<f4")
            tensors[f"{prefix}.v.{name}"] = opt.v[name].numpy().astype("<f4")
    return Checkpoint(
        model=state.cfg.model,
        step=state.step,
        rng_state=state.rng.bit_generator.state,
        opt_steps={"g": state.opt_g.t, "d": state.opt_d.t},
        tensors=tensors,
    )


def load_parameters(module: torch.nn.Module, tensors: dict[str, np.ndarray], prefix: str) -> None:
    """Copy float32 blocks named ``{prefix}.param.*`` into a module."""
    with torch.no_grad():
        for name, p in module.named_parameters():
            key = f"{prefix}.param.{name}"
            if key not in tensors:
                raise CheckpointError(f"checkpoint is missing parameter block {key!r}")
            arr = tensors[key]
            if tuple(arr.shape) != tuple(p.shape):
                raise CheckpointError(
                    f"checkpoint block {key!r} has shape {arr.shape}, expected {tuple(p.shape)}"
                )
            p.copy_(torch.from_numpy(arr.copy()))


def _load_moments(opt: Adam, tensors: dict[str, np.ndarray], prefix: str, t: int) -> None:
    opt.t = t
    for name, _ in opt.params:
        for moment, store in (("m", opt.m), ("v", opt.v)):
            key = f"{prefix}.{moment}.{name}"
            if key not in tensors:
                raise CheckpointError(f"checkpoint is missing optimizer block {key!r}")
            store[name] = torch.from_numpy(tensors[key].copy())


def restore_state(cfg: RunConfig, manifest: DatasetManifest, ckpt: Checkpoint) -> TrainState:
    if ckpt.model != cfg.model:
        raise CheckpointError(
            f"checkpoint model config {ckpt.model} does not match run config {cfg.model}"
        )
    state = init_state(cfg, manifest)
    load_parameters(state.generator, ckpt.tensors, "g")
    load_parameters(state.discriminator, ckpt.tensors, "d")
    _load_moments(state.opt_g, ckpt.tensors, "g", ckpt.opt_steps["g"])
    _load_moments(state.opt_d, ckpt.tensors, "d", ckpt.opt_steps["d"])
    state.rng.bit_generator.state = ckpt.rng_state
    state.step = ckpt.step
    return state


def sample_batch(state: TrainState) -> tuple[torch.Tensor, torch.Tensor]:
    """Draw a fresh (images, masks) batch from the training stream.

    Mixed mask mode alternates center/free-form on the step counter, so the
    mix is deterministic and resumable.
    """
    cfg = state.cfg
    train_ids = state.manifest.ids("train")
    if not train_ids:
        raise DataError("manifest has no train images")
    batch = cfg.train.batch_size
    idx = state.rng.integers(0, len(train_ids), size=batch)
    images = torch.cat([state.image(train_ids[int(i)]) for i in idx], dim=0)

    mode = cfg.mask.mode
    if mode == "mixed":
        mode = "center" if state.step % 2 == 0 else "free_form"
    seeds = []
    if mode == "free_form":
        seeds = [int(state.rng.integers(0, 2**63)) for _ in range(batch)]
    masks = sample_mask(cfg.mask, cfg.model.resolution, batch, mode, seeds)
    return images, masks


def train_step(state: TrainState, batch: tuple[torch.Tensor, torch.Tensor]) -> LossBreakdown:
    """d_steps_per_g discriminator updates, then one generator update."""
    cfg = state.cfg
    x_hat, mask = batch
    _, gen_input = apply_mask(x_hat, mask, cfg.train.fill, state.mean_rgb)

    with torch.no_grad():
        fake = state.generator(gen_input).final
    l_adv_d = float("nan")
    for _ in range(cfg.train.d_steps_per_g):
        d_loss = adversarial_loss_d(state.discriminator(x_hat), state.discriminator(fake))
        state.opt_d.zero_grad()
        d_loss.backward()
        state.opt_d.step()
        l_adv_d = d_loss.item()

    out = state.generator(gen_input)
    l_re = reconstruction_loss(x_hat, out.coarse, out.final)
    l_adv_g = adversarial_loss_g(state.discriminator(out.final))
    l_dam = dam_loss(out.fakeness, x_hat, out.final)

    w = cfg.loss
    active = [
        weight * term
        for weight, term in (
            (w.lambda_re, l_re), (w.lambda_adv, l_adv_g), (w.lambda_dam, l_dam),
        )
        if weight != 0.0
    ]
    if active:
        objective = active[0]
        for term in active[1:]:
            objective = objective + term
        state.opt_g.zero_grad()
        objective.backward()
        state.opt_g.step()

    state.step += 1
    re_v, adv_g_v, dam_v = l_re.item(), l_adv_g.item(), l_dam.item()
    breakdown = LossBreakdown(
        l_re=re_v,
        l_adv_d=l_adv_d,
        l_adv_g=adv_g_v,
        l_dam=dam_v,
        l_total=w.lambda_re * re_v + w.lambda_adv * adv_g_v + w.lambda_dam * dam_v,
    )
    for name in ("l_re", "l_adv_d", "l_adv_g", "l_dam", "l_total"):
        if not math.isfinite(getattr(breakdown, name)):
            raise TrainingDivergence(
                f"non-finite loss term {name} = {getattr(breakdown, name)} at step {state.step}"
            )
    return breakdown


def checkpoint_path(out_dir: Path, step: int) -> Path:
    return out_dir / f"ckpt_{step:06d}.ckpt"


def run_training(
    cfg: RunConfig,
    manifest: DatasetManifest,
    resume: str | Path | None = None,
    log=print,
) -> TrainResult:
    """Execute the configured number of steps, logging and checkpointing.

    Writes one CSV row per step (flushed immediately, so an abort leaves a
    usable partial log), checkpoints on the configured schedule plus at the
    final step, and resumes exactly from any saved checkpoint.
    """
    cfg.validate()
    out_dir = Path(cfg.paths.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / "train_log.csv"

    resuming = resume is not None
    if resuming:
        state = restore_state(cfg, manifest, load_checkpoint(resume))
    else:
        state = init_state(cfg, manifest)

    history: list[LossBreakdown] = []
    last_saved = -1
    append = resuming and log_path.exists()
    fh = open(log_path, "a" if append else "w", encoding="utf-8", newline="\n")
    try:
        if not append:
            fh.write(LOG_HEADER + "\n")
            fh.flush()
        while state.step < cfg.train.steps:
            breakdown = train_step(state, sample_batch(state))
            history.append(breakdown)
            fh.write(f"{state.step}," + ",".join(_sig6(v) for v in breakdown.as_row()) + "\n")
            fh.flush()
            if cfg.train.checkpoint_every and state.step % cfg.train.checkpoint_every == 0:
                save_checkpoint(state_to_checkpoint(state), checkpoint_path(out_dir, state.step))
                last_saved = state.step
            if cfg.train.eval_every and state.step % cfg.train.eval_every == 0:
                _periodic_eval(state, log)
    finally:
        fh.close()

    final_path = checkpoint_path(out_dir, state.step)
    if last_saved != state.step and not (resuming and final_path.exists()):
        save_checkpoint(state_to_checkpoint(state), final_path)
    return TrainResult(checkpoint_path=final_path, log_path=log_path, history=history)


def _periodic_eval(state: TrainState, log) -> None:
    if not state.manifest.ids("val"):
        log(f"[eval] step={state.step} skipped: empty val split")
        return
    mode = "center" if state.cfg.mask.mode in ("center", "mixed") else "free"
    reports = evaluate_model(
        state.generator, state.cfg.model, state.manifest, "val", mode,
        state.cfg.mask, state.cfg.train.seed, state.cfg.train.fill, state.mean_rgb,
    )
    comp, raw = reports["composited"], reports["raw"]
    log(
        f"[eval] step={state.step} mask={mode} "
        f"composited psnr={comp.mean_psnr_db:.2f}dB ssim={comp.mean_ssim:.4f} | "
        f"raw psnr={raw.mean_psnr_db:.2f}dB ssim={raw.mean_ssim:.4f}"
    )


def evaluation_mask(
    image_id: str, mask_mode: str, mask_spec: MaskSpec, resolution: int, seed: int
) -> torch.Tensor:
    """Deterministic per-image evaluation mask; free-form masks are seeded
    by a stable hash of (image id, global seed) so reports reproduce."""
    if mask_mode == "center":
        return center_mask(resolution, mask_spec.center_size)
    if mask_mode == "free":
        spec = replace(mask_spec, mode="free_form", seed=stable_seed(image_id, seed))
        return free_form_mask(spec, resolution)
    raise DataError(f"unknown evaluation mask mode {mask_mode!r} (use 'center' or 'free')")


def evaluate_model(
    generator: Generator,
    model_cfg: ModelConfig,
    manifest: DatasetManifest,
    split: str,
    mask_mode: str,
    mask_spec: MaskSpec,
    seed: int,
    fill: str = "zeros",
    mean_rgb: torch.Tensor | None = None,
) -> dict[str, MetricsReport]:
    """Score a split with deterministic masks; returns reports for both
    compositing modes keyed "raw" and "composited"."""
    ids = manifest.ids(split)
    if not ids:
        raise DataError(f"cannot evaluate: split {split!r} is empty")
    rows = {"raw": [], "composited": []}
    generator.eval()
    with torch.no_grad():
        for image_id in ids:
            x_hat = load_image(manifest.resolve(image_id), model_cfg.resolution)
            mask = evaluation_mask(image_id, mask_mode, mask_spec, model_cfg.resolution, seed)
            _, gen_input = apply_mask(x_hat, mask, fill, mean_rgb)
            out = generator(gen_input)
            for mode in ("raw", "composited"):
                p, s = evaluate_pair(x_hat, out.final, mask, mode)
                rows[mode].append(MetricsRow(image_id=image_id, psnr_db=p, ssim=s))
    return {mode: aggregate(rows[mode], mask_mode, mode) for mode in ("raw", "composited")}
