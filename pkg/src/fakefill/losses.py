"""Training objectives: L1 reconstruction of both stages, the minimax
adversarial pair, and the per-scale fakeness-map loss with its
grayscale-difference ground truth.

All L1 reductions are per-element means, so the loss weights stay
resolution-independent.  Pixels live in [0, 1], which makes the fakeness
ground truth (a grayscale absolute difference) already normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import LossError

LOG_EPS = 1e-7

# BT.601 luma coefficients.
_LUMA = (0.299, 0.587, 0.114)


@dataclass
class LossBreakdown:
    """Named scalar losses for one step; l_total is the generator objective."""

    l_re: float
    l_adv_d: float
    l_adv_g: float
    l_dam: float
    l_total: float

    def as_row(self) -> list[float]:
        return [self.l_re, self.l_adv_d, self.l_adv_g, self.l_dam, self.l_total]


def _check_same_shape(name: str, a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise LossError(f"{name}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def reconstruction_loss(x_hat, coarse, final) -> torch.Tensor:
    """mean|x_hat - coarse| + mean|x_hat - final|, both stages in one term."""
    _check_same_shape("reconstruction_loss", x_hat, coarse)
    _check_same_shape("reconstruction_loss", x_hat, final)
    return (x_hat - coarse).abs().mean() + (x_hat - final).abs().mean()


def _clamped_log(scores: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(scores, LOG_EPS, 1.0 - LOG_EPS))


def adversarial_loss_d(score_real: torch.Tensor, score_fake: torch.Tensor) -> torch.Tensor:
    """Discriminator objective (minimized): -E[log D(real)] - E[log(1 - D(fake))]."""
    return -_clamped_log(score_real).mean() - _clamped_log(1.0 - score_fake).mean()


def adversarial_loss_g(score_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator surrogate (minimized): -E[log D(fake)]."""
    return -_clamped_log(score_fake).mean()


def grayscale(image: torch.Tensor) -> torch.Tensor:
    """BT.601 luma of an RGB tensor: [b, 3, h, w] -> [b, 1, h, w]."""
    if image.ndim != 4 or image.shape[1] != 3:
        raise LossError(f"grayscale expects [b, 3, h, w], got {tuple(image.shape)}")
    r, g, b = image[:, 0:1], image[:, 1:2], image[:, 2:3]
    return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b


def fakeness_target(x_hat: torch.Tensor, final: torch.Tensor) -> torch.Tensor:
    """Ground-truth fakeness map at the inputs' own scale.

    grayscale(|final - x_hat|); with [0, 1] pixels the result is already in
    [0, 1], and it is zero exactly where the images agree.  Detached: the
    target is a constant during backpropagation, otherwise the loss could
    be gamed by degrading the output.
    """
    _check_same_shape("fakeness_target", x_hat, final)
    return grayscale((final.detach() - x_hat.detach()).abs())


def downsample_area(m: torch.Tensor, side: int) -> torch.Tensor:
    """Area-average a [b, 1, h, w] map to side x side (h, w multiples of side)."""
    if m.shape[-1] % side != 0 or m.shape[-2] % side != 0:
        raise LossError(f"cannot area-average {tuple(m.shape[-2:])} to side {side}")
    return F.adaptive_avg_pool2d(m, side)


def fakeness_target_pyramid(x_hat: torch.Tensor, final: torch.Tensor, sides: list[int]) -> list[torch.Tensor]:
    """Per-scale targets: the full-resolution map area-averaged to each side.

    The absolute difference is taken before downsampling, so every level is
    zero iff the images are identical.
    """
    base = fakeness_target(x_hat, final)
    return [downsample_area(base, side) for side in sides]


def dam_loss_with_targets(pred: list[torch.Tensor], targets: list[torch.Tensor]) -> torch.Tensor:
    """Sum over scales of mean|M_j - target_j| for explicit targets."""
    if len(pred) != len(targets):
        raise LossError(f"{len(pred)} fakeness maps but {len(targets)} targets")
    total = pred[0].new_zeros(())
    for m, t in zip(pred, targets):
        _check_same_shape("dam_loss_with_targets", m, t)
        total = total + (m - t).abs().mean()
    return total


def dam_loss(pred: list[torch.Tensor], x_hat: torch.Tensor, final: torch.Tensor) -> torch.Tensor:
    """Sum over the four scales of mean|M_j - target_j|, j=0 finest.

    Gradients flow into everything upstream of each predicted map; the
    targets are constants.
    """
    if len(pred) != 4:
        raise LossError(f"expected 4 fakeness maps, got {len(pred)}")
    _check_same_shape("dam_loss", x_hat, final)
    res = x_hat.shape[-1]
    sides = []
    for j, m in enumerate(pred):
        want = res // 2**j
        if m.ndim != 4 or m.shape[1] != 1 or m.shape[-2:] != (want, want):
            raise LossError(
                f"fakeness map {j} must be [b, 1, {want}, {want}], got {tuple(m.shape)}"
            )
        sides.append(want)
    return dam_loss_with_targets(pred, fakeness_target_pyramid(x_hat, final, sides))


def total_loss(l_re, l_adv_g, l_dam, weights: LossWeights):
    """Weighted generator objective; works on tensors and plain floats."""
    return (
        weights.lambda_re * l_re
        + weights.lambda_adv * l_adv_g
        + weights.lambda_dam * l_dam
    )
