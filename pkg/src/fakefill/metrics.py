"""Image-quality metrics (PSNR, SSIM) and per-split report aggregation.

Both metrics score full images.  Evaluation reports exist in two
compositing modes: "raw" scores the generator output as-is, "composited"
pastes the output into the hole while keeping known pixels from the
ground truth, so errors outside the hole cannot count against the model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .errors import MetricsError

PSNR_CAP_DB = 99.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise MetricsError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.ndim != 4:
        raise MetricsError(f"expected [b, c, h, w] tensors, got {tuple(a.shape)}")


def mse(a: torch.Tensor, b: torch.Tensor) -> float:
    _check_pair(a, b)
    return float(((a.double() - b.double()) ** 2).mean())


def psnr(a: torch.Tensor, b: torch.Tensor, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB, capped at 99 dB so identical images
    stay finite in reports."""
    if peak <= 0:
        raise MetricsError(f"peak must be > 0, got {peak}")
    m = mse(a, b)
    if m == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(peak * peak / m), PSNR_CAP_DB)


def _gaussian_kernel(dtype) -> torch.Tensor:
    radius = (SSIM_WINDOW - 1) // 2
    x = torch.arange(-radius, radius + 1, dtype=dtype)
    k = torch.exp(-0.5 * (x / SSIM_SIGMA) ** 2)
    return k / k.sum()


def _filter2d(x: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
    # Separable valid-mode filtering; channels ride along the batch axis.
    b, c, h, w = x.shape
    flat = x.reshape(b * c, 1, h, w)
    flat = F.conv2d(flat, k.reshape(1, 1, 1, -1))
    flat = F.conv2d(flat, k.reshape(1, 1, -1, 1))
    return flat.reshape(b, c, flat.shape[-2], flat.shape[-1])


def ssim(a: torch.Tensor, b: torch.Tensor, peak: float = 1.0) -> float:
    """Mean local SSIM: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
    computed per channel over valid window positions, then averaged."""
    _check_pair(a, b)
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise MetricsError(
            f"image side {tuple(a.shape[-2:])} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    x = a.double()
    y = b.double()
    k = _gaussian_kernel(x.dtype)
    ux = _filter2d(x, k)
    uy = _filter2d(y, k)
    vx = _filter2d(x * x, k) - ux * ux
    vy = _filter2d(y * y, k) - uy * uy
    cov = _filter2d(x * y, k) - ux * uy
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    s = ((2 * ux * uy + c1) * (2 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
    return float(s.mean())


def evaluate_pair(
    x_hat: torch.Tensor,
    final: torch.Tensor,
    mask: torch.Tensor,
    compositing: str,
) -> tuple[float, float]:
    """(psnr_db, ssim) of one output against its ground truth."""
    _check_pair(x_hat, final)
    if mask.shape != (x_hat.shape[0], 1, x_hat.shape[2], x_hat.shape[3]):
        raise MetricsError(f"mask shape {tuple(mask.shape)} does not match image")
    if compositing == "composited":
        out = final * mask + x_hat * (1.0 - mask)
    elif compositing == "raw":
        out = final
    else:
        raise MetricsError(f"unknown compositing mode {compositing!r}")
    return psnr(out, x_hat), ssim(out, x_hat)


@dataclass
class MetricsRow:
    image_id: str
    psnr_db: float
    ssim: float


@dataclass
class MetricsReport:
    rows: list[MetricsRow]
    mask_mode: str  # {"center", "free"}
    compositing: str  # {"raw", "composited"}
    mean_psnr_db: float = field(init=False)
    mean_ssim: float = field(init=False)

    def __post_init__(self):
        self.mean_psnr_db = sum(r.psnr_db for r in self.rows) / len(self.rows)
        self.mean_ssim = sum(r.ssim for r in self.rows) / len(self.rows)


def aggregate(rows: list[MetricsRow], mask_mode: str, compositing: str) -> MetricsReport:
    """Arithmetic means over per-image rows, stably ordered by image id."""
    if not rows:
        raise MetricsError("cannot aggregate an empty set of rows")
    return MetricsReport(
        rows=sorted(rows, key=lambda r: r.image_id),
        mask_mode=mask_mode,
        compositing=compositing,
    )


def _sig6(v: float) -> str:
    return f"{v:.6g}"


def write_report_csv(report: MetricsReport, path) -> None:
    """CSV with header ``id,psnr_db,ssim``, one row per image, final mean row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "psnr_db", "ssim"])
        for row in report.rows:
            writer.writerow([row.image_id, _sig6(row.psnr_db), _sig6(row.ssim)])
        writer.writerow(["mean", _sig6(report.mean_psnr_db), _sig6(report.mean_ssim)])
