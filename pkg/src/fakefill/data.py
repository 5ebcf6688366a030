"""Dataset manifests, image loading, and occlusion mask generation.

Conventions: images are float32 torch tensors shaped [batch, 3, H, W] with
RGB values in [0, 1]; masks are float32 tensors shaped [batch, 1, H, W]
whose entries are exactly 0 or 1, with 1 marking an occluded (missing)
pixel.  All functions here are pure given their arguments (including
seeds), so they are safe to run in parallel across items.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, UnidentifiedImageError

from .config import MaskSpec
from .errors import DataError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
SPLITS = ("train", "val")

# Random polyline segment lengths, as fractions of the mask side.
_SEGMENT_LENGTH_RANGE = (1.0 / 16.0, 1.0 / 4.0)
_MASK_MAX_TRIES = 100


@dataclass
class DatasetManifest:
    """Train/val split over image files below ``root``.

    ``entries`` holds (relative posix path, split) pairs in sorted path
    order; ``skipped`` lists files that could not be decoded when the
    manifest was built (never fatal, never serialized).
    """

    root: Path
    entries: list[tuple[str, str]]
    skipped: list[str] = field(default_factory=list)

    def ids(self, split: str) -> list[str]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        return [p for p, s in self.entries if s == split]

    def resolve(self, image_id: str) -> Path:
        return self.root / image_id


def split_sizes(n: int, val_fraction: float) -> tuple[int, int]:
    """(train, val) sizes for ``n`` images; |val| = round(val_fraction * n)."""
    n_val = int(round(val_fraction * n))
    return n - n_val, n_val


def build_manifest(root_dir: str | Path, val_fraction: float, seed: int) -> DatasetManifest:
    """Scan ``root_dir`` for decodable images and split them deterministically.

    Undecodable files go to the skip report; an image-free directory is an
    error.  The same root + seed always yields the same manifest.
    """
    if not 0.0 <= val_fraction <= 1.0:
        raise DataError(f"val_fraction must be in [0, 1], got {val_fraction}")
    root = Path(root_dir)
    if not root.is_dir():
        raise DataError(f"no images found: {root} is not a directory")

    candidates = sorted(
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )
    good: list[str] = []
    skipped: list[str] = []
    for rel in candidates:
        try:
            with Image.open(root / rel) as img:
                img.verify()
            good.append(rel)
        except (UnidentifiedImageError, OSError, SyntaxError):
            skipped.append(rel)
    if not good:
        raise DataError(f"no images found under {root}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(good))
    _, n_val = split_sizes(len(good), val_fraction)
    val_indices = set(int(i) for i in order[:n_val])
    entries = [(rel, "val" if i in val_indices else "train") for i, rel in enumerate(good)]
    return DatasetManifest(root=root, entries=entries, skipped=skipped)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write the line-oriented TSV form: ``relative/path<TAB>split``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rel, split in manifest.entries:
            fh.write(f"{rel}\t{split}\n")


def load_manifest(path: str | Path, root: str | Path) -> DatasetManifest:
    entries: list[tuple[str, str]] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or parts[1] not in SPLITS:
                    raise DataError(f"malformed manifest line {lineno} in {path}: {line!r}")
                entries.append((parts[0], parts[1]))
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if not entries:
        raise DataError(f"manifest {path} is empty")
    return DatasetManifest(root=Path(root), entries=entries)


def load_image(path: str | Path, resolution: int) -> torch.Tensor:
    """Load one RGB image as a [1, 3, resolution, resolution] tensor in [0, 1].

    Non-RGB sources are converted; resizing is bilinear.
    """
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if img.size != (resolution, resolution):
                img = img.resize((resolution, resolution), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))[None]


def load_batch(manifest: DatasetManifest, ids: list[str], resolution: int) -> torch.Tensor:
    return torch.cat([load_image(manifest.resolve(i), resolution) for i in ids], dim=0)


def center_mask(resolution: int, center_size: int) -> torch.Tensor:
    """Square hole of side ``center_size`` centered in the frame, [1,1,R,R]."""
    if center_size > resolution:
        raise DataError(f"center_size {center_size} exceeds resolution {resolution}")
    if center_size <= 0 or center_size % 2 != 0 or resolution % 2 != 0:
        raise DataError(
            f"center_size and resolution must be positive and even, got {center_size}/{resolution}"
        )
    mask = torch.zeros(1, 1, resolution, resolution)
    off = (resolution - center_size) // 2
    mask[:, :, off : off + center_size, off : off + center_size] = 1.0
    return mask


def _draw_strokes(rng: np.random.Generator, resolution: int, spec: MaskSpec) -> np.ndarray:
    canvas = Image.new("L", (resolution, resolution), 0)
    draw = ImageDraw.Draw(canvas)
    min_len = _SEGMENT_LENGTH_RANGE[0] * resolution
    max_len = _SEGMENT_LENGTH_RANGE[1] * resolution
    n_strokes = int(rng.integers(spec.stroke_count[0], spec.stroke_count[1] + 1))
    for _ in range(n_strokes):
        width = int(rng.integers(spec.stroke_width[0], spec.stroke_width[1] + 1))
        n_vertices = int(rng.integers(spec.vertex_count[0], spec.vertex_count[1] + 1))
        x = float(rng.uniform(0, resolution))
        y = float(rng.uniform(0, resolution))
        angle = float(rng.uniform(0, 2 * math.pi))
        points = [(x, y)]
        for _ in range(n_vertices - 1):
            angle += float(rng.uniform(-spec.max_turn_angle, spec.max_turn_angle))
            step = float(rng.uniform(min_len, max_len))
            x = min(max(x + step * math.cos(angle), 0.0), resolution - 1.0)
            y = min(max(y + step * math.sin(angle), 0.0), resolution - 1.0)
            points.append((x, y))
        for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
            draw.line([(x0, y0), (x1, y1)], fill=255, width=width)
        r = width / 2.0
        for px, py in points:  # rounded caps and joints
            draw.ellipse([px - r, py - r, px + r, py + r], fill=255)
    return (np.asarray(canvas) > 0).astype(np.float32)


def free_form_mask(spec: MaskSpec, resolution: int, max_tries: int = _MASK_MAX_TRIES) -> torch.Tensor:
    """Random polyline-stroke mask, resampled until coverage lands in range.

    Deterministic for a fixed ``spec.seed``.  Raises if the coverage range
    is unreachable within ``max_tries`` attempts.
    """
    if spec.mode != "free_form":
        raise DataError(f"free_form_mask requires mask mode 'free_form', got {spec.mode!r}")
    lo, hi = spec.coverage
    rng = np.random.default_rng(spec.seed)
    coverage = float("nan")
    for _ in range(max_tries):
        mask = _draw_strokes(rng, resolution, spec)
        coverage = float(mask.mean())
        if lo <= coverage <= hi:
            return torch.from_numpy(mask)[None, None]
    raise DataError(
        f"free-form mask coverage {coverage:.4f} outside [{lo}, {hi}] after {max_tries} attempts"
    )


def sample_mask(spec: MaskSpec, resolution: int, batch: int, mode: str, seeds: list[int]) -> torch.Tensor:
    """Batch of masks in the given mode; free-form masks take one seed per item."""
    if mode == "center":
        return center_mask(resolution, spec.center_size).expand(batch, -1, -1, -1).clone()
    if mode == "free_form":
        if len(seeds) != batch:
            raise DataError(f"need {batch} seeds for free-form masks, got {len(seeds)}")
        masks = [
            free_form_mask(replace(spec, mode="free_form", seed=s), resolution) for s in seeds
        ]
        return torch.cat(masks, dim=0)
    raise DataError(f"unknown mask mode {mode!r}")


def apply_mask(
    image: torch.Tensor,
    mask: torch.Tensor,
    fill: str = "zeros",
    mean_rgb: torch.Tensor | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Occlude ``image`` with ``mask`` and build the 4-channel generator input.

    Returns (masked_image, generator_input) where masked_image keeps
    unmasked pixels bit-exact and generator_input concatenates the mask as
    a fourth channel.
    """
    if image.ndim != 4 or image.shape[1] != 3:
        raise DataError(f"image must be [b, 3, h, w], got {tuple(image.shape)}")
    if mask.shape != (image.shape[0], 1, image.shape[2], image.shape[3]):
        raise DataError(
            f"mask shape {tuple(mask.shape)} does not match image {tuple(image.shape)}"
        )
    mask = mask.to(image.dtype)
    if fill == "zeros":
        masked = image * (1.0 - mask)
    elif fill == "dataset_mean":
        if mean_rgb is None:
            raise DataError("fill='dataset_mean' requires mean_rgb")
        fill_value = mean_rgb.to(image.dtype).reshape(1, 3, 1, 1)
        masked = image * (1.0 - mask) + fill_value * mask
    else:
        raise DataError(f"unknown fill policy {fill!r}")
    return masked, torch.cat([masked, mask], dim=1)


def dataset_mean_rgb(manifest: DatasetManifest, resolution: int, split: str = "train") -> torch.Tensor:
    """Per-channel mean over a split, for the dataset_mean fill policy."""
    ids = manifest.ids(split)
    if not ids:
        raise DataError(f"split {split!r} is empty")
    total = torch.zeros(3, dtype=torch.float64)
    for image_id in ids:
        total += load_image(manifest.resolve(image_id), resolution)[0].mean(dim=(1, 2)).double()
    return (total / len(ids)).float()


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """[1,3,h,w] or [3,h,w] tensor in [0,1] -> HWC uint8, round-half-even."""
    if image.ndim == 4:
        image = image[0]
    arr = image.detach().cpu().clamp(0.0, 1.0).numpy()
    return np.rint(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)


def save_png(image: torch.Tensor, path: str | Path) -> None:
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def _toy_image(rng: np.random.Generator, resolution: int) -> np.ndarray:
    """Smooth random RGB field: per-channel gradients plus soft color blobs."""
    coords = np.linspace(0.0, 1.0, resolution, dtype=np.float32)
    yy, xx = np.meshgrid(coords, coords, indexing="ij")
    img = np.empty((3, resolution, resolution), dtype=np.float32)
    for c in range(3):
        gx, gy = rng.uniform(-0.35, 0.35, size=2)
        img[c] = 0.5 + gx * (xx - 0.5) + gy * (yy - 0.5)
    for _ in range(int(rng.integers(2, 6))):
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        sigma = rng.uniform(0.08, 0.3)
        blob = np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma**2)).astype(np.float32)
        color = rng.uniform(-0.5, 0.5, size=3).astype(np.float32)
        img += color[:, None, None] * blob
    return np.clip(img, 0.0, 1.0)


def write_toy_dataset(root: str | Path, count: int, resolution: int = 64, seed: int = 0) -> list[str]:
    """Write ``count`` synthetic PNGs under ``root``; returns relative paths."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    names = []
    for i in range(count):
        arr = np.rint(_toy_image(rng, resolution) * 255.0).astype(np.uint8)
        name = f"img_{i:04d}.png"
        Image.fromarray(arr.transpose(1, 2, 0), mode="RGB").save(root / name, format="PNG")
        names.append(name)
    return names
