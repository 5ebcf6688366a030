"""Two-stage inpainting generator and global discriminator.

Stage one (CoarseNet) fills the hole with a rough texture.  Stage two
(RefineNet) re-encodes the coarse result composited over the known pixels
and sharpens it; at each of its four decoder scales a fakeness attention
block predicts a single-channel map M in [0, 1] from the fused
decoder/skip feature F and emits (1 + M) * F.  The fakeness maps are
returned finest-first (j=0 at output resolution, j=3 at resolution/8).

All forwards are pure functions of (parameters, input) and never mutate
state, so concurrent read-only evaluation is safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .errors import ModelError


@dataclass
class GeneratorOutput:
    coarse: torch.Tensor  # [b, 3, res, res] in [0, 1]
    final: torch.Tensor  # [b, 3, res, res] in [0, 1]
    fakeness: list[torch.Tensor]  # four [b, 1, res/2^j, res/2^j] maps, j=0..3


class InstanceNorm(nn.Module):
    """Affine instance norm over (H, W).

    Unlike torch's InstanceNorm2d this accepts 1x1 feature maps (variance
    zero there, so the normalized signal collapses to the bias), which the
    refinement bottleneck hits at small resolutions.
    """

    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        mu = x.mean(dim=(2, 3), keepdim=True)
        var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
        xn = (x - mu) / torch.sqrt(var + self.eps)
        return xn * self.weight[None, :, None, None] + self.bias[None, :, None, None]


def _make_norm(kind: str, channels: int) -> nn.Module:
    return InstanceNorm(channels) if kind == "instance" else nn.Identity()


class ConvBlock(nn.Module):
    """3x3 conv -> norm -> leaky relu. Stride 2 downsamples; dilation widens."""

    def __init__(self, in_ch, out_ch, stride=1, dilation=1, norm="instance", slope=0.2):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=dilation, dilation=dilation)
        self.norm = _make_norm(norm, out_ch)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class ResidualBlock(nn.Module):
    def __init__(self, channels, norm="instance", slope=0.2):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = _make_norm(norm, channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = _make_norm(norm, channels)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(x + h)


class UpsampleBlock(nn.Module):
    """Nearest-neighbor x2 followed by a 3x3 conv (avoids checkerboarding)."""

    def __init__(self, in_ch, out_ch, norm="instance", slope=0.2):
        super().__init__()
        self.block = ConvBlock(in_ch, out_ch, norm=norm, slope=slope)

    def forward(self, x):
        return self.block(F.interpolate(x, scale_factor=2, mode="nearest"))


class FakenessAttentionBlock(nn.Module):
    """Fuse decoder and skip features, predict a fakeness map, reweight.

    F = 1x1(cat[t, s]); M = sigmoid(1x1(F)); out = F + M * F.
    ``override_map`` substitutes M directly (bypassing the sigmoid) so the
    identities out(M=0) == F and out(M=1) == 2F can be exercised exactly.
    """

    def __init__(self, t_channels: int, s_channels: int, out_channels: int):
        super().__init__()
        self.fuse = nn.Conv2d(t_channels + s_channels, out_channels, 1)
        self.predict = nn.Conv2d(out_channels, 1, 1)

    def forward(self, t, s, override_map=None):
        if t.shape[-2:] != s.shape[-2:] or t.shape[0] != s.shape[0]:
            raise ModelError(
                f"decoder/skip feature shapes disagree: {tuple(t.shape)} vs {tuple(s.shape)}"
            )
        fused = self.fuse(torch.cat([t, s], dim=1))
        fakeness = torch.sigmoid(self.predict(fused)) if override_map is None else override_map
        return fused + fakeness * fused, fakeness


class CoarseNet(nn.Module):
    """Rough-texture fill: strided residual encoder, dilated bottleneck,
    nearest+conv decoder, sigmoid output."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        norm, slope = cfg.norm, cfg.activation_slope
        widths = [cfg.width(i) for i in range(cfg.coarse_levels + 1)]
        self.stem = ConvBlock(4, widths[0], norm=norm, slope=slope)
        self.encoder = nn.ModuleList(
            nn.Sequential(
                ConvBlock(widths[i], widths[i + 1], stride=2, norm=norm, slope=slope),
                ResidualBlock(widths[i + 1], norm=norm, slope=slope),
            )
            for i in range(cfg.coarse_levels)
        )
        self.bottleneck = nn.Sequential(
            *(ConvBlock(widths[-1], widths[-1], dilation=d, norm=norm, slope=slope)
              for d in cfg.dilation_rates)
        )
        self.decoder = nn.ModuleList(
            nn.Sequential(
                UpsampleBlock(widths[i + 1], widths[i], norm=norm, slope=slope),
                ResidualBlock(widths[i], norm=norm, slope=slope),
            )
            for i in reversed(range(cfg.coarse_levels))
        )
        self.out = nn.Conv2d(widths[0], 3, 3, padding=1)

    def forward(self, x):
        h = self.stem(x)
        for enc in self.encoder:
            h = enc(h)
        h = self.bottleneck(h)
        for dec in self.decoder:
            h = dec(h)
        return torch.sigmoid(self.out(h))


class RefineNet(nn.Module):
    """Second stage: 4-level skip encoder, dilated bottleneck, and a decoder
    with one fakeness attention block per scale."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        norm, slope = cfg.norm, cfg.activation_slope
        levels = cfg.dam_levels
        widths = [cfg.width(i) for i in range(levels + 1)]
        self.stem = ConvBlock(4, widths[0], norm=norm, slope=slope)
        self.encoder = nn.ModuleList(
            nn.Sequential(
                ConvBlock(widths[i], widths[i + 1], stride=2, norm=norm, slope=slope),
                ResidualBlock(widths[i + 1], norm=norm, slope=slope),
            )
            for i in range(levels)
        )
        self.bottleneck = nn.Sequential(
            *(ConvBlock(widths[-1], widths[-1], dilation=d, norm=norm, slope=slope)
              for d in cfg.dilation_rates)
        )
        # Decoder runs coarsest -> finest; attention block i sits at side res/2^i.
        self.upsamples = nn.ModuleList(
            UpsampleBlock(widths[i + 1], widths[i], norm=norm, slope=slope)
            for i in reversed(range(levels))
        )
        self.attention = nn.ModuleList(
            FakenessAttentionBlock(widths[i], widths[i], widths[i])
            for i in reversed(range(levels))
        )
        self.out = nn.Conv2d(widths[0], 3, 3, padding=1)

    def forward(self, x):
        skips = [self.stem(x)]
        for enc in self.encoder:
            skips.append(enc(skips[-1]))
        h = self.bottleneck(skips.pop())
        fakeness_coarse_first = []
        for up, attn in zip(self.upsamples, self.attention):
            h = up(h)
            h, m = attn(h, skips.pop())
            fakeness_coarse_first.append(m)
        final = torch.sigmoid(self.out(h))
        return final, list(reversed(fakeness_coarse_first))


class Generator(nn.Module):
    """Coarse fill, composite over known pixels, then refine.

    Input is [b, 4, res, res]: the masked image plus the occlusion mask as
    a fourth channel (1 = missing).  The refinement stage sees the coarse
    output only inside the hole, so known pixels stay authoritative.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.coarse_net = CoarseNet(cfg)
        self.refine_net = RefineNet(cfg)

    def forward(self, gen_input: torch.Tensor) -> GeneratorOutput:
        res = self.cfg.resolution
        if gen_input.ndim != 4 or gen_input.shape[1] != 4 or gen_input.shape[-2:] != (res, res):
            raise ModelError(
                f"generator input must be [b, 4, {res}, {res}], got {tuple(gen_input.shape)}"
            )
        masked, mask = gen_input[:, :3], gen_input[:, 3:4]
        coarse = self.coarse_net(gen_input)
        composite = coarse * mask + masked * (1.0 - mask)
        final, fakeness = self.refine_net(torch.cat([composite, mask], dim=1))
        return GeneratorOutput(coarse=coarse, final=final, fakeness=fakeness)


class Discriminator(nn.Module):
    """Global real/fake classifier: strided 5x5 convs down to 4x4, flatten,
    one sigmoid unit; scores one probability per batch item."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        res = cfg.resolution
        n_down = max(1, int(math.log2(res)) - 2)
        layers: list[nn.Module] = []
        in_ch = 3
        width = cfg.disc_base_width
        for _ in range(n_down):
            layers.append(nn.Conv2d(in_ch, width, 5, stride=2, padding=2))
            layers.append(nn.LeakyReLU(cfg.activation_slope))
            in_ch = width
            width = min(width * 2, cfg.disc_max_width)
        self.features = nn.Sequential(*layers)
        side = res // 2**n_down
        self.head = nn.Linear(in_ch * side * side, 1)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        res = self.cfg.resolution
        if image.ndim != 4 or image.shape[1] != 3 or image.shape[-2:] != (res, res):
            raise ModelError(
                f"discriminator input must be [b, 3, {res}, {res}], got {tuple(image.shape)}"
            )
        h = self.features(image)
        return torch.sigmoid(self.head(h.flatten(1))).squeeze(1)


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic fan-in-scaled normal init, zero biases."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                fan_in = m.weight[0].numel()
                m.weight.normal_(0.0, fan_in**-0.5, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, InstanceNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()


def build_generator(cfg: ModelConfig, seed: int) -> Generator:
    cfg.validate()
    net = Generator(cfg)
    init_parameters(net, seed)
    return net


def build_discriminator(cfg: ModelConfig, seed: int) -> Discriminator:
    cfg.validate()
    net = Discriminator(cfg)
    init_parameters(net, seed)
    return net


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
