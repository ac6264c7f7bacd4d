"""FPN deblurring generator: top-down pathway, quarter-size fusion,
two-stage decoder, input skip connection, tanh-bounded residual output.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .backbones import build_backbone, to_depthwise_separable
from .errors import ShapeError
from .imaging import validate_image_tensor


@dataclass(frozen=True)
class GeneratorConfig:
    backbone_name: str = "mobilenet-v2"
    fpn_channels: int = 128
    decoder_channels: int = 64
    dsc: bool = False
    pretrained_backbone: bool = False

    def __post_init__(self):
        if self.fpn_channels < 1 or self.decoder_channels < 1:
            raise ValueError("channel widths must be >= 1")


def _resize_to(x, size):
    h, w = x.shape[-2:]
    if (h, w) == size:
        return x
    if h > size[0]:  # finer than the fusion grid: average down
        return F.avg_pool2d(x, kernel_size=(h // size[0], w // size[1]))
    return F.interpolate(x, size=size, mode="nearest")


class FPNGenerator(nn.Module):
    def __init__(self, backbone, fpn_channels=128, decoder_channels=64):
        super().__init__()
        self.backbone = backbone
        spec = backbone.spec
        self.strides = spec.stage_strides
        self.fpn_channels = fpn_channels
        self.laterals = nn.ModuleList(
            [nn.Conv2d(c, fpn_channels, 1) for c in spec.stage_channels]
        )
        # 3x3 smoothing after each lateral + upsampled-deeper merge (4 merges)
        self.merges = nn.ModuleList(
            [nn.Conv2d(fpn_channels, fpn_channels, 3, padding=1) for _ in range(4)]
        )
        self.fuse = nn.Sequential(
            nn.Conv2d(5 * fpn_channels, decoder_channels, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        self.decoder = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(decoder_channels, decoder_channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(decoder_channels, decoder_channels, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        self.out_conv = nn.Conv2d(decoder_channels, 3, 3, padding=1)

    @property
    def max_stride(self):
        return self.strides[-1]

    def fpn_top_down(self, levels):
        """Project the deepest map, then merge upward through the laterals."""
        out = [None] * 5
        out[4] = self.laterals[4](levels[4])
        for i in (3, 2, 1, 0):
            ratio = self.strides[i + 1] // self.strides[i]
            up = F.interpolate(out[i + 1], scale_factor=ratio, mode="nearest")
            out[i] = self.merges[i](self.laterals[i](levels[i]) + up)
        return out

    def fuse_and_decode(self, maps, image):
        quarter = (image.shape[-2] // 4, image.shape[-1] // 4)
        stacked = torch.cat([_resize_to(m, quarter) for m in maps], dim=1)
        residual = self.out_conv(self.decoder(self.fuse(stacked)))
        return torch.clamp(torch.tanh(residual) + image, -1.0, 1.0)

    def forward(self, image):
        h, w = image.shape[-2:]
        if h % self.max_stride or w % self.max_stride:
            raise ShapeError(
                f"input {h}x{w} not divisible by max stride {self.max_stride}"
            )
        levels = self.backbone(image)
        return self.fuse_and_decode(self.fpn_top_down(levels), image)


class ResnetGenerator(nn.Module):
    """Plain residual-block generator, the non-pyramid ablation baseline."""

    def __init__(self, width=16, n_blocks=3):
        super().__init__()
        self.max_stride = 4

        def resblock(c):
            return nn.Sequential(
                nn.Conv2d(c, c, 3, padding=1), nn.ReLU(inplace=True),
                nn.Conv2d(c, c, 3, padding=1),
            )

        self.head = nn.Sequential(nn.Conv2d(3, width, 7, padding=3), nn.ReLU(inplace=True))
        self.down = nn.Sequential(
            nn.Conv2d(width, 2 * width, 3, 2, 1), nn.ReLU(inplace=True),
            nn.Conv2d(2 * width, 4 * width, 3, 2, 1), nn.ReLU(inplace=True),
        )
        self.blocks = nn.ModuleList([resblock(4 * width) for _ in range(n_blocks)])
        self.up = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(4 * width, 2 * width, 3, padding=1), nn.ReLU(inplace=True),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(2 * width, width, 3, padding=1), nn.ReLU(inplace=True),
        )
        self.out_conv = nn.Conv2d(width, 3, 7, padding=3)

    def forward(self, image):
        h, w = image.shape[-2:]
        if h % self.max_stride or w % self.max_stride:
            raise ShapeError(f"input {h}x{w} not divisible by {self.max_stride}")
        x = self.down(self.head(image))
        for block in self.blocks:
            x = x + block(x)
        residual = self.out_conv(self.up(x))
        return torch.clamp(torch.tanh(residual) + image, -1.0, 1.0)


def build_generator(cfg: GeneratorConfig, asset_root=None) -> FPNGenerator:
    backbone = build_backbone(cfg.backbone_name, cfg.pretrained_backbone, asset_root)
    gen = FPNGenerator(backbone, cfg.fpn_channels, cfg.decoder_channels)
    if cfg.dsc:
        to_depthwise_separable(gen)
    return gen


def generate(g: nn.Module, blurred: torch.Tensor) -> torch.Tensor:
    """Deterministic inference pass; input must be normalized and divisible."""
    validate_image_tensor(blurred)
    was_training = g.training
    g.eval()
    try:
        with torch.no_grad():
            out = g(blurred)
    finally:
        g.train(was_training)
    return out
