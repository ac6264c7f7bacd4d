"""Double-scale critic: a 70x70 patch branch and an independent global
branch, both emitting raw (unsaturated) least-squares scores.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ShapeError
from .imaging import validate_image_tensor

MIN_INPUT = 70  # local-branch receptive field


@dataclass(frozen=True)
class DiscriminatorOutput:
    global_scores: torch.Tensor  # (B,), one scalar per image
    local_scores: torch.Tensor  # (B, 1, H', W') patch score map


@dataclass(frozen=True)
class DiscriminatorConfig:
    base_channels: int = 64
    local_layers: int = 5
    global_extra_stages: int = 2

    def __post_init__(self):
        if self.local_layers != 5:
            # only the canonical 5-layer stack has the 70-pixel field
            raise ValueError("local branch is fixed at 5 layers (70x70 field)")


def _critic_conv(c_in, c_out, stride, norm=True):
    layers = [nn.Conv2d(c_in, c_out, 4, stride, 1)]
    if norm:
        layers.append(nn.BatchNorm2d(c_out))
    layers.append(nn.LeakyReLU(0.2, inplace=True))
    return nn.Sequential(*layers)


class PatchCritic(nn.Module):
    """Canonical 70x70 patch critic: 3 stride-2 and 2 stride-1 conv layers.

    Score locality (each score depends only on its 70x70 field) holds in
    eval mode, where normalization uses fixed running statistics.
    """

    def __init__(self, base=64):
        super().__init__()
        c = base
        self.net = nn.Sequential(
            _critic_conv(3, c, 2, norm=False),
            _critic_conv(c, 2 * c, 2),
            _critic_conv(2 * c, 4 * c, 2),
            _critic_conv(4 * c, 8 * c, 1),
            nn.Conv2d(8 * c, 1, 4, 1, 1),
        )

    def forward(self, x):
        return self.net(x)


class GlobalCritic(nn.Module):
    """Full-image branch: deeper downsampling trunk averaged to one score."""

    def __init__(self, base=64, extra_stages=2):
        super().__init__()
        c = base
        stages = [
            _critic_conv(3, c, 2, norm=False),
            _critic_conv(c, 2 * c, 2),
            _critic_conv(2 * c, 4 * c, 2),
            _critic_conv(4 * c, 8 * c, 2),
        ]
        stages += [_critic_conv(8 * c, 8 * c, 2) for _ in range(extra_stages)]
        self.trunk = nn.Sequential(*stages)
        self.score = nn.Conv2d(8 * c, 1, 1)
        self.pool = nn.AdaptiveAvgPool2d(1)

    def forward(self, x):
        return self.pool(self.score(self.trunk(x))).flatten()


class DoubleScaleDiscriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig()):
        super().__init__()
        self.cfg = cfg
        self.local_branch = PatchCritic(cfg.base_channels)
        self.global_branch = GlobalCritic(cfg.base_channels, cfg.global_extra_stages)

    def forward(self, image):
        return DiscriminatorOutput(
            global_scores=self.global_branch(image),
            local_scores=self.local_branch(image),
        )


def discriminate(d: DoubleScaleDiscriminator, image: torch.Tensor) -> DiscriminatorOutput:
    validate_image_tensor(image)
    h, w = image.shape[-2:]
    if h < MIN_INPUT or w < MIN_INPUT:
        raise ShapeError(f"input {h}x{w} smaller than {MIN_INPUT}x{MIN_INPUT}")
    return d(image)
