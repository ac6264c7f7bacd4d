"""Pluggable feature-extractor backbones with staged multi-scale outputs.

Every backbone exposes five feature maps at the native stage strides
[2, 4, 8, 16, 32] so the pyramid head runs unmodified with any registry
entry. `to_depthwise_separable` rewrites all full convolutions of a
network into depthwise + pointwise pairs.
"""

import dataclasses
import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .assets import resolve_asset
from .errors import RegistryError, ShapeError
from .imaging import validate_image_tensor


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    stage_channels: tuple
    stage_strides: tuple
    pretrained: bool = False

    def __post_init__(self):
        if len(self.stage_channels) != 5 or len(self.stage_strides) != 5:
            raise ShapeError("backbones expose exactly 5 stages")
        if any(c < 1 for c in self.stage_channels):
            raise ShapeError("stage channels must be >= 1")
        for s in self.stage_strides:
            if s < 1 or (s & (s - 1)) != 0:
                raise ShapeError(f"stride {s} is not a power of 2")
        if list(self.stage_strides) != sorted(set(self.stage_strides)):
            raise ShapeError("strides must be strictly increasing")

    @property
    def max_stride(self) -> int:
        return self.stage_strides[-1]


@dataclass
class FeaturePyramid:
    """Backbone feature maps ordered shallow to deep (increasing stride)."""

    levels: list
    strides: tuple


def conv_bn_act(c_in, c_out, k=3, stride=1, act=nn.ReLU):
    pad = k // 2
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, k, stride, pad, bias=False),
        nn.BatchNorm2d(c_out),
        act(inplace=True),
    )


class TinyBackbone(nn.Module):
    """Norm-free 5-stage toy extractor for desk-scale tests and CI."""

    def __init__(self):
        super().__init__()
        channels = (4, 8, 16, 32, 32)
        self.spec = BackboneSpec("tiny-test", channels, (2, 4, 8, 16, 32))
        stages = []
        c_prev = 3
        for c in channels:
            stages.append(
                nn.Sequential(nn.Conv2d(c_prev, c, 3, 2, 1), nn.ReLU(inplace=True))
            )
            c_prev = c
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class InvertedResidual(nn.Module):
    def __init__(self, c_in, c_out, stride, expand):
        super().__init__()
        hidden = c_in * expand
        self.use_skip = stride == 1 and c_in == c_out
        layers = []
        if expand != 1:
            layers.append(conv_bn_act(c_in, hidden, k=1, act=nn.ReLU6))
        layers += [
            nn.Sequential(
                nn.Conv2d(hidden, hidden, 3, stride, 1, groups=hidden, bias=False),
                nn.BatchNorm2d(hidden),
                nn.ReLU6(inplace=True),
            ),
            nn.Sequential(
                nn.Conv2d(hidden, c_out, 1, bias=False),
                nn.BatchNorm2d(c_out),
            ),
        ]
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        out = self.block(x)
        return x + out if self.use_skip else out


class MobileNetV2Backbone(nn.Module):
    """Standard MobileNet V2 trunk tapped at its five stage boundaries."""

    def __init__(self):
        super().__init__()
        self.spec = BackboneSpec("mobilenet-v2", (16, 24, 32, 96, 320), (2, 4, 8, 16, 32))

        def group(c_in, c_out, n, stride, expand=6):
            blocks = [InvertedResidual(c_in, c_out, stride, expand)]
            blocks += [InvertedResidual(c_out, c_out, 1, expand) for _ in range(n - 1)]
            return blocks

        self.stages = nn.ModuleList(
            [
                nn.Sequential(conv_bn_act(3, 32, stride=2, act=nn.ReLU6),
                              InvertedResidual(32, 16, 1, expand=1)),
                nn.Sequential(*group(16, 24, 2, 2)),
                nn.Sequential(*group(24, 32, 3, 2)),
                nn.Sequential(*group(32, 64, 4, 2), *group(64, 96, 3, 1)),
                nn.Sequential(*group(96, 160, 3, 2), *group(160, 320, 1, 1)),
            ]
        )

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class Mixed5b(nn.Module):
    def __init__(self):
        super().__init__()
        self.b0 = conv_bn_act(192, 96, k=1)
        self.b1 = nn.Sequential(conv_bn_act(192, 48, k=1), conv_bn_act(48, 64, k=5))
        self.b2 = nn.Sequential(conv_bn_act(192, 64, k=1), conv_bn_act(64, 96),
                                conv_bn_act(96, 96))
        self.b3 = nn.Sequential(nn.AvgPool2d(3, 1, 1, count_include_pad=False),
                                conv_bn_act(192, 64, k=1))

    def forward(self, x):
        return torch.cat([self.b0(x), self.b1(x), self.b2(x), self.b3(x)], 1)


class ResidualInceptionBlock(nn.Module):
    """Residual multi-branch block: concat branches, 1x1 back up, scaled add."""

    def __init__(self, channels, branches, mix_in, scale, relu_after=True):
        super().__init__()
        self.branches = nn.ModuleList(branches)
        self.up = nn.Conv2d(mix_in, channels, 1)
        self.scale = scale
        self.act = nn.ReLU(inplace=True) if relu_after else nn.Identity()

    def forward(self, x):
        mixed = torch.cat([b(x) for b in self.branches], 1)
        return self.act(x + self.scale * self.up(mixed))


def block35():
    branches = [
        conv_bn_act(320, 32, k=1),
        nn.Sequential(conv_bn_act(320, 32, k=1), conv_bn_act(32, 32)),
        nn.Sequential(conv_bn_act(320, 32, k=1), conv_bn_act(32, 48), conv_bn_act(48, 64)),
    ]
    return ResidualInceptionBlock(320, branches, 128, scale=0.17)


def block17():
    branches = [
        conv_bn_act(1088, 192, k=1),
        nn.Sequential(
            conv_bn_act(1088, 128, k=1),
            nn.Sequential(nn.Conv2d(128, 160, (1, 7), padding=(0, 3), bias=False),
                          nn.BatchNorm2d(160), nn.ReLU(inplace=True)),
            nn.Sequential(nn.Conv2d(160, 192, (7, 1), padding=(3, 0), bias=False),
                          nn.BatchNorm2d(192), nn.ReLU(inplace=True)),
        ),
    ]
    return ResidualInceptionBlock(1088, branches, 384, scale=0.10)


def block8():
    branches = [
        conv_bn_act(2080, 192, k=1),
        nn.Sequential(
            conv_bn_act(2080, 192, k=1),
            nn.Sequential(nn.Conv2d(192, 224, (1, 3), padding=(0, 1), bias=False),
                          nn.BatchNorm2d(224), nn.ReLU(inplace=True)),
            nn.Sequential(nn.Conv2d(224, 256, (3, 1), padding=(1, 0), bias=False),
                          nn.BatchNorm2d(256), nn.ReLU(inplace=True)),
        ),
    ]
    return ResidualInceptionBlock(2080, branches, 448, scale=0.20)


class Mixed6a(nn.Module):
    def __init__(self):
        super().__init__()
        self.pool = nn.MaxPool2d(3, 2, 1)
        self.b1 = conv_bn_act(320, 384, stride=2)
        self.b2 = nn.Sequential(conv_bn_act(320, 256, k=1), conv_bn_act(256, 256),
                                conv_bn_act(256, 384, stride=2))

    def forward(self, x):
        return torch.cat([self.pool(x), self.b1(x), self.b2(x)], 1)


class Mixed7a(nn.Module):
    def __init__(self):
        super().__init__()
        self.pool = nn.MaxPool2d(3, 2, 1)
        self.b1 = nn.Sequential(conv_bn_act(1088, 256, k=1), conv_bn_act(256, 384, stride=2))
        self.b2 = nn.Sequential(conv_bn_act(1088, 256, k=1), conv_bn_act(256, 288, stride=2))
        self.b3 = nn.Sequential(conv_bn_act(1088, 256, k=1), conv_bn_act(256, 288),
                                conv_bn_act(288, 320, stride=2))

    def forward(self, x):
        return torch.cat([self.pool(x), self.b1(x), self.b2(x), self.b3(x)], 1)


class InceptionResNetV2Backbone(nn.Module):
    """Inception-ResNet-v2 trunk (padded stem) tapped at five scales."""

    def __init__(self):
        super().__init__()
        self.spec = BackboneSpec(
            "inception-resnet-v2", (64, 192, 320, 1088, 1536), (2, 4, 8, 16, 32)
        )
        self.stages = nn.ModuleList(
            [
                nn.Sequential(conv_bn_act(3, 32, stride=2), conv_bn_act(32, 32),
                              conv_bn_act(32, 64)),
                nn.Sequential(nn.MaxPool2d(3, 2, 1), conv_bn_act(64, 80, k=1),
                              conv_bn_act(80, 192)),
                nn.Sequential(nn.MaxPool2d(3, 2, 1), Mixed5b(),
                              *[block35() for _ in range(10)]),
                nn.Sequential(Mixed6a(), *[block17() for _ in range(20)]),
                nn.Sequential(Mixed7a(), *[block8() for _ in range(10)],
                              conv_bn_act(2080, 1536, k=1)),
            ]
        )

    def forward(self, x):
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def _separate_conv(conv: nn.Conv2d) -> nn.Sequential:
    depthwise = nn.Conv2d(
        conv.in_channels, conv.in_channels, conv.kernel_size, conv.stride,
        conv.padding, conv.dilation, groups=conv.in_channels, bias=False,
    )
    pointwise = nn.Conv2d(conv.in_channels, conv.out_channels, 1,
                          bias=conv.bias is not None)
    return nn.Sequential(depthwise, pointwise)


def to_depthwise_separable(network: nn.Module) -> nn.Module:
    """Replace every full k>1 convolution with a depthwise + pointwise pair.

    Pointwise (1x1) and already-grouped convolutions are left untouched.
    Output shapes are preserved; weights of replaced layers are fresh.
    """
    for name, child in network.named_children():
        if isinstance(child, nn.Conv2d):
            if max(child.kernel_size) > 1 and child.groups == 1:
                setattr(network, name, _separate_conv(child))
        else:
            to_depthwise_separable(child)
    return network


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def _build_mobilenet_dsc():
    net = to_depthwise_separable(MobileNetV2Backbone())
    net.spec = dataclasses.replace(net.spec, name="mobilenet-dsc")
    return net


REGISTRY = {
    "tiny-test": TinyBackbone,
    "mobilenet-v2": MobileNetV2Backbone,
    "mobilenet-dsc": _build_mobilenet_dsc,
    "inception-resnet-v2": InceptionResNetV2Backbone,
}


def build_backbone(name: str, pretrained: bool = False, asset_root=None) -> nn.Module:
    """Instantiate a registry backbone, optionally loading verified weights."""
    if name not in REGISTRY:
        known = ", ".join(sorted(REGISTRY))
        raise RegistryError(f"unknown backbone {name!r} (known: {known})")
    backbone = REGISTRY[name]()
    if pretrained:
        path = resolve_asset(name, asset_root)
        state = torch.load(path, map_location="cpu", weights_only=True)
        backbone.load_state_dict(state)
        backbone.spec = dataclasses.replace(backbone.spec, pretrained=True)
    return backbone


def extract_features(backbone: nn.Module, image: torch.Tensor) -> FeaturePyramid:
    """Run the backbone and validate the pyramid shape law."""
    validate_image_tensor(image)
    spec = backbone.spec
    h, w = image.shape[-2:]
    if h % spec.max_stride or w % spec.max_stride:
        raise ShapeError(
            f"input {h}x{w} not divisible by max stride {spec.max_stride}"
        )
    levels = backbone(image)
    for lvl, stride, channels in zip(levels, spec.stage_strides, spec.stage_channels):
        expect = (image.shape[0], channels, math.ceil(h / stride), math.ceil(w / stride))
        if tuple(lvl.shape) != expect:
            raise ShapeError(f"stage at stride {stride}: {tuple(lvl.shape)} != {expect}")
    return FeaturePyramid(levels=list(levels), strides=spec.stage_strides)
