"""Analytic FLOPs counting over a module graph.

Shapes are traced with a single forward pass on the meta device (no real
arithmetic), so counts are exact integers and cheap even for heavy
networks. Convention, declared in every report:

  * convolution / linear: 2 FLOPs per multiply-accumulate, biases excluded
  * normalization (inference): 2 FLOPs per element
  * activations: 1 FLOP per element
  * pooling: 1 FLOP per kernel element and output position
  * nearest-neighbour upsampling and identity: 0
  * functional elementwise glue (residual adds, tanh on the output) is
    excluded; it is orders of magnitude below any convolution.
"""

import copy
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import UnsupportedLayerError

CONVENTION = "2 FLOPs per MAC, biases and functional elementwise ops excluded"


@dataclass(frozen=True)
class LayerCount:
    name: str
    kind: str
    flops: int
    out_shape: tuple


@dataclass(frozen=True)
class FlopsReport:
    total: int
    layers: tuple
    resolution: tuple  # (H, W) actually traced
    convention: str = CONVENTION

    @property
    def gflops(self) -> float:
        return self.total / 1e9


_ZERO_COST = (
    nn.Identity,
    nn.Upsample,  # nearest copies only
    nn.Dropout,
    nn.Flatten,
)
_ACTIVATIONS = (nn.ReLU, nn.ReLU6, nn.LeakyReLU, nn.Tanh, nn.Sigmoid, nn.SiLU, nn.GELU)
_NORMS = (nn.BatchNorm2d, nn.InstanceNorm2d, nn.GroupNorm, nn.LayerNorm)


def _layer_flops(module, inputs, output) -> int:
    numel_out = int(output.numel())
    if isinstance(module, nn.Conv2d):
        kh, kw = module.kernel_size
        macs_per_out = kh * kw * module.in_channels // module.groups
        return 2 * numel_out * macs_per_out
    if isinstance(module, nn.Linear):
        return 2 * numel_out * module.in_features
    if isinstance(module, _NORMS):
        return 2 * numel_out
    if isinstance(module, _ACTIVATIONS):
        return numel_out
    if isinstance(module, (nn.MaxPool2d, nn.AvgPool2d)):
        k = module.kernel_size
        kh, kw = (k, k) if isinstance(k, int) else k
        return numel_out * kh * kw
    if isinstance(module, nn.AdaptiveAvgPool2d):
        return int(inputs[0].numel())  # one read per pooled element
    if isinstance(module, _ZERO_COST):
        return 0
    raise UnsupportedLayerError(
        f"no cost model for layer type {type(module).__name__}"
    )


def count_flops(model: nn.Module, resolution, batch: int = 1,
                channels: int = 3) -> FlopsReport:
    """Exact per-layer FLOPs of one forward pass at the given (H, W).

    Models exposing `max_stride` get their input padded up to the next
    divisible size; the traced resolution is recorded in the report.
    """
    h, w = resolution
    stride = getattr(model, "max_stride", 1)
    h = -(-h // stride) * stride
    w = -(-w // stride) * stride

    shadow = copy.deepcopy(model).to("meta").eval()
    counts = []

    def hook(name):
        def fn(module, inputs, output):
            out = output[0] if isinstance(output, tuple) else output
            counts.append(
                LayerCount(name, type(module).__name__,
                           _layer_flops(module, inputs, out), tuple(out.shape))
            )
        return fn

    handles = []
    for name, module in shadow.named_modules():
        if len(list(module.children())) == 0 and name:
            handles.append(module.register_forward_hook(hook(name)))
    try:
        shadow(torch.empty(batch, channels, h, w, device="meta"))
    finally:
        for handle in handles:
            handle.remove()
    total = sum(c.flops for c in counts)
    return FlopsReport(total=total, layers=tuple(counts), resolution=(h, w))


def format_report(report: FlopsReport, label: str = "") -> str:
    lines = []
    if label:
        lines.append(f"# model: {label}")
    lines.append(f"# traced at {report.resolution[0]}x{report.resolution[1]}; "
                 f"convention: {report.convention}")
    lines.append("layer\tkind\tflops\tout_shape")
    for c in report.layers:
        lines.append(f"{c.name}\t{c.kind}\t{c.flops}\t{'x'.join(map(str, c.out_shape))}")
    lines.append(f"TOTAL\t\t{report.total}\t({report.gflops:.4f} GFLOPs)")
    return "\n".join(lines) + "\n"
