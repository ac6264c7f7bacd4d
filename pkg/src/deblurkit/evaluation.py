"""Quality/efficiency measurement: dataset scoring, latency benchmarking,
trade-off table assembly and its SVG scatter emitter.
"""

import math
import platform
import statistics
import time
from dataclasses import dataclass

import torch

from .flops import count_flops
from .imaging import psnr, ssim

DEFAULT_WARMUP = 3
DEFAULT_RUNS = 30


@dataclass
class EvalReport:
    model_label: str
    psnr_db: float
    ssim: float
    resolution: tuple
    seconds_per_image: float = None
    gflops: float = None


def evaluate(model, pairs, label: str = "model") -> EvalReport:
    """Mean PSNR/SSIM of model(blurred) against sharp over the pair list."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate on an empty pair set")
    psnrs, ssims = [], []
    for pair in pairs:
        restored = _run(model, pair.blurred)
        psnrs.append(psnr(restored, pair.sharp))
        ssims.append(ssim(restored, pair.sharp))
    h, w = pairs[0].blurred.shape[-2:]
    n = len(pairs)
    return EvalReport(
        model_label=label,
        psnr_db=sum(psnrs) / n,
        ssim=sum(ssims) / n,
        resolution=(h, w),
    )


def _run(model, image):
    if isinstance(model, torch.nn.Module):
        from .generator import generate

        return generate(model, image)
    return model(image)


def hardware_descriptor() -> str:
    return (f"{platform.machine()} {platform.system()}, "
            f"{torch.get_num_threads()} torch threads")


def benchmark_latency(model, resolution, warmup: int = DEFAULT_WARMUP,
                      runs: int = DEFAULT_RUNS):
    """Median wall seconds per image at the given resolution.

    The median is robust to scheduler noise; the hardware descriptor is
    returned alongside so reports stay comparable.
    """
    if runs < 1:
        raise ValueError("need at least one timed run")
    h, w = resolution
    stride = getattr(model, "max_stride", 1)
    h = -(-h // stride) * stride
    w = -(-w // stride) * stride
    x = torch.zeros(1, 3, h, w)
    times = []
    with torch.no_grad():
        was_training = getattr(model, "training", False)
        if isinstance(model, torch.nn.Module):
            model.eval()
        for i in range(warmup + runs):
            t0 = time.perf_counter()
            model(x)
            t1 = time.perf_counter()
            if i >= warmup:
                times.append(t1 - t0)
        if isinstance(model, torch.nn.Module):
            model.train(was_training)
    return statistics.median(times), hardware_descriptor()


@dataclass(frozen=True)
class TradeoffRow:
    label: str
    ssim: float
    gflops: float


def tradeoff_table(models, pairs, resolution) -> list:
    """One (label, ssim, gflops) row per model, sorted by ascending cost."""
    if not models:
        raise ValueError("need at least one model")
    rows = []
    for label, model in models:
        report = evaluate(model, pairs, label=label)
        flops = count_flops(model, resolution)
        rows.append(TradeoffRow(label=label, ssim=report.ssim, gflops=flops.gflops))
    return sorted(rows, key=lambda r: r.gflops)


def format_tradeoff_table(rows) -> str:
    lines = ["label\tssim\tgflops"]
    lines += [f"{r.label}\t{r.ssim:.6f}\t{r.gflops:.6f}" for r in rows]
    return "\n".join(lines) + "\n"


def parse_tradeoff_table(text: str) -> list:
    rows = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("label\t"):
            continue
        label, s, g = line.split("\t")
        rows.append(TradeoffRow(label=label, ssim=float(s), gflops=float(g)))
    return rows


def render_tradeoff_svg(rows, width: int = 640, height: int = 440) -> str:
    """Scatter of SSIM against log-scaled GFLOPs as a standalone SVG."""
    if not rows:
        raise ValueError("nothing to plot")
    pad = 60
    xs = [math.log10(max(r.gflops, 1e-9)) for r in rows]
    ys = [r.ssim for r in rows]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(v):
        return pad + (v - x_lo) / x_span * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y_lo) / y_span * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 16}" text-anchor="middle" '
        'font-size="14">GFLOPs (log scale)</text>',
        f'<text x="18" y="{height // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {height // 2})">SSIM</text>',
    ]
    for row, x, y in zip(rows, xs, ys):
        cx, cy = sx(x), sy(y)
        parts.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="6" fill="crimson"/>')
        parts.append(
            f'<text x="{cx:.1f}" y="{cy - 10:.1f}" text-anchor="middle" '
            f'font-size="12">{row.label} ({row.gflops:.1f}G)</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
