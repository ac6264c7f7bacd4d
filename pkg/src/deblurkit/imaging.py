"""Image representation, normalization and full-reference quality metrics.

Model-facing images are float32 torch tensors laid out batch x channel x
height x width with intensities in [-1, 1]. Metric math runs on the
denormalized 0..255 scale (the common benchmark convention) with 64-bit
reductions.
"""

from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image
from scipy.signal import convolve2d

from .errors import ShapeError

PSNR_CAP_DB = 100.0  # finite sentinel for identical images (zero MSE)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class MetricValue:
    """Paired full-reference quality scores for one comparison."""

    psnr_db: float
    ssim: float


@dataclass(frozen=True)
class ImagePair:
    """A supervision pair: the degraded input and its sharp reference."""

    blurred: torch.Tensor
    sharp: torch.Tensor

    def __post_init__(self):
        if self.blurred.shape != self.sharp.shape:
            raise ShapeError(
                f"pair shapes differ: {tuple(self.blurred.shape)} vs {tuple(self.sharp.shape)}"
            )


def validate_image_tensor(t: torch.Tensor, channels: int = 3) -> None:
    """Check the batch x channel x height x width contract, raising ShapeError."""
    if t.dim() != 4:
        raise ShapeError(f"expected 4-D tensor (B,C,H,W), got {t.dim()}-D")
    if channels is not None and t.shape[1] != channels:
        raise ShapeError(f"expected {channels} channels, got {t.shape[1]}")
    if t.shape[2] < 1 or t.shape[3] < 1:
        raise ShapeError(f"degenerate spatial size {tuple(t.shape[2:])}")
    if not torch.isfinite(t).all():
        raise ShapeError("image tensor contains non-finite values")


def normalize(raw: np.ndarray) -> torch.Tensor:
    """Map an 8-bit RGB image (H,W,3) or batch (B,H,W,3) to [-1, 1].

    out = raw / 127.5 - 1, as float32 in (B,3,H,W) layout.
    """
    arr = np.asarray(raw)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ShapeError(f"expected (H,W,3) or (B,H,W,3) input, got {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise ShapeError("raw intensities must lie in [0, 255]")
    out = arr.astype(np.float32) / 127.5 - 1.0
    return torch.from_numpy(out).permute(0, 3, 1, 2).contiguous()


def denormalize(t: torch.Tensor) -> np.ndarray:
    """Map a [-1, 1] tensor (B,C,H,W) back to 8-bit (B,H,W,C).

    round((t + 1) * 127.5) clamped to [0, 255]; exact inverse of normalize
    on all 256 integer levels.
    """
    if t.dim() == 3:
        t = t.unsqueeze(0)
    arr = t.detach().to(torch.float64).cpu().numpy()
    arr = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255)
    return arr.astype(np.uint8).transpose(0, 2, 3, 1)


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB on the 0..255 scale (peak 255).

    Identical inputs return the documented cap instead of infinity.
    """
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    x = denormalize(a).astype(np.float64)
    y = denormalize(b).astype(np.float64)
    mse = np.mean((x - y) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(255.0**2 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    c1 = (SSIM_K1 * 255.0) ** 2
    c2 = (SSIM_K2 * 255.0) ** 2
    mu_x = convolve2d(x, window, mode="valid")
    mu_y = convolve2d(y, window, mode="valid")
    sxx = convolve2d(x * x, window, mode="valid") - mu_x**2
    syy = convolve2d(y * y, window, mode="valid") - mu_y**2
    sxy = convolve2d(x * y, window, mode="valid") - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean structural similarity on the 0..255 scale.

    Gaussian 11x11 window (sigma 1.5), valid-window averaging, channels
    scored independently and averaged.
    """
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.shape[-2] < SSIM_WINDOW or a.shape[-1] < SSIM_WINDOW:
        raise ShapeError(
            f"image {tuple(a.shape[-2:])} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    x = denormalize(a).astype(np.float64)
    y = denormalize(b).astype(np.float64)
    window = _gaussian_window()
    vals = [
        _ssim_channel(x[n, :, :, c], y[n, :, :, c], window)
        for n in range(x.shape[0])
        for c in range(x.shape[-1])
    ]
    return float(np.mean(vals))


def metrics(a: torch.Tensor, b: torch.Tensor) -> MetricValue:
    return MetricValue(psnr_db=psnr(a, b), ssim=ssim(a, b))


def load_image(path) -> np.ndarray:
    """Read a PNG/JPEG file as 8-bit RGB (H,W,3)."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_image(path, arr: np.ndarray) -> None:
    """Write an 8-bit RGB (H,W,3) array as PNG or JPEG (by extension)."""
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ShapeError(f"expected (H,W,3) array, got {arr.shape}")
    Image.fromarray(arr.astype(np.uint8), mode="RGB").save(path)
