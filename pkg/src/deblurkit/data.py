"""Training-data fabrication: frame-interpolated blur synthesis, dataset
subsampling, paired cropping/augmentation, and the mixed-degradation
synthesizer for the general-restoration track.

All randomness flows through explicit numpy generators; per-item streams
are derived from (seed, item index) so parallel and serial fabrication
agree byte for byte.
"""

import hashlib
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeError
from .imaging import ImagePair, denormalize, load_image, normalize, save_image

SOURCE_STRIDES = {"gopro": 2, "dvd": 2, "nfs": 10}


@dataclass
class FrameSequence:
    frames: list  # uint8 (H,W,3) arrays, uniform shape
    fps: float = 240.0

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ShapeError("a frame sequence needs at least one frame")
        shape = self.frames[0].shape
        if any(f.shape != shape for f in self.frames):
            raise ShapeError("frames must share one shape")

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class BlurSynthesisConfig:
    window: int = 9  # odd count of original frames averaged into one blur
    interp_factor: int = 16  # 240 fps -> 3840 fps default

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 1")
        if self.interp_factor < 1:
            raise ValueError("interp_factor must be >= 1")


@dataclass(frozen=True)
class DegradationConfig:
    gaussian_sigma: tuple = (0.0, 10.0)
    speckle_sigma: tuple = (0.0, 0.1)
    jpeg_quality: tuple = (30, 90)
    upscale_factor: tuple = (1.0, 2.0)
    seed: int = 0

    def __post_init__(self):
        for name in ("gaussian_sigma", "speckle_sigma", "jpeg_quality", "upscale_factor"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"{name} range is empty")
        if not (1 <= self.jpeg_quality[0] and self.jpeg_quality[1] <= 100):
            raise ValueError("jpeg_quality must lie in [1, 100]")


def crossfade(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Default interpolator: linear blend, rounded back to 8 bits."""
    mix = (1.0 - t) * a.astype(np.float64) + t * b.astype(np.float64)
    return np.clip(np.rint(mix), 0, 255).astype(np.uint8)


def interpolate_frames(seq: FrameSequence, factor: int, interpolator=crossfade) -> FrameSequence:
    """Insert factor-1 synthetic frames between neighbours.

    Output length is (n-1)*factor + 1 with originals preserved exactly at
    indices 0, factor, 2*factor, ...
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if factor == 1:
        return FrameSequence(list(seq.frames), seq.fps)
    if len(seq) < 2:
        raise ShapeError("interpolation needs at least 2 frames")
    out = []
    for a, b in zip(seq.frames[:-1], seq.frames[1:]):
        out.append(a)
        out.extend(interpolator(a, b, j / factor) for j in range(1, factor))
    out.append(seq.frames[-1])
    return FrameSequence(out, seq.fps * factor)


def synthesize_blur(seq: FrameSequence, cfg: BlurSynthesisConfig) -> ImagePair:
    """Average one interpolated time window into a blurred/sharp pair.

    Uses the first `window` original frames; the sharp reference is the
    window's center original frame. Both images are returned normalized.
    """
    if len(seq) < cfg.window:
        raise ShapeError(f"window {cfg.window} exceeds sequence length {len(seq)}")
    window_frames = FrameSequence(seq.frames[: cfg.window], seq.fps)
    if cfg.window > 1:
        window_frames = interpolate_frames(window_frames, cfg.interp_factor)
    stack = np.stack([f.astype(np.float64) for f in window_frames.frames])
    blurred = np.clip(np.rint(stack.mean(axis=0)), 0, 255).astype(np.uint8)
    sharp = seq.frames[cfg.window // 2]
    return ImagePair(blurred=normalize(blurred), sharp=normalize(sharp))


def iter_blur_windows(seq: FrameSequence, cfg: BlurSynthesisConfig, hop=None):
    """Yield (start_index, ImagePair) over non-overlapping windows by default."""
    hop = hop or cfg.window
    start = 0
    while start + cfg.window <= len(seq):
        sub = FrameSequence(seq.frames[start : start + cfg.window], seq.fps)
        yield start, synthesize_blur(sub, cfg)
        start += hop


def sample_training_set(sources) -> list:
    """Subsample tagged pair collections with the per-dataset frame strides.

    `sources` is an iterable of (tag, pairs); strides are 2 for gopro/dvd
    and 10 for nfs, keeping indices 0, stride, 2*stride, ...
    """
    out = []
    for tag, pairs in sources:
        if tag not in SOURCE_STRIDES:
            raise ValueError(f"unknown source tag {tag!r} (known: {sorted(SOURCE_STRIDES)})")
        out.extend(pairs[:: SOURCE_STRIDES[tag]])
    return out


def random_crop_pair(pair: ImagePair, size: int, rng: np.random.Generator) -> ImagePair:
    """Crop the same window out of both images of a pair."""
    h, w = pair.blurred.shape[-2:]
    if size > h or size > w:
        raise ShapeError(f"crop {size} exceeds image {h}x{w}")
    top = int(rng.integers(0, h - size + 1))
    left = int(rng.integers(0, w - size + 1))
    return ImagePair(
        blurred=pair.blurred[..., top : top + size, left : left + size],
        sharp=pair.sharp[..., top : top + size, left : left + size],
    )


def random_flip_pair(pair: ImagePair, rng: np.random.Generator) -> ImagePair:
    """Horizontal flip with probability 1/2 (the only augmentation)."""
    if rng.random() < 0.5:
        return ImagePair(blurred=pair.blurred.flip(-1), sharp=pair.sharp.flip(-1))
    return pair


def _jpeg_roundtrip(arr: np.ndarray, quality: int) -> np.ndarray:
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="JPEG", quality=quality)
    buf.seek(0)
    with Image.open(buf) as im:
        return np.asarray(im.convert("RGB"))


def degrade_for_restore(image: np.ndarray, cfg: DegradationConfig,
                        rng: np.random.Generator) -> np.ndarray:
    """Stack additive noise, speckle, JPEG and rescaling artifacts, in that order."""
    if image.ndim != 3 or image.shape[-1] != 3 or image.dtype != np.uint8:
        raise ShapeError("expected an 8-bit RGB (H,W,3) image")
    x = image.astype(np.float64)

    sigma = rng.uniform(*cfg.gaussian_sigma)
    if sigma > 0:
        x = x + rng.normal(0.0, sigma, size=x.shape)
    speckle = rng.uniform(*cfg.speckle_sigma)
    if speckle > 0:
        x = x * (1.0 + rng.normal(0.0, speckle, size=x.shape))
    x = np.clip(np.rint(x), 0, 255).astype(np.uint8)

    quality = int(rng.integers(cfg.jpeg_quality[0], cfg.jpeg_quality[1] + 1))
    x = _jpeg_roundtrip(x, quality)

    factor = rng.uniform(*cfg.upscale_factor)
    if factor > 1.0:
        h, w = x.shape[:2]
        small = (max(1, round(w / factor)), max(1, round(h / factor)))
        im = Image.fromarray(x, mode="RGB")
        x = np.asarray(im.resize(small, Image.BILINEAR).resize((w, h), Image.BILINEAR))
    return x


def item_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per item; identical for serial and parallel runs."""
    return np.random.default_rng([seed, index])


def config_digest(cfg) -> str:
    text = repr(cfg).encode()
    return hashlib.sha256(text).hexdigest()[:16]


def fabricate_pairs_dir(frame_dirs, out_dir, cfg: BlurSynthesisConfig, seed: int = 0):
    """Synthesize blur/sharp pairs from directories of numbered frames.

    Writes `blur/` and `sharp/` image trees plus a plain-text manifest row
    per pair: filename, source directory, window start, seed, config hash.
    Returns the number of pairs written.
    """
    out_dir = Path(out_dir)
    (out_dir / "blur").mkdir(parents=True, exist_ok=True)
    (out_dir / "sharp").mkdir(parents=True, exist_ok=True)
    digest = config_digest(cfg)
    rows = []
    count = 0
    for frame_dir in sorted(Path(d) for d in frame_dirs):
        files = sorted(
            p for p in frame_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if len(files) < cfg.window:
            continue
        seq = FrameSequence([load_image(p) for p in files])
        for start, pair in iter_blur_windows(seq, cfg):
            name = f"{frame_dir.name}_{start:06d}.png"
            save_image(out_dir / "blur" / name, denormalize(pair.blurred)[0])
            save_image(out_dir / "sharp" / name, denormalize(pair.sharp)[0])
            rows.append(f"{name}\t{frame_dir.name}\t{start}\t{seed}\t{digest}")
            count += 1
    manifest = "\n".join(["# file\tsource\twindow_start\tseed\tconfig"] + rows) + "\n"
    (out_dir / "pairs.manifest").write_text(manifest)
    return count


def load_pairs_dir(root, limit=None) -> list:
    """Load a `blur/` + `sharp/` tree into normalized ImagePairs."""
    root = Path(root)
    blur_dir, sharp_dir = root / "blur", root / "sharp"
    if not blur_dir.is_dir() or not sharp_dir.is_dir():
        raise ShapeError(f"{root} does not contain blur/ and sharp/ directories")
    names = sorted(
        set(p.name for p in blur_dir.iterdir()) & set(p.name for p in sharp_dir.iterdir())
    )
    if limit is not None:
        names = names[:limit]
    return [
        ImagePair(
            blurred=normalize(load_image(blur_dir / n)),
            sharp=normalize(load_image(sharp_dir / n)),
        )
        for n in names
    ]


def synthetic_scene(rng: np.random.Generator, size: int = 288) -> np.ndarray:
    """Procedural sharp test scene: smooth background plus hard-edged shapes."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size, 3), dtype=np.float64)
    for c in range(3):
        fx, fy = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        img[..., c] = 127.5 + 80.0 * np.sin(2 * np.pi * (fx * xx + fy * yy) / size + phase)
    for _ in range(12):
        cx, cy = rng.uniform(0, size, size=2)
        r = rng.uniform(size * 0.03, size * 0.15)
        color = rng.uniform(0, 255, size=3)
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r**2
        img[mask] = color
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def synthetic_shake_sequence(rng: np.random.Generator, n_frames: int = 9,
                             size: int = 288, max_shift: float = 6.0) -> FrameSequence:
    """Camera-shake sequence: one scene translated along a random line."""
    margin = int(np.ceil(max_shift)) + 1
    scene = synthetic_scene(rng, size + 2 * margin)
    dx, dy = rng.uniform(-max_shift, max_shift, size=2)
    frames = []
    for i in range(n_frames):
        t = i / max(n_frames - 1, 1) - 0.5
        ox = margin + dx * t
        oy = margin + dy * t
        x0, y0 = int(round(ox)), int(round(oy))
        frames.append(scene[y0 : y0 + size, x0 : x0 + size].copy())
    return FrameSequence(frames)
