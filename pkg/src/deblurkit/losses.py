"""Training objectives: least-squares and relativistic-average adversarial
losses, the gradient-penalty critic baseline, pixel MSE, perceptual
feature distance, and the weighted hybrid generator loss.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from .assets import resolve_asset
from .errors import ShapeError


@dataclass(frozen=True)
class LossWeights:
    w_pixel: float = 0.5
    w_perceptual: float = 0.006
    w_adv: float = 0.01

    def __post_init__(self):
        if min(self.w_pixel, self.w_perceptual, self.w_adv) < 0:
            raise ValueError("loss weights must be nonnegative")


def _flat(scores: torch.Tensor, name: str) -> torch.Tensor:
    s = scores.reshape(-1)
    if s.numel() == 0:
        raise ValueError(f"empty {name} score batch")
    return s


def lsgan_d_loss(d_real, d_fake):
    """0.5 * mean((d_real - 1)^2) + 0.5 * mean(d_fake^2)."""
    r, f = _flat(d_real, "real"), _flat(d_fake, "fake")
    return 0.5 * ((r - 1.0) ** 2).mean() + 0.5 * (f**2).mean()


def lsgan_g_loss(d_fake):
    """0.5 * mean((d_fake - 1)^2)."""
    f = _flat(d_fake, "fake")
    return 0.5 * ((f - 1.0) ** 2).mean()


def ragan_ls_d_loss(d_real, d_fake):
    """Relativistic-average least-squares critic loss.

    mean((d_real - mean(d_fake) - 1)^2) + mean((d_fake - mean(d_real) + 1)^2)
    """
    r, f = _flat(d_real, "real"), _flat(d_fake, "fake")
    return ((r - f.mean() - 1.0) ** 2).mean() + ((f - r.mean() + 1.0) ** 2).mean()


def ragan_ls_g_loss(d_real, d_fake, form: str = "swapped"):
    """Generator side of the relativistic-average loss.

    The default "swapped" form exchanges the real/fake roles of the critic
    loss (bounded below); "negated" maximizes the critic objective directly.
    """
    r, f = _flat(d_real, "real"), _flat(d_fake, "fake")
    if form == "swapped":
        return ((f - r.mean() - 1.0) ** 2).mean() + ((r - f.mean() + 1.0) ** 2).mean()
    if form == "negated":
        return -ragan_ls_d_loss(d_real, d_fake)
    raise ValueError(f"unknown generator loss form {form!r}")


def wgan_gp_d_loss(d_real, d_fake, grad_norms, lam: float = 10.0):
    """Wasserstein critic loss with gradient penalty (ablation baseline)."""
    r, f = _flat(d_real, "real"), _flat(d_fake, "fake")
    n = _flat(grad_norms, "gradient-norm")
    return f.mean() - r.mean() + lam * ((n - 1.0) ** 2).mean()


def gradient_penalty_norms(critic, real, fake):
    """Gradient norms of critic scores at random real/fake interpolates."""
    eps = torch.rand(real.shape[0], 1, 1, 1, dtype=real.dtype, device=real.device)
    mix = (eps * real + (1.0 - eps) * fake.detach()).requires_grad_(True)
    scores = critic(mix)
    grad = torch.autograd.grad(scores.sum(), mix, create_graph=True)[0]
    return grad.reshape(real.shape[0], -1).norm(2, dim=1)


def pixel_loss(pred, target):
    """Mean squared error over all elements."""
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((pred - target) ** 2).mean()


def perceptual_loss(pred, target, feature_extractor):
    """Mean squared distance between fixed-network feature maps."""
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return ((feature_extractor(pred) - feature_extractor(target)) ** 2).mean()


def generator_total_loss(lp, lx, ladv_global, ladv_local, w: LossWeights):
    """w_pixel * lp + w_perceptual * lx + w_adv * mean(global, local).

    Components passed as None (disabled in an ablation variant) contribute
    nothing. Adversarial terms are averaged when both branches are present.
    """
    adv_terms = [t for t in (ladv_global, ladv_local) if t is not None]
    total = 0.0
    if lp is not None:
        total = total + w.w_pixel * lp
    if lx is not None:
        total = total + w.w_perceptual * lx
    if adv_terms:
        total = total + w.w_adv * sum(adv_terms) / len(adv_terms)
    return total


_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


def _seed_conv_weights(module, seed):
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Conv2d):
                m.weight.normal_(0.0, 0.02, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()


class VggFeatureExtractor(nn.Module):
    """VGG19 prefix through the third conv of block 3 (plus its ReLU).

    Weights are frozen. Inputs in [-1, 1] are remapped to the ImageNet
    convention internally. Without a weight asset the filters are random
    (fixed by `seed`), which still yields a usable feature distance for
    desk-scale work.
    """

    # VGG19 layer plan up to conv3_3: channels per conv, 'M' = max pool
    PLAN = (64, 64, "M", 128, 128, "M", 256, 256, 256)

    def __init__(self, weights_path=None, seed: int = 0):
        super().__init__()
        layers = []
        c_in = 3
        for item in self.PLAN:
            if item == "M":
                layers.append(nn.MaxPool2d(2, 2))
            else:
                layers += [nn.Conv2d(c_in, item, 3, padding=1), nn.ReLU(inplace=True)]
                c_in = item
        self.features = nn.Sequential(*layers)
        if weights_path is not None:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            self.features.load_state_dict(state)
        else:
            _seed_conv_weights(self.features, seed)
        self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    @classmethod
    def from_asset(cls, name: str = "vgg19-conv3_3", asset_root=None):
        return cls(weights_path=resolve_asset(name, asset_root))

    def forward(self, x):
        x = (x + 1.0) * 0.5  # [-1,1] -> [0,1]
        x = (x - self.mean) / self.std
        return self.features(x)


class RandomConvFeatureExtractor(nn.Module):
    """Small frozen random-projection feature net for desk-scale presets."""

    def __init__(self, channels=(8, 16), seed: int = 0):
        super().__init__()
        layers = []
        c_in = 3
        for c in channels:
            layers += [nn.Conv2d(c_in, c, 3, 2, 1), nn.ReLU(inplace=True)]
            c_in = c
        self.features = nn.Sequential(*layers)
        _seed_conv_weights(self.features, seed)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        return self.features(x)
