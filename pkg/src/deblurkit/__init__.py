"""deblurkit: backbone-swappable GAN image deblurring with a
quality/efficiency evaluation harness.
"""

__version__ = "0.1.0"

from .backbones import BackboneSpec, FeaturePyramid, build_backbone, extract_features
from .discriminator import DiscriminatorConfig, DoubleScaleDiscriminator, discriminate
from .generator import FPNGenerator, GeneratorConfig, build_generator, generate
from .imaging import ImagePair, MetricValue, denormalize, normalize, psnr, ssim
from .losses import LossWeights
from .training import TrainConfig, Trainer, lr_at

__all__ = [
    "BackboneSpec",
    "DiscriminatorConfig",
    "DoubleScaleDiscriminator",
    "FPNGenerator",
    "FeaturePyramid",
    "GeneratorConfig",
    "ImagePair",
    "LossWeights",
    "MetricValue",
    "TrainConfig",
    "Trainer",
    "build_backbone",
    "build_generator",
    "denormalize",
    "discriminate",
    "extract_features",
    "generate",
    "lr_at",
    "normalize",
    "psnr",
    "ssim",
    "__version__",
]
