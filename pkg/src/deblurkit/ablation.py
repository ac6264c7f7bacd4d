"""Ablation ladder: retrain the system stepwise from the plain residual
generator with a local WGAN-GP critic up to the full pyramid model, under
identical seeds and budget, and report quality per rung.
"""

import dataclasses
from dataclasses import dataclass

import torch

from .discriminator import DiscriminatorConfig, DoubleScaleDiscriminator
from .evaluation import evaluate
from .generator import GeneratorConfig, ResnetGenerator, build_generator
from .losses import LossWeights
from .training import TrainConfig, Trainer, TrainVariant, init_new_weights

LADDER = (
    ("wgan-gp-local-d-baseline",
     "resnet", TrainVariant(adv="wgan-gp", global_d=False, pixel=False, perceptual=True)),
    ("+fpn",
     "fpn", TrainVariant(adv="wgan-gp", global_d=False, pixel=False, perceptual=True)),
    ("+fpn+global-d",
     "fpn", TrainVariant(adv="wgan-gp", global_d=True, pixel=False, perceptual=True)),
    ("+fpn+global-d+ragan-ls",
     "fpn", TrainVariant(adv="ragan-ls", global_d=True, pixel=False, perceptual=True)),
    ("+fpn+global-d+ragan-ls+mse",
     "fpn", TrainVariant(adv="ragan-ls", global_d=True, pixel=True, perceptual=True)),
    ("full-minus-perceptual",
     "fpn", TrainVariant(adv="ragan-ls", global_d=True, pixel=True, perceptual=False)),
)


@dataclass(frozen=True)
class AblationRow:
    label: str
    psnr_db: float
    ssim: float
    record_keys: tuple  # loss-record fields seen during training
    variant: TrainVariant


def _build_models(kind, gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, seed):
    torch.manual_seed(seed)
    if kind == "resnet":
        g = ResnetGenerator(width=max(8, gen_cfg.decoder_channels))
    else:
        g = build_generator(gen_cfg)
    d = DoubleScaleDiscriminator(disc_cfg)
    init_new_weights(g, seed)
    init_new_weights(d, seed + 1)
    return g, d


def run_ablation(pairs, heldout, gen_cfg: GeneratorConfig,
                 disc_cfg: DiscriminatorConfig, train_cfg: TrainConfig,
                 weights: LossWeights = LossWeights(), feature_extractor=None,
                 epochs: int = 1) -> list:
    """Train every ladder rung and evaluate it on the held-out pairs."""
    rows = []
    for label, kind, variant in LADDER:
        g, d = _build_models(kind, gen_cfg, disc_cfg, train_cfg.seed)
        trainer = Trainer(g, d, pairs, train_cfg, weights=weights,
                          feature_extractor=feature_extractor, variant=variant)
        records = trainer.run_epochs(epochs)
        keys = sorted(set().union(*(r.keys() for r in records)))
        report = evaluate(g, heldout, label=label)
        rows.append(AblationRow(label=label, psnr_db=report.psnr_db,
                                ssim=report.ssim, record_keys=tuple(keys),
                                variant=variant))
    return rows


def format_ablation_table(rows) -> str:
    lines = ["label\tpsnr_db\tssim\tloss_fields"]
    for r in rows:
        lines.append(f"{r.label}\t{r.psnr_db:.4f}\t{r.ssim:.6f}\t{','.join(r.record_keys)}")
    return "\n".join(lines) + "\n"


def ladder_labels() -> list:
    return [label for label, _, _ in LADDER]


def variant_dicts() -> list:
    return [dataclasses.asdict(v) for _, _, v in LADDER]
