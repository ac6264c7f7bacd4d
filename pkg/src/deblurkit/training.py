"""Adversarial training loop: alternating critic/generator updates, the
flat-then-linear learning-rate schedule, temporary backbone freezing,
Gaussian initialization, and exactly-resumable checkpoints.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from . import checkpoint as ckpt
from .data import random_crop_pair, random_flip_pair
from .errors import TrainingDivergedError
from .imaging import ImagePair
from .losses import (
    LossWeights,
    RandomConvFeatureExtractor,
    generator_total_loss,
    gradient_penalty_norms,
    lsgan_d_loss,
    lsgan_g_loss,
    perceptual_loss,
    pixel_loss,
    ragan_ls_d_loss,
    ragan_ls_g_loss,
    wgan_gp_d_loss,
)

METRICS_FILE = "metrics.tsv"
EVENTS_FILE = "events.log"


@dataclass(frozen=True)
class TrainConfig:
    lr_init: float = 1e-4
    lr_final: float = 1e-7
    epochs_flat: int = 150
    epochs_decay: int = 150
    freeze_epochs: int = 3
    batch_size: int = 8
    crop: int = 256
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if not (self.lr_init > self.lr_final > 0):
            raise ValueError("need lr_init > lr_final > 0")
        if min(self.epochs_flat, self.epochs_decay, self.freeze_epochs) < 0:
            raise ValueError("epoch counts must be >= 0")

    @property
    def total_epochs(self) -> int:
        return self.epochs_flat + self.epochs_decay


@dataclass(frozen=True)
class TrainVariant:
    """Which loss components are wired into the graph (ablation switches)."""

    adv: str = "ragan-ls"  # ragan-ls | lsgan | wgan-gp
    global_d: bool = True
    pixel: bool = True
    perceptual: bool = True
    adv_g_form: str = "swapped"

    def __post_init__(self):
        if self.adv not in ("ragan-ls", "lsgan", "wgan-gp"):
            raise ValueError(f"unknown adversarial mode {self.adv!r}")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Flat lr_init, then linear decay reaching lr_final on the last epoch."""
    if not 0 <= epoch < cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    if epoch < cfg.epochs_flat:
        return cfg.lr_init
    if cfg.epochs_decay == 1:
        return cfg.lr_final
    frac = (epoch - cfg.epochs_flat) / (cfg.epochs_decay - 1)
    return cfg.lr_init + frac * (cfg.lr_final - cfg.lr_init)


def set_backbone_frozen(generator: nn.Module, frozen: bool) -> None:
    """Stop (or resume) gradient flow into the generator's backbone.

    Frozen backbones are also switched to eval mode so normalization
    statistics stay bit-identical. No-op for backbone-free generators.
    """
    backbone = getattr(generator, "backbone", None)
    if backbone is None:
        return
    backbone.requires_grad_(not frozen)
    backbone.train(generator.training and not frozen)


def init_new_weights(module: nn.Module, rng) -> None:
    """Gaussian(0, 0.02) conv/linear weights, zero biases, Gaussian(1, 0.02)
    normalization gains. Pretrained backbones are left untouched.
    """
    gen = rng if isinstance(rng, torch.Generator) else torch.Generator().manual_seed(int(rng))

    def visit(m):
        spec = getattr(m, "spec", None)
        if spec is not None and getattr(spec, "pretrained", False):
            return
        with torch.no_grad():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                m.weight.normal_(0.0, 0.02, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, (nn.BatchNorm2d, nn.GroupNorm, nn.InstanceNorm2d)):
                if m.weight is not None:
                    m.weight.normal_(1.0, 0.02, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
        for child in m.children():
            visit(child)

    visit(module)


class Trainer:
    """Owns the two networks, their optimizers and the data order."""

    def __init__(self, generator, discriminator, pairs, cfg: TrainConfig,
                 weights: LossWeights = LossWeights(), feature_extractor=None,
                 variant: TrainVariant = TrainVariant(), out_dir=None):
        self.g = generator
        self.d = discriminator
        self.pairs = list(pairs)
        self.cfg = cfg
        self.weights = weights
        self.variant = variant
        self.fx = feature_extractor if feature_extractor is not None else RandomConvFeatureExtractor()
        betas = (cfg.adam_beta1, cfg.adam_beta2)
        self.opt_g = torch.optim.Adam(self.g.parameters(), lr=cfg.lr_init, betas=betas)
        self.opt_d = torch.optim.Adam(self.d.parameters(), lr=cfg.lr_init, betas=betas)
        self.rng = np.random.default_rng(cfg.seed)
        self.epoch = 0
        self.step = 0
        self._order = None
        self._cursor = 0
        self._frozen = None
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

    # -- scheduling ---------------------------------------------------

    def _set_lr(self, lr):
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr

    def _apply_freeze(self, frozen):
        if frozen == self._frozen:
            return
        set_backbone_frozen(self.g, frozen)
        self._frozen = frozen
        self._log_event(f"epoch {self.epoch}: backbone {'frozen' if frozen else 'unfrozen'}")

    def _begin_epoch(self):
        self._set_lr(lr_at(self.epoch, self.cfg))
        self._apply_freeze(self.epoch < self.cfg.freeze_epochs)
        self._order = [int(i) for i in self.rng.permutation(len(self.pairs))]
        self._cursor = 0

    def _make_batch(self) -> ImagePair:
        idxs = self._order[self._cursor : self._cursor + self.cfg.batch_size]
        self._cursor += len(idxs)
        blurred, sharp = [], []
        for i in idxs:
            pair = self.pairs[i]
            if self.cfg.crop and self.cfg.crop < min(pair.blurred.shape[-2:]):
                pair = random_crop_pair(pair, self.cfg.crop, self.rng)
            pair = random_flip_pair(pair, self.rng)
            blurred.append(pair.blurred)
            sharp.append(pair.sharp)
        return ImagePair(blurred=torch.cat(blurred), sharp=torch.cat(sharp))

    # -- losses -------------------------------------------------------

    def _branch_scores(self, out):
        scores = {"local": out.local_scores}
        if self.variant.global_d:
            scores["global"] = out.global_scores
        return scores

    def _critic_losses(self, real, fake):
        out_real = self._branch_scores(self.d(real))
        out_fake = self._branch_scores(self.d(fake))
        parts = {}
        total = 0.0
        for branch in out_real:
            if self.variant.adv == "ragan-ls":
                loss = ragan_ls_d_loss(out_real[branch], out_fake[branch])
            elif self.variant.adv == "lsgan":
                loss = lsgan_d_loss(out_real[branch], out_fake[branch])
            else:  # wgan-gp
                critic = (self.d.local_branch if branch == "local"
                          else self.d.global_branch)
                norms = gradient_penalty_norms(critic, real, fake)
                loss = wgan_gp_d_loss(out_real[branch], out_fake[branch], norms)
                parts[f"gp_{branch}"] = float(((norms - 1.0) ** 2).mean().detach())
            parts[f"d_{branch}"] = float(loss.detach())
            total = total + loss
        return total, parts

    def _generator_losses(self, fake, sharp):
        out_fake = self._branch_scores(self.d(fake))
        with torch.no_grad():
            out_real = self._branch_scores(self.d(sharp))
        adv = {}
        for branch, fake_scores in out_fake.items():
            if self.variant.adv == "ragan-ls":
                adv[branch] = ragan_ls_g_loss(out_real[branch], fake_scores,
                                              form=self.variant.adv_g_form)
            elif self.variant.adv == "lsgan":
                adv[branch] = lsgan_g_loss(fake_scores)
            else:  # wgan-gp generator term
                adv[branch] = -fake_scores.mean()
        lp = pixel_loss(fake, sharp) if self.variant.pixel else None
        lx = perceptual_loss(fake, sharp, self.fx) if self.variant.perceptual else None
        total = generator_total_loss(lp, lx, adv.get("global"), adv["local"], self.weights)
        parts = {f"adv_{b}": float(v.detach()) for b, v in adv.items()}
        parts["adv"] = float(sum(float(v.detach()) for v in adv.values()) / len(adv))
        if lp is not None:
            parts["pixel"] = float(lp.detach())
        if lx is not None:
            parts["perceptual"] = float(lx.detach())
        parts["total"] = float(total.detach())
        return total, parts

    # -- stepping -----------------------------------------------------

    def train_step(self, batch: ImagePair) -> dict:
        """One critic update followed by one generator update."""
        blurred, sharp = batch.blurred, batch.sharp
        fake = self.g(blurred)

        self.opt_d.zero_grad(set_to_none=True)
        d_loss, record = self._critic_losses(sharp, fake.detach())
        d_loss.backward()
        self.opt_d.step()

        self.opt_g.zero_grad(set_to_none=True)
        g_loss, g_parts = self._generator_losses(fake, sharp)
        g_loss.backward()
        self.opt_g.step()
        record.update(g_parts)

        if not all(np.isfinite(v) for v in record.values()):
            raise TrainingDivergedError(f"non-finite loss at step {self.step}: {record}")
        self.step += 1
        return record

    def step_once(self) -> dict:
        if self._order is None or self._cursor >= len(self._order):
            self._begin_epoch()
        record = self.train_step(self._make_batch())
        self._log_metrics(record)
        if self._cursor >= len(self._order):
            self.epoch += 1
            self._order = None
        return record

    def run_epochs(self, n: int) -> list:
        """Run n full epochs, returning every step record."""
        records = []
        target = self.epoch + n
        while self.epoch < target:
            records.append(self.step_once())
        return records

    # -- logging ------------------------------------------------------

    def _log_event(self, text):
        if self.out_dir is not None:
            with open(self.out_dir / EVENTS_FILE, "a") as f:
                f.write(text + "\n")

    def _log_metrics(self, record):
        if self.out_dir is None:
            return
        path = self.out_dir / METRICS_FILE
        keys = sorted(record)
        if not path.exists():
            path.write_text("step\tepoch\tlr\t" + "\t".join(keys) + "\n")
        lr = self.opt_g.param_groups[0]["lr"]
        row = [str(self.step - 1), str(self.epoch), f"{lr:.10g}"]
        row += [f"{record[k]:.10g}" for k in keys]
        with open(path, "a") as f:
            f.write("\t".join(row) + "\n")

    # -- checkpointing ------------------------------------------------

    def _optim_entries(self, opt, prefix):
        entries = {}
        for i, p in enumerate(opt.param_groups[0]["params"]):
            state = opt.state.get(p)
            if not state:
                continue
            entries[f"{prefix}/{i}/exp_avg"] = state["exp_avg"]
            entries[f"{prefix}/{i}/exp_avg_sq"] = state["exp_avg_sq"]
            entries[f"{prefix}/{i}/step"] = np.asarray(float(state["step"]), dtype=np.float64)
        return entries

    def _restore_optim(self, opt, arrays, prefix):
        for i, p in enumerate(opt.param_groups[0]["params"]):
            key = f"{prefix}/{i}/exp_avg"
            if key not in arrays:
                continue
            opt.state[p] = {
                "step": torch.tensor(float(arrays[f"{prefix}/{i}/step"])),
                "exp_avg": torch.from_numpy(arrays[key]).to(p.dtype),
                "exp_avg_sq": torch.from_numpy(arrays[f"{prefix}/{i}/exp_avg_sq"]).to(p.dtype),
            }

    def save_checkpoint(self, path, config_hash: str = "", extra: dict = None) -> None:
        entries = {}
        for name, tensor in self.g.state_dict().items():
            entries[f"generator/{name}"] = tensor
        for name, tensor in self.d.state_dict().items():
            entries[f"discriminator/{name}"] = tensor
        entries.update(self._optim_entries(self.opt_g, "optim_g"))
        entries.update(self._optim_entries(self.opt_d, "optim_d"))
        entries["rng/torch"] = torch.get_rng_state()
        if self._order is not None:
            entries["sched/order"] = np.asarray(self._order, dtype=np.int64)
        ckpt.save_tensors(path, entries)
        backbone = getattr(self.g, "backbone", None)
        manifest = {
            "format_version": ckpt.FORMAT_VERSION,
            "backbone": backbone.spec.name if backbone is not None else "none",
            "epoch": self.epoch,
            "step": self.step,
            "cursor": self._cursor,
            "frozen": bool(self._frozen),
            "config": dataclasses.asdict(self.cfg),
            "loss_weights": dataclasses.asdict(self.weights),
            "variant": dataclasses.asdict(self.variant),
            "config_hash": config_hash,
            "np_rng_state": self.rng.bit_generator.state,
        }
        manifest.update(extra or {})
        ckpt.save_manifest(path, manifest)

    def load_checkpoint(self, path) -> dict:
        arrays = ckpt.load_tensors(path)
        manifest = ckpt.load_manifest(path)
        g_state = {k.split("/", 1)[1]: torch.from_numpy(v)
                   for k, v in arrays.items() if k.startswith("generator/")}
        d_state = {k.split("/", 1)[1]: torch.from_numpy(v)
                   for k, v in arrays.items() if k.startswith("discriminator/")}
        self.g.load_state_dict(g_state)
        self.d.load_state_dict(d_state)
        self._restore_optim(self.opt_g, arrays, "optim_g")
        self._restore_optim(self.opt_d, arrays, "optim_d")
        torch.set_rng_state(torch.from_numpy(arrays["rng/torch"]))
        self.epoch = manifest["epoch"]
        self.step = manifest["step"]
        self._cursor = manifest["cursor"]
        self._order = ([int(i) for i in arrays["sched/order"]]
                       if "sched/order" in arrays else None)
        state = manifest["np_rng_state"]
        self.rng = np.random.default_rng()
        self.rng.bit_generator.state = state
        self._frozen = None
        self._apply_freeze(manifest["frozen"])
        if self.epoch < self.cfg.total_epochs:
            self._set_lr(lr_at(self.epoch, self.cfg))
        return manifest


def export_generator(generator, path, manifest_extra=None) -> None:
    """Inference-only export: generator weights, no critic, no optimizer."""
    entries = {f"generator/{k}": v for k, v in generator.state_dict().items()}
    ckpt.save_tensors(path, entries)
    backbone = getattr(generator, "backbone", None)
    manifest = {
        "format_version": ckpt.FORMAT_VERSION,
        "backbone": backbone.spec.name if backbone is not None else "none",
        "inference_only": True,
    }
    manifest.update(manifest_extra or {})
    ckpt.save_manifest(path, manifest)


def load_generator_weights(generator, path) -> dict:
    arrays = ckpt.load_tensors(path)
    state = {k.split("/", 1)[1]: torch.from_numpy(v)
             for k, v in arrays.items() if k.startswith("generator/")}
    generator.load_state_dict(state)
    return ckpt.load_manifest(path)
