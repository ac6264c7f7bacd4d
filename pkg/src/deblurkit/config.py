"""Run configuration: flat sectioned key-value files, named presets,
command-line overrides, and schema validation (unknown keys rejected).
"""

import configparser
import hashlib

from .discriminator import DiscriminatorConfig
from .errors import ConfigError
from .generator import GeneratorConfig
from .losses import LossWeights
from .training import TrainConfig, TrainVariant


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "seed": (int, 0),
        "output_dir": (str, "runs/out"),
    },
    "data": {
        "root": (str, ""),
    },
    "model": {
        "backbone": (str, "mobilenet-v2"),
        "fpn_channels": (int, 128),
        "decoder_channels": (int, 64),
        "dsc": (_bool, False),
        "pretrained": (_bool, False),
        "disc_base_channels": (int, 64),
        "disc_global_stages": (int, 2),
    },
    "train": {
        "lr_init": (float, 1e-4),
        "lr_final": (float, 1e-7),
        "epochs_flat": (int, 150),
        "epochs_decay": (int, 150),
        "freeze_epochs": (int, 3),
        "batch_size": (int, 8),
        "crop": (int, 256),
        "adam_beta1": (float, 0.5),
        "adam_beta2": (float, 0.999),
    },
    "loss": {
        "w_pixel": (float, 0.5),
        "w_perceptual": (float, 0.006),
        "w_adv": (float, 0.01),
        "adv": (str, "ragan-ls"),
        "adv_g_form": (str, "swapped"),
        "perceptual_extractor": (str, "vgg19"),
    },
}

PRESETS = {
    "tiny": {
        "model.backbone": "tiny-test",
        "model.fpn_channels": "8",
        "model.decoder_channels": "8",
        "model.disc_base_channels": "8",
        "model.disc_global_stages": "1",
        "train.lr_init": "1e-3",
        "train.epochs_flat": "20",
        "train.epochs_decay": "0",
        "train.freeze_epochs": "0",
        "loss.perceptual_extractor": "random-tiny",
    },
    "mobilenet-v2": {"model.backbone": "mobilenet-v2"},
    "mobilenet-dsc": {"model.backbone": "mobilenet-dsc", "model.dsc": "true"},
    "inception-resnet-v2": {"model.backbone": "inception-resnet-v2"},
}


def defaults() -> dict:
    return {sec: {k: default for k, (_, default) in keys.items()}
            for sec, keys in SCHEMA.items()}


def _parse_value(section, key, raw):
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    parser, _ = SCHEMA[section][key]
    try:
        return parser(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r} ({err})") from err


def apply_assignment(cfg: dict, assignment: str) -> None:
    """Apply one 'section.key=value' override in place."""
    if "=" not in assignment or "." not in assignment.split("=", 1)[0]:
        raise ConfigError(f"override must look like section.key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    section, key = dotted.split(".", 1)
    cfg[section][key] = _parse_value(section, key, raw)


def load_config(path=None, preset=None, overrides=()) -> dict:
    """Defaults <- preset <- config file <- command-line overrides."""
    cfg = defaults()
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (known: {sorted(PRESETS)})")
        for dotted, raw in PRESETS[preset].items():
            apply_assignment(cfg, f"{dotted}={raw}")
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            for key, raw in parser.items(section):
                cfg.setdefault(section, {})
                cfg[section][key] = _parse_value(section, key, raw)
    for assignment in overrides:
        apply_assignment(cfg, assignment)
    return cfg


def config_hash(cfg: dict) -> str:
    lines = sorted(
        f"{sec}.{key}={cfg[sec][key]!r}" for sec in cfg for key in cfg[sec]
    )
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]


# -- typed views ------------------------------------------------------


def generator_config(cfg: dict) -> GeneratorConfig:
    m = cfg["model"]
    return GeneratorConfig(
        backbone_name=m["backbone"],
        fpn_channels=m["fpn_channels"],
        decoder_channels=m["decoder_channels"],
        dsc=m["dsc"],
        pretrained_backbone=m["pretrained"],
    )


def discriminator_config(cfg: dict) -> DiscriminatorConfig:
    m = cfg["model"]
    return DiscriminatorConfig(
        base_channels=m["disc_base_channels"],
        global_extra_stages=m["disc_global_stages"],
    )


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        lr_init=t["lr_init"], lr_final=t["lr_final"],
        epochs_flat=t["epochs_flat"], epochs_decay=t["epochs_decay"],
        freeze_epochs=t["freeze_epochs"], batch_size=t["batch_size"],
        crop=t["crop"], adam_beta1=t["adam_beta1"], adam_beta2=t["adam_beta2"],
        seed=cfg["run"]["seed"],
    )


def loss_weights(cfg: dict) -> LossWeights:
    ls = cfg["loss"]
    return LossWeights(w_pixel=ls["w_pixel"], w_perceptual=ls["w_perceptual"],
                       w_adv=ls["w_adv"])


def train_variant(cfg: dict) -> TrainVariant:
    ls = cfg["loss"]
    return TrainVariant(adv=ls["adv"], adv_g_form=ls["adv_g_form"])


def feature_extractor(cfg: dict, asset_root=None):
    from .losses import RandomConvFeatureExtractor, VggFeatureExtractor

    kind = cfg["loss"]["perceptual_extractor"]
    if kind == "vgg19":
        return VggFeatureExtractor.from_asset(asset_root=asset_root)
    if kind == "vgg19-random":
        return VggFeatureExtractor()
    if kind == "random-tiny":
        return RandomConvFeatureExtractor()
    raise ConfigError(f"unknown perceptual extractor {kind!r}")
