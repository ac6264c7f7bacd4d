"""Command-line entry point.

Subcommands are thin bindings over the library: train, infer, eval,
synth, degrade, flops, bench, ablate, bt, plot. Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""

import argparse
import dataclasses
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import __version__
from .ablation import format_ablation_table, run_ablation
from .bradley_terry import fit_bradley_terry, load_win_matrix_csv
from .checkpoint import FORMAT_VERSION, load_manifest
from .config import (
    PRESETS,
    apply_assignment,
    config_hash,
    discriminator_config,
    feature_extractor,
    generator_config,
    load_config,
    loss_weights,
    train_config,
    train_variant,
)
from .data import (
    BlurSynthesisConfig,
    DegradationConfig,
    degrade_for_restore,
    fabricate_pairs_dir,
    item_rng,
    load_pairs_dir,
)
from .discriminator import DoubleScaleDiscriminator
from .errors import CheckpointError, ConfigError, DeblurkitError, RegistryError
from .evaluation import (
    benchmark_latency,
    evaluate,
    format_tradeoff_table,
    parse_tradeoff_table,
    render_tradeoff_svg,
)
from .flops import count_flops, format_report
from .generator import GeneratorConfig, build_generator, generate
from .imaging import denormalize, load_image, normalize, save_image
from .training import Trainer, export_generator, init_new_weights, load_generator_weights

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def build_id() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return f"deblurkit-{__version__}"


def write_run_manifest(out_dir, command, cfg=None, overrides=(), extra=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "build_id": build_id(),
        "format_versions": {"checkpoint": FORMAT_VERSION, "config": 1},
        "overrides": list(overrides),
    }
    if cfg is not None:
        manifest["config_hash"] = config_hash(cfg)
        manifest["seed"] = cfg["run"]["seed"]
    manifest.update(extra or {})
    (out_dir / "run-manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )


def _load_run_config(args):
    overrides = list(args.set or [])
    cfg = load_config(path=args.config, preset=args.preset, overrides=overrides)
    if getattr(args, "backbone", None):
        apply_assignment(cfg, f"model.backbone={args.backbone}")
        if args.backbone == "mobilenet-dsc":
            # the fully separable variant transforms the whole network
            apply_assignment(cfg, "model.dsc=true")
        overrides.append(f"model.backbone={args.backbone}")
    if getattr(args, "data", None):
        apply_assignment(cfg, f"data.root={args.data}")
        overrides.append(f"data.root={args.data}")
    if getattr(args, "seed", None) is not None:
        apply_assignment(cfg, f"run.seed={args.seed}")
        overrides.append(f"run.seed={args.seed}")
    return cfg, overrides


def _pad_to_multiple(x, multiple):
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x, (h, w)
    mode = "reflect" if min(h, w) > max(ph, pw) else "constant"
    return F.pad(x, (0, pw, 0, ph), mode=mode), (h, w)


def _rebuild_generator(weights_path):
    manifest = load_manifest(weights_path)
    gen_cfg = manifest.get("generator_config")
    if gen_cfg is None:
        raise CheckpointError(f"{weights_path}: manifest lacks generator_config")
    g = build_generator(GeneratorConfig(**gen_cfg))
    load_generator_weights(g, weights_path)
    g.eval()
    return g, manifest


# -- subcommands ------------------------------------------------------


def cmd_train(args) -> int:
    cfg, overrides = _load_run_config(args)
    root = cfg["data"]["root"]
    if not root or not Path(root).is_dir():
        raise ConfigError(f"data.root does not point at a dataset directory: {root!r}")
    out_dir = Path(args.out or cfg["run"]["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    gen_cfg = generator_config(cfg)
    tc = train_config(cfg)
    torch.manual_seed(tc.seed)
    g = build_generator(gen_cfg)
    d = DoubleScaleDiscriminator(discriminator_config(cfg))
    init_new_weights(g, tc.seed)
    init_new_weights(d, tc.seed + 1)

    pairs = load_pairs_dir(root)
    if not pairs:
        raise ConfigError(f"data.root contains no usable pairs: {root!r}")
    trainer = Trainer(
        g, d, pairs, tc, weights=loss_weights(cfg),
        feature_extractor=feature_extractor(cfg),
        variant=train_variant(cfg), out_dir=out_dir,
    )
    write_run_manifest(out_dir, "train", cfg, overrides)
    epochs = args.epochs if args.epochs is not None else tc.total_epochs
    trainer.run_epochs(epochs)
    extra = {"generator_config": dataclasses.asdict(gen_cfg)}
    trainer.save_checkpoint(out_dir / "checkpoint.ckpt", config_hash(cfg), extra=extra)
    export_generator(g, out_dir / "generator.ckpt", manifest_extra=extra)
    print(f"trained {epochs} epochs ({trainer.step} steps); "
          f"checkpoints in {out_dir}")
    return 0


def cmd_infer(args) -> int:
    g, _ = _rebuild_generator(args.weights)
    in_dir, out_dir = Path(args.input), Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    processed, skipped = 0, 0
    files = sorted(p for p in in_dir.iterdir()
                   if p.suffix.lower() in IMAGE_SUFFIXES) if in_dir.is_dir() else []
    for path in files:
        try:
            raw = load_image(path)
        except Exception as err:  # unreadable file: warn and continue
            print(f"warning: skipping unreadable {path.name}: {err}", file=sys.stderr)
            skipped += 1
            continue
        x, size = _pad_to_multiple(normalize(raw), g.max_stride)
        y = generate(g, x)[..., : size[0], : size[1]]
        save_image(out_dir / path.name, denormalize(y)[0])
        processed += 1
    summary = {"processed": processed, "skipped": skipped}
    (out_dir / "infer-summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_run_manifest(out_dir, "infer", extra={"weights": str(args.weights), **summary})
    print(f"deblurred {processed} images ({skipped} skipped) -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    g, _ = _rebuild_generator(args.weights)
    pairs = load_pairs_dir(args.data, limit=args.limit)
    if not pairs:
        raise ConfigError(f"no pairs found under {args.data}")
    report = evaluate(g, pairs, label=args.label)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = dataclasses.asdict(report)
    if args.table is not None:
        res = _parse_resolution(args.resolution)
        flops = count_flops(g, res)
        payload["gflops"] = flops.gflops
        table = Path(args.table)
        if not table.exists():
            table.write_text("label\tssim\tgflops\n")
        with open(table, "a") as f:
            f.write(f"{args.label}\t{report.ssim:.6f}\t{flops.gflops:.6f}\n")
    (out_dir / "eval-report.json").write_text(json.dumps(payload, indent=2) + "\n")
    write_run_manifest(out_dir, "eval", extra={"weights": str(args.weights)})
    print(f"{args.label}: PSNR {report.psnr_db:.3f} dB, SSIM {report.ssim:.4f} "
          f"({len(pairs)} pairs)")
    return 0


def cmd_synth(args) -> int:
    cfg = BlurSynthesisConfig(window=args.window, interp_factor=args.factor)
    count = fabricate_pairs_dir(args.frames, args.out, cfg, seed=args.seed)
    write_run_manifest(args.out, "synth",
                       extra={"pairs": count, "window": args.window,
                              "interp_factor": args.factor, "seed": args.seed})
    print(f"synthesized {count} pairs -> {args.out}")
    return 0


def cmd_degrade(args) -> int:
    cfg = DegradationConfig(
        gaussian_sigma=(args.gaussian_min, args.gaussian_max),
        speckle_sigma=(args.speckle_min, args.speckle_max),
        jpeg_quality=(args.quality_min, args.quality_max),
        upscale_factor=(args.upscale_min, args.upscale_max),
        seed=args.seed,
    )
    in_dir, out_dir = Path(args.input), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = sorted(p for p in in_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    for idx, path in enumerate(files):
        degraded = degrade_for_restore(load_image(path), cfg, item_rng(cfg.seed, idx))
        save_image(out_dir / path.name, degraded)
    write_run_manifest(out_dir, "degrade",
                       extra={"images": len(files), "seed": args.seed})
    print(f"degraded {len(files)} images -> {out_dir}")
    return 0


def cmd_flops(args) -> int:
    cfg, _ = _load_run_config(args)
    g = build_generator(generator_config(cfg))
    res = _parse_resolution(args.resolution)
    report = count_flops(g, res)
    text = format_report(report, label=cfg["model"]["backbone"])
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "flops.tsv").write_text(text)
        write_run_manifest(out_dir, "flops", cfg)
    print(text, end="")
    return 0


def cmd_bench(args) -> int:
    cfg, _ = _load_run_config(args)
    g = build_generator(generator_config(cfg))
    res = _parse_resolution(args.resolution)
    seconds, hardware = benchmark_latency(g, res, warmup=args.warmup, runs=args.runs)
    print(f"{cfg['model']['backbone']}: {seconds:.4f} s/image at "
          f"{res[0]}x{res[1]} on {hardware} (median of {args.runs})")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        payload = {"backbone": cfg["model"]["backbone"], "seconds_per_image": seconds,
                   "resolution": list(res), "hardware": hardware,
                   "warmup": args.warmup, "runs": args.runs}
        (out_dir / "bench.json").write_text(json.dumps(payload, indent=2) + "\n")
        write_run_manifest(out_dir, "bench", cfg)
    return 0


def cmd_ablate(args) -> int:
    cfg, overrides = _load_run_config(args)
    pairs = load_pairs_dir(args.data)
    if len(pairs) < 2:
        raise ConfigError(f"need at least 2 pairs under {args.data}")
    heldout_n = max(1, min(args.heldout, len(pairs) - 1))
    heldout, trainset = pairs[:heldout_n], pairs[heldout_n:]
    rows = run_ablation(
        trainset, heldout, generator_config(cfg), discriminator_config(cfg),
        train_config(cfg), weights=loss_weights(cfg),
        feature_extractor=feature_extractor(cfg), epochs=args.epochs,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    text = format_ablation_table(rows)
    (out_dir / "ablation.tsv").write_text(text)
    write_run_manifest(out_dir, "ablate", cfg, overrides)
    print(text, end="")
    return 0


def cmd_bt(args) -> int:
    matrix = load_win_matrix_csv(args.matrix)
    result = fit_bradley_terry(matrix, tol=args.tol, max_iter=args.max_iter)
    lines = [f"item_{i}\t{s:.6f}" for i, s in enumerate(result.scores)]
    text = "\n".join(lines) + (
        f"\n# iterations={result.iterations} smoothed={result.smoothed}\n"
    )
    print(text, end="")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "bt-scores.tsv").write_text(text)
        write_run_manifest(out_dir, "bt", extra={"matrix": str(args.matrix)})
    return 0


def cmd_plot(args) -> int:
    rows = parse_tradeoff_table(Path(args.table).read_text())
    if not rows:
        raise ConfigError(f"no rows in trade-off table {args.table}")
    rows = sorted(rows, key=lambda r: r.gflops)
    svg = render_tradeoff_svg(rows)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    write_run_manifest(out.parent, "plot", extra={"points": len(rows)})
    print(f"wrote {out} ({len(rows)} points)")
    return 0


def _parse_resolution(text) -> tuple:
    try:
        w, h = text.lower().split("x")
        return (int(h), int(w))
    except ValueError as err:
        raise ConfigError(f"resolution must look like 1280x720, got {text!r}") from err


def _add_config_options(p, with_data=False):
    p.add_argument("--config", help="sectioned key-value config file")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named preset")
    p.add_argument("--backbone", help="backbone registry name (one-line switch)")
    p.add_argument("--set", action="append", metavar="SEC.KEY=VAL",
                   help="config override (repeatable)")
    p.add_argument("--seed", type=int, help="run seed override")
    if with_data:
        p.add_argument("--data", help="dataset root (blur/ + sharp/)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deblurkit",
                                     description="GAN deblurring toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a deblurring model")
    _add_config_options(p, with_data=True)
    p.add_argument("--out", help="run output directory")
    p.add_argument("--epochs", type=int, help="train only this many epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="deblur a directory of images")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a model on paired data")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="runs/eval")
    p.add_argument("--label", default="model")
    p.add_argument("--limit", type=int)
    p.add_argument("--table", help="append (label, ssim, gflops) to this TSV")
    p.add_argument("--resolution", default="1280x720",
                   help="resolution for the FLOPs column")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="fabricate blur/sharp pairs from frames")
    p.add_argument("--frames", nargs="+", required=True,
                   help="directories of numbered frames")
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=9)
    p.add_argument("--factor", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("degrade", help="apply mixed degradations to images")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gaussian-min", type=float, default=0.0)
    p.add_argument("--gaussian-max", type=float, default=10.0)
    p.add_argument("--speckle-min", type=float, default=0.0)
    p.add_argument("--speckle-max", type=float, default=0.1)
    p.add_argument("--quality-min", type=int, default=30)
    p.add_argument("--quality-max", type=int, default=90)
    p.add_argument("--upscale-min", type=float, default=1.0)
    p.add_argument("--upscale-max", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("flops", help="analytic FLOPs of a generator")
    _add_config_options(p)
    p.add_argument("--resolution", default="1280x720")
    p.add_argument("--out")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("bench", help="median inference latency")
    _add_config_options(p)
    p.add_argument("--resolution", default="1280x720")
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--runs", type=int, default=30)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="run the ablation ladder")
    _add_config_options(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--heldout", type=int, default=4)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bt", help="fit pairwise-preference strengths")
    p.add_argument("--matrix", required=True, help="winning matrix CSV")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bt)

    p = sub.add_parser("plot", help="render the SSIM/FLOPs trade-off SVG")
    p.add_argument("--table", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, RegistryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except DeblurkitError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
