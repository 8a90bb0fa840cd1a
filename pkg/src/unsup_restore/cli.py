"""Command-line entry point: ``unsup-restore <subcommand> ...``.

Every subcommand exits 0 on success. Errors print a single ``error: ...``
line to stderr and exit 1 (argument errors exit 2, as argparse does).
"""
from __future__ import annotations

import argparse
import json
import logging
import random
import shlex
import sys
from pathlib import Path

import numpy as np
import torch
import yaml

from . import config as config_mod
from . import corpus, dsp, evaluation, inference, training
from .degradations import KINDS, DegradationRecipe, RecipeError, apply
from .evaluation import DatasetManifest, ManifestItem, read_manifest, write_manifest
from .models import ModelBundle, load_bundle, save_bundle

log = logging.getLogger("unsup_restore")

SIMULATED_KINDS = tuple(k for k in KINDS if k != "random_pretrain")


class CLIError(RuntimeError):
    pass


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def _write_run_metadata(out_dir: Path, cfg: config_mod.RunConfig, argv: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(cfg.dump())
    (out_dir / "command.txt").write_text(shlex.join(["unsup-restore", *argv]) + "\n")
    (out_dir / "seed.txt").write_text(f"{cfg.seed}\n")


def _load_config(args) -> config_mod.RunConfig:
    overrides: dict = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    train = {}
    if getattr(args, "task", None) is not None:
        train["task"] = args.task
    if getattr(args, "max_epochs", None) is not None:
        train["max_epochs"] = args.max_epochs
    if train:
        overrides["train"] = train
    cfg = config_mod.load(getattr(args, "config", None), overrides)
    # the global seed drives the trainer unless the file pins train.seed explicitly
    if "seed" in overrides or cfg.train.seed == config_mod.TrainConfig().seed:
        cfg = config_mod.replace_section(cfg, "train", seed=cfg.seed)
    return cfg


def _recipe_from_args(args) -> DegradationRecipe:
    params = {
        "cutoff_hz": args.cutoff_hz,
        "clip_threshold": args.threshold,
        "bits": args.bits,
        "intermediate_rate_hz": args.rate,
        "gain_db": args.gain_db,
        "colour": args.colour,
    }
    relevant = {
        "band_limited": ("cutoff_hz",),
        "clipped": ("clip_threshold",),
        "quantized_resampled": ("bits", "intermediate_rate_hz"),
        "overdrive": ("gain_db", "colour"),
    }[args.kind]
    stray = [k for k, v in params.items() if v is not None and k not in relevant]
    if stray:
        raise CLIError(f"parameter(s) {', '.join(stray)} do not apply to --kind {args.kind}")
    return DegradationRecipe.default(args.kind, **{k: params[k] for k in relevant}, seed=args.seed)


def _clips(manifest: DatasetManifest, split: str | None, which: str) -> list[np.ndarray]:
    items = manifest.items if split is None else manifest.split(split)
    if not items:
        raise CLIError(f"no items in split {split!r}")
    return manifest.load_clips(split, which)


def _training_sets(args, cfg):
    task = cfg.train.task
    train_m = read_manifest(args.train_manifest)
    which = "clean" if task == "pretrain" else "degraded"
    has_splits = bool(train_m.split("val") or train_m.split("test"))
    train_clips = _clips(train_m, "train" if has_splits else None, which)
    if args.val_manifest:
        val_m = read_manifest(args.val_manifest)
        val_split = "val" if val_m.split("val") else None
        val_clips = _clips(val_m, val_split, which)
    elif train_m.split("val"):
        val_clips = _clips(train_m, "val", which)
    else:
        raise CLIError("no validation data: pass --val-manifest or use a manifest with a val split")
    clean_clips = None
    if args.clean_manifest:
        clean_clips = read_manifest(args.clean_manifest).load_clips(None, "clean")
    if task == "dual" and not clean_clips:
        raise CLIError("--task dual needs --clean-manifest")
    return train_clips, val_clips, clean_clips


def _initial_bundle(args, cfg, clean_clips) -> ModelBundle:
    if args.init_ckpt:
        bundle = load_bundle(args.init_ckpt, expected=cfg.model)
        log.info("initialised from %s", args.init_ckpt)
        return bundle
    bundle = ModelBundle.create(cfg.model, seed=cfg.seed)
    if cfg.train.task != "pretrain" and cfg.model.vocoder == "toy-neural":
        if not clean_clips:
            raise CLIError("a fresh bundle needs --clean-manifest to fit the toy vocoder (or pass --init-ckpt)")
        log.info("fitting the toy vocoder for %d steps", cfg.train.vocoder_steps)
        training.pretrain_vocoder(bundle, clean_clips, steps=cfg.train.vocoder_steps, seed=cfg.seed)
    return bundle


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth_corpus(args, argv) -> None:
    out = Path(args.out_dir)
    rows = corpus.write_corpus(out / "wav", args.n, args.seconds, args.seed, args.prefix)
    items = [ManifestItem(i, str(Path("wav") / p.name), None, None, "train", d) for i, p, d in rows]
    write_manifest(DatasetManifest(items, out), out / "manifest.csv")
    print(out / "manifest.csv")


def _degrade_items(manifest: DatasetManifest, recipe, out_dir: Path, splits=None) -> DatasetManifest:
    (out_dir / "degraded").mkdir(parents=True, exist_ok=True)
    items = []
    for it in manifest.items:
        src = manifest.resolve(it.clean_path)
        x = dsp.load_wav(src)
        rel = Path("degraded") / f"{it.id}.wav"
        dsp.save_wav(apply(recipe, x), out_dir / rel)
        split = splits[it.id] if splits else it.split
        items.append(ManifestItem(it.id, str(Path(src).resolve()), str(rel), recipe, split, len(x) / dsp.SAMPLE_RATE))
    out = DatasetManifest(items, out_dir)
    write_manifest(out, out_dir / "manifest.csv")
    return out


def cmd_degrade(args, argv) -> None:
    recipe = _recipe_from_args(args)
    manifest = read_manifest(args.in_manifest)
    out = Path(args.out_dir)
    _degrade_items(manifest, recipe, out)
    print(out / "manifest.csv")


def cmd_build_dataset(args, argv) -> None:
    recipe = _recipe_from_args(args)
    clean = read_manifest(args.clean_manifest)
    out = Path(args.out_dir)
    evaluation.build_simulated_dataset(clean, recipe, out, seed=args.seed, n_val=args.n_val, n_test=args.n_test)
    print(out / "manifest.csv")


def cmd_fit_vocoder(args, argv) -> None:
    cfg = _load_config(args)
    seed_everything(cfg.seed)
    out = Path(args.out)
    clean = read_manifest(args.clean_manifest).load_clips(None, "clean")
    bundle = ModelBundle.create(cfg.model, seed=cfg.seed)
    curve = training.pretrain_vocoder(bundle, clean, steps=args.steps or cfg.train.vocoder_steps, seed=cfg.seed)
    save_bundle(bundle, out)
    print(f"{out} final loss {curve[-1]:.4f}" if curve else str(out))


def cmd_train(args, argv) -> None:
    cfg = _load_config(args)
    if args.command == "pretrain" and cfg.train.task != "pretrain":
        cfg = config_mod.replace_section(cfg, "train", task="pretrain")
    if cfg.train.task == "pretrain" and args.command == "train":
        raise CLIError("use the 'pretrain' subcommand for --task pretrain")
    seed_everything(cfg.seed)
    out = Path(args.out_dir) if args.out_dir else Path(cfg.output_root) / cfg.run_name
    _write_run_metadata(out, cfg, argv)
    train_clips, val_clips, clean_clips = _training_sets(args, cfg)
    bundle = _initial_bundle(args, cfg, clean_clips)
    result = training.fit(cfg.train.task, train_clips, val_clips, bundle, cfg.train, cfg.loss,
                          clean_clips=clean_clips, out_dir=out, resume_from=args.resume)
    summary = {"best_epoch": result.best_epoch, "best_val": result.state.best_val,
               "epochs": result.state.epoch, "checkpoint": str(out / "best.pt")}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    print(out / "best.pt")


def cmd_restore(args, argv) -> None:
    bundle = load_bundle(args.ckpt)
    x = dsp.load_wav(args.input)
    y = inference.restore(x, bundle, vocoder=args.vocoder, chunk_seconds=args.chunk_seconds,
                          vocoder_checkpoint=args.vocoder_ckpt)
    dsp.save_wav(y, args.out)
    print(args.out)


def cmd_transfer(args, argv) -> None:
    bundle = load_bundle(args.ckpt)
    c = inference.extract_channel(dsp.load_wav(args.reference), bundle)
    y = inference.transfer_effect(dsp.load_wav(args.input), c, bundle, chunk_seconds=args.chunk_seconds)
    dsp.save_wav(y, args.out)
    print(args.out)


def cmd_evaluate(args, argv) -> None:
    metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    manifest = read_manifest(args.manifest)
    bundle = load_bundle(args.ckpt) if args.ckpt else None
    report = evaluation.evaluate(manifest, bundle, metrics, split=args.split, vocoder=args.vocoder)
    report.write(args.out)
    print(json.dumps(report.aggregate, sort_keys=True))


def cmd_show_config(args, argv) -> None:
    sys.stdout.write(_load_config(args).dump())


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_recipe_args(p) -> None:
    p.add_argument("--kind", required=True, choices=SIMULATED_KINDS)
    p.add_argument("--cutoff-hz", type=float)
    p.add_argument("--threshold", type=float, help="clipping threshold")
    p.add_argument("--bits", type=int)
    p.add_argument("--rate", type=float, help="intermediate sample rate in Hz")
    p.add_argument("--gain-db", type=float)
    p.add_argument("--colour", type=float)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unsup-restore",
                                     description="Unsupervised speech restoration toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="write a synthetic speech-like corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seconds", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--prefix", default="utt")
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("degrade", help="apply one degradation to every file of a manifest")
    _add_recipe_args(p)
    p.add_argument("--in-manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("build-dataset", help="degrade a clean corpus and assign train/val/test splits")
    _add_recipe_args(p)
    p.add_argument("--clean-manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-val", type=int, default=25)
    p.add_argument("--n-test", type=int, default=25)
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("fit-vocoder", help="create a bundle and fit its toy vocoder on clean speech")
    p.add_argument("--clean-manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_fit_vocoder)

    for name, tasks, default in (("pretrain", ("pretrain",), "pretrain"),
                                 ("train", ("forward_only", "dual"), None)):
        p = sub.add_parser(name, help=f"run the {name} loop")
        p.add_argument("--task", choices=tasks, default=default)
        p.add_argument("--config")
        p.add_argument("--train-manifest", required=True)
        p.add_argument("--val-manifest")
        p.add_argument("--clean-manifest")
        p.add_argument("--init-ckpt")
        p.add_argument("--resume", help="trainer state file (state_<epoch>.pt) to continue from")
        p.add_argument("--out-dir")
        p.add_argument("--seed", type=int)
        p.add_argument("--max-epochs", type=int)
        p.set_defaults(func=cmd_train)

    p = sub.add_parser("restore", help="restore a degraded recording")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocoder", choices=("toy-neural", "reference", "external"), default="toy-neural")
    p.add_argument("--vocoder-ckpt")
    p.add_argument("--chunk-seconds", type=float)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("transfer", help="impose the channel of --reference onto --in")
    p.add_argument("--reference", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--chunk-seconds", type=float)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("evaluate", help="score a manifest split (degraded input when --ckpt is omitted)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--metrics", default="mcd,msd")
    p.add_argument("--split", default="test", choices=evaluation.SPLITS)
    p.add_argument("--vocoder", choices=("toy-neural", "reference", "external"), default="toy-neural")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("show-config", help="print the merged configuration")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_show_config)
    return parser


EXPECTED_ERRORS = (CLIError, config_mod.ConfigError, RecipeError, evaluation.ManifestError, dsp.AudioError,
                   training.TrainingError, OSError, ValueError, RuntimeError)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args, argv)
    except EXPECTED_ERRORS as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
