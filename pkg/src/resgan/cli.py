"""Command-line entry point.

Verbs: train, degrade, restore, eval, bench. Every run's artifacts live under
one directory keyed by the config hash, and identical (config, seed) reruns
overwrite those artifacts byte-identically (timing stays off by default for
exactly that reason). Exit codes are a stable scripting contract: 0 success,
2 user/config error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, parse_overrides
from .data import (
    Dataset,
    degrade,
    load_cifar,
    load_mnist,
    split_dataset,
    synth_dataset,
    synth_digits,
)
from .errors import ConfigError, FormatError, IoError, ShapeError, TrainingDiverged
from .imaging import read_pnm, write_image_grid, write_pnm
from .models import load_checkpoint
from .training import evaluate, train, train_external_probe

EXIT_OK = 0
EXIT_USER_ERROR = 2
EXIT_DIVERGED = 3


def resolve_dataset(cfg):
    """Dataset string -> Dataset: synth | digits | mnist:DIR | cifar10:DIR | cifar100:DIR."""
    spec = cfg["dataset"]
    name, _, arg = spec.partition(":")
    if name == "synth":
        return synth_dataset(cfg["synth_n"], (1, 28, 28), cfg["synth_d"], cfg["data_seed"])
    if name == "digits":
        return synth_digits(cfg["synth_n"], seed=cfg["data_seed"])
    if name == "mnist":
        root = Path(arg or os.environ.get("RESGAN_DATA", "data") + "/mnist")
        return load_mnist(root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte")
    if name in ("cifar10", "cifar100"):
        root = Path(arg or os.environ.get("RESGAN_DATA", "data") + f"/{name}")
        return load_cifar(root, name)
    raise ConfigError(f"unknown dataset `{spec}`")


def run_dir_for(cfg):
    path = Path(cfg.out_root()) / cfg.hash
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(cfg, run_dir):
    manifest = {
        "config": {k: v for k, v in cfg.values.items() if k != "out_dir"},
        "hash": cfg.hash,
        "seed": cfg["seed"],
        "versions": {
            "resgan": __version__,
            "numpy": np.__version__,
            "python": ".".join(map(str, sys.version_info[:3])),
        },
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def format_cell(loss, accuracy):
    """Loss to 2 decimals, accuracy to 3 with the leading zero dropped."""
    acc = f"{accuracy:.3f}"
    if acc.startswith("0."):
        acc = acc[1:]
    return f"{loss:.2f}/{acc}"


def _load_run_config(args):
    overrides = parse_overrides(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    return load_config(args.config, overrides)


def _make_probe(cfg, train_ds):
    return train_external_probe(train_ds, seed=cfg["data_seed"],
                                 epochs=cfg["probe_epochs"], lr=2e-3)


def cmd_train(args):
    cfg = _load_run_config(args)
    dataset = resolve_dataset(cfg)
    train_ds, _ = split_dataset(dataset, cfg["train_count"], cfg["eval_count"],
                                cfg["data_seed"])
    run_dir = run_dir_for(cfg)
    write_manifest(cfg, run_dir)
    tc = cfg.train_config()
    timing = cfg["timing"]

    csv_path = run_dir / "metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("epoch,loss_g,loss_d,accuracy,wall_ms\n")
        fh.flush()

        def record_hook(r):
            ms = int(round(r.wall_s * 1000.0)) if timing == "wall" else 0
            fh.write(f"{r.epoch},{r.loss_g!r},{r.loss_d!r},{r.accuracy!r},{ms}\n")
            fh.flush()

        try:
            train(tc, train_ds, checkpoint_dir=str(run_dir), record_hook=record_hook)
        except TrainingDiverged as exc:
            print(f"training diverged at epoch {exc.epoch}; partial artifacts kept in {run_dir}",
                  file=sys.stderr)
            return EXIT_DIVERGED
    print(f"run {cfg.hash}: {cfg['epochs']} epochs -> {run_dir}")
    return EXIT_OK


def _dataset_or_dir_images(cfg, args):
    """(images, labels-or-None) from either the configured dataset or a PNM directory."""
    if args.input_dir:
        files = sorted(Path(args.input_dir).glob("*.p[gp]m"))
        if not files:
            raise ConfigError(f"no .pgm/.ppm images under {args.input_dir}")
        stack = [read_pnm(f).transpose(2, 0, 1) / 255.0 for f in files]
        return np.stack(stack), None
    dataset = resolve_dataset(cfg)
    _, eval_ds = split_dataset(dataset, cfg["train_count"], cfg["eval_count"],
                               cfg["data_seed"])
    return eval_ds.images, eval_ds.attributes


def cmd_degrade(args):
    cfg = _load_run_config(args)
    images, labels = _dataset_or_dir_images(cfg, args)
    coarse = degrade(images, cfg.degrade_config())
    run_dir = run_dir_for(cfg)
    out = run_dir / "coarse"
    out.mkdir(exist_ok=True)
    suffix = "pgm" if coarse.shape[1] == 1 else "ppm"
    for i, img in enumerate(coarse):
        write_pnm((np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8).transpose(1, 2, 0),
                  out / f"coarse_{i:05d}.{suffix}")
    rows, cols = cfg["grid_rows"], cfg["grid_cols"]
    write_image_grid(coarse[: rows * cols], rows, cols, run_dir / f"coarse_grid.{suffix}",
                     labels=labels[: rows * cols] if labels is not None else None)
    print(f"{len(coarse)} coarse images -> {out}")
    return EXIT_OK


def cmd_restore(args):
    cfg = _load_run_config(args)
    gen, role = load_checkpoint(args.checkpoint)
    if role != "generator" or gen.kind != "resgan":
        raise ConfigError(f"checkpoint is a {gen.kind} {role}; restoration needs a resgan generator")
    images, labels = _dataset_or_dir_images(cfg, args)
    coarse = degrade(images, cfg.degrade_config())
    from .models import generate
    from .tensor import Tensor

    restored = []
    for lo in range(0, len(coarse), 128):
        restored.append(generate(gen, Tensor(coarse[lo : lo + 128]), train=False).data)
    restored = np.concatenate(restored)

    run_dir = run_dir_for(cfg)
    out = run_dir / "restored"
    out.mkdir(exist_ok=True)
    suffix = "pgm" if restored.shape[1] == 1 else "ppm"
    for i, img in enumerate(restored):
        write_pnm((img * 255 + 0.5).astype(np.uint8).transpose(1, 2, 0),
                  out / f"restored_{i:05d}.{suffix}")

    rows, cols = cfg["grid_rows"], cfg["grid_cols"]
    k = rows * cols
    lab = labels[:k] if labels is not None else None
    panels = [("coarse", coarse[:k]), ("restored", restored[:k]), ("real", images[:k])]
    grids = []
    from .imaging import grid_from_images

    for _, imgs in panels:
        grids.append(grid_from_images(imgs, rows, cols, labels=lab))
    separator = np.full((grids[0].shape[0], 3, grids[0].shape[2]), 255, dtype=np.uint8)
    triptych = np.concatenate([grids[0], separator, grids[1], separator, grids[2]], axis=1)
    write_pnm(triptych, run_dir / f"restore_panels.{suffix}")
    print(f"{len(restored)} restored images -> {out}")
    return EXIT_OK


def _load_model_pair(run_or_paths):
    path = Path(run_or_paths)
    if path.is_dir():
        gens = sorted(path.glob("gen_*.rgan"))
        discs = sorted(path.glob("disc_*.rgan"))
        if not gens or not discs:
            raise ConfigError(f"no checkpoints under {path}")
        gen, _ = load_checkpoint(gens[-1])
        disc, _ = load_checkpoint(discs[-1])
        return gen, disc
    raise ConfigError(f"{path} is not a run directory")


def cmd_eval(args):
    cfg = _load_run_config(args)
    gen, disc = _load_model_pair(args.checkpoint_dir or run_dir_for(cfg))
    dataset = resolve_dataset(cfg)
    train_ds, eval_ds = split_dataset(dataset, cfg["train_count"], cfg["eval_count"],
                                      cfg["data_seed"])
    tc = cfg.train_config(kind=gen.kind)
    probe = None
    if cfg["probe"] == "external" or gen.kind != "resgan":
        probe = _make_probe(cfg, train_ds)
    report = evaluate((gen, disc), eval_ds, tc, probe=probe)
    print(f"{report.kind} on {report.dataset}: {format_cell(report.loss, report.accuracy)}")
    return EXIT_OK


def cmd_bench(args):
    cfg = _load_run_config(args)
    kinds = [k.strip() for k in cfg["bench_kinds"].split(",") if k.strip()]
    dataset_specs = [s.strip() for s in (cfg["bench_datasets"] or cfg["dataset"]).split(",")
                     if s.strip()]
    run_dir = run_dir_for(cfg)
    write_manifest(cfg, run_dir)

    table = {}
    for spec in dataset_specs:
        data_cfg = cfg.with_overrides({"dataset": spec})
        dataset = resolve_dataset(data_cfg)
        train_ds, eval_ds = split_dataset(dataset, cfg["train_count"], cfg["eval_count"],
                                          cfg["data_seed"])
        probe = _make_probe(cfg, train_ds)
        for kind in kinds:
            tc = cfg.train_config(kind=kind)
            window_reports = []

            def eval_hook(epoch, gen, disc, _tc=tc, _reports=window_reports):
                if epoch >= cfg["epochs"] - cfg["eval_window"]:
                    _reports.append(evaluate((gen, disc), eval_ds, _tc, probe=probe))

            try:
                train(tc, train_ds, eval_hook=eval_hook)
                loss = float(np.mean([r.loss for r in window_reports]))
                acc = float(np.mean([r.accuracy for r in window_reports]))
                table[(kind, spec)] = format_cell(loss, acc)
            except TrainingDiverged as exc:
                table[(kind, spec)] = "diverged"
                print(f"{kind} on {spec}: diverged at epoch {exc.epoch}", file=sys.stderr)

    csv_path = run_dir / "bench.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write("kind,dataset,cell\n")
        for (kind, spec), cell in sorted(table.items()):
            fh.write(f"{kind},{spec},{cell}\n")

    width = max(len(s) for s in dataset_specs + ["model"]) + 2
    lines = ["model".ljust(8) + "".join(s.rjust(width) for s in dataset_specs)]
    for kind in kinds:
        lines.append(kind.ljust(8)
                     + "".join(table[(kind, s)].rjust(width) for s in dataset_specs))
    text = "\n".join(lines) + "\n"
    (run_dir / "bench.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="resgan",
                                     description="adversarial restoration lab")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, fn in (("train", cmd_train), ("degrade", cmd_degrade),
                     ("restore", cmd_restore), ("eval", cmd_eval), ("bench", cmd_bench)):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, help="flat TOML run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key")
        p.add_argument("--out", help="output root (default $RESGAN_OUT or ./runs)")
        p.add_argument("--seed", type=int, help="override the run seed")
        if verb in ("degrade", "restore"):
            p.add_argument("--input-dir", help="directory of .pgm/.ppm inputs")
        if verb == "restore":
            p.add_argument("--checkpoint", required=True, help="resgan generator checkpoint")
        if verb == "eval":
            p.add_argument("--checkpoint-dir", help="run directory holding checkpoints")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FormatError, ShapeError, IoError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except TrainingDiverged as exc:
        print(f"error: training diverged at epoch {exc.epoch}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
