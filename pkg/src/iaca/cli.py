"""Command-line experiment runner.

Subcommands: gen-data, train, ablation, sweep, dump-attn. Each takes an
optional JSON config file (the ExperimentConfig schema) plus flag
overrides. Output files land under the output root, resolved as:
--out-dir flag, else the config file's out_dir, else $IACA_RESULTS_DIR,
else the working directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .attention import VARIANTS
from .checkpoint import load_checkpoint, save_checkpoint
from .experiments import (
    DEFAULT_SWEEP_FRACTIONS,
    OUTPUT_DIMS,
    ExperimentConfig,
    dump_attention,
    missing_modality_sweep,
    prepare_splits,
    run_ablation,
    save_ablation,
    save_attention_dump,
    save_sweep,
    train_one,
)
from .synth import REGIME_KINDS, Regime, generate, save_dataset
from .training import save_history

ENV_OUT_DIR = "IACA_RESULTS_DIR"


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with ExperimentConfig fields")
    parser.add_argument("--variant", choices=VARIANTS)
    gate = parser.add_mutually_exclusive_group()
    gate.add_argument("--iaca", dest="iaca", action="store_true", default=None,
                      help="attach the two-stage gating (default from config)")
    gate.add_argument("--no-iaca", dest="iaca", action="store_false")
    parser.add_argument("--regime", choices=REGIME_KINDS)
    parser.add_argument("--noise-sigma", type=float)
    parser.add_argument("--corrupt-fraction", type=float,
                        help="fraction of audio clips zeroed in training sequences")
    parser.add_argument("--d", type=int)
    parser.add_argument("--clips", type=int, help="sequence length L")
    parser.add_argument("--n-train", type=int)
    parser.add_argument("--n-val", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--optimizer", choices=("sgd", "adaptive-moment"))
    parser.add_argument("--patience", type=int)
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--av-axis", choices=("columns", "rows"))
    parser.add_argument("--stage1-input", choices=("raw", "self_attended"))
    parser.add_argument("--rjca-iterations", type=int)
    parser.add_argument("--out-dir")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    cfg = ExperimentConfig.from_dict(data)

    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    elif "out_dir" not in data:
        cfg.out_dir = os.environ.get(ENV_OUT_DIR, ".")

    for name in ("variant", "iaca", "d", "seed"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    if args.clips is not None:
        cfg.n_clips = args.clips
    if args.n_train is not None:
        cfg.n_train = args.n_train
    if args.n_val is not None:
        cfg.n_val = args.n_val
    if args.regime is not None:
        cfg.regime.kind = args.regime
    if args.noise_sigma is not None:
        cfg.regime.noise_sigma = args.noise_sigma
    if args.corrupt_fraction is not None:
        cfg.regime.corrupt_fraction = args.corrupt_fraction
    for name in ("epochs", "batch_size", "lr", "optimizer", "patience"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg.train, name, value)
    if args.temperature is not None:
        cfg.flags.temperature = args.temperature
    if args.av_axis is not None:
        cfg.flags.av_axis = args.av_axis
    if args.stage1_input is not None:
        cfg.flags.stage1_input = args.stage1_input
    if args.rjca_iterations is not None:
        cfg.flags.rjca_iterations = args.rjca_iterations

    cfg.validate()
    return cfg


def _out_root(cfg: ExperimentConfig) -> Path:
    root = Path(cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    return root


def _cmd_gen_data(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    regime = Regime(kind=cfg.regime.kind, noise_sigma=cfg.regime.noise_sigma,
                    corrupt_fraction=cfg.regime.corrupt_fraction)
    seqs = generate(regime, cfg.d, cfg.n_clips, args.count, cfg.seed)
    path = _out_root(cfg) / args.out
    save_dataset(seqs, path)
    print(f"wrote {len(seqs)} sequences ({cfg.d}x{cfg.n_clips}, "
          f"{regime.kind}) to {path}")
    return 0


def _ckpt_name(cfg: ExperimentConfig, dim: str) -> str:
    mode = "iaca" if cfg.iaca else "base"
    return f"{cfg.variant.lower()}_{mode}_{dim}"


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    root = _out_root(cfg)
    for dim in args.dims:
        model, result, _ = train_one(cfg, dim)
        stem = args.name or _ckpt_name(cfg, dim)
        if len(args.dims) > 1 and args.name:
            stem = f"{args.name}_{dim}"
        ckpt_path = root / f"{stem}.ckpt"
        save_checkpoint(model, ckpt_path, extra_meta={
            "experiment": asdict(cfg),
            "output_dim": dim,
            "best_val_ccc": result.best_val_ccc,
            "best_epoch": result.best_epoch,
        })
        save_history(result.history, root / f"{stem}_history.csv")
        print(f"{dim}: best val CCC {result.best_val_ccc:.3f} at epoch "
              f"{result.best_epoch} ({len(result.history)} epochs run); "
              f"checkpoint {ckpt_path}")
    return 0


def _cmd_ablation(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    for v in variants:
        if v not in VARIANTS:
            raise SystemExit(f"unknown variant {v!r}; choose from {','.join(VARIANTS)}")
    rows = run_ablation(cfg, variants)
    path = _out_root(cfg) / args.out
    save_ablation(rows, path)
    print(f"wrote {len(rows)} rows to {path}")
    for r in rows:
        digits = 1 if r.iaca == "delta_pct" else 3
        print(f"  {r.variant:5s} {r.iaca:9s} valence {r.valence:.{digits}f} "
              f"arousal {r.arousal:.{digits}f}")
    return 0


def _restore(path):
    ckpt = load_checkpoint(path)
    exp = ckpt.meta.get("experiment")
    if exp is None:
        raise SystemExit(f"{path} carries no experiment config; cannot rebuild data")
    return ckpt.model, ExperimentConfig.from_dict(exp), ckpt.meta.get("output_dim")


def _cmd_sweep(args: argparse.Namespace) -> int:
    val_model, val_cfg, val_dim = _restore(args.checkpoint_valence)
    aro_model, aro_cfg, aro_dim = _restore(args.checkpoint_arousal)
    if val_dim != "valence" or aro_dim != "arousal":
        raise SystemExit("checkpoints must be a (valence, arousal) pair; got "
                         f"({val_dim}, {aro_dim})")
    fractions = ([float(f) for f in args.fractions.split(",")]
                 if args.fractions else list(DEFAULT_SWEEP_FRACTIONS))
    _, valence_val = prepare_splits(val_cfg, "valence")
    _, arousal_val = prepare_splits(aro_cfg, "arousal")
    rows = missing_modality_sweep(val_model, aro_model, valence_val, arousal_val,
                                  fractions)
    if args.out_dir:
        val_cfg.out_dir = args.out_dir
    path = _out_root(val_cfg) / args.out
    save_sweep(rows, path)
    print(f"wrote {len(rows)} fractions to {path}")
    for r in rows:
        print(f"  missing {r.fraction:>4g}: valence {r.valence:.3f} "
              f"arousal {r.arousal:.3f}")
    return 0


def _cmd_dump_attn(args: argparse.Namespace) -> int:
    model, cfg, _ = _restore(args.checkpoint)
    train, val = prepare_splits(cfg, args.dim)
    seqs = val if args.split == "val" else train
    if not 0 <= args.index < len(seqs):
        raise SystemExit(f"sequence index {args.index} out of range "
                         f"(split has {len(seqs)})")
    dump = dump_attention(model, seqs[args.index])
    if args.out_dir:
        cfg.out_dir = args.out_dir
    path = _out_root(cfg) / args.out
    save_attention_dump(dump, path)
    print(f"wrote attention dump for {args.split}[{args.index}] to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iaca",
        description="Gated cross-attention fusion experiments on synthetic "
                    "bimodal sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset CSV")
    _add_config_flags(p)
    p.add_argument("--count", type=int, default=16, help="number of sequences")
    p.add_argument("--out", default="dataset.csv")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one model per output dimension")
    _add_config_flags(p)
    p.add_argument("--dims", nargs="+", choices=OUTPUT_DIMS,
                   default=list(OUTPUT_DIMS))
    p.add_argument("--name", help="checkpoint stem (default from config)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("ablation", help="variant x gating matrix to CSV")
    _add_config_flags(p)
    p.add_argument("--variants", help="comma-separated subset of "
                   + ",".join(VARIANTS))
    p.add_argument("--out", default="ablation.csv")
    p.set_defaults(func=_cmd_ablation)

    p = sub.add_parser("sweep", help="missing-audio robustness of a trained pair")
    p.add_argument("--checkpoint-valence", required=True)
    p.add_argument("--checkpoint-arousal", required=True)
    p.add_argument("--fractions", help="comma-separated, default "
                   + ",".join(str(f) for f in DEFAULT_SWEEP_FRACTIONS))
    p.add_argument("--out", default="sweep.csv")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("dump-attn", help="attention/gate dump for one sequence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dim", choices=OUTPUT_DIMS, default="valence",
                   help="which dimension's dataset to rebuild")
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", default="attention.json")
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_dump_attn)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
