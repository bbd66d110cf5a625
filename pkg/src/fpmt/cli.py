"""Command-line front end.

Subcommands:

- ``generate-data``  write a synthetic incident CSV
- ``augment``        GAN-balance a CSV to a target per-class count
- ``train``          run the three-stage pipeline, write checkpoint + report
- ``evaluate``       score a checkpoint against a labeled CSV
- ``ablate``         run a variants x label-counts x seeds grid

Config files are ``key = value`` lines (``#`` comments) mirroring the
pipeline configuration fields, e.g. ``mix_policy = confidence`` or
``w_max = 1.0``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .data import (DEFAULT_DELTA, NormStats, generate_synthetic, load_csv,
                   save_csv, UNLABELED)
from .encoder import load_checkpoint, predict_labels, save_checkpoint
from .errors import ConfigError, FpmtError
from .evalcli import (AblationGrid, emit_report, run_ablation, save_rows_csv)
from .gan_augment import GanConfig, balance_and_expand
from .metrics import compute_metrics
from .mixing import MixPolicy
from .pipeline import PipelineConfig, run_fpmt

# key -> (target, coercion); targets: plain PipelineConfig fields, the mix
# policy, or the GAN sub-config
_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _as_bool(text: str) -> bool:
    try:
        return _BOOL[text.lower()]
    except KeyError:
        raise ConfigError(f"expected a boolean, got {text!r}") from None


_CONFIG_KEYS = {
    "stage1_epochs": int, "stage2_epochs": int, "stage3_epochs": int,
    "batch_size": int, "lr_encoder": float, "lr_head": float, "lr_scale": float,
    "mix_layer": int, "w_max": float, "w_ramp_fraction": float,
    "kl_direction": str, "depth": int, "width": int, "activation": str,
    "class_count": int, "mask_rate": float, "labeled_per_class": int,
    "unlabeled_per_class": int, "test_per_class": int, "target_per_class": int,
    "seed": int, "variant": str, "gan_enabled": _as_bool,
    "mix_policy": str, "beta_alpha": float, "use_lambda_max": _as_bool,
    "gan_steps": int, "gan_batch": int, "gan_lr": float, "gan_latent_dim": int,
    "gan_seed": int,
}


def parse_config_file(path) -> dict[str, object]:
    """Read ``key = value`` lines into a typed mapping."""
    values: dict[str, object] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _CONFIG_KEYS[key](value)
    return values


def config_from_mapping(values: dict[str, object],
                        base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    policy_kw, gan_kw, plain = {}, {}, {}
    for key, value in values.items():
        if key == "mix_policy":
            policy_kw["mode"] = value
        elif key == "beta_alpha":
            policy_kw["beta_alpha"] = value
        elif key == "use_lambda_max":
            policy_kw["use_lambda_max"] = value
        elif key.startswith("gan_"):
            gan_kw[key[4:]] = value
        else:
            plain[key] = value
    if policy_kw:
        plain["mix_policy"] = replace(cfg.mix_policy, **policy_kw)
    if gan_kw:
        plain["gan"] = replace(cfg.gan, **gan_kw)
    return replace(cfg, **plain)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_generate_data(args) -> int:
    ds = generate_synthetic(args.normal, args.incident, d=args.features,
                            seed=args.seed, delta=args.delta)
    save_csv(ds, args.out)
    print(f"wrote {ds.n} rows x {ds.d} features to {args.out}")
    return 0


def cmd_augment(args) -> int:
    ds = load_csv(getattr(args, "in"))
    out = balance_and_expand(ds, args.target_per_class,
                             GanConfig(seed=args.seed, steps=args.gan_steps))
    save_csv(out, args.out)
    counts = out.class_counts()
    print(f"balanced to {counts} ({int(out.synthetic.sum())} synthetic rows) "
          f"-> {args.out}")
    return 0


def cmd_train(args) -> int:
    values = parse_config_file(args.config) if args.config else {}
    cfg = config_from_mapping(values)
    overrides = {"seed": args.seed}
    if args.variant:
        overrides["variant"] = args.variant
    if args.labels_per_class:
        overrides["labeled_per_class"] = args.labels_per_class
    if args.unlabeled_per_class:
        overrides["unlabeled_per_class"] = args.unlabeled_per_class
    if args.test_per_class:
        overrides["test_per_class"] = args.test_per_class
    cfg = replace(cfg, **overrides)  # replace re-runs the variant derivation

    result = run_fpmt(args.data, cfg)
    save_checkpoint(result.encoder, args.out_ckpt, extras=result.norm_extras)
    result.report.save_csv(args.report)
    m = result.report.final_metrics
    print(f"variant={cfg.variant or 'custom'} seed={cfg.seed} "
          f"CR={m.cr:.2f} DR={m.dr:.2f} F1={m.f1:.2f}")
    print(f"checkpoint -> {args.out_ckpt}\nreport -> {args.report}")
    return 0


def cmd_evaluate(args) -> int:
    encoder, extras = load_checkpoint(args.ckpt)
    ds = load_csv(args.data)
    features = ds.features
    if "norm.mean" in extras:
        stats = NormStats(mean=extras["norm.mean"].reshape(-1),
                          std=extras["norm.std"].reshape(-1),
                          kept=extras["norm.kept"].reshape(-1).astype(int))
        features = stats.apply(features)
    labeled_rows = ds.labels != UNLABELED
    if not labeled_rows.all():
        print(f"note: skipping {int((~labeled_rows).sum())} unlabeled rows")
    predictions = predict_labels(encoder, features[labeled_rows])
    m = compute_metrics(predictions, ds.labels[labeled_rows])
    print(f"CR={m.cr:.2f} DR={m.dr:.2f} F1={m.f1:.2f} "
          f"(TP={m.counts.tp} FP={m.counts.fp} TN={m.counts.tn} FN={m.counts.fn})")
    return 0


_GRID_KEYS = {"variants": str, "label_counts": str, "seeds": str,
              "data_csv": str, "n_normal": int, "n_incident": int, "delta": float}


def _parse_grid_file(path) -> tuple[dict[str, object], dict[str, object]]:
    grid_vals, config_vals = {}, {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key in _GRID_KEYS:
                grid_vals[key] = _GRID_KEYS[key](value)
            elif key in _CONFIG_KEYS:
                config_vals[key] = _CONFIG_KEYS[key](value)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return grid_vals, config_vals


def cmd_ablate(args) -> int:
    grid_vals, config_vals = _parse_grid_file(args.grid)
    kwargs = {}
    if "variants" in grid_vals:
        kwargs["variants"] = [v.strip() for v in grid_vals["variants"].split(",")]
    if "label_counts" in grid_vals:
        kwargs["label_counts"] = [int(v) for v in grid_vals["label_counts"].split(",")]
    if "seeds" in grid_vals:
        kwargs["seeds"] = [int(v) for v in grid_vals["seeds"].split(",")]
    for key in ("data_csv", "n_normal", "n_incident", "delta"):
        if key in grid_vals:
            kwargs[key] = grid_vals[key]
    grid = AblationGrid(base_config=config_from_mapping(config_vals), **kwargs)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_ablation(
        grid, progress=lambda v, k, s: print(f"done: {v} labels={k} seed={s}"))
    save_rows_csv(result.rows, out_dir / "rows.csv")
    emit_report(result, out_dir / "aggregate.csv", format="csv")
    emit_report(result, out_dir / "aggregate.md", format="markdown")
    print(f"wrote {len(result.rows)} rows to {out_dir}")
    for variant, labels, seed, err in result.failures:
        print(f"FAILED cell ({variant}, {labels}, {seed}): {err}", file=sys.stderr)
    return 1 if result.failures else 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpmt", description="semi-supervised incident detection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="write a synthetic incident CSV")
    p.add_argument("--normal", type=int, required=True)
    p.add_argument("--incident", type=int, required=True)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--features", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("augment", help="GAN-balance a CSV")
    p.add_argument("--in", dest="in", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-per-class", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gan-steps", type=int, default=600)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="run the three-stage pipeline")
    p.add_argument("--data", required=True)
    p.add_argument("--variant", choices=["mt", "pmt", "fpmt"])
    p.add_argument("--labels-per-class", type=int)
    p.add_argument("--unlabeled-per-class", type=int)
    p.add_argument("--test-per-class", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key = value overrides")
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled CSV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run an ablation grid")
    p.add_argument("--grid", required=True, help="grid config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FpmtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
