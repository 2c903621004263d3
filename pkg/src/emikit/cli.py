"""Command-line entry point.

Subcommands: ``eda`` (split summaries + shift report), ``synth`` (seeded
synthetic corpus), ``train`` (staged pipeline), ``evaluate`` (metrics on a
labeled split), ``predict`` (submission-style CSV). Exit codes: 0 success,
2 configuration error, 3 data validation error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import eda, training
from .config import RunConfig, apply_overrides, load_config
from .data import (
    EMOTION_DIMENSIONS,
    apply_split_plan,
    expand_split,
    load_dataset,
    make_split_plan,
    split_samples,
    write_labels_csv,
)
from .errors import ConfigError, DataError, NumericError, TapeError, ValidationError
from .models import load_checkpoint, save_checkpoint
from .synthetic import SyntheticSpec, generate_synthetic_corpus


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emikit",
        description="Staged multimodal training for emotional mimicry intensity regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eda = sub.add_parser("eda", help="write split summaries and a label shift report")
    p_eda.add_argument("--manifest", required=True)
    p_eda.add_argument("--out", required=True, help="directory for the report files")

    p_synth = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p_synth.add_argument("--config", help="TOML file of synthetic-spec keys (all optional)")
    p_synth.add_argument("--seed", type=int, default=42)
    p_synth.add_argument("--out", required=True, help="corpus output directory")

    p_train = sub.add_parser("train", help="run stage-1 unimodal training then stage-2 fusion")
    p_train.add_argument("--config", help="run configuration TOML")
    p_train.add_argument("--manifest", help="overrides the config's dataset manifest")
    p_train.add_argument("--stage", default="all",
                         help="comma list of text,audio,vision,motion,fusion or 'all'")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--out", help="overrides the config's output directory")
    p_train.add_argument("--modalities", help="comma list overriding the configured modality set")
    p_train.add_argument("--clamp", action="store_true", default=None,
                         help="clamp predictions to [0,1] before validation metrics")

    p_eval = sub.add_parser("evaluate", help="metrics for a checkpoint on a labeled split")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--split", default="valid", choices=["train", "valid", "test"])
    p_eval.add_argument("--clamp", action="store_true")
    p_eval.add_argument("--out", help="optional path for a JSON metrics report")

    p_pred = sub.add_parser("predict", help="write clamped predictions as a labels-layout CSV")
    p_pred.add_argument("checkpoint")
    p_pred.add_argument("--manifest", required=True)
    p_pred.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p_pred.add_argument("--out", required=True, help="output CSV path")
    return parser


def cmd_eda(args) -> int:
    manifest, samples = load_dataset(args.manifest)
    groups = split_samples(manifest, samples)
    if not groups["train"] or not groups["valid"]:
        raise ValidationError("eda needs nonempty labeled train and valid splits")
    summaries = {name: eda.summarize_split(groups[name])
                 for name in ("train", "valid") if groups[name]}
    shift = eda.shift_report(groups["train"], groups["valid"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.txt").write_text(eda.render_summary_text(summaries), encoding="utf-8")
    (out / "summary.csv").write_text(eda.render_summary_csv(summaries), encoding="utf-8")
    (out / "shift.txt").write_text(eda.render_shift_text(shift), encoding="utf-8")
    (out / "shift.csv").write_text(eda.render_shift_csv(shift), encoding="utf-8")
    print(eda.render_summary_text(summaries))
    print(eda.render_shift_text(shift))
    print(f"reports written to {out}")
    return 0


def _parse_synth_spec(path: str | None) -> SyntheticSpec:
    if path is None:
        return SyntheticSpec()
    import tomli

    try:
        doc = tomli.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read synthetic spec {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"synthetic spec is not valid TOML: {exc}") from exc
    if "synthetic" in doc and isinstance(doc["synthetic"], dict):
        doc = doc["synthetic"]
    known = {f.name: f for f in fields(SyntheticSpec)}
    kwargs = {}
    for key, value in doc.items():
        if key not in known:
            raise ConfigError(f"unknown synthetic spec key {key!r}")
        current = known[key].default
        if isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"synthetic spec {key} must be a boolean")
            kwargs[key] = value
        elif isinstance(current, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"synthetic spec {key} must be an integer")
            kwargs[key] = value
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"synthetic spec {key} must be a number")
            kwargs[key] = float(value)
    return SyntheticSpec(**kwargs)


def cmd_synth(args) -> int:
    spec = _parse_synth_spec(args.config)
    try:
        manifest_path = generate_synthetic_corpus(spec, args.seed, args.out)
    except OSError as exc:
        raise ValidationError(f"cannot write corpus to {args.out}: {exc}") from exc
    print(f"wrote {spec.n_samples}-sample corpus: {manifest_path}")
    return 0


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    modalities = args.modalities.split(",") if args.modalities else None
    cfg = apply_overrides(cfg, seed=args.seed, out_dir=args.out,
                          manifest=args.manifest, modalities=modalities,
                          clamp=args.clamp)
    if not cfg.data.manifest:
        raise ConfigError("no dataset manifest given (config [data].manifest or --manifest)")
    return cfg


def _resolve_splits(cfg: RunConfig):
    manifest, samples = load_dataset(cfg.data.manifest)
    plan = make_split_plan(manifest, cfg.data.split_seed)
    if cfg.data.split_ratio == "4:1":
        total = len(plan.train_ids) + len(plan.valid_ids)
        target = cfg.data.target_train or int(round(0.8 * total))
        plan = expand_split(plan, target, cfg.data.split_seed)
    return manifest, apply_split_plan(manifest, samples, plan)


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    requested = [s.strip() for s in args.stage.split(",")] if args.stage != "all" else None
    stages = list(cfg.data.modalities) + ["fusion"]
    if requested:
        unknown = [s for s in requested if s not in stages]
        if unknown:
            raise ConfigError(
                f"--stage {','.join(unknown)}: not in this run's stages ({', '.join(stages)})"
            )
        stages = [s for s in stages if s in requested]
    _, groups = _resolve_splits(cfg)
    out = Path(cfg.out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    config_hash = cfg.config_hash()
    (out / "config.toml").write_text(cfg.to_toml(), encoding="utf-8")

    stage1: dict = {}
    for modality in [s for s in stages if s != "fusion"]:
        bundle, state = training.train_unimodal(
            modality, groups["train"], groups["valid"], cfg, log_path=log_path
        )
        stage1[modality] = bundle
        save_checkpoint(
            ckpt_dir / f"{modality}.zip", bundle, config_hash,
            rng_state={"seed": cfg.seed},
            meta={"best_val_r": state.best_metric, "best_epoch": state.best_epoch},
        )
        print(f"[stage 1] {modality}: best val r̄ {state.best_metric:.4f} "
              f"at epoch {state.best_epoch} ({state.epoch} run)")
    if "fusion" in stages:
        for modality in cfg.data.modalities:
            if modality in stage1:
                continue
            path = ckpt_dir / f"{modality}.zip"
            if not path.exists():
                raise ValidationError(
                    f"fusion stage needs a stage-1 checkpoint for {modality!r}; "
                    f"run --stage {modality} first (looked at {path})"
                )
            stage1[modality], _ = load_checkpoint(path)
        bundle, state = training.train_fusion(
            stage1, groups["train"], groups["valid"], cfg, log_path=log_path
        )
        save_checkpoint(
            ckpt_dir / "fusion.zip", bundle, config_hash,
            rng_state={"seed": cfg.seed},
            meta={"best_val_r": state.best_metric, "best_epoch": state.best_epoch},
        )
        print(f"[stage 2] fusion: best val r̄ {state.best_metric:.4f} "
              f"at epoch {state.best_epoch} ({state.epoch} run)")
    print(f"checkpoints in {ckpt_dir}, log at {log_path}")
    return 0


def _split_group(manifest, samples, split: str):
    groups = split_samples(manifest, samples)
    if not groups[split]:
        raise ValidationError(f"manifest has no {split!r} samples")
    return groups[split]


def cmd_evaluate(args) -> int:
    bundle, index = load_checkpoint(args.checkpoint)
    manifest, samples = load_dataset(args.manifest)
    chosen = _split_group(manifest, samples, args.split)
    report = training.evaluate(bundle, chosen, clamp=args.clamp)
    print(f"split={args.split} n={report.sample_count} stage={bundle.stage}")
    for dim, r, c in zip(EMOTION_DIMENSIONS, report.pearson_per_dim, report.ccc_per_dim):
        print(f"  {dim:<14} r={r:+.4f}  ccc={c:+.4f}")
    print(f"  average r̄ = {report.average_pearson:.4f}   mse = {report.mse:.6f}")
    if args.out:
        doc = report.as_dict()
        doc["split"] = args.split
        doc["checkpoint_config_hash"] = index.get("config_hash", "")
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
        print(f"report written to {args.out}")
    return 0


def cmd_predict(args) -> int:
    bundle, _ = load_checkpoint(args.checkpoint)
    manifest, samples = load_dataset(args.manifest)
    chosen = _split_group(manifest, samples, args.split)
    preds = training.predict_matrix(bundle, chosen, clamp=True)
    rows = [(s.id, preds[i]) for i, s in enumerate(chosen)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_labels_csv(out, rows)
    print(f"wrote {len(rows)} predictions to {out}")
    return 0


_COMMANDS = {
    "eda": cmd_eda,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, TapeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
