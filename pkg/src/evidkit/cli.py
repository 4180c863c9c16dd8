"""Command-line pipeline: generate, train, eval, ood.

Every command is deterministic given its seed and inputs; reports and
checkpoints are byte-identical across reruns with the same arguments.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure during training.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .base_rates import CIWTable, adjust_base_rates
from .datasets import (
    GenConfig,
    generate_dataset,
    load_ciw_config,
    load_dataset,
    random_ciw_table,
    samples_to_arrays,
    save_ciw_config,
    save_dataset,
)
from .errors import ConfigError, DataFormatError, TrainingDiverged
from .evaluation import (
    MetricsReport,
    auroc,
    aupr,
    f1_normal,
    f2_ciw,
    fpr_at_95_tpr,
    parse_aggregation,
    per_class_f2,
    predict_batch,
    render_report,
    write_scores_csv,
)
from .network import (
    TrainConfig,
    batch_evidence,
    finetune_head,
    init_head,
    load_checkpoint,
    save_checkpoint,
    train_model,
)
from .opinions import DEFAULT_PRIOR_WEIGHT

CHECKPOINT_FILENAME = "model.ckpt"
TRAIN_LOG_FILENAME = "train_log.yaml"
EVAL_REPORT_FILENAME = "eval_report.yaml"
OOD_REPORT_FILENAME = "ood_report.yaml"
OOD_SCORES_FILENAME = "ood_scores.csv"
CIW_FILENAME = "ciw.tsv"

# defaults for the two training phases: from-scratch vs head-only
SCRATCH_EPOCHS, SCRATCH_LR = 60, 0.1
FINETUNE_EPOCHS, FINETUNE_LR = 20, 0.001


def _parse_hidden(text: str) -> tuple[int, ...]:
    if text.strip() == "":
        return ()
    try:
        sizes = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"--hidden must be comma-separated integers, got {text!r}") from None
    if any(s < 1 for s in sizes):
        raise ConfigError(f"hidden layer sizes must be >= 1, got {text!r}")
    return sizes


def _align_ciw(table: CIWTable, class_names) -> CIWTable:
    """Reorder a CIW table to the dataset's known-class order."""
    by_name = dict(table.entries)
    missing = [c for c in class_names if c not in by_name]
    extra = [n for n in by_name if n not in set(class_names)]
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing classes {missing}")
        if extra:
            parts.append(f"unexpected classes {extra}")
        raise ConfigError("CIW table does not match the dataset: " + "; ".join(parts))
    return CIWTable.from_pairs((c, by_name[c]) for c in class_names)


def _base_rate_arrays(ciw: CIWTable):
    bases = adjust_base_rates(ciw)
    a_pos = np.array([p.a_pos for p in bases])
    a_neg = np.array([p.a_neg for p in bases])
    return a_pos, a_neg


def _check_model_matches(mlp, head, split):
    if mlp.dim_in != split.dim:
        raise ConfigError(
            f"checkpoint expects {mlp.dim_in}-dimensional inputs but the dataset has "
            f"dim {split.dim}"
        )
    if head.num_classes != split.k_known:
        raise ConfigError(
            f"checkpoint has {head.num_classes} classes but the dataset has "
            f"{split.k_known} known classes"
        )


def _write_yaml(path: Path, doc: dict) -> None:
    path.write_text(yaml.safe_dump(doc, sort_keys=True, default_flow_style=False),
                    encoding="utf-8", newline="\n")


def _check_prediction_flags(args) -> None:
    if not args.prior_weight > 0:
        raise ConfigError(f"--prior-weight must be > 0, got {args.prior_weight}")
    threshold = getattr(args, "threshold", None)
    if threshold is not None and not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"--threshold must be in [0, 1], got {threshold}")


def cmd_generate(args) -> int:
    cfg = GenConfig(
        k_known=args.known,
        k_unknown=args.unknown,
        dim=args.dim,
        n_train=args.train_samples,
        n_val=args.val_samples,
        separation=args.separation,
        cooccurrence=args.cooccurrence,
        noise=args.noise,
        normal_rate=args.normal_rate,
        unknown_rate=args.unknown_rate,
        unknown_scale=args.unknown_scale,
        seed=args.seed,
    )
    split = generate_dataset(cfg)
    out = Path(args.out)
    save_dataset(split, out)
    ciw = random_ciw_table(split.known_classes, seed=cfg.seed)
    save_ciw_config(ciw, out / CIW_FILENAME)
    n_unknown = sum(s.is_unknown for s in split.validation)
    print(f"wrote {len(split.train)} train / {len(split.validation)} val samples to {args.out}")
    print(f"known classes: {', '.join(split.known_classes)}")
    print(f"unknown classes (validation only, {n_unknown} samples): "
          f"{', '.join(split.unknown_classes) or 'none'}")
    print(f"class importance weights: {args.out}/{CIW_FILENAME}")
    return 0


def cmd_train(args) -> int:
    _check_prediction_flags(args)
    split = load_dataset(args.data)
    ciw = _align_ciw(load_ciw_config(args.ciw), split.known_classes)
    _, x, y, _ = samples_to_arrays(split.train, split.k_known, split.dim)

    epochs = args.epochs if args.epochs is not None else (
        FINETUNE_EPOCHS if args.freeze_backbone else SCRATCH_EPOCHS
    )
    lr = args.lr if args.lr is not None else (
        FINETUNE_LR if args.freeze_backbone else SCRATCH_LR
    )
    config = TrainConfig(
        epochs=epochs,
        batch_size=args.batch_size,
        learning_rate=lr,
        lr_decay_ratio=args.lr_decay_ratio,
        lr_decay_every=args.lr_decay_every,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    hidden = _parse_hidden(args.hidden)

    if args.init_from and not args.freeze_backbone:
        raise ConfigError("--init-from is only supported together with --freeze-backbone")
    if args.freeze_backbone:
        if not args.init_from:
            raise ConfigError("--freeze-backbone requires --init-from CHECKPOINT")
        mlp, old_head = load_checkpoint(args.init_from)
        _check_model_matches(mlp, old_head, split)
        head = init_head(mlp.dim_out, split.k_known, config.seed)
        result = finetune_head(mlp, head, x, y, config, ciw, prior_weight=args.prior_weight)
    else:
        result = train_model(
            x, y, config, ciw,
            hidden=hidden, feature_dim=args.feature_dim, prior_weight=args.prior_weight,
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / CHECKPOINT_FILENAME, result.mlp, result.head)
    log = {
        "command": "train",
        "config": {
            "data": args.data,
            "ciw": args.ciw,
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "lr_decay_ratio": config.lr_decay_ratio,
            "lr_decay_every": config.lr_decay_every,
            "weight_decay": config.weight_decay,
            "seed": config.seed,
            "hidden": list(hidden),
            "feature_dim": args.feature_dim,
            "prior_weight": args.prior_weight,
            "freeze_backbone": bool(args.freeze_backbone),
            "init_from": args.init_from,
        },
        "epoch_losses": [float(v) for v in result.epoch_losses],
        "final_loss": float(result.epoch_losses[-1]) if result.epoch_losses else None,
    }
    _write_yaml(out / TRAIN_LOG_FILENAME, log)
    if result.epoch_losses:
        print(f"trained {config.epochs} epochs; final mean loss {result.epoch_losses[-1]:.6f}")
    else:
        print("trained 0 epochs; checkpoint holds the seeded initialization")
    print(f"checkpoint: {args.out}/{CHECKPOINT_FILENAME}")
    print(f"training log: {args.out}/{TRAIN_LOG_FILENAME}")
    return 0


def cmd_eval(args) -> int:
    _check_prediction_flags(args)
    mlp, head = load_checkpoint(args.checkpoint)
    split = load_dataset(args.data)
    _check_model_matches(mlp, head, split)
    ciw = _align_ciw(load_ciw_config(args.ciw), split.known_classes)

    known = [s for s in split.validation if not s.is_unknown]
    n_unknown = len(split.validation) - len(known)
    if not known:
        raise DataFormatError("validation split has no known samples to score")
    _, x, y, _ = samples_to_arrays(known, split.k_known, split.dim)

    a_pos, a_neg = _base_rate_arrays(ciw)
    evidence = batch_evidence(mlp, head, x)
    batch = predict_batch(
        evidence, a_pos, a_neg, prior_weight=args.prior_weight, threshold=args.threshold
    )
    f1 = f1_normal(batch.labels, y)
    f2 = f2_ciw(batch.labels, y, ciw)
    rows = per_class_f2(batch.labels, y)
    per_class = tuple(
        (name, p, r, f2k, w)
        for (name, w), (p, r, f2k) in zip(ciw.entries, rows)
    )
    report = MetricsReport(
        f1_normal=f1, f2_ciw=f2,
        num_known=len(known), num_unknown=n_unknown,
        per_class=per_class,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "checkpoint": args.checkpoint,
        "data": args.data,
        "ciw": args.ciw,
        "threshold": args.threshold,
        "prior_weight": args.prior_weight,
    }
    (out / EVAL_REPORT_FILENAME).write_text(
        render_report(report, "msdc", config), encoding="utf-8", newline="\n"
    )
    print(f"known-class evaluation on {len(known)} samples "
          f"({n_unknown} unknown samples excluded)")
    print(f"F1_Normal: {f1:.4f}")
    print(f"F2_CIW:    {f2:.4f}")
    print(f"report: {args.out}/{EVAL_REPORT_FILENAME}")
    return 0


def cmd_ood(args) -> int:
    _check_prediction_flags(args)
    mlp, head = load_checkpoint(args.checkpoint)
    split = load_dataset(args.data)
    _check_model_matches(mlp, head, split)
    agg = parse_aggregation(args.agg)

    flags = np.array([s.is_unknown for s in split.validation], dtype=bool)
    if not flags.any():
        raise DataFormatError(
            "validation split contains no unknown samples; nothing to detect"
        )
    ids, x, _, _ = samples_to_arrays(split.validation, split.k_known, split.dim)

    # base rates do not enter the vacuity u = W / S, so uniform ones suffice
    k = split.k_known
    uniform = np.full(k, 0.5)
    evidence = batch_evidence(mlp, head, x)
    batch = predict_batch(evidence, uniform, uniform, prior_weight=args.prior_weight, agg=agg)
    scores = batch.uncertainty

    report = MetricsReport(
        auroc=auroc(scores, flags),
        aupr=aupr(scores, flags),
        fpr95=fpr_at_95_tpr(scores, flags),
        num_known=int((~flags).sum()),
        num_unknown=int(flags.sum()),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {
        "checkpoint": args.checkpoint,
        "data": args.data,
        "aggregation": str(agg),
        "prior_weight": args.prior_weight,
    }
    (out / OOD_REPORT_FILENAME).write_text(
        render_report(report, "ood", config), encoding="utf-8", newline="\n"
    )
    write_scores_csv(out / OOD_SCORES_FILENAME, ids, scores, flags)
    print(f"unknown detection over {len(ids)} validation samples "
          f"({report.num_unknown} unknown), aggregation {agg}")
    print(f"AUROC: {report.auroc:.4f}")
    print(f"AUPR:  {report.aupr:.4f}")
    print(f"FPR95: {report.fpr95:.4f}")
    print(f"report: {args.out}/{OOD_REPORT_FILENAME}")
    print(f"scores: {args.out}/{OOD_SCORES_FILENAME}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evidkit",
        description="Evidential multi-label classification with unknown-class detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate a synthetic dataset")
    gen.add_argument("--out", required=True, help="output directory for dataset files")
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--known", type=int, default=6, help="number of known classes")
    gen.add_argument("--unknown", type=int, default=2,
                     help="number of held-out unknown classes (validation only)")
    gen.add_argument("--dim", type=int, default=8, help="feature dimensionality")
    gen.add_argument("--train-samples", type=int, default=2000)
    gen.add_argument("--val-samples", type=int, default=600)
    gen.add_argument("--separation", type=float, default=6.0,
                     help="prototype radius in units of the noise scale")
    gen.add_argument("--cooccurrence", type=float, default=0.2,
                     help="probability a defect sample carries a second label")
    gen.add_argument("--noise", type=float, default=1.0)
    gen.add_argument("--normal-rate", type=float, default=0.25,
                     help="fraction of label-free samples")
    gen.add_argument("--unknown-rate", type=float, default=0.25,
                     help="fraction of validation samples from unknown classes")
    gen.add_argument("--unknown-scale", type=float, default=2.0,
                     help="unknown prototype distance as a multiple of the pair midpoint")
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train the model on a dataset directory")
    tr.add_argument("--data", required=True, help="dataset directory from `generate`")
    tr.add_argument("--ciw", required=True, help="class importance weight file")
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--epochs", type=int, default=None,
                    help="default 60, or 20 with --freeze-backbone")
    tr.add_argument("--batch-size", type=int, default=64)
    tr.add_argument("--lr", type=float, default=None,
                    help="default 0.1, or 0.001 with --freeze-backbone")
    tr.add_argument("--lr-decay-ratio", type=float, default=0.1)
    tr.add_argument("--lr-decay-every", type=int, default=30)
    tr.add_argument("--weight-decay", type=float, default=1e-4)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--hidden", default="64,64", help="comma-separated hidden layer sizes")
    tr.add_argument("--feature-dim", type=int, default=32)
    tr.add_argument("--prior-weight", type=float, default=DEFAULT_PRIOR_WEIGHT)
    tr.add_argument("--freeze-backbone", action="store_true",
                    help="keep backbone weights fixed and fit a fresh evidence head")
    tr.add_argument("--init-from", default=None,
                    help="checkpoint supplying the frozen backbone")
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="score known-class predictions on the validation split")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--ciw", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--threshold", type=float, default=0.5)
    ev.add_argument("--prior-weight", type=float, default=DEFAULT_PRIOR_WEIGHT)
    ev.set_defaults(func=cmd_eval)

    ood = sub.add_parser("ood", help="rank unknown validation samples by uncertainty")
    ood.add_argument("--checkpoint", required=True)
    ood.add_argument("--data", required=True)
    ood.add_argument("--out", required=True)
    ood.add_argument("--agg", default="max", help="uncertainty aggregation: max, sum, or topN")
    ood.add_argument("--prior-weight", type=float, default=DEFAULT_PRIOR_WEIGHT)
    ood.set_defaults(func=cmd_ood)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
