"""Command-line surface: dataset building, training, evaluation, inspection.

Every command exits nonzero on any error. Relative output directories are
resolved against the FOPROKD_OUT_ROOT environment variable when it is set,
so batch jobs can share one artifact root.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import torch

from .config import load_config
from .data import DatasetManifest, build_longtail_split, isic_longtail_spec
from .exceptions import CheckpointError, FoproKDError, InvalidArgumentError
from .fpg import sample_noise
from .metrics import confusion_matrix
from .training import TrainingRun, load_best_into_run, train
from . import viz

OUT_ROOT_ENV = "FOPROKD_OUT_ROOT"


def resolve_out(path_str: str) -> Path:
    path = Path(path_str)
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not path.is_absolute():
        return Path(root) / path
    return path


def _counts_table(manifest: DatasetManifest, class_names) -> str:
    lines = [f"{'class':<12}{'train':>8}{'val':>8}{'test':>8}"]
    train = manifest.split_counts("train")
    val = manifest.split_counts("val")
    test = manifest.split_counts("test")
    for i, name in enumerate(class_names):
        lines.append(f"{name:<12}{train[i]:>8}{val[i]:>8}{test[i]:>8}")
    lines.append(f"{'total':<12}{sum(train):>8}{sum(val):>8}{sum(test):>8}")
    return "\n".join(lines)


def cmd_build_dataset(args) -> int:
    out = resolve_out(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.source_manifest:
        spec = isic_longtail_spec(
            args.ratio, seed=args.seed if args.seed is not None else 0
        )
        pool = DatasetManifest.read_csv(args.source_manifest)
        manifest = build_longtail_split(pool, spec)
        class_names = spec.class_names
    elif args.config:
        from .training import build_manifest

        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.data.seed = args.seed
        manifest = build_manifest(cfg)
        class_names = [f"class_{i}" for i in range(cfg.data.num_classes)]
    else:
        raise InvalidArgumentError("provide --config or --source-manifest")
    manifest.write_csv(out / "manifest.csv")
    table = _counts_table(manifest, class_names)
    (out / "split_counts.txt").write_text(table + "\n")
    print(table)
    print(f"manifest written to {out / 'manifest.csv'}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.data.seed = args.seed
    if args.out:
        cfg.out_dir = str(resolve_out(args.out))
    else:
        cfg.out_dir = str(resolve_out(cfg.out_dir))
    if args.device:
        cfg.device = args.device
    result = train(cfg, resume=args.resume)
    records = viz.load_metrics(result.metrics_path)
    plots = Path(result.out_dir) / "plots"
    plots.mkdir(exist_ok=True)
    viz.plot_loss_curves(records, plots / "loss_curves.png")
    viz.plot_validation_curve(records, plots / "validation.png")
    print(
        f"finished after {result.epochs_run} epochs"
        f"{' (early stop)' if result.stopped_early else ''}; "
        f"best validation accuracy {result.best_val_accuracy:.4f} "
        f"at epoch {result.best_epoch}"
    )
    print(f"artifacts in {result.out_dir}")
    return 0


def _run_from_dir(run_dir: Path) -> TrainingRun:
    config_path = run_dir / "config.yaml"
    if not config_path.exists():
        raise CheckpointError(f"{run_dir} has no config.yaml; is it a run directory?")
    cfg = load_config(config_path)
    cfg.out_dir = str(run_dir)
    return TrainingRun(cfg)


def cmd_evaluate(args) -> int:
    run_dir = resolve_out(args.run)
    run = _run_from_dir(run_dir)
    load_best_into_run(run)
    report = run.evaluate_split(args.split)
    true_labels, predicted = run.predict(
        {"train": run.train_set, "val": run.val_set, "test": run.test_set}[args.split]
    )
    cm = confusion_matrix(true_labels, predicted, run.cfg.data.num_classes)

    reports_dir = run_dir / "reports"
    reports_dir.mkdir(exist_ok=True)
    with open(reports_dir / f"metrics_{args.split}.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
    class_names = [f"class_{i}" for i in range(run.cfg.data.num_classes)]
    with open(reports_dir / f"confusion_{args.split}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + class_names)
        for i, name in enumerate(class_names):
            writer.writerow([name] + cm[i].tolist())
    viz.render_confusion(cm, class_names, reports_dir / f"confusion_{args.split}.png")

    print(f"split: {args.split}  samples: {report.num_samples}")
    print(f"mcc: {report.mcc:.4f}  accuracy: {report.accuracy:.4f}  "
          f"balanced_accuracy: {report.balanced_accuracy:.4f}  "
          f"macro_f1: {report.macro_f1:.4f}")
    for group in ("head", "medium", "tail", "all"):
        value = report.grouped.get(group)
        rendered = "undefined" if value is None else f"{value:.4f}"
        print(f"  {group}: {rendered}")
    print(f"reports in {reports_dir}")
    return 0


def cmd_inspect_prompts(args) -> int:
    run_dir = resolve_out(args.run)
    run = _run_from_dir(run_dir)
    if run.fpg is None:
        raise InvalidArgumentError(
            f"method '{run.cfg.method}' trains no prompt generator; nothing to inspect"
        )
    load_best_into_run(run)
    out = run_dir / "prompts"
    out.mkdir(exist_ok=True)

    gen = torch.Generator().manual_seed(args.seed if args.seed is not None else 0)
    with torch.no_grad():
        prompts = torch.stack(
            [run.fpg(sample_noise(run.cfg.model.noise_dim, generator=gen))
             for _ in range(args.num_samples)]
        )
    viz.render_prompt_grid(prompts, out / "prompts.png")

    picks = torch.randperm(len(run.test_set), generator=gen)[:args.num_samples]
    images, _ = run.test_set.batch(picks.tolist())
    alphas = [1.0, 0.75, 0.5, 0.25, 0.0]
    with torch.no_grad():
        panel = viz.mix_panel(images, prompts[0], alphas)
    viz.render_mix_grid(images, panel, alphas, out / "mix_grid.png")
    import numpy as np

    np.savez(
        out / "panel_u8.npz",
        x=viz.image_to_uint8(images),
        x_hat=np.stack([
            np.stack([viz.image_to_uint8(panel[r, c]) for c in range(panel.shape[1])])
            for r in range(panel.shape[0])
        ]),
        alphas=np.asarray(alphas),
    )
    print(f"prompt grids written to {out}")
    return 0


def _load_report(run_dir: Path) -> tuple[str, int, dict]:
    config_path = run_dir / "config.yaml"
    report_path = run_dir / "reports" / "metrics_test.json"
    if not config_path.exists():
        raise CheckpointError(f"{run_dir}: no config.yaml")
    if not report_path.exists():
        raise CheckpointError(
            f"{run_dir}: no test report; run 'foprokd evaluate --run {run_dir}' first"
        )
    cfg = load_config(config_path)
    with open(report_path) as fh:
        report = json.load(fh)
    return cfg.method, cfg.data.num_classes, report


def cmd_compare(args) -> int:
    rows = []
    class_counts = set()
    for run_dir in args.runs:
        method, num_classes, report = _load_report(resolve_out(run_dir))
        class_counts.add(num_classes)
        rows.append((method, report))
    if len(class_counts) > 1:
        raise InvalidArgumentError(
            f"runs evaluate different class sets {sorted(class_counts)}; refusing to compare"
        )
    metric_keys = ("mcc", "accuracy", "balanced_accuracy", "macro_f1")
    by_method: dict[str, list[dict]] = {}
    for method, report in rows:
        by_method.setdefault(method, []).append(report)

    def _mean_std(values):
        mean = sum(values) / len(values)
        if len(values) < 2:
            return mean, None
        var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
        return mean, math.sqrt(var)

    table = []
    for method, reports in by_method.items():
        entry = {"method": method, "runs": len(reports)}
        for key in metric_keys:
            entry[key] = _mean_std([r[key] for r in reports])
        table.append(entry)
    table.sort(key=lambda e: e["balanced_accuracy"][0], reverse=True)

    header = f"{'method':<14}{'runs':>5}" + "".join(f"{k:>24}" for k in metric_keys)
    print(header)
    for entry in table:
        cells = ""
        for key in metric_keys:
            mean, std = entry[key]
            cells += f"{mean:.4f} ({'--' if std is None else f'{std:.4f}'})".rjust(24)
        print(f"{entry['method']:<14}{entry['runs']:>5}" + cells)

    out_path = resolve_out(args.out)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "runs"] + [f"{k}_{s}" for k in metric_keys
                                              for s in ("mean", "std")])
        for entry in table:
            record = [entry["method"], entry["runs"]]
            for key in metric_keys:
                mean, std = entry[key]
                record += [mean, "" if std is None else std]
            writer.writerow(record)
    print(f"comparison written to {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foprokd",
        description="Fourier-prompted knowledge distillation for long-tailed classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="construct a long-tailed split manifest")
    p.add_argument("--config", help="experiment config (synthetic dataset mode)")
    p.add_argument("--source-manifest", help="CSV pool of all images (path,label,split)")
    p.add_argument("--ratio", default="1:100", help="imbalance ratio for the fixture targets")
    p.add_argument("--seed", type=int, help="sampling seed (default: config seed or 0)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("train", help="run one training experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override the config seed (run and data)")
    p.add_argument("--out", help="override the config output directory")
    p.add_argument("--device", help="override the config device")
    p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate the best checkpoint of a run")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-prompts", help="export prompt and mixing image grids")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--num-samples", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inspect_prompts)

    p = sub.add_parser("compare", help="aggregate test reports across runs")
    p.add_argument("runs", nargs="+", help="run directories with test reports")
    p.add_argument("--out", default="comparison.csv", help="CSV output path")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FoproKDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
