"""Command-line entry point: generate, train, eval, predict, uncertainty, bench, generalize.

Exit codes: 0 success, 2 configuration or missing input, 3 generation failure,
4 training divergence, 5 checkpoint mismatch.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import ValidationError

from app.config import default_jobs, log_level, resolve_seed
from app.datagen.generator import DatasetConfig, generate_dataset, split_configs
from app.datagen.storage import read_dataset, write_dataset, write_manifest
from app.errors import (
    CheckpointError,
    ConvergenceError,
    DatasetFormatError,
    GenerationError,
    McDropoutError,
    ModelConfigError,
    NonFiniteGradientError,
    ScenarioError,
    TrainingDivergedError,
)
from app.export.images import write_contours_csv, write_image
from app.models.grid import MASK_CHANNEL, GridSpec
from app.monitoring.history import TrainingHistory
from app.network.checkpoint import load_checkpoint, save_checkpoint
from app.network.config import ModelConfig
from app.network.unet import SurrogateUNet, build_model, count_parameters, predict
from app.training.benchmark import benchmark_wallclock, scenarios_from_samples
from app.training.evaluation import (
    attention_focus,
    generalization_suite,
    mc_dropout_predict,
    rank_predictions,
)
from app.training.metrics import compute_metrics, write_metrics_csv, write_per_sample_csv
from app.training.trainer import TrainConfig, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_DIVERGED = 4
EXIT_CHECKPOINT = 5

RUN_MANIFEST = "run.manifest"

_CONFIG_ERRORS = (
    ValidationError,
    ModelConfigError,
    McDropoutError,
    ScenarioError,
    DatasetFormatError,
    FileNotFoundError,
    ValueError,
)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _write_run_manifest(out: Path, args: argparse.Namespace, **resolved) -> Path:
    """Record the command, every flag and the resolved values (seeds, configs)."""
    entries: dict[str, object] = {"command": args.command}
    for key, value in sorted(vars(args).items()):
        if key in ("command", "handler"):
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        entries[f"flag.{key}"] = value
    for key, value in resolved.items():
        entries[key] = value
    return write_manifest(out / RUN_MANIFEST, entries)


def _dataset_path(data: str, split: str) -> Path:
    path = Path(data)
    return path if path.is_file() else path / f"{split}.gwds"


def _load_model(args: argparse.Namespace) -> SurrogateUNet:
    try:
        return load_checkpoint(args.checkpoint, expected_variant=getattr(args, "model", None))
    except ModelConfigError as e:
        raise CheckpointError(str(e)) from e


def _indices(text: Optional[str], n: int, default: int = 4) -> list[int]:
    if text:
        chosen = list(_ints(text))
    else:
        chosen = list(range(min(default, n)))
    for i in chosen:
        if not 0 <= i < n:
            raise ValueError(f"sample index {i} outside dataset of {n}")
    return chosen


def cmd_generate(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    grf = {"correlation_length": args.correlation_length}
    if args.classes:
        grf["class_values"] = _floats(args.classes)
    base = DatasetConfig(
        grid=GridSpec(height=args.size, width=args.size),
        n_samples=1,
        seed=seed,
        well_count_range=(args.wells_min, args.wells_max),
        grf=grf,
    )
    extra = {}
    if args.size % 16:
        extra["warning"] = (
            f"grid {args.size}x{args.size} is not divisible by 16 and cannot be used for training"
        )
        print(f"⚠️  {extra['warning']}")

    sizes = {"train": args.train, "val": args.val, "test": args.test}
    configs = split_configs(base, {name: size for name, size in sizes.items() if size > 0})
    resolved = {"seed": seed, **extra}
    for name, config in configs.items():
        dataset = generate_dataset(config, jobs=args.jobs)
        path = write_dataset(dataset, out / f"{name}.gwds", {"split": name, **extra})
        resolved[f"split.{name}.seed"] = config.seed
        print(f"✅ {name}: {len(dataset)} samples -> {path}")
    _write_run_manifest(out, args, **resolved)
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    train_set = read_dataset(_dataset_path(args.data, "train"))
    val_set = read_dataset(_dataset_path(args.data, "val"))
    model_config = ModelConfig(
        variant=args.model,
        encoder_widths=_ints(args.widths),
        dropout_rate=args.dropout,
    )
    config = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=seed,
        snapshot_epochs=_ints(args.snapshots),
        probe_indices=_ints(args.probes),
    )
    model = build_model(model_config, train_set.config.grid, seed=seed)
    _write_run_manifest(
        out,
        args,
        seed=seed,
        grid=f"{model.grid.height}x{model.grid.width}",
        parameters=count_parameters(model).total,
    )
    history = TrainingHistory(out / "history.csv")
    if len(history):
        raise ValueError(f"{out / 'history.csv'} already holds a training run")
    result = train(model, train_set, val_set, config, history=history)

    save_checkpoint(result.model, out / "model.gwck")
    (out / "parameters.txt").write_text(count_parameters(result.model).to_text(), encoding="utf-8")
    write_metrics_csv([result.report], out / "metrics.csv")
    _write_snapshots(out / "attention", result.snapshots, train_set, config.probe_indices)
    r2 = "n/a" if result.report.r2 is None else f"{result.report.r2:.4f}"
    print(f"✅ Trained {config.epochs} epochs: val rmse {result.report.rmse:.4e}, r2 {r2}")
    return EXIT_OK


def _write_snapshots(out: Path, snapshots: dict, train_set, probes) -> None:
    if not snapshots:
        return
    probes = [i for i in probes if i < len(train_set)]
    masks = train_set.inputs(probes)[:, MASK_CHANNEL] > 0.5
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "focus.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("epoch", "gate", "fixed_mean", "free_mean"))
        for epoch, maps in sorted(snapshots.items()):
            focus = attention_focus(maps, masks)
            for gate, alpha in maps.items():
                writer.writerow([epoch, gate, repr(focus.fixed[gate]), repr(focus.free[gate])])
                for slot, index in enumerate(probes):
                    write_image(out / f"epoch{epoch}_sample{index}_{gate}", alpha[slot, 0])


def _write_triplet(out: Path, stem: str, pred: np.ndarray, target: np.ndarray, png: bool) -> None:
    """Prediction, target and |error| images; the error image is scaled to its maximum."""
    error = np.abs(pred - target)
    write_image(out / f"{stem}_pred", pred, png=png)
    write_image(out / f"{stem}_target", target, png=png)
    write_image(out / f"{stem}_error", error, vmax=max(float(error.max()), 1e-12), png=png)


def _write_gallery(out: Path, ranked, dataset, preds_by_index: dict, png: bool) -> None:
    for rank, item in enumerate(ranked, start=1):
        target = dataset.samples[item.index].target[0]
        _write_triplet(out, f"rank{rank}_idx{item.index}", preds_by_index[item.index], target, png)


def cmd_eval(args: argparse.Namespace) -> int:
    out = Path(args.out)
    model = _load_model(args)
    _write_run_manifest(out, args, seed=resolve_seed(args.seed))
    reports = []
    for split in ("train", "test"):
        path = _dataset_path(args.data, split)
        if split == "train" and not path.exists():
            continue
        dataset = read_dataset(path)
        report = compute_metrics(predict(model, dataset.inputs()), dataset.targets(), split=split)
        write_per_sample_csv(report, out / f"per_sample_{split}.csv")
        reports.append(report)
        print(f"📊 {split}: rmse {report.rmse:.4e}, r2 {report.r2:.4f} ({report.n_samples} samples)")
    write_metrics_csv(reports, out / "metrics.csv")

    test_set = read_dataset(_dataset_path(args.data, "test"))
    ranking = rank_predictions(
        model, test_set, min(args.subset, len(test_set)), args.topk, seed=resolve_seed(args.seed)
    )
    ranking.write_csv(out / "ranking.csv")
    shown = sorted({s.index for s in ranking.best + ranking.worst})
    preds = dict(zip(shown, predict(model, test_set.inputs(shown))[:, 0]))
    _write_gallery(out / "best", ranking.best, test_set, preds, args.png)
    _write_gallery(out / "worst", ranking.worst, test_set, preds, args.png)
    for kind, items in (("best", ranking.best), ("worst", ranking.worst)):
        print(f"  {kind}: " + ", ".join(f"#{s.index} ({s.mse:.2e})" for s in items))
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    out = Path(args.out)
    model = _load_model(args)
    dataset = read_dataset(_dataset_path(args.data, args.split))
    indices = _indices(args.indices, len(dataset))
    _write_run_manifest(out, args, indices=",".join(map(str, indices)))
    preds = predict(model, dataset.inputs(indices))[:, 0]
    for index, pred in zip(indices, preds):
        target = dataset.samples[index].target[0]
        _write_triplet(out, f"sample{index}", pred, target, args.png)
        if not args.no_contours:
            write_contours_csv(out / f"sample{index}_pred_contours.csv", pred)
            write_contours_csv(out / f"sample{index}_target_contours.csv", target)
    print(f"✅ Wrote predictions for {len(indices)} sample(s) to {out}")
    return EXIT_OK


def cmd_uncertainty(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    model = _load_model(args)
    dataset = read_dataset(_dataset_path(args.data, args.split))
    indices = _indices(args.indices, len(dataset), default=1)
    mean, std = mc_dropout_predict(
        model, dataset.inputs(indices), args.passes, seed=seed, dropout=not args.no_dropout
    )
    std_max = max(float(std.max()), 1e-12)
    _write_run_manifest(out, args, seed=seed, std_vmax=repr(std_max))
    for slot, index in enumerate(indices):
        write_image(out / f"sample{index}_mean", mean[slot, 0], png=args.png)
        write_image(out / f"sample{index}_std", std[slot, 0], vmax=std_max, png=args.png)
    print(f"✅ {args.passes} passes: max std {float(std.max()):.3e}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    out = Path(args.out)
    model = _load_model(args)
    dataset = read_dataset(_dataset_path(args.data, args.split))
    samples = dataset.samples[: min(args.n, len(dataset))]
    _write_run_manifest(out, args, n_scenarios=len(samples))
    report = benchmark_wallclock(
        model, scenarios_from_samples(samples), runs=args.runs, warmup=args.warmup
    )
    report.write_csv(out / "bench.csv")
    table = report.to_table()
    (out / "bench.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def cmd_generalize(args: argparse.Namespace) -> int:
    out = Path(args.out)
    model = _load_model(args)
    base = read_dataset(_dataset_path(args.data, "train")).config
    _write_run_manifest(out, args, base_seed=base.seed)
    report = generalization_suite(model, base, n_samples=args.n, jobs=args.jobs)
    report.write_csv(out / "generalization.csv")
    table = report.to_table()
    (out / "generalization.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, out_default: str) -> None:
    parser.add_argument("--out", type=str, default=out_default, help="Output directory")
    parser.add_argument("--seed", type=int, default=0, help="Seed (GW_SEED overrides)")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")


def _add_checkpoint(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--checkpoint", type=str, required=True, help="GWCK checkpoint file")
    parser.add_argument("--data", type=str, required=True, help="Dataset directory or .gwds file")
    parser.add_argument(
        "--model", type=str, default=None, help="Expected variant (unet or attention-unet)"
    )
    parser.add_argument("--png", action="store_true", help="Also write PNG images")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="workbench", description="Groundwater head surrogate workbench"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Generate train/val/test datasets")
    _add_common(p, "data")
    p.add_argument("--train", type=int, default=32000)
    p.add_argument("--val", type=int, default=8000)
    p.add_argument("--test", type=int, default=4000)
    p.add_argument("--size", type=int, default=64, help="Grid height and width")
    p.add_argument("--jobs", type=int, default=default_jobs(), help="Worker processes")
    p.add_argument("--wells-min", type=int, default=1)
    p.add_argument("--wells-max", type=int, default=3)
    p.add_argument("--correlation-length", type=float, default=8.0)
    p.add_argument("--classes", type=str, default=None, help="Comma-separated conductivity classes")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("train", help="Train a surrogate")
    _add_common(p, "runs/train")
    p.add_argument("--data", type=str, required=True, help="Directory with train/val .gwds")
    p.add_argument("--model", type=str, default="attention-unet", help="unet or attention-unet")
    p.add_argument("--epochs", type=int, default=130)
    p.add_argument("--lr", type=float, default=8e-4)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--widths", type=str, default="64,128,256,512", help="Encoder widths")
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument(
        "--snapshots", type=str, default="10,40,130",
        help="Attention snapshot epochs (the last epoch is added)",
    )
    p.add_argument("--probes", type=str, default="0", help="Probe sample indices")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Metrics and best/worst galleries")
    _add_common(p, "runs/eval")
    _add_checkpoint(p)
    p.add_argument("--subset", type=int, default=500)
    p.add_argument("--topk", type=int, default=5)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("predict", help="Prediction, target and error images")
    _add_common(p, "runs/predict")
    _add_checkpoint(p)
    p.add_argument("--split", type=str, default="test")
    p.add_argument("--indices", type=str, default=None, help="Comma-separated sample indices")
    p.add_argument("--no-contours", action="store_true", help="Skip contour CSV export")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("uncertainty", help="MC-dropout mean and std maps")
    _add_common(p, "runs/uncertainty")
    _add_checkpoint(p)
    p.add_argument("--split", type=str, default="test")
    p.add_argument("--indices", type=str, default=None)
    p.add_argument("--passes", type=int, default=1000)
    p.add_argument("--no-dropout", action="store_true", help="Deterministic passes (std = 0)")
    p.set_defaults(handler=cmd_uncertainty)

    p = sub.add_parser("bench", help="Solver vs surrogate wall-clock table")
    _add_common(p, "runs/bench")
    _add_checkpoint(p)
    p.add_argument("--split", type=str, default="test")
    p.add_argument("--n", type=int, default=16, help="Scenarios per run")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--warmup", type=int, default=1)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("generalize", help="Shifted-distribution MSE table")
    _add_common(p, "runs/generalize")
    _add_checkpoint(p)
    p.add_argument("--n", type=int, default=1000, help="Samples per distribution")
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.set_defaults(handler=cmd_generalize)
    return parser


def exit_code_for(error: BaseException) -> int:
    """Map an exception raised by a command to its exit code."""
    if isinstance(error, CheckpointError):
        return EXIT_CHECKPOINT
    if isinstance(error, (TrainingDivergedError, NonFiniteGradientError)):
        return EXIT_DIVERGED
    if isinstance(error, (GenerationError, ConvergenceError)):
        return EXIT_GENERATION
    if isinstance(error, _CONFIG_ERRORS):
        return EXIT_CONFIG
    raise error


def main(argv: Optional[list[str]] = None) -> int:
    """Run one command; returns its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except Exception as e:
        code = exit_code_for(e)
        print(f"\n❌ Error: {e}", file=sys.stderr)
        return code
