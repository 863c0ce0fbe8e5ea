"""Evaluation tools: MC-dropout uncertainty, best/worst ranking, distribution shift, attention focus."""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.datagen.generator import Dataset, DatasetConfig, derive_seed, generate_dataset
from app.errors import McDropoutError
from app.network.unet import AttentionMaps, SurrogateUNet, predict
from app.nn.tensor import Mode
from app.training.losses import per_sample_mse

logger = logging.getLogger(__name__)

K10_CLASS_VALUES = tuple(float(v) for v in np.linspace(0.1, 1.0, 10))
K3_CLASS_VALUES = (0.1, 0.55, 1.0)
# Seed stream offset for shifted test sets, disjoint from the split seeds.
_VARIANT_SEED_OFFSET = 2**33


def mc_dropout_predict(
    model: SurrogateUNet,
    inputs: np.ndarray,
    passes: int = 1000,
    seed: int = 0,
    dropout: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean and standard deviation over repeated stochastic passes.

    Dropout is active and batch norm uses its running statistics. With
    dropout=False every pass is the eval-mode prediction and the std is 0.

    Args:
        model: Trained model
        inputs: (N, 3, H, W) or a single (3, H, W) input
        passes: Number of forward passes (>= 2)
        seed: Seed of the dropout masks

    Returns:
        Tuple of (mean, std), each shaped like the predictions

    Raises:
        ValueError: If passes < 2
        McDropoutError: If dropout is requested on a model with dropout rate 0
    """
    if passes < 2:
        raise ValueError(f"MC dropout needs at least 2 passes, got {passes}")
    if dropout and model.config.dropout_rate == 0.0:
        raise McDropoutError("model has dropout rate 0; nothing to sample")
    if inputs.ndim == 3:
        inputs = inputs[None]

    mode = Mode.MC_DROPOUT if dropout else Mode.EVAL
    rng = np.random.default_rng(seed)
    mean = None
    m2 = None
    for k in range(1, passes + 1):
        pred = model.forward(inputs, mode, rng)[0].astype(np.float64)
        if mean is None:
            mean = pred.copy()
            m2 = np.zeros_like(pred)
            continue
        delta = pred - mean
        mean += delta / k
        m2 += delta * (pred - mean)
    logger.debug(f"MC dropout finished {passes} passes on {inputs.shape[0]} input(s)")
    return mean, np.sqrt(m2 / passes)


@dataclass
class RankedSample:
    index: int
    mse: float


@dataclass
class RankingReport:
    """The k best and k worst predictions of an evaluated subset."""

    best: list[RankedSample] = field(default_factory=list)
    worst: list[RankedSample] = field(default_factory=list)
    subset: list[int] = field(default_factory=list)

    def to_rows(self) -> list[tuple[str, int, int, float]]:
        rows = [("best", rank, s.index, s.mse) for rank, s in enumerate(self.best, start=1)]
        rows += [("worst", rank, s.index, s.mse) for rank, s in enumerate(self.worst, start=1)]
        return rows

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(("set", "rank", "index", "mse"))
            for kind, rank, index, mse in self.to_rows():
                writer.writerow([kind, rank, index, repr(mse)])
        return path


def rank_predictions(
    model: SurrogateUNet,
    dataset: Dataset,
    subset_size: int = 500,
    k: int = 5,
    seed: int = 0,
    batch_size: int = 64,
) -> RankingReport:
    """Best-k and worst-k samples by eval-mode MSE over a random subset.

    Ties are broken by sample index, so equal errors list the lowest indices first.

    Raises:
        ValueError: If subset_size exceeds the dataset or k < 1
    """
    if subset_size > len(dataset):
        raise ValueError(f"subset of {subset_size} exceeds dataset of {len(dataset)}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if subset_size == len(dataset):
        subset = np.arange(len(dataset))
    else:
        subset = np.sort(np.random.default_rng(seed).choice(len(dataset), subset_size, replace=False))

    errors = per_sample_mse(predict(model, dataset.inputs(subset), batch_size), dataset.targets(subset))
    ranked = [RankedSample(int(i), float(e)) for i, e in zip(subset, errors)]
    k = min(k, len(ranked))
    return RankingReport(
        best=sorted(ranked, key=lambda s: (s.mse, s.index))[:k],
        worst=sorted(ranked, key=lambda s: (-s.mse, s.index))[:k],
        subset=[int(i) for i in subset],
    )


@dataclass
class GeneralizationRow:
    name: str
    n_samples: int
    mse: float

    @property
    def rmse(self) -> float:
        return float(np.sqrt(self.mse))


@dataclass
class GeneralizationReport:
    """Mean MSE per test distribution; the in_distribution row is the baseline."""

    rows: list[GeneralizationRow] = field(default_factory=list)

    def row(self, name: str) -> GeneralizationRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_table(self) -> str:
        baseline = next((r.mse for r in self.rows if r.name == "in_distribution"), None)
        lines = [f"{'distribution':<18}{'n':>7}{'mse':>14}{'rmse':>14}{'ratio':>10}"]
        for r in self.rows:
            ratio = f"{r.mse / baseline:10.2f}" if baseline else f"{'-':>10}"
            lines.append(f"{r.name:<18}{r.n_samples:>7}{r.mse:>14.4e}{r.rmse:>14.4e}{ratio}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(("distribution", "n_samples", "mse", "rmse"))
            for r in self.rows:
                writer.writerow([r.name, r.n_samples, repr(r.mse), repr(r.rmse)])
        return path


def generalization_configs(base: DatasetConfig, n_samples: int = 1000) -> dict[str, DatasetConfig]:
    """Shifted test distributions plus an in-distribution control, each with its own seed."""
    variants = {
        "in_distribution": {},
        "k3": {"grf": {"class_values": K3_CLASS_VALUES}},
        "k10": {"grf": {"class_values": K10_CLASS_VALUES}},
        "wells3": {"well_count_range": (3, 3)},
        "wells10": {"well_count_range": (10, 10)},
    }
    configs = {}
    for number, (name, changes) in enumerate(variants.items()):
        configs[name] = base.with_overrides(
            n_samples=n_samples,
            seed=derive_seed(base.seed, _VARIANT_SEED_OFFSET + number),
            **changes,
        )
    return configs


def evaluate_mse(model: SurrogateUNet, dataset: Dataset, batch_size: int = 64) -> float:
    return float(per_sample_mse(predict(model, dataset.inputs(), batch_size), dataset.targets()).mean())


def generalization_suite(
    model: SurrogateUNet,
    base_config: DatasetConfig,
    n_samples: int = 1000,
    jobs: int = 1,
    names: Optional[list[str]] = None,
) -> GeneralizationReport:
    """Evaluate the model on freshly generated shifted test sets.

    Args:
        model: Trained model on base_config's grid
        base_config: Training distribution the variants are derived from
        n_samples: Samples per generated set
        jobs: Generation worker processes
        names: Subset of distributions to run (default: all)

    Returns:
        GeneralizationReport with one row per distribution
    """
    report = GeneralizationReport()
    for name, config in generalization_configs(base_config, n_samples).items():
        if names is not None and name not in names:
            continue
        dataset = generate_dataset(config, jobs=jobs)
        mse = evaluate_mse(model, dataset)
        report.rows.append(GeneralizationRow(name, len(dataset), mse))
        logger.info(f"Generalization {name}: mse {mse:.4e} over {len(dataset)} samples")
    return report


@dataclass
class FocusReport:
    """Mean attention over fixed-head cells and over free cells, per gate."""

    fixed: dict[str, float] = field(default_factory=dict)
    free: dict[str, float] = field(default_factory=dict)

    def focused(self, gate: str) -> bool:
        return self.fixed[gate] > self.free[gate]


def attention_focus(maps: AttentionMaps, fixed_mask: np.ndarray) -> FocusReport:
    """Compare mean alpha over fixed cells with mean alpha over free cells.

    Args:
        maps: Attention maps of N probe samples
        fixed_mask: Boolean fixed-cell masks (N, H, W) or a single (H, W) mask

    Returns:
        FocusReport keyed by gate name
    """
    mask = np.asarray(fixed_mask, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None]
    report = FocusReport()
    for name, alpha in maps.items():
        factor_h = mask.shape[1] // alpha.shape[2]
        factor_w = mask.shape[2] // alpha.shape[3]
        full = alpha[:, 0].repeat(factor_h, axis=1).repeat(factor_w, axis=2)
        full, cells = np.broadcast_arrays(full, mask)
        report.fixed[name] = float(full[cells].mean()) if cells.any() else float("nan")
        report.free[name] = float(full[~cells].mean()) if (~cells).any() else float("nan")
    return report
