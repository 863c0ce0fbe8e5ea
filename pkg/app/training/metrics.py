"""Regression metrics for predicted head fields."""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from app.errors import MetricError
from app.training.losses import per_sample_mse

METRICS_COLUMNS = ("split", "n_samples", "rmse", "r2", "mean_mse")


@dataclass
class MetricsReport:
    """Metrics of one evaluated split."""

    rmse: float = 0.0
    r2: Optional[float] = None
    per_sample_mse: list[float] = field(default_factory=list)
    split: str = "test"
    wallclock: dict[str, float] = field(default_factory=dict)
    history: list[tuple[int, float, float]] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return len(self.per_sample_mse)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.per_sample_mse)) if self.per_sample_mse else 0.0

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "split": self.split,
            "n_samples": self.n_samples,
            "rmse": self.rmse,
            "r2": self.r2,
            "mean_mse": self.mean_mse,
            "wallclock": dict(self.wallclock),
            "history": [list(row) for row in self.history],
        }

    def summary_row(self) -> list:
        return [
            self.split,
            self.n_samples,
            repr(self.rmse),
            "" if self.r2 is None else repr(self.r2),
            repr(self.mean_mse),
        ]


def write_metrics_csv(reports: list[MetricsReport], path: Union[str, Path]) -> Path:
    """One summary row per report, columns in METRICS_COLUMNS order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for report in reports:
            writer.writerow(report.summary_row())
    return path


def write_per_sample_csv(report: MetricsReport, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("index", "mse"))
        for index, value in enumerate(report.per_sample_mse):
            writer.writerow([index, repr(value)])
    return path


def r2_score(preds: np.ndarray, targets: np.ndarray) -> float:
    """Coefficient of determination against the dataset-mean target image.

    Raises:
        MetricError: With fewer than two samples or zero target variance
    """
    if targets.shape[0] < 2:
        raise MetricError("R2 needs at least two samples")
    y = targets.astype(np.float64)
    mean_image = y.mean(axis=0, keepdims=True)
    total = float(((y - mean_image) ** 2).sum())
    if total == 0.0:
        raise MetricError("R2 is undefined for targets with zero variance")
    residual = float(((y - preds.astype(np.float64)) ** 2).sum())
    return 1.0 - residual / total


def compute_metrics(
    preds: np.ndarray, targets: np.ndarray, split: str = "test", require_r2: bool = True
) -> MetricsReport:
    """Per-pixel RMSE, R2 and per-sample MSE.

    Args:
        preds: Predictions (N, 1, H, W)
        targets: Targets of the same shape
        split: Label carried into the report
        require_r2: Raise when R2 is undefined instead of reporting None

    Raises:
        MetricError: If require_r2 and R2 is undefined
        ShapeError: On mismatched shapes
    """
    per_sample = per_sample_mse(preds, targets)
    try:
        r2 = r2_score(preds, targets)
    except MetricError:
        if require_r2:
            raise
        r2 = None
    return MetricsReport(
        rmse=math.sqrt(float(per_sample.mean())),
        r2=r2,
        per_sample_mse=[float(v) for v in per_sample],
        split=split,
    )
