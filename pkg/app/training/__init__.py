"""Training, evaluation and benchmarking."""

from app.training.benchmark import BenchmarkReport, benchmark_wallclock, scenarios_from_samples
from app.training.evaluation import (
    FocusReport,
    GeneralizationReport,
    RankingReport,
    attention_focus,
    generalization_suite,
    mc_dropout_predict,
    rank_predictions,
)
from app.training.losses import mse_loss, mse_loss_grad, per_sample_mse
from app.training.metrics import MetricsReport, compute_metrics
from app.training.optimizer import Adam, AdamState, adam_step
from app.training.trainer import TrainConfig, TrainResult, train

__all__ = [
    "BenchmarkReport",
    "benchmark_wallclock",
    "scenarios_from_samples",
    "FocusReport",
    "GeneralizationReport",
    "RankingReport",
    "attention_focus",
    "generalization_suite",
    "mc_dropout_predict",
    "rank_predictions",
    "mse_loss",
    "mse_loss_grad",
    "per_sample_mse",
    "MetricsReport",
    "compute_metrics",
    "Adam",
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainResult",
    "train",
]
