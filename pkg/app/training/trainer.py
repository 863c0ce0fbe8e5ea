"""Supervised training loop for the surrogate networks."""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.datagen.generator import Dataset
from app.errors import ModelConfigError, TrainingDivergedError
from app.monitoring.history import TrainingHistory
from app.network.unet import AttentionMaps, SurrogateUNet, predict
from app.nn.tensor import Mode
from app.training.losses import mse_loss, mse_loss_grad
from app.training.metrics import MetricsReport, compute_metrics
from app.training.optimizer import Adam

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    """Optimization settings."""

    model_config = ConfigDict(frozen=True)

    epochs: int = Field(130, ge=1, description="Number of epochs")
    batch_size: int = Field(32, ge=2, description="Mini-batch size (batch norm needs >= 2)")
    learning_rate: float = Field(8e-4, gt=0.0, description="Adam step size")
    adam_beta1: float = Field(0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(1e-8, gt=0.0)
    seed: int = Field(0, ge=0, description="Seed for shuffling and dropout")
    snapshot_epochs: tuple[int, ...] = Field(
        (10, 40, 130),
        description="Epochs at which probe attention maps are captured; the last epoch is added",
    )
    probe_indices: tuple[int, ...] = Field(
        (0,), description="Training samples whose attention maps are captured"
    )
    eval_batch_size: int = Field(64, ge=1, description="Batch size for loss evaluation")


@dataclass
class TrainResult:
    """Trained model plus everything recorded on the way."""

    model: SurrogateUNet
    history: TrainingHistory
    report: MetricsReport
    snapshots: dict[int, AttentionMaps] = field(default_factory=dict)


def _eval_loss(model: SurrogateUNet, dataset: Dataset, batch_size: int) -> float:
    preds = predict(model, dataset.inputs(), batch_size)
    return mse_loss(preds, dataset.targets())


def _batches(order: np.ndarray, batch_size: int) -> list[np.ndarray]:
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    # batch norm cannot use statistics of a single sample
    return [b for b in batches if len(b) >= 2]


def train(
    model: SurrogateUNet,
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
    history: Optional[TrainingHistory] = None,
) -> TrainResult:
    """Train a model in place with Adam on the per-image MSE.

    Args:
        model: Freshly built or partially trained model
        train_set: Training samples (shuffled every epoch with the config seed); the recorded
            train loss is the eval-mode loss over the whole set, as at epoch 0
        val_set: Validation samples, evaluated in eval mode after every epoch
        config: Optimization settings
        history: Optional history to record into (e.g. one backed by a CSV file)

    Returns:
        TrainResult with the model, loss history, validation metrics and attention snapshots

    Raises:
        ValueError: If a dataset is empty or too small for one batch
        ModelConfigError: If the datasets are not on the model grid
        TrainingDivergedError: If a batch loss becomes non-finite
    """
    if len(train_set) < 2 or len(val_set) == 0:
        raise ValueError("training needs at least two training samples and one validation sample")
    for name, dataset in (("train", train_set), ("val", val_set)):
        if dataset.samples[0].grid != model.grid:
            raise ModelConfigError(
                f"{name} grid {dataset.samples[0].grid.shape} does not match model grid {model.grid.shape}"
            )

    shuffle_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    optimizer = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    history = history if history is not None else TrainingHistory()
    probes = [i for i in config.probe_indices if i < len(train_set)]
    snapshots: dict[int, AttentionMaps] = {}
    # an empty snapshot list disables capture; otherwise the last epoch is always captured
    capture_epochs = set(config.snapshot_epochs)
    if capture_epochs:
        capture_epochs.add(config.epochs)

    train_loss = _eval_loss(model, train_set, config.eval_batch_size)
    val_loss = _eval_loss(model, val_set, config.eval_batch_size)
    history.record(0, train_loss, val_loss)
    logger.info(f"Epoch 0: train {train_loss:.6e}, val {val_loss:.6e}")

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        total, seen = 0.0, 0
        for batch_index, batch in enumerate(_batches(order, config.batch_size)):
            x = train_set.inputs(batch)
            y = train_set.targets(batch)
            pred, _ = model.forward(x, Mode.TRAIN, dropout_rng)
            loss = mse_loss(pred, y)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_index, loss)
            model.zero_grad()
            model.backward(mse_loss_grad(pred, y))
            optimizer.step(model.parameters(), model.gradients())
            total += loss * len(batch)
            seen += len(batch)

        logger.debug(f"Epoch {epoch}: mean train-mode batch loss {total / max(seen, 1):.6e}")
        train_loss = _eval_loss(model, train_set, config.eval_batch_size)
        val_loss = _eval_loss(model, val_set, config.eval_batch_size)
        history.record(epoch, train_loss, val_loss)
        logger.info(f"Epoch {epoch}/{config.epochs}: train {train_loss:.6e}, val {val_loss:.6e}")

        if epoch in capture_epochs and probes and model.config.has_attention:
            _, maps = model.forward(train_set.inputs(probes), Mode.EVAL, capture_attention=True)
            snapshots[epoch] = maps
            logger.debug(f"Captured attention snapshot at epoch {epoch}")

    val_preds = predict(model, val_set.inputs(), config.eval_batch_size)
    report = compute_metrics(val_preds, val_set.targets(), split="val", require_r2=False)
    report.history = [(r.epoch, r.train_loss, r.val_loss) for r in history.records]
    return TrainResult(model=model, history=history, report=report, snapshots=snapshots)
