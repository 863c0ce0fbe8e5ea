"""Per-epoch loss history with CSV persistence."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


class TrainingHistory:
    """Track train/validation loss per epoch; epoch 0 holds the losses at initialization."""

    def __init__(self, history_file: Optional[Union[str, Path]] = None):
        """Initialize the history.

        Args:
            history_file: CSV file to mirror every record to; existing rows are loaded
        """
        self.history_file = Path(history_file) if history_file is not None else None
        self.records: list[EpochRecord] = []
        if self.history_file is not None:
            self.history_file.parent.mkdir(parents=True, exist_ok=True)
            self._load()

    def _load(self) -> None:
        if not self.history_file.exists():
            return
        with open(self.history_file, "r", newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                self.records.append(
                    EpochRecord(int(row["epoch"]), float(row["train_loss"]), float(row["val_loss"]))
                )

    def _save(self) -> None:
        self.write_csv(self.history_file)

    def record(self, epoch: int, train_loss: float, val_loss: float) -> EpochRecord:
        """Append an epoch; epochs must be strictly increasing.

        Raises:
            ValueError: If the epoch does not follow the last recorded one
        """
        if self.records and epoch <= self.records[-1].epoch:
            raise ValueError(f"epoch {epoch} does not follow {self.records[-1].epoch}")
        entry = EpochRecord(epoch, float(train_loss), float(val_loss))
        self.records.append(entry)
        if self.history_file is not None:
            self._save()
        return entry

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(HISTORY_COLUMNS)
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss)])
        return path

    def __len__(self) -> int:
        return len(self.records)

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    def loss_at(self, epoch: int) -> EpochRecord:
        for r in self.records:
            if r.epoch == epoch:
                return r
        raise KeyError(epoch)

    def get_stats(self) -> dict:
        """Summary: epochs recorded, last losses and the best validation epoch."""
        if not self.records:
            return {"epochs": 0, "best_epoch": None, "best_val_loss": None, "last": None}
        finite = [r for r in self.records if math.isfinite(r.val_loss)]
        best = min(finite, key=lambda r: (r.val_loss, r.epoch)) if finite else None
        return {
            "epochs": self.records[-1].epoch,
            "best_epoch": best.epoch if best else None,
            "best_val_loss": best.val_loss if best else None,
            "last": self.records[-1],
        }
