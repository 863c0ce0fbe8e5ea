"""Training history tracking."""

from app.monitoring.history import HISTORY_COLUMNS, EpochRecord, TrainingHistory

__all__ = ["HISTORY_COLUMNS", "EpochRecord", "TrainingHistory"]
