"""Grid and sample data models."""

from app.models.grid import (
    GridSpec,
    Well,
    ScenarioSpec,
    CellMask,
    ConductivityField,
    HeadField,
    Sample,
    build_fixed_mask,
    validate_sample,
)

__all__ = [
    "GridSpec",
    "Well",
    "ScenarioSpec",
    "CellMask",
    "ConductivityField",
    "HeadField",
    "Sample",
    "build_fixed_mask",
    "validate_sample",
]
