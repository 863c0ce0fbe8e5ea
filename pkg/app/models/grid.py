"""Grid-indexed field types shared by the solver, generator and surrogate.

Indexing is row-major (row, col) with the origin at the top-left cell.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import ScenarioError, ShapeError

WELL_HEAD_MIN = 0.5
WELL_HEAD_MAX = 1.0
DEFAULT_CLASS_VALUES: tuple[float, ...] = (0.1, 0.325, 0.55, 0.775, 1.0)

# Channel layout of a sample input image.
HEAD_CHANNEL = 0
MASK_CHANNEL = 1
CONDUCTIVITY_CHANNEL = 2
N_INPUT_CHANNELS = 3


class GridSpec(BaseModel):
    """Cell counts of a rectangular model domain with unit cell size."""

    model_config = ConfigDict(frozen=True)

    height: int = Field(64, ge=4, description="Number of rows (H)")
    width: int = Field(64, ge=4, description="Number of columns (W)")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_cells(self) -> int:
        return self.height * self.width

    @property
    def ring_size(self) -> int:
        """Number of cells on the outer ring (2H + 2W - 4)."""
        return 2 * self.height + 2 * self.width - 4

    def is_interior(self, row: int, col: int) -> bool:
        """True when (row, col) lies strictly inside the boundary ring."""
        return 0 < row < self.height - 1 and 0 < col < self.width - 1

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width


class Well(NamedTuple):
    """A fixed-head well cell."""

    row: int
    col: int
    head: float


class ScenarioSpec(BaseModel):
    """Dirichlet problem definition: constant-head ring plus wells."""

    model_config = ConfigDict(frozen=True)

    grid: GridSpec = Field(default_factory=GridSpec, description="Model domain")
    boundary_head: float = Field(
        1.0, gt=0.0, le=1.0, description="Head imposed on the outer ring"
    )
    wells: list[Well] = Field(default_factory=list, description="Wells as (row, col, head)")
    well_max: int = Field(3, ge=0, description="Maximum admissible number of wells")

    @model_validator(mode="after")
    def _check_wells(self) -> "ScenarioSpec":
        problems = scenario_violations(self)
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def well_cells(self) -> set[tuple[int, int]]:
        return {(w.row, w.col) for w in self.wells}


def scenario_violations(scenario: ScenarioSpec) -> list[str]:
    """List every violated scenario invariant."""
    grid = scenario.grid
    problems: list[str] = []
    if len(scenario.wells) > scenario.well_max:
        problems.append(
            f"too many wells: {len(scenario.wells)} > well_max {scenario.well_max}"
        )
    seen: set[tuple[int, int]] = set()
    for well in scenario.wells:
        cell = (well.row, well.col)
        if not grid.contains(*cell):
            problems.append(f"well outside grid at {cell}")
        elif not grid.is_interior(*cell):
            problems.append(f"well on boundary at {cell}")
        if cell in seen:
            problems.append(f"duplicated well at {cell}")
        seen.add(cell)
        if not (WELL_HEAD_MIN <= well.head < WELL_HEAD_MAX):
            problems.append(
                f"well head {well.head} at {cell} outside [{WELL_HEAD_MIN}, {WELL_HEAD_MAX})"
            )
    return problems


def _frozen(values: np.ndarray, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class CellMask:
    """Per-cell flags, True marks a fixed (Dirichlet) cell."""

    grid: GridSpec
    flags: np.ndarray

    def __post_init__(self):
        flags = _frozen(self.flags, bool)
        if flags.shape != self.grid.shape:
            raise ShapeError(self.grid.shape, flags.shape, "CellMask")
        object.__setattr__(self, "flags", flags)

    @property
    def fixed_count(self) -> int:
        return int(self.flags.sum())


@dataclass(frozen=True)
class ConductivityField:
    """Per-cell hydraulic conductivity K (strictly positive)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        if values.shape != self.grid.shape:
            raise ShapeError(self.grid.shape, values.shape, "ConductivityField")
        if not np.all(values > 0):
            raise ValueError("conductivity values must be strictly positive")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class HeadField:
    """Per-cell hydraulic head h."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        if values.shape != self.grid.shape:
            raise ShapeError(self.grid.shape, values.shape, "HeadField")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class Sample:
    """Paired surrogate input (3 x H x W) and target head field (1 x H x W)."""

    input: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "input", _frozen(self.input, np.float32))
        object.__setattr__(self, "target", _frozen(self.target, np.float32))

    @property
    def grid(self) -> GridSpec:
        _, height, width = self.input.shape
        return GridSpec(height=height, width=width)


def ring_flags(grid: GridSpec) -> np.ndarray:
    """Boolean array that is True on the outer ring only."""
    flags = np.zeros(grid.shape, dtype=bool)
    flags[0, :] = flags[-1, :] = True
    flags[:, 0] = flags[:, -1] = True
    return flags


def build_fixed_mask(scenario: ScenarioSpec) -> CellMask:
    """Build the fixed-cell mask: the whole ring plus every well cell.

    Args:
        scenario: Scenario whose wells must lie strictly inside the ring

    Returns:
        CellMask with 2H + 2W - 4 + len(wells) fixed cells

    Raises:
        ScenarioError: If a well sits on the ring, outside the grid, or twice
    """
    problems = [
        p
        for p in scenario_violations(scenario)
        if p.startswith(("well on boundary", "well outside grid", "duplicated well"))
    ]
    if problems:
        raise ScenarioError("; ".join(problems))

    flags = ring_flags(scenario.grid)
    for well in scenario.wells:
        flags[well.row, well.col] = True
    return CellMask(grid=scenario.grid, flags=flags)


def validate_sample(sample: Sample) -> list[str]:
    """Check a sample against its invariants.

    Args:
        sample: Sample to inspect

    Returns:
        Every violated invariant as a message; empty when the sample is valid
    """
    violations: list[str] = []
    if sample.input.ndim != 3 or sample.input.shape[0] != N_INPUT_CHANNELS:
        violations.append(f"input shape {sample.input.shape} is not (3, H, W)")
        return violations
    _, height, width = sample.input.shape
    if sample.target.shape != (1, height, width):
        violations.append(
            f"target shape {sample.target.shape} does not match (1, {height}, {width})"
        )

    heads = sample.input[HEAD_CHANNEL]
    mask = sample.input[MASK_CHANNEL]
    conductivity = sample.input[CONDUCTIVITY_CHANNEL]

    if not np.all((mask == 0) | (mask == 1)):
        violations.append("mask channel not in {0,1}")
    if np.any((heads != 0) & (mask != 1)):
        violations.append("head outside mask")
    if not np.all(conductivity > 0):
        violations.append("conductivity not strictly positive")
    if not np.all(np.isfinite(sample.target)):
        violations.append("target not finite")
    elif np.any((sample.target < 0) | (sample.target > 1)):
        violations.append("target out of [0,1]")
    return violations


def fixed_head_values(scenario: ScenarioSpec) -> np.ndarray:
    """Per-cell imposed heads: boundary head on the ring, well heads at wells, 0 elsewhere."""
    values = np.where(ring_flags(scenario.grid), scenario.boundary_head, 0.0)
    for well in scenario.wells:
        values[well.row, well.col] = well.head
    return values
