"""Scenario sampling, sample encoding and dataset generation."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import EncodingError, GenerationError
from app.models.grid import (
    CONDUCTIVITY_CHANNEL,
    HEAD_CHANNEL,
    MASK_CHANNEL,
    N_INPUT_CHANNELS,
    ConductivityField,
    GridSpec,
    HeadField,
    Sample,
    ScenarioSpec,
    Well,
    build_fixed_mask,
    fixed_head_values,
    ring_flags,
)
from app.physics.fdsolver import solve_steady_state
from app.physics.grf import GrfConfig, sample_conductivity

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "1"
SPLIT_NAMES = ("train", "val", "test")
# Solver round-off allowed outside [0, 1] before a head is rejected.
HEAD_TOLERANCE = 1e-9

_MASK64 = (1 << 64) - 1


def splitmix64(value: int) -> int:
    """One round of the SplitMix64 finalizer."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Per-sample seed: splitmix64(splitmix64(seed) XOR index)."""
    return splitmix64(splitmix64(seed & _MASK64) ^ (index & _MASK64))


class DatasetConfig(BaseModel):
    """Everything that determines the bytes of a generated dataset."""

    model_config = ConfigDict(frozen=True)

    grid: GridSpec = Field(default_factory=GridSpec, description="Model domain")
    n_samples: int = Field(..., gt=0, description="Number of samples")
    seed: int = Field(0, ge=0, lt=2**64, description="64-bit dataset seed")
    well_count_range: tuple[int, int] = Field((1, 3), description="Inclusive well count range")
    well_head_range: tuple[float, float] = Field(
        (0.5, 1.0), description="Half-open range [low, high) of well heads"
    )
    boundary_head: float = Field(1.0, gt=0.0, le=1.0, description="Head on the outer ring")
    grf: GrfConfig = Field(default=None, description="Conductivity field parameters")

    @model_validator(mode="before")
    @classmethod
    def _share_grid(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        grid = data.get("grid") or GridSpec()
        grf = data.get("grf")
        if grf is None:
            data["grf"] = GrfConfig(grid=grid)
        elif isinstance(grf, dict) and "grid" not in grf:
            data["grf"] = {**grf, "grid": grid}
        return data

    @model_validator(mode="after")
    def _check_ranges(self) -> "DatasetConfig":
        low, high = self.well_count_range
        interior = (self.grid.height - 2) * (self.grid.width - 2)
        if not 0 <= low <= high:
            raise ValueError(f"well_count_range {self.well_count_range} is empty")
        if high > interior:
            raise ValueError(f"{high} wells do not fit in {interior} interior cells")
        head_low, head_high = self.well_head_range
        if not 0.5 <= head_low < head_high <= 1.0:
            raise ValueError(f"well_head_range {self.well_head_range} must lie in [0.5, 1)")
        if head_high > self.boundary_head:
            raise ValueError("well_head_range must lie below the boundary head")
        if self.grf.grid != self.grid:
            raise ValueError("grf grid must match the dataset grid")
        return self

    def with_overrides(self, **changes) -> "DatasetConfig":
        """Copy with changed fields, re-validated."""
        data = self.model_dump()
        grf_changes = changes.pop("grf", None)
        data.update(changes)
        if grf_changes:
            data["grf"] = {**data["grf"], **grf_changes}
        data["grf"]["grid"] = data["grid"]
        return DatasetConfig.model_validate(data)


@dataclass
class Dataset:
    """An ordered collection of samples and the config that produced them."""

    config: DatasetConfig
    samples: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def inputs(self, indices=None) -> np.ndarray:
        """Stacked inputs of shape (N, 3, H, W)."""
        chosen = self.samples if indices is None else [self.samples[i] for i in indices]
        return np.stack([s.input for s in chosen])

    def targets(self, indices=None) -> np.ndarray:
        """Stacked targets of shape (N, 1, H, W)."""
        chosen = self.samples if indices is None else [self.samples[i] for i in indices]
        return np.stack([s.target for s in chosen])


def sample_scenario(rng: np.random.Generator, config: DatasetConfig) -> ScenarioSpec:
    """Draw a random scenario.

    Well count is uniform over the inclusive range, locations uniform without
    replacement over interior cells, heads uniform over well_head_range.

    Args:
        rng: Seeded generator
        config: Dataset configuration

    Returns:
        Valid ScenarioSpec
    """
    grid = config.grid
    low, high = config.well_count_range
    n_wells = int(rng.integers(low, high + 1))
    interior_width = grid.width - 2
    n_interior = (grid.height - 2) * interior_width
    cells = rng.choice(n_interior, size=n_wells, replace=False)
    heads = rng.uniform(config.well_head_range[0], config.well_head_range[1], size=n_wells)
    wells = [
        Well(row=int(c // interior_width) + 1, col=int(c % interior_width) + 1, head=float(h))
        for c, h in zip(cells, heads)
    ]
    return ScenarioSpec(
        grid=grid,
        boundary_head=config.boundary_head,
        wells=wells,
        well_max=max(high, 3),
    )


def encode_input(scenario: ScenarioSpec, K: ConductivityField) -> np.ndarray:
    """Encode the three input channels: fixed heads, fixed-cell mask, conductivity."""
    mask = build_fixed_mask(scenario).flags
    image = np.zeros((N_INPUT_CHANNELS,) + scenario.grid.shape, dtype=np.float32)
    image[HEAD_CHANNEL] = np.where(mask, fixed_head_values(scenario), 0.0)
    image[MASK_CHANNEL] = mask
    image[CONDUCTIVITY_CHANNEL] = K.values
    return image


def encode_sample(scenario: ScenarioSpec, K: ConductivityField, head: HeadField) -> Sample:
    """Pair the encoded input with its solved head field.

    Raises:
        EncodingError: If any head lies outside [0, 1]
    """
    values = head.values
    if (
        not np.all(np.isfinite(values))
        or values.min() < -HEAD_TOLERANCE
        or values.max() > 1.0 + HEAD_TOLERANCE
    ):
        raise EncodingError(
            f"head range [{values.min():.6g}, {values.max():.6g}] lies outside [0, 1]"
        )
    target = np.clip(values, 0.0, 1.0)[None].astype(np.float32)
    return Sample(input=encode_input(scenario, K), target=target)


def decode_scenario(sample: Sample, well_max: Optional[int] = None) -> ScenarioSpec:
    """Recover the scenario (mask and fixed values) from a sample input."""
    grid = sample.grid
    mask = sample.input[MASK_CHANNEL] > 0.5
    heads = sample.input[HEAD_CHANNEL]
    interior = mask & ~ring_flags(grid)
    rows, cols = np.nonzero(interior)
    # float32 storage can round a head just below 1 up to exactly 1.
    ceiling = float(np.nextafter(1.0, 0.0))
    wells = [Well(int(r), int(c), min(float(heads[r, c]), ceiling)) for r, c in zip(rows, cols)]
    return ScenarioSpec(
        grid=grid,
        boundary_head=float(heads[0, 0]),
        wells=wells,
        well_max=max(len(wells), 3) if well_max is None else well_max,
    )


def generate_sample(config: DatasetConfig, index: int) -> Sample:
    """Generate the sample at a given index; a pure function of (config, index).

    Raises:
        GenerationError: Wrapping any solver or encoding failure
    """
    try:
        rng = np.random.default_rng(derive_seed(config.seed, index))
        scenario = sample_scenario(rng, config)
        grf_seed = int(rng.integers(0, 2**63))
        K = sample_conductivity(config.grf.model_copy(update={"seed": grf_seed}))
        head = solve_steady_state(K, scenario)
        return encode_sample(scenario, K, head)
    except GenerationError:
        raise
    except Exception as e:
        raise GenerationError(index, e) from e


def generate_dataset(config: DatasetConfig, jobs: int = 1) -> Dataset:
    """Generate every sample of a dataset.

    Output is identical for any worker count because each sample depends only
    on its derived seed.

    Args:
        config: Dataset configuration
        jobs: Number of worker processes (1 runs in-process)

    Returns:
        Dataset with config.n_samples samples in index order
    """
    if config.grid.height % 16 or config.grid.width % 16:
        logger.warning(
            f"grid {config.grid.shape} is not divisible by 16; "
            "the surrogate cannot be trained on it"
        )
    logger.info(f"Generating {config.n_samples} samples on {config.grid.shape} with {jobs} job(s)")

    worker = partial(generate_sample, config)
    if jobs <= 1:
        samples = [worker(i) for i in range(config.n_samples)]
    else:
        chunk = max(1, config.n_samples // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(worker, range(config.n_samples), chunksize=chunk))
    return Dataset(config=config, samples=samples)


def split_configs(base: DatasetConfig, sizes: dict[str, int]) -> dict[str, DatasetConfig]:
    """Configs for disjoint splits: each split gets its own derived seed."""
    configs = {}
    for number, (name, size) in enumerate(sizes.items()):
        configs[name] = base.with_overrides(
            n_samples=size, seed=derive_seed(base.seed, 2**32 + number)
        )
    return configs
