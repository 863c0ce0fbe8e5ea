"""Wall-clock comparison of the finite-difference solver and the surrogate."""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from app.datagen.generator import decode_scenario, encode_input
from app.models.grid import (
    CONDUCTIVITY_CHANNEL,
    ConductivityField,
    HeadField,
    Sample,
    ScenarioSpec,
)
from app.network.unet import SurrogateUNet, predict
from app.physics.fdsolver import solve_steady_state

logger = logging.getLogger(__name__)

Scenario = tuple[ScenarioSpec, ConductivityField]
Solver = Callable[[ConductivityField, ScenarioSpec], HeadField]


@dataclass
class TimingRow:
    method: str
    seconds: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.seconds))

    @property
    def std(self) -> float:
        return float(np.std(self.seconds))


@dataclass
class BenchmarkReport:
    """Seconds per sample for both methods, averaged over the timed runs."""

    solver: TimingRow
    surrogate: TimingRow
    n_scenarios: int
    warmup: int

    @property
    def speedup(self) -> float:
        return self.solver.mean / self.surrogate.mean

    @property
    def reduction_percent(self) -> float:
        return 100.0 * (1.0 - self.surrogate.mean / self.solver.mean)

    def to_table(self) -> str:
        lines = [f"{'method':<20}{'mean_s':>14}{'std_s':>14}{'runs':>6}"]
        for row in (self.solver, self.surrogate):
            lines.append(f"{row.method:<20}{row.mean:>14.6e}{row.std:>14.6e}{len(row.seconds):>6}")
        lines.append(f"speedup {self.speedup:.2f}x, reduction {self.reduction_percent:.1f}%")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(("method", "mean_s", "std_s", "runs", "speedup", "reduction_percent"))
            for row in (self.solver, self.surrogate):
                writer.writerow(
                    [
                        row.method,
                        repr(row.mean),
                        repr(row.std),
                        len(row.seconds),
                        repr(self.speedup),
                        repr(self.reduction_percent),
                    ]
                )
        return path


def scenarios_from_samples(samples: list[Sample]) -> list[Scenario]:
    """Recover (scenario, conductivity) pairs from encoded samples."""
    scenarios = []
    for sample in samples:
        K = ConductivityField(grid=sample.grid, values=sample.input[CONDUCTIVITY_CHANNEL])
        scenarios.append((decode_scenario(sample), K))
    return scenarios


def _time_runs(task, runs: int, warmup: int, n: int) -> list[float]:
    seconds = []
    for run in range(warmup + runs):
        start = time.perf_counter()
        task()
        elapsed = time.perf_counter() - start
        if run >= warmup:
            seconds.append(elapsed / n)
    return seconds


def benchmark_wallclock(
    model: SurrogateUNet,
    scenarios: list[Scenario],
    runs: int = 10,
    warmup: int = 1,
    batch_size: int = 32,
    solver: Solver = solve_steady_state,
) -> BenchmarkReport:
    """Time per-sample finite-difference solves against batched surrogate inference.

    Args:
        model: Surrogate on the scenarios' grid
        scenarios: (scenario, conductivity) pairs solved by both methods
        runs: Timed repetitions (>= 2)
        warmup: Untimed repetitions before the timed ones (>= 1)
        batch_size: Surrogate inference batch size
        solver: Reference solver called once per scenario, as solver(K, scenario)

    Returns:
        BenchmarkReport with per-sample seconds for both methods

    Raises:
        ValueError: On too few runs, no warmup, or no scenarios
    """
    if runs < 2 or warmup < 1:
        raise ValueError("benchmark needs runs >= 2 and warmup >= 1")
    if not scenarios:
        raise ValueError("benchmark needs at least one scenario")

    n = len(scenarios)
    inputs = np.stack([encode_input(scenario, K) for scenario, K in scenarios])

    def solve_all():
        for scenario, K in scenarios:
            solver(K, scenario)

    def infer_all():
        predict(model, inputs, batch_size)

    logger.info(f"Benchmarking {n} scenarios: {warmup} warmup + {runs} timed runs")
    report = BenchmarkReport(
        solver=TimingRow("finite_difference", _time_runs(solve_all, runs, warmup, n)),
        surrogate=TimingRow("surrogate", _time_runs(infer_all, runs, warmup, n)),
        n_scenarios=n,
        warmup=warmup,
    )
    logger.info(f"Speedup {report.speedup:.2f}x")
    return report
