"""Central-difference gradient checking for layers, blocks and whole networks."""

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from app.nn.tensor import Mode

logger = logging.getLogger(__name__)


@dataclass
class GradientCheckReport:
    """Normwise relative error per checked array ('input' plus parameter names)."""

    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    @property
    def worst(self) -> Optional[str]:
        return max(self.errors, key=self.errors.get) if self.errors else None

    def to_dict(self) -> dict:
        return {"max_error": self.max_error, "worst": self.worst, "errors": dict(self.errors)}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| / max(max|a|, max|n|, 1e-12)."""
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _mse_and_grad(out: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = out - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def _coordinates(rng: np.random.Generator, size: int, max_checks: Optional[int]) -> np.ndarray:
    if max_checks is None or size <= max_checks:
        return np.arange(size)
    return np.sort(rng.choice(size, size=max_checks, replace=False))


def gradient_check(
    graph,
    x: np.ndarray,
    eps: float = 1e-3,
    mode: Mode = Mode.EVAL,
    max_checks: Optional[int] = 24,
    seed: int = 0,
    forward: Optional[Callable] = None,
) -> GradientCheckReport:
    """Compare analytic gradients of an MSE loss against central differences.

    The graph is deep-copied and cast to float64 first, so the caller's
    object is untouched. Dropout must be off in the chosen mode.

    Args:
        graph: Object with forward/backward/parameters/gradients/zero_grad/astype
        x: Input batch
        eps: Finite-difference step
        mode: Deterministic forward mode (EVAL or BATCH_STATS)
        max_checks: Coordinates sampled per array (None checks every entry)
        seed: Seed for the regression target and coordinate sampling
        forward: Optional callable (graph, x, mode) replacing graph.forward; a
            tuple result is reduced to its first element

    Returns:
        GradientCheckReport with one entry per array
    """
    if mode.dropout:
        raise ValueError("gradient checking needs a deterministic mode without dropout")
    graph = copy.deepcopy(graph).astype(np.float64)
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    call = forward or (lambda g, inp, m: g.forward(inp, m, None))

    def run(g, inp, m) -> np.ndarray:
        out = call(g, inp, m)
        # networks return (prediction, attention maps)
        return out[0] if isinstance(out, tuple) else out

    def loss_at(inp: np.ndarray) -> float:
        # BATCH_STATS updates running statistics, which do not feed back into the output
        return _mse_and_grad(run(graph, inp, mode), target)[0]

    out = run(graph, x, mode)
    target = rng.standard_normal(out.shape)
    graph.zero_grad()
    out = run(graph, x, mode)
    _, dout = _mse_and_grad(out, target)
    dx = graph.backward(dout)
    analytic = {"input": dx}
    analytic.update({name: g.copy() for name, g in graph.gradients().items()})
    arrays = {"input": x}
    arrays.update(graph.parameters())

    report = GradientCheckReport()
    for name, array in arrays.items():
        flat = array.reshape(-1)
        coords = _coordinates(rng, flat.size, max_checks)
        numeric = np.empty(coords.size)
        for slot, index in enumerate(coords):
            original = flat[index]
            flat[index] = original + eps
            plus = loss_at(x)
            flat[index] = original - eps
            minus = loss_at(x)
            flat[index] = original
            numeric[slot] = (plus - minus) / (2.0 * eps)
        report.errors[name] = relative_error(analytic[name].reshape(-1)[coords], numeric)
    logger.debug(f"Gradient check worst array {report.worst}: {report.max_error:.3e}")
    return report
