"""Adam with bias-corrected moment estimates."""

from dataclasses import dataclass, field

import numpy as np

from app.errors import NonFiniteGradientError


@dataclass
class AdamState:
    """First/second moments per parameter name and the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    t: int,
    lr: float = 8e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Apply one Adam update to params in place.

    Args:
        state: Moment estimates, updated in place
        params: Parameter arrays, updated in place
        grads: Gradients with the same names and shapes
        t: Step number, starting at 1

    Returns:
        The updated state

    Raises:
        NonFiniteGradientError: If any gradient holds NaN or infinity; nothing is updated
        ValueError: If t < 1 or a gradient is missing or misshapen
    """
    if t < 1:
        raise ValueError(f"Adam step number must be >= 1, got {t}")
    for name, param in params.items():
        if name not in grads or grads[name].shape != param.shape:
            raise ValueError(f"gradient for '{name}' is missing or has the wrong shape")
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError(name)

    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    step_size = lr / bc1
    for name, param in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        param -= (step_size * m / (np.sqrt(v / bc2) + eps)).astype(param.dtype, copy=False)
    state.t = t
    return state


class Adam:
    """Stateful wrapper around adam_step."""

    def __init__(
        self, lr: float = 8e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        adam_step(
            self.state, params, grads, self.state.t + 1, self.lr, self.beta1, self.beta2, self.eps
        )
