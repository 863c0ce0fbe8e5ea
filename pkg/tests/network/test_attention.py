"""Unit tests for the additive attention gate."""

import numpy as np
import pytest

from app.errors import ShapeError
from app.network.attention import AttentionGate
from app.nn.gradcheck import gradient_check
from app.nn.tensor import Mode


class _GateInput:
    """Expose one gate input to gradient_check while holding the other fixed."""

    def __init__(self, gate: AttentionGate, fixed: np.ndarray, wrt: str):
        self.gate = gate
        self.fixed = fixed
        self.wrt = wrt

    def forward(self, x, mode=Mode.EVAL, rng=None):
        if self.wrt == "skip":
            return self.gate.forward(self.fixed, x, mode)[0]
        return self.gate.forward(x, self.fixed, mode)[0]

    def backward(self, dout):
        dg, dx = self.gate.backward(dout)
        return dx if self.wrt == "skip" else dg

    def parameters(self):
        return self.gate.parameters()

    def gradients(self):
        return self.gate.gradients()

    def zero_grad(self):
        self.gate.zero_grad()

    def astype(self, dtype):
        self.gate.astype(dtype)
        self.fixed = self.fixed.astype(dtype)
        return self


@pytest.fixture
def gate(rng):
    """Provide a gate with 8 gating, 4 skip and 4 intermediate channels."""
    return AttentionGate(8, 4, 4, rng=rng)


def test_gate_shapes(gate, rng):
    """Test output matches the skip and alpha is single-channel at skip resolution."""
    g = rng.standard_normal((2, 8, 4, 4)).astype(np.float32)
    x = rng.standard_normal((2, 4, 8, 8)).astype(np.float32)
    out, alpha = gate.forward(g, x)

    assert out.shape == x.shape
    assert alpha.shape == (2, 1, 8, 8)


def test_gate_reference_shapes(rng):
    """Test the deepest gate of the 64x64 network: (512, 4x4) gating (256, 8x8)."""
    gate = AttentionGate(512, 256, 256, rng=rng)
    g = np.zeros((1, 512, 4, 4), dtype=np.float32)
    x = np.zeros((1, 256, 8, 8), dtype=np.float32)
    out, alpha = gate.forward(g, x)
    assert out.shape == (1, 256, 8, 8)
    assert alpha.shape == (1, 1, 8, 8)


def test_gate_output_is_alpha_times_skip(gate, rng):
    """Test the gated skip equals alpha * x exactly."""
    g = rng.standard_normal((1, 8, 4, 4)).astype(np.float32)
    x = rng.standard_normal((1, 4, 8, 8)).astype(np.float32)
    out, alpha = gate.forward(g, x)
    np.testing.assert_array_equal(out, alpha * x)


def test_zero_psi_gives_half(gate, rng):
    """Test psi weights and bias at zero give alpha = 0.5 everywhere."""
    gate.psi.params["weight"][...] = 0.0
    gate.psi.params["bias"][...] = 0.0
    g = rng.standard_normal((1, 8, 4, 4)).astype(np.float32)
    x = rng.standard_normal((1, 4, 8, 8)).astype(np.float32)
    out, alpha = gate.forward(g, x)

    np.testing.assert_array_equal(alpha, 0.5)
    np.testing.assert_allclose(out, 0.5 * x)


def test_alpha_bounds(gate, rng):
    """Test alpha stays within [0, 1] for large random inputs."""
    g = 10 * rng.standard_normal((2, 8, 4, 4)).astype(np.float32)
    x = 10 * rng.standard_normal((2, 4, 8, 8)).astype(np.float32)
    _, alpha = gate.forward(g, x)
    assert alpha.min() >= 0.0
    assert alpha.max() <= 1.0


def test_alpha_is_constant_on_two_by_two_blocks(gate, rng):
    """Test nearest upsampling of the coarse coefficients."""
    g = rng.standard_normal((1, 8, 4, 4)).astype(np.float32)
    x = rng.standard_normal((1, 4, 8, 8)).astype(np.float32)
    _, alpha = gate.forward(g, x)
    assert np.all(alpha[0, 0, 0::2, 0::2] == alpha[0, 0, 1::2, 1::2])


def test_gate_rejects_misaligned_inputs(gate):
    """Test the gating signal must sit at half the skip resolution."""
    with pytest.raises(ShapeError, match="gate"):
        gate.forward(np.zeros((1, 8, 8, 8)), np.zeros((1, 4, 8, 8)))
    with pytest.raises(ShapeError):
        gate.forward(np.zeros((2, 8, 4, 4)), np.zeros((1, 4, 8, 8)))


def test_gate_parameter_names(gate):
    """Test the gate's named parameters."""
    assert set(gate.parameters()) == {
        "w_g.weight",
        "w_g.bias",
        "w_x.weight",
        "psi.weight",
        "psi.bias",
    }
    assert gate.buffers() == {}


def test_gradcheck_gate_skip_path(gate, rng):
    """Test gradients with respect to the skip input and parameters."""
    g = rng.standard_normal((2, 8, 4, 4))
    x = rng.standard_normal((2, 4, 8, 8))
    report = gradient_check(_GateInput(gate, g, "skip"), x, eps=1e-6)
    assert report.max_error < 1e-3


def test_gradcheck_gate_signal_path(gate, rng):
    """Test gradients with respect to the gating signal."""
    g = rng.standard_normal((2, 8, 4, 4))
    x = rng.standard_normal((2, 4, 8, 8))
    report = gradient_check(_GateInput(gate, x, "signal"), g, eps=1e-6)
    assert report.max_error < 1e-3
