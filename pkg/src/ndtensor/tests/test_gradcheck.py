import numpy as np

from src.ndtensor import functional as F
from src.ndtensor.gradcheck import gradcheck
from src.ndtensor.tensor import Tensor


class TestGradCheck:
    """Test suite for the finite-difference checker."""

    def test_smooth_function_passes(self):
        """Test a smooth composite passes with no skipped coordinates."""
        x = Tensor(np.random.default_rng(0).normal(size=(3, 3)), requires_grad=True)
        result = gradcheck(lambda: F.exp(F.sigmoid(x)).sum(), [x], name="smooth")
        assert result.passed
        assert result.checked == 9 and result.skipped == 0

    def test_wrong_gradient_fails(self):
        """Test a function whose tape gradient is wrong fails the check."""
        x = Tensor(np.array([0.3, 0.7]), requires_grad=True)

        def fn():
            # the detached factor hides d/dx of the second x
            return (x * x.detach()).sum()

        assert not gradcheck(fn, [x]).passed

    def test_kink_coordinates_are_skipped(self):
        """Test a relu input sitting on its kink is skipped, not failed."""
        x = Tensor(np.array([0.0, 1.0, -1.0]), requires_grad=True)
        result = gradcheck(lambda: F.relu(x).sum(), [x])
        assert result.skipped == 1
        assert result.checked == 2 and result.passed

    def test_max_coords_limits_work(self):
        """Test only a sample of coordinates is checked when requested."""
        x = Tensor(np.random.default_rng(1).normal(size=(10, 10)), requires_grad=True)
        result = gradcheck(lambda: (x * x).sum(), [x], max_coords=7)
        assert result.checked == 7

    def test_relaxed_tolerance_at_32_bit(self):
        """Test 32-bit inputs get the relaxed tolerance."""
        x = Tensor(np.array([0.5, -0.25]), requires_grad=True)
        x.data = x.data.astype(np.float32)
        result = gradcheck(lambda: (x * x).sum(), [x])
        assert result.rtol == 1e-2
        assert result.passed
