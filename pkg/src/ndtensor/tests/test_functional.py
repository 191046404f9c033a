import numpy as np
import pytest

from src.ndtensor import functional as F
from src.ndtensor.errors import DimensionError
from src.ndtensor.tensor import Tensor


def naive_conv(x, w, b, stride=1, padding=0, dilation=1):
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    out_h = F.conv_output_size(h, kh, stride, padding, dilation)
    out_w = F.conv_output_size(wd, kw, stride, padding, dilation)
    out = np.zeros((c_out, out_h, out_w))
    for o in range(c_out):
        for i in range(out_h):
            for j in range(out_w):
                total = b[o]
                for c in range(c_in):
                    for u in range(kh):
                        for v in range(kw):
                            total += w[o, c, u, v] * xp[c, i * stride + u * dilation, j * stride + v * dilation]
                out[o, i, j] = total
    return out


class TestSoftmax:
    """Test suite for softmax."""

    def test_uniform(self):
        """Test equal logits give equal weights."""
        np.testing.assert_allclose(F.softmax(Tensor([[0.0, 0.0, 0.0]]), axis=1).data, [[1 / 3] * 3])

    def test_large_logits_do_not_overflow(self):
        """Test the max shift keeps [1000, 0] finite."""
        np.testing.assert_allclose(F.softmax(Tensor([[1000.0, 0.0]]), axis=1).data, [[1.0, 0.0]], atol=1e-12)

    def test_known_values(self):
        """Test softmax([1, 2, 3]) against its direct evaluation."""
        out = F.softmax(Tensor([[1.0, 2.0, 3.0]]), axis=1).data
        np.testing.assert_allclose(out, [[0.09003057, 0.24472847, 0.66524096]], atol=1e-8)

    def test_rows_are_stochastic(self):
        """Test random rows are nonnegative and sum to one."""
        out = F.softmax(Tensor(np.random.default_rng(0).normal(size=(5, 7)) * 10), axis=1).data
        assert (out >= 0).all()
        np.testing.assert_allclose(out.sum(axis=1), np.ones(5), atol=1e-9)


class TestElementwise:
    """Test suite for activations and normalization."""

    def test_relu_clamps_negatives(self):
        """Test relu(-2) = 0 and relu(3) = 3."""
        np.testing.assert_array_equal(F.relu(Tensor([-2.0, 3.0])).data, [0.0, 3.0])

    def test_sigmoid_midpoint(self):
        """Test sigmoid(0) = 0.5 and extreme inputs stay finite."""
        out = F.sigmoid(Tensor([0.0, -800.0, 800.0])).data
        np.testing.assert_allclose(out, [0.5, 0.0, 1.0])

    def test_layer_norm_statistics(self):
        """Test layer_norm([1, 2, 3]) has zero mean and unit variance."""
        out = F.layer_norm(Tensor([[1.0, 2.0, 3.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=0.0).data
        assert abs(out.mean()) < 1e-12
        np.testing.assert_allclose(out.var(), 1.0, atol=1e-12)

    def test_layer_norm_rejects_gain_width(self):
        """Test a gain of the wrong width raises."""
        with pytest.raises(DimensionError):
            F.layer_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(4)), Tensor(np.zeros(4)))

    def test_clamp_and_extrema(self):
        """Test clamp, maximum and minimum on a small vector."""
        x, y = Tensor([-2.0, 0.5, 3.0]), Tensor([0.0, 1.0, 2.0])
        np.testing.assert_array_equal(F.clamp(x, -1.0, 1.0).data, [-1.0, 0.5, 1.0])
        np.testing.assert_array_equal(F.maximum(x, y).data, [0.0, 1.0, 3.0])
        np.testing.assert_array_equal(F.minimum(x, y).data, [-2.0, 0.5, 2.0])

    def test_linear_adds_bias_per_row(self):
        """Test linear is x @ w plus b on every row."""
        x, w, b = Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor(np.eye(2)), Tensor([10.0, 20.0])
        np.testing.assert_array_equal(F.linear(x, w, b).data, [[11.0, 22.0], [13.0, 24.0]])


class TestStructural:
    """Test suite for concat, take_rows, narrow and pad2d."""

    def test_concat_gradients_split_back(self):
        """Test concat routes gradients to each input."""
        a = Tensor(np.ones((1, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 2)), requires_grad=True)
        (F.concat([a, b], axis=0) * Tensor(np.arange(6.0).reshape(3, 2))).sum().backward()
        np.testing.assert_array_equal(a.grad, [[0.0, 1.0]])
        np.testing.assert_array_equal(b.grad, [[2.0, 3.0], [4.0, 5.0]])

    def test_take_rows_accumulates_repeats(self):
        """Test a row taken twice gets twice the gradient."""
        x = Tensor(np.zeros((3, 2)), requires_grad=True)
        F.take_rows(x, [2, 2, 0]).sum().backward()
        np.testing.assert_array_equal(x.grad, [[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]])

    def test_narrow_selects_columns(self):
        """Test narrow on axis 1."""
        x = Tensor(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(F.narrow(x, 1, 1, 3).data, [[1.0, 2.0], [4.0, 5.0]])

    def test_pad2d_extents(self):
        """Test asymmetric padding shape and values."""
        out = F.pad2d(Tensor(np.ones((1, 2, 2))), (1, 0, 2, 1), value=5.0).data
        assert out.shape == (1, 3, 5)
        assert out[0, 0, 0] == 5.0 and out[0, 1, 2] == 1.0


class TestConv2d:
    """Test suite for conv2d and depthwise correlation."""

    def test_scalar_kernel_doubles(self):
        """Test a 1×1 kernel of value 2 doubles the input."""
        x = np.arange(9.0).reshape(1, 3, 3)
        out = F.conv2d(Tensor(x), Tensor(np.full((1, 1, 1, 1), 2.0)), Tensor(np.zeros(1))).data
        np.testing.assert_array_equal(out, 2 * x)

    def test_averaging_kernel_with_padding(self):
        """Test a 3×3 averaging kernel with pad 1 against the naive oracle."""
        x = np.random.default_rng(0).normal(size=(1, 4, 4))
        w, b = np.full((1, 1, 3, 3), 1 / 9), np.zeros(1)
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), padding=1).data
        np.testing.assert_allclose(out, naive_conv(x, w, b, padding=1), atol=1e-10)

    def test_dilation_output_size(self):
        """Test dilation 2 turns a 3×3 kernel on 7×7 into a 3×3 output."""
        out = F.conv2d(Tensor(np.ones((1, 7, 7))), Tensor(np.ones((1, 1, 3, 3))), Tensor(np.zeros(1)), dilation=2)
        assert out.shape == (1, 3, 3)
        np.testing.assert_array_equal(out.data, np.full((1, 3, 3), 9.0))

    @pytest.mark.parametrize("size,stride,padding,dilation", [(5, 1, 0, 1), (8, 2, 1, 1), (7, 1, 2, 2), (6, 2, 0, 2)])
    def test_matches_naive_oracle(self, size, stride, padding, dilation):
        """Test random multi-channel convolutions against the naive oracle."""
        rng = np.random.default_rng(size)
        x, w, b = rng.normal(size=(2, size, size)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
        out = F.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding, dilation).data
        np.testing.assert_allclose(out, naive_conv(x, w, b, stride, padding, dilation), atol=1e-10)

    def test_channel_mismatch(self):
        """Test a kernel for the wrong channel count raises."""
        with pytest.raises(DimensionError):
            F.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 1, 1))), Tensor(np.zeros(1)))

    def test_depthwise_sliding_window(self):
        """Test depthwise correlation against a per-channel sliding-window sum."""
        rng = np.random.default_rng(1)
        x, k = rng.normal(size=(2, 5, 5)), rng.normal(size=(2, 3, 3))
        expected = np.zeros((2, 3, 3))
        for c in range(2):
            for i in range(3):
                for j in range(3):
                    expected[c, i, j] = (x[c, i : i + 3, j : j + 3] * k[c]).sum()
        np.testing.assert_allclose(F.depthwise_conv2d(Tensor(x), Tensor(k)).data, expected, atol=1e-10)


class TestBilinearResize:
    """Test suite for bilinear resizing."""

    def test_constant_image(self):
        """Test a constant image stays constant."""
        out = F.bilinear_resize(Tensor(np.full((2, 3, 5), 5.0)), 7, 4).data
        np.testing.assert_allclose(out, np.full((2, 7, 4), 5.0))

    def test_single_source_pixel(self):
        """Test 1×1 -> 4×4 copies the only value."""
        out = F.bilinear_resize(Tensor(np.full((1, 1, 1), 2.5)), 4, 4).data
        np.testing.assert_allclose(out, np.full((1, 4, 4), 2.5))

    def test_matches_sampling_formula(self):
        """Test 2×2 -> 4×4 against a per-pixel evaluation of the half-pixel formula."""
        src = np.array([[0.0, 1.0], [2.0, 3.0]])

        def sample(i):
            pos = max((i + 0.5) * 0.5 - 0.5, 0.0)
            i0 = min(int(np.floor(pos)), 1)
            i1 = min(i0 + 1, 1)
            return i0, i1, pos - i0

        expected = np.zeros((4, 4))
        for y in range(4):
            y0, y1, fy = sample(y)
            for x in range(4):
                x0, x1, fx = sample(x)
                top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
                bottom = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
                expected[y, x] = top * (1 - fy) + bottom * fy
        out = F.bilinear_resize(Tensor(src[None]), 4, 4).data[0]
        np.testing.assert_allclose(out, expected, atol=1e-12)
