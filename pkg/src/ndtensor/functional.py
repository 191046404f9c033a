"""Differentiable operations beyond the arithmetic defined on `Tensor`."""

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.ndtensor.errors import DimensionError
from src.ndtensor.tensor import Function, Tensor, note_kink


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        self.a = a
        return np.log(a)

    def backward(self, grad):
        return (grad / self.a,)


class Sqrt(Function):
    def forward(self, a):
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad):
        return (grad / (2.0 * self.out),)


class Power(Function):
    def forward(self, a, p: float):
        self.a, self.p = a, p
        return np.power(a, p)

    def backward(self, grad):
        if self.p == 0:
            return (np.zeros_like(grad),)
        return (grad * self.p * np.power(self.a, self.p - 1),)


class Abs(Function):
    def forward(self, a):
        self.sign = np.sign(a)
        note_kink(self.sign)
        return np.abs(a)

    def backward(self, grad):
        return (grad * self.sign,)


class Relu(Function):
    def forward(self, a):
        self.mask = a > 0
        note_kink(self.mask)
        return a * self.mask

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, a):
        e = np.exp(-np.abs(a))
        self.out = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Clamp(Function):
    def forward(self, a, lo: Optional[float], hi: Optional[float]):
        self.mask = np.ones(a.shape, dtype=bool)
        if lo is not None:
            self.mask &= a >= lo
        if hi is not None:
            self.mask &= a <= hi
        note_kink(self.mask)
        return np.clip(a, lo, hi)

    def backward(self, grad):
        return (grad * self.mask,)


class Maximum(Function):
    def forward(self, a, b):
        if a.shape != b.shape:
            raise DimensionError(f"maximum: shape mismatch {a.shape} vs {b.shape}")
        self.pick_a = a >= b
        note_kink(self.pick_a)
        return np.where(self.pick_a, a, b)

    def backward(self, grad):
        return grad * self.pick_a, grad * ~self.pick_a


class Minimum(Function):
    def forward(self, a, b):
        if a.shape != b.shape:
            raise DimensionError(f"minimum: shape mismatch {a.shape} vs {b.shape}")
        self.pick_a = a <= b
        note_kink(self.pick_a)
        return np.where(self.pick_a, a, b)

    def backward(self, grad):
        return grad * self.pick_a, grad * ~self.pick_a


class Softmax(Function):
    def forward(self, a, axis: int):
        self.axis = axis
        e = np.exp(a - np.max(a, axis=axis, keepdims=True))
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True)),)


class LayerNorm(Function):
    def forward(self, x, gain, bias, eps: float):
        d = x.shape[-1]
        if gain.shape != (d,) or bias.shape != (d,):
            raise DimensionError(f"layer_norm: gain/bias {gain.shape}/{bias.shape} for width {d}")
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.xhat = (x - mu) * self.inv_std
        self.gain = gain
        return self.xhat * gain + bias

    def backward(self, grad):
        lead = tuple(range(grad.ndim - 1))
        g_gain = np.sum(grad * self.xhat, axis=lead)
        g_bias = np.sum(grad, axis=lead)
        gx_hat = grad * self.gain
        gx = self.inv_std * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - self.xhat * (gx_hat * self.xhat).mean(axis=-1, keepdims=True)
        )
        return gx, g_gain, g_bias


class Linear(Function):
    def forward(self, x, w, b):
        if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
            raise DimensionError(f"linear: x {x.shape}, W {w.shape}, b {b.shape}")
        self.x, self.w = x, w
        return x @ w + b

    def backward(self, grad):
        return grad @ self.w.T, self.x.T @ grad, grad.sum(axis=0)


class Concat(Function):
    def forward(self, *arrays, axis: int):
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        try:
            return np.concatenate(arrays, axis=axis)
        except ValueError as exc:
            raise DimensionError(f"concat: {[a.shape for a in arrays]} on axis {axis}") from exc

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class TakeRows(Function):
    def forward(self, a, index: np.ndarray):
        self.in_shape, self.index = a.shape, index
        return a[index]

    def backward(self, grad):
        g = np.zeros(self.in_shape, dtype=grad.dtype)
        np.add.at(g, self.index, grad)
        return (g,)


class Narrow(Function):
    def forward(self, a, axis: int, start: int, stop: int):
        self.in_shape = a.shape
        self.key = tuple(slice(start, stop) if i == axis else slice(None) for i in range(a.ndim))
        return a[self.key]

    def backward(self, grad):
        g = np.zeros(self.in_shape, dtype=grad.dtype)
        g[self.key] = grad
        return (g,)


class Pad2d(Function):
    def forward(self, a, pads: tuple[int, int, int, int], value: float):
        top, bottom, left, right = pads
        self.key = (slice(None), slice(top, top + a.shape[1]), slice(left, left + a.shape[2]))
        return np.pad(a, ((0, 0), (top, bottom), (left, right)), constant_values=value)

    def backward(self, grad):
        return (grad[self.key],)


def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


class Conv2d(Function):
    def forward(self, x, w, b, stride: int, padding: int, dilation: int):
        if x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0] or b.shape != (w.shape[0],):
            raise DimensionError(f"conv2d: input {x.shape}, kernel {w.shape}, bias {b.shape}")
        _, kh, kw = w.shape[1:]
        out_h = conv_output_size(x.shape[1], kh, stride, padding, dilation)
        out_w = conv_output_size(x.shape[2], kw, stride, padding, dilation)
        if out_h <= 0 or out_w <= 0:
            raise DimensionError(f"conv2d: kernel {w.shape} does not fit input {x.shape}")
        xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
        eff_h, eff_w = dilation * (kh - 1) + 1, dilation * (kw - 1) + 1
        win = sliding_window_view(xp, (eff_h, eff_w), axis=(1, 2))
        win = win[:, ::stride, ::stride, ::dilation, ::dilation][:, :out_h, :out_w]
        self.win, self.w = win, w
        self.x_shape, self.xp_shape = x.shape, xp.shape
        self.stride, self.padding, self.dilation = stride, padding, dilation
        out = np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))
        return out + b[:, None, None]

    def backward(self, grad):
        g_w = np.tensordot(grad, self.win, axes=([1, 2], [1, 2]))
        g_b = grad.sum(axis=(1, 2))
        s, d, p = self.stride, self.dilation, self.padding
        _, out_h, out_w = grad.shape
        gxp = np.zeros(self.xp_shape, dtype=grad.dtype)
        for i in range(self.w.shape[2]):
            for j in range(self.w.shape[3]):
                contrib = np.tensordot(self.w[:, :, i, j], grad, axes=([0], [0]))
                gxp[:, i * d : i * d + s * (out_h - 1) + 1 : s, j * d : j * d + s * (out_w - 1) + 1 : s] += contrib
        _, h, w = self.x_shape
        return gxp[:, p : p + h, p : p + w], g_w, g_b


class DepthwiseConv2d(Function):
    def forward(self, x, k):
        if x.ndim != 3 or k.ndim != 3 or x.shape[0] != k.shape[0]:
            raise DimensionError(f"depthwise: input {x.shape}, kernel {k.shape}")
        if k.shape[1] > x.shape[1] or k.shape[2] > x.shape[2]:
            raise DimensionError(f"depthwise: template {k.shape} larger than search {x.shape}")
        self.win = sliding_window_view(x, k.shape[1:], axis=(1, 2))
        self.x_shape, self.k = x.shape, k
        return np.einsum("cijhw,chw->cij", self.win, k)

    def backward(self, grad):
        g_k = np.einsum("cij,cijhw->chw", grad, self.win)
        g_x = np.zeros(self.x_shape, dtype=grad.dtype)
        _, out_h, out_w = grad.shape
        for a in range(self.k.shape[1]):
            for b in range(self.k.shape[2]):
                g_x[:, a : a + out_h, b : b + out_w] += grad * self.k[:, a, b][:, None, None]
        return g_x, g_k


def interpolation_matrix(src: int, dst: int) -> np.ndarray:
    """Row i holds the linear weights of output sample i (align_corners=False)."""
    m = np.zeros((dst, src))
    pos = np.maximum((np.arange(dst) + 0.5) * (src / dst) - 0.5, 0.0)
    i0 = np.minimum(np.floor(pos).astype(int), src - 1)
    i1 = np.minimum(i0 + 1, src - 1)
    frac = pos - i0
    rows = np.arange(dst)
    np.add.at(m, (rows, i0), 1.0 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


class BilinearResize(Function):
    def forward(self, x, out_h: int, out_w: int):
        if x.ndim != 3:
            raise DimensionError(f"bilinear_resize: expected C×H×W, got {x.shape}")
        self.ry = interpolation_matrix(x.shape[1], out_h).astype(x.dtype)
        self.rx = interpolation_matrix(x.shape[2], out_w).astype(x.dtype)
        return np.matmul(np.matmul(self.ry, x), self.rx.T)

    def backward(self, grad):
        return (np.matmul(np.matmul(self.ry.T, grad), self.rx),)


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def sqrt(x: Tensor) -> Tensor:
    return Sqrt.apply(x)


def power(x: Tensor, p: float) -> Tensor:
    return Power.apply(x, p=float(p))


def abs(x: Tensor) -> Tensor:  # noqa: A001
    return Abs.apply(x)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def clamp(x: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    return Clamp.apply(x, lo=lo, hi=hi)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    return Maximum.apply(a, b)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    return Minimum.apply(a, b)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax; rows along `axis` are positive and sum to one."""
    return Softmax.apply(x, axis=axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, gain, bias, eps=eps)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w with b added to every row."""
    return Linear.apply(x, w, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a @ b


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def take_rows(x: Tensor, index: Sequence[int] | np.ndarray) -> Tensor:
    return TakeRows.apply(x, index=np.asarray(index, dtype=int))


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    return Narrow.apply(x, axis=axis, start=start, stop=stop)


def pad2d(x: Tensor, pads: tuple[int, int, int, int], value: float = 0.0) -> Tensor:
    """Pad a C×H×W tensor by (top, bottom, left, right)."""
    return Pad2d.apply(x, pads=pads, value=value)


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """Cross-correlate a C_in×H×W input with an C_out×C_in×k×k kernel."""
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding, dilation=dilation)


def depthwise_conv2d(x: Tensor, kernel: Tensor) -> Tensor:
    """Channel-by-channel valid cross-correlation of x (C×H×W) with kernel (C×h×w)."""
    return DepthwiseConv2d.apply(x, kernel)


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    return BilinearResize.apply(x, out_h=out_h, out_w=out_w)
