import numpy as np

from src.ndtensor import functional as F
from src.ndtensor.module import Module, Parameter, xavier_uniform
from src.ndtensor.tensor import Tensor


class Dense(Module):
    """Affine map on token rows: x[n×d_in] -> x @ w + b."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int):
        self.w = Parameter(xavier_uniform(rng, (d_in, d_out), d_in, d_out))
        self.b = Parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.w, self.b)


class Conv(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        c_in: int,
        c_out: int,
        kernel: int,
        stride: int = 1,
        padding: int = 0,
        dilation: int = 1,
    ):
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        self.w = Parameter(xavier_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, fan_out))
        self.b = Parameter(np.zeros(c_out))
        self.stride, self.padding, self.dilation = stride, padding, dilation

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.w, self.b, self.stride, self.padding, self.dilation)


class Norm(Module):
    def __init__(self, d: int):
        self.gain = Parameter(np.ones(d))
        self.bias = Parameter(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.gain, self.bias)
