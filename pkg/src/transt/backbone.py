"""Four-stage convolutional feature pyramid with an overall stride of 8."""

from dataclasses import dataclass

import numpy as np

from src.lib.config import STRIDE
from src.ndtensor import functional as F
from src.ndtensor.errors import ConfigurationError
from src.ndtensor.layers import Conv
from src.ndtensor.module import Module
from src.ndtensor.tensor import Tensor

# stride and dilation of the first conv in each stage
STAGE_LAYOUT = ((2, 1), (2, 1), (2, 1), (1, 2))


@dataclass
class PyramidFeatures:
    """Stage outputs at strides 2, 4, 8 and 8."""

    stages: list[Tensor]

    @property
    def final(self) -> Tensor:
        return self.stages[-1]


class Stage(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, stride: int, dilation: int):
        self.conv1 = Conv(rng, c_in, c_out, 3, stride=stride, padding=dilation, dilation=dilation)
        self.conv2 = Conv(rng, c_out, c_out, 3, padding=dilation, dilation=dilation)

    def __call__(self, x: Tensor) -> Tensor:
        return F.relu(self.conv2(F.relu(self.conv1(x))))


class Backbone(Module):
    def __init__(self, rng: np.random.Generator, channels: tuple[int, ...], in_channels: int = 3):
        if len(channels) != len(STAGE_LAYOUT):
            raise ConfigurationError(f"backbone needs {len(STAGE_LAYOUT)} stage widths, got {channels}")
        self.channels = tuple(channels)
        widths = (in_channels, *channels)
        self.stages = [
            Stage(rng, widths[i], widths[i + 1], stride, dilation)
            for i, (stride, dilation) in enumerate(STAGE_LAYOUT)
        ]


def feature_shapes(h: int, w: int, channels: tuple[int, ...]) -> list[tuple[int, int, int]]:
    """Stage output shapes for an h×w input, without running the network."""
    if h % STRIDE or w % STRIDE:
        raise ConfigurationError(f"input {h}×{w} is not divisible by {STRIDE}")
    shapes = []
    for c, (stride, dilation) in zip(channels, STAGE_LAYOUT):
        h = F.conv_output_size(h, 3, stride, dilation, dilation)
        w = F.conv_output_size(w, 3, stride, dilation, dilation)
        shapes.append((c, h, w))
    return shapes


def backbone_forward(net: Backbone, image: Tensor) -> PyramidFeatures:
    if image.ndim != 3:
        raise ConfigurationError(f"backbone expects a C×H×W image, got {image.shape}")
    _, h, w = image.shape
    if h % STRIDE or w % STRIDE:
        raise ConfigurationError(f"input {h}×{w} is not divisible by {STRIDE}")
    stages, x = [], image
    for stage in net.stages:
        x = stage(x)
        stages.append(x)
    return PyramidFeatures(stages)
