import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.ndtensor import functional as F
from src.ndtensor.errors import DimensionError
from src.ndtensor.layers import Dense
from src.ndtensor.module import Module
from src.ndtensor.tensor import Tensor
from src.transt.attention import TokenSeq
from src.transt.boxes import BBoxN

logger = logging.getLogger(__name__)


class Mlp(Module):
    """Three affine layers with ReLU between them."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int):
        self.fc1 = Dense(rng, d_in, d_hidden)
        self.fc2 = Dense(rng, d_hidden, d_hidden)
        self.fc3 = Dense(rng, d_hidden, d_out)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Returns the output and the second hidden activations."""
        if x.shape[1] != self.fc1.w.shape[0]:
            raise DimensionError(f"mlp: input width {x.shape[1]} vs {self.fc1.w.shape[0]}")
        hidden = F.relu(self.fc2(F.relu(self.fc1(x))))
        return self.fc3(hidden), hidden


@dataclass
class HeadOutputs:
    cls_logits: Tensor
    boxes: Tensor
    reg_hidden: Tensor
    iou_pred: Optional[Tensor] = None

    @property
    def count(self) -> int:
        return self.cls_logits.shape[0]

    def box(self, index: int) -> BBoxN:
        return BBoxN(*(float(v) for v in self.boxes.data[index]))


def classification_head(mlp: Mlp, f: TokenSeq) -> Tensor:
    """Per-token foreground/background logits, n×2."""
    logits, _ = mlp(f.values)
    return logits


def regression_head(mlp: Mlp, f: TokenSeq) -> tuple[Tensor, Tensor]:
    """Per-token (cx, cy, w, h) in (0, 1) and the penultimate activations."""
    raw, hidden = mlp(f.values)
    return F.sigmoid(raw), hidden


def iou_head(mlp: Mlp, reg_hidden: Tensor, f: TokenSeq) -> Tensor:
    if reg_hidden.shape[0] != f.count:
        raise DimensionError(f"iou head: {reg_hidden.shape[0]} regression rows vs {f.count} tokens")
    raw, _ = mlp(F.concat([reg_hidden, f.values], axis=1))
    return F.sigmoid(raw).reshape(f.count)


def foreground_scores(cls_logits: Tensor) -> Tensor:
    """Softmax over the two logits, component 0 being foreground."""
    n = cls_logits.shape[0]
    return F.narrow(F.softmax(cls_logits, axis=1), 1, 0, 1).reshape(n)


def token_centers(grid: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (x, y) centers of every grid cell in row-major order."""
    h, w = grid
    ys, xs = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    return xs.reshape(-1), ys.reshape(-1)


def assign_samples(gt: BBoxN, grid: tuple[int, int], inclusive: bool = True) -> np.ndarray:
    """Token i is positive when its cell center lies inside the ground-truth box."""
    h, w = grid
    if not gt.valid:
        logger.warning("degenerate ground-truth box %s, all %d tokens negative", gt, h * w)
        return np.zeros(h * w, dtype=bool)
    xs, ys = token_centers(grid)
    x1, y1, x2, y2 = gt.corners()
    if inclusive:
        return (xs >= x1) & (xs <= x2) & (ys >= y1) & (ys <= y2)
    return (xs > x1) & (xs < x2) & (ys > y1) & (ys < y2)
