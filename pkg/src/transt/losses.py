"""
Training objectives: weighted binary cross-entropy for classification, L1 plus
generalized IoU for box regression, MSE for IoU prediction, and dice plus
focal loss for masks.
"""

import logging
from dataclasses import dataclass

import numpy as np

from src.ndtensor import functional as F
from src.ndtensor.errors import DimensionError
from src.ndtensor.tensor import Tensor
from src.transt.boxes import BBoxN, iou_many

logger = logging.getLogger(__name__)

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    giou: float = 2.0
    l1: float = 5.0
    dice: float = 1.0
    focal: float = 1.0
    neg_weight: float = 1.0 / 16.0

    def __post_init__(self) -> None:
        if min(self.giou, self.l1, self.dice, self.focal, self.neg_weight) < 0:
            raise ValueError(f"loss weights must be nonnegative: {self}")


DEFAULT_WEIGHTS = LossWeights()


def _const(values: np.ndarray) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64))


def _clamp_prob(p: Tensor) -> Tensor:
    return F.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


def cls_loss(p: Tensor, labels: np.ndarray, weights: LossWeights = DEFAULT_WEIGHTS) -> Tensor:
    """Mean over all tokens of the BCE, negatives scaled by `neg_weight`."""
    labels = np.asarray(labels, dtype=bool)
    if p.shape != labels.shape:
        raise DimensionError(f"cls_loss: scores {p.shape} vs labels {labels.shape}")
    p = _clamp_prob(p)
    y = _const(labels.astype(float))
    bce = -(y * F.log(p) + (1.0 - y) * F.log(1.0 - p))
    w = _const(np.where(labels, 1.0, weights.neg_weight))
    return (w * bce).mean()


def _column(x: Tensor, i: int) -> Tensor:
    return F.narrow(x, 1, i, i + 1)


def giou_tensor(pred: Tensor, gt: BBoxN) -> Tensor:
    """Differentiable GIoU of every row of a k×4 (cx, cy, w, h) tensor against gt; k×1."""
    k = pred.shape[0]
    cx, cy, w, h = (_column(pred, i) for i in range(4))
    x1, x2 = cx - w * 0.5, cx + w * 0.5
    y1, y2 = cy - h * 0.5, cy + h * 0.5
    gx1, gy1, gx2, gy2 = (_const(np.full((k, 1), v)) for v in gt.corners())
    inter_w = F.clamp(F.minimum(x2, gx2) - F.maximum(x1, gx1), lo=0.0)
    inter_h = F.clamp(F.minimum(y2, gy2) - F.maximum(y1, gy1), lo=0.0)
    inter = inter_w * inter_h
    union = w * h + gt.w * gt.h - inter
    enclose = (F.maximum(x2, gx2) - F.minimum(x1, gx1)) * (F.maximum(y2, gy2) - F.minimum(y1, gy1))
    union = F.clamp(union, lo=1e-12)
    enclose = F.clamp(enclose, lo=1e-12)
    return inter / union - (enclose - union) / enclose


def reg_loss(pred: Tensor, gt: BBoxN, weights: LossWeights = DEFAULT_WEIGHTS) -> tuple[Tensor, bool]:
    """
    Mean over positive tokens of giou_w·(1 - GIoU) + l1_w·|pred - gt|_1.

    Returns the loss and whether the positive set was empty (loss 0 then).
    """
    if pred.shape[0] == 0:
        logger.warning("reg_loss: no positive samples")
        return Tensor(0.0), True
    if pred.ndim != 2 or pred.shape[1] != 4:
        raise DimensionError(f"reg_loss: expected k×4 boxes, got {pred.shape}")
    k = pred.shape[0]
    target = _const(np.tile(gt.as_array(), (k, 1)))
    l1 = F.abs(pred - target).sum(axis=1, keepdims=True)
    per_box = (1.0 - giou_tensor(pred, gt)) * weights.giou + l1 * weights.l1
    return per_box.mean(), False


def iou_pred_loss(
    iou_pred: Tensor,
    boxes: np.ndarray,
    gt: BBoxN,
    labels: np.ndarray,
) -> tuple[Tensor, bool]:
    """Mean squared error against the plain IoU of each positive token's box."""
    labels = np.asarray(labels, dtype=bool)
    if iou_pred.shape != labels.shape:
        raise DimensionError(f"iou_pred_loss: predictions {iou_pred.shape} vs labels {labels.shape}")
    index = np.flatnonzero(labels)
    if index.size == 0:
        logger.warning("iou_pred_loss: no positive samples")
        return Tensor(0.0), True
    targets = iou_many(np.asarray(boxes)[index], gt)
    diff = F.take_rows(iou_pred, index) - _const(targets)
    return (diff * diff).mean(), False


def _check_mask(m: Tensor, target: np.ndarray, name: str) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if m.shape != target.shape:
        raise DimensionError(f"{name}: prediction {m.shape} vs target {target.shape}")
    return target


def dice_loss(m: Tensor, target: np.ndarray, eps: float = 1.0) -> Tensor:
    """1 - (2·Σ m·t + eps) / (Σ m + Σ t + eps)."""
    target = _check_mask(m, target, "dice_loss")
    numerator = (m * _const(target)).sum() * 2.0 + eps
    denominator = m.sum() + (float(target.sum()) + eps)
    return 1.0 - numerator / denominator


def focal_loss(m: Tensor, target: np.ndarray, gamma: float = 2.0, alpha: float = 0.25) -> Tensor:
    """Mean of -alpha_t (1 - p_t)^gamma log p_t over pixels."""
    target = _check_mask(m, target, "focal_loss")
    p = _clamp_prob(m)
    t = _const(target)
    p_t = p * t + (1.0 - p) * (1.0 - t)
    alpha_t = _const(alpha * target + (1.0 - alpha) * (1.0 - target))
    return -(alpha_t * F.power(1.0 - p_t, gamma) * F.log(p_t)).mean()


def seg_loss(m: Tensor, target: np.ndarray, weights: LossWeights = DEFAULT_WEIGHTS) -> Tensor:
    return dice_loss(m, target) * weights.dice + focal_loss(m, target) * weights.focal
