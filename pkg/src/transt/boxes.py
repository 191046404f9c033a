"""Box representations and closed-form overlap measures."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBoxN:
    """Box as (cx, cy, w, h); normalized to the search side unless noted otherwise."""

    cx: float
    cy: float
    w: float
    h: float

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBoxN":
        return cls((x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1)

    @classmethod
    def from_xywh(cls, x: float, y: float, w: float, h: float) -> "BBoxN":
        return cls(x + w / 2, y + h / 2, w, h)

    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)

    def to_xywh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.w, self.h)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h])

    @property
    def valid(self) -> bool:
        return self.w > 0 and self.h > 0 and bool(np.isfinite(self.as_array()).all())


def _overlap(a: BBoxN, b: BBoxN) -> tuple[float, float, float]:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    area_a = max(ax2 - ax1, 0.0) * max(ay2 - ay1, 0.0)
    area_b = max(bx2 - bx1, 0.0) * max(by2 - by1, 0.0)
    inter = max(min(ax2, bx2) - max(ax1, bx1), 0.0) * max(min(ay2, by2) - max(ay1, by1), 0.0)
    enclose = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    return inter, area_a + area_b - inter, enclose


def iou(a: BBoxN, b: BBoxN) -> float:
    inter, union, _ = _overlap(a, b)
    return inter / union if union > 0 else 0.0


def giou(a: BBoxN, b: BBoxN) -> float:
    """IoU minus the share of the smallest enclosing box covered by neither box."""
    inter, union, enclose = _overlap(a, b)
    overlap = inter / union if union > 0 else 0.0
    if enclose <= 0:
        return overlap
    return overlap - (enclose - union) / enclose


def iou_many(boxes: np.ndarray, gt: BBoxN) -> np.ndarray:
    """Plain IoU of every row of an n×4 (cx, cy, w, h) array against one box."""
    return np.array([iou(BBoxN(*row), gt) for row in np.asarray(boxes, dtype=np.float64)])


def center_error(a: BBoxN, b: BBoxN) -> float:
    return float(np.hypot(a.cx - b.cx, a.cy - b.cy))
