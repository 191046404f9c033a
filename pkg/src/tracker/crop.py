"""Crop geometry, the Hanning window penalty and box coordinate mapping."""

from dataclasses import dataclass

import numpy as np

from src.ndtensor.errors import UsageError
from src.transt.boxes import BBoxN

TEMPLATE_FACTOR = 2.0
SEARCH_FACTOR = 4.0


@dataclass(frozen=True)
class CropSpec:
    center: tuple[float, float]
    side: float
    out_size: int
    pad_value: np.ndarray

    @classmethod
    def around(cls, frame: np.ndarray, box: BBoxN, factor: float, out_size: int) -> "CropSpec":
        """Square crop of side factor·sqrt(w·h) centered on a pixel box, padded with the frame mean."""
        return cls((box.cx, box.cy), factor * float(np.sqrt(box.w * box.h)), out_size, frame.mean(axis=(1, 2)))


def sample_positions(start: float, side: float, out_size: int) -> np.ndarray:
    """Source pixel coordinates of the output sample centers along one axis."""
    return start + (np.arange(out_size) + 0.5) * (side / out_size) - 0.5


def crop_patch(frame: np.ndarray, spec: CropSpec) -> np.ndarray:
    """
    Bilinearly resample a square window of `frame` (C×H×W) to out_size².

    Pixel i covers [i, i+1) so its center sits at i + 0.5; area outside the
    frame reads as `pad_value`.
    """
    if not spec.side > 0:
        raise UsageError(f"crop side must be positive, got {spec.side}")
    c, h, w = frame.shape
    cx, cy = spec.center
    ys = sample_positions(cy - spec.side / 2, spec.side, spec.out_size)
    xs = sample_positions(cx - spec.side / 2, spec.side, spec.out_size)
    y0, x0 = np.floor(ys).astype(int), np.floor(xs).astype(int)
    fy, fx = ys - y0, xs - x0
    pad = np.asarray(spec.pad_value, dtype=np.float64).reshape(c, 1, 1)

    def gather(iy: np.ndarray, ix: np.ndarray) -> np.ndarray:
        inside = ((iy >= 0) & (iy < h))[:, None] & ((ix >= 0) & (ix < w))[None, :]
        values = frame[:, np.clip(iy, 0, h - 1)[:, None], np.clip(ix, 0, w - 1)[None, :]]
        return np.where(inside[None], values, pad)

    wy0, wy1 = (1.0 - fy)[:, None], fy[:, None]
    wx0, wx1 = (1.0 - fx)[None, :], fx[None, :]
    return (
        wy0 * wx0 * gather(y0, x0)
        + wy0 * wx1 * gather(y0, x0 + 1)
        + wy1 * wx0 * gather(y0 + 1, x0)
        + wy1 * wx1 * gather(y0 + 1, x0 + 1)
    )


def paste_mask(mask: np.ndarray, spec: CropSpec, frame_shape: tuple[int, int]) -> np.ndarray:
    """Map a patch-space mask back onto the frame by nearest sampling; outside the crop is 0."""
    h, w = frame_shape
    cx, cy = spec.center
    scale = spec.out_size / spec.side
    u = np.floor(((np.arange(w) + 0.5) - (cx - spec.side / 2)) * scale).astype(int)
    v = np.floor(((np.arange(h) + 0.5) - (cy - spec.side / 2)) * scale).astype(int)
    inside = ((v >= 0) & (v < spec.out_size))[:, None] & ((u >= 0) & (u < spec.out_size))[None, :]
    sampled = mask[np.clip(v, 0, spec.out_size - 1)[:, None], np.clip(u, 0, spec.out_size - 1)[None, :]]
    return np.where(inside, sampled, 0.0)


def hanning2d(h: int, w: int) -> np.ndarray:
    """Outer product of symmetric Hann windows: 1 at the center, 0 on the border."""
    if h < 2 or w < 2:
        raise UsageError(f"window extents must be at least 2, got {h}×{w}")
    return np.outer(np.hanning(h), np.hanning(w))


def window_penalty(score: np.ndarray, window: np.ndarray, w: float) -> np.ndarray:
    """(1 - w)·score + w·window, elementwise."""
    if not 0.0 <= w <= 1.0:
        raise UsageError(f"window influence must lie in [0, 1], got {w}")
    return (1.0 - w) * np.asarray(score) + w * np.asarray(window)


def select_best(score_w: np.ndarray, boxes: np.ndarray) -> tuple[int, BBoxN, float]:
    """Highest penalized score; ties go to the lowest index."""
    index = int(np.argmax(score_w))
    return index, BBoxN(*(float(v) for v in boxes[index])), float(score_w[index])


def to_image_coords(box: BBoxN, search_center: tuple[float, float], search_side: float) -> BBoxN:
    sx, sy = search_center
    return BBoxN(
        sx + (box.cx - 0.5) * search_side,
        sy + (box.cy - 0.5) * search_side,
        box.w * search_side,
        box.h * search_side,
    )


def to_normalized(box: BBoxN, search_center: tuple[float, float], search_side: float) -> BBoxN:
    sx, sy = search_center
    return BBoxN(
        (box.cx - sx) / search_side + 0.5,
        (box.cy - sy) / search_side + 0.5,
        box.w / search_side,
        box.h / search_side,
    )
