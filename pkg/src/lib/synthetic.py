"""
Procedural tracking sequences: one colored target and a few similar
distractors drifting over a smooth textured background.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.ndtensor.functional import interpolation_matrix
from src.transt.boxes import BBoxN

Shape = Literal["rect", "ellipse"]


@dataclass
class SyntheticSequence:
    frames: list[np.ndarray]
    gt_boxes: list[BBoxN]
    gt_masks: list[np.ndarray]
    seed: int
    shape: Shape = "rect"

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class _Sprite:
    shape: Shape
    color: np.ndarray
    cx: float
    cy: float
    w: float
    h: float


def shape_mask(shape: Shape, box: BBoxN, size: tuple[int, int]) -> np.ndarray:
    """Pixels whose centers fall inside the shape inscribed in `box`."""
    h, w = size
    ys = (np.arange(h) + 0.5)[:, None]
    xs = (np.arange(w) + 0.5)[None, :]
    if shape == "rect":
        x1, y1, x2, y2 = box.corners()
        return (xs >= x1) & (xs <= x2) & (ys >= y1) & (ys <= y2)
    return ((xs - box.cx) / (box.w / 2)) ** 2 + ((ys - box.cy) / (box.h / 2)) ** 2 <= 1.0


def shape_area(shape: Shape, w: float, h: float) -> float:
    return w * h if shape == "rect" else np.pi * w * h / 4.0


def _background(rng: np.random.Generator, size: int, coarse: int = 8) -> np.ndarray:
    grid = rng.uniform(0.2, 0.8, size=(3, coarse, coarse))
    up = interpolation_matrix(coarse, size)
    smooth = np.matmul(np.matmul(up, grid), up.T)
    return np.clip(smooth + rng.normal(0.0, 0.03, size=smooth.shape), 0.0, 1.0)


def _distinct_color(rng: np.random.Generator, avoid: np.ndarray, min_distance: float = 0.5) -> np.ndarray:
    while True:
        color = rng.uniform(0.0, 1.0, size=3)
        if np.linalg.norm(color - avoid) >= min_distance:
            return color


def _step(rng: np.random.Generator, sprite: _Sprite, sigma: float, size: int) -> None:
    if sigma <= 0:
        return
    for axis, extent in (("cx", sprite.w), ("cy", sprite.h)):
        lo, hi = extent / 2, size - extent / 2
        value = getattr(sprite, axis) + rng.normal(0.0, sigma)
        # reflect at the frame border
        if value < lo:
            value = 2 * lo - value
        if value > hi:
            value = 2 * hi - value
        setattr(sprite, axis, float(np.clip(value, lo, hi)))


def _paint(frame: np.ndarray, sprite: _Sprite) -> np.ndarray:
    mask = shape_mask(sprite.shape, BBoxN(sprite.cx, sprite.cy, sprite.w, sprite.h), frame.shape[1:])
    frame[:, mask] = sprite.color[:, None]
    return mask


def gen_synthetic(
    seed: int,
    n_frames: int = 60,
    n_distractors: int = 2,
    motion_sigma: float = 2.0,
    jitter: float = 0.1,
    frame_size: int = 160,
) -> SyntheticSequence:
    """Bit-reproducible sequence from `seed`; the target is painted last and never occluded."""
    if n_frames < 2:
        raise ValueError(f"a sequence needs at least 2 frames, got {n_frames}")
    rng = np.random.default_rng(seed)
    background = _background(rng, frame_size)
    shape: Shape = "rect" if rng.random() < 0.5 else "ellipse"

    def sprite(color: np.ndarray) -> _Sprite:
        w, h = rng.uniform(0.15, 0.3, size=2) * frame_size
        cx = rng.uniform(w / 2, frame_size - w / 2)
        cy = rng.uniform(h / 2, frame_size - h / 2)
        return _Sprite(shape, color, float(cx), float(cy), float(w), float(h))

    target = sprite(rng.uniform(0.0, 1.0, size=3))
    distractors = [sprite(_distinct_color(rng, target.color)) for _ in range(n_distractors)]

    frames, boxes, masks = [], [], []
    for _ in range(n_frames):
        frame = background.copy()
        for other in distractors:
            _paint(frame, other)
        masks.append(_paint(frame, target))
        if jitter > 0:
            frame = np.clip(frame * (1.0 + rng.uniform(-jitter, jitter)), 0.0, 1.0)
        frames.append(frame)
        boxes.append(BBoxN(target.cx, target.cy, target.w, target.h))
        for s in (target, *distractors):
            _step(rng, s, motion_sigma, frame_size)
    return SyntheticSequence(frames, boxes, masks, seed, shape)
