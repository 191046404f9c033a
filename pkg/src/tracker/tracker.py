"""
Online tracking loop: crop a search region around the previous box, score it
against the template bank, pick the window-penalized best box, and refresh
the bank when the predicted IoU clears the update threshold.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from src.lib.config import TrackerConfig
from src.ndtensor.errors import UsageError
from src.ndtensor.tensor import Tensor, no_grad
from src.tracker.bank import TemplateBank, combine_templates
from src.tracker.crop import (
    SEARCH_FACTOR,
    TEMPLATE_FACTOR,
    CropSpec,
    crop_patch,
    hanning2d,
    paste_mask,
    select_best,
    to_image_coords,
    window_penalty,
)
from src.transt.attention import TokenSeq
from src.transt.boxes import BBoxN
from src.transt.model import TransT

logger = logging.getLogger(__name__)


@dataclass
class TrackerState:
    bank: TemplateBank
    prev_box: BBoxN
    window: np.ndarray
    config: TrackerConfig
    frame_index: int = 0

    @property
    def w_penalty(self) -> float:
        return self.config.w_penalty

    @property
    def update_threshold(self) -> float:
        return self.config.threshold


@dataclass
class StepResult:
    box: BBoxN
    score: float
    iou_pred: float
    index: int
    updated_slot: int = -1
    mask: Optional[np.ndarray] = None

    def result_line(self) -> str:
        x, y, w, h = self.box.to_xywh()
        return f"{x:.2f},{y:.2f},{w:.2f},{h:.2f},{self.score:.4f},{self.iou_pred:.4f}"


def _template_tokens(model: TransT, frame: np.ndarray, box: BBoxN) -> tuple[TokenSeq, np.ndarray]:
    patch = crop_patch(frame, CropSpec.around(frame, box, TEMPLATE_FACTOR, model.config.template_size))
    with no_grad():
        return model.encode_template(Tensor(patch)), patch


def track_init(frame: np.ndarray, gt_box: BBoxN, model: TransT, config: TrackerConfig) -> TrackerState:
    """Crop the initial template and fill every bank slot with it."""
    if not gt_box.valid:
        raise UsageError(f"initial box must have positive extent, got {gt_box}")
    tokens, patch = _template_tokens(model, frame, gt_box)
    h, w = model.grid
    return TrackerState(
        bank=TemplateBank.initial(tokens, patch, config.templates),
        prev_box=gt_box,
        window=hanning2d(h, w).reshape(-1),
        config=config,
    )


def _clip_box(box: BBoxN, frame_shape: tuple[int, int]) -> BBoxN:
    h, w = frame_shape
    return BBoxN(
        float(np.clip(box.cx, 0, w)),
        float(np.clip(box.cy, 0, h)),
        float(np.clip(box.w, 1.0, w)),
        float(np.clip(box.h, 1.0, h)),
    )


def track_step(state: TrackerState, frame: np.ndarray, model: TransT) -> StepResult:
    """Track one frame; never raises on a bad prediction, the previous box is kept instead."""
    config = state.config
    spec = CropSpec.around(frame, state.prev_box, SEARCH_FACTOR, model.config.search_size)
    patch = crop_patch(frame, spec)
    with no_grad():
        out = model.forward(
            combine_templates(state.bank, config.mode),
            Tensor(patch),
            mode=config.mode,
            with_mask=config.with_mask,
        )
    scores = out.scores
    penalized = window_penalty(scores, state.window, config.w_penalty)
    index, box_n, _ = select_best(penalized, out.heads.boxes.data)
    score = float(scores[index])
    iou_pred = float(out.heads.iou_pred.data[index])
    state.frame_index += 1

    box = to_image_coords(box_n, spec.center, spec.side)
    if box.valid:
        state.prev_box = _clip_box(box, frame.shape[1:])
    else:
        logger.warning("frame %d: degenerate prediction %s, keeping previous box", state.frame_index, box)

    # the bank is only refreshed from a box predicted on this frame
    updated = -1
    gate = iou_pred > config.threshold and score > config.score_gate
    if box.valid and gate and not config.long_term:
        tokens, template_patch = _template_tokens(model, frame, state.prev_box)
        updated = state.bank.replace_oldest(tokens, template_patch)

    mask = None
    if out.mask is not None:
        mask = paste_mask(out.mask.data[0], spec, frame.shape[1:])
    return StepResult(state.prev_box, score, iou_pred, index, updated, mask)


class Tracker:
    """Tracks one sequence with a shared, read-only model."""

    def __init__(self, model: TransT, config: Optional[TrackerConfig] = None):
        self.model = model
        self.config = config or TrackerConfig()
        self.state: Optional[TrackerState] = None

    def init(self, frame: np.ndarray, box: BBoxN) -> None:
        self.state = track_init(frame, box, self.model, self.config)

    def track(self, frame: np.ndarray) -> StepResult:
        if self.state is None:
            raise UsageError("tracker is not initialized")
        return track_step(self.state, frame, self.model)

    def run(self, frames: Iterable[np.ndarray], init_box: BBoxN) -> list[StepResult]:
        """First frame initializes; every later frame yields one result."""
        frames = iter(frames)
        self.init(next(frames), init_box)
        return [self.track(frame) for frame in frames]
