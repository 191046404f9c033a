"""One-pass evaluation: success AUC, precision, mask IoU and IoU-head correlation."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.lib.config import TrackerConfig
from src.lib.synthetic import SyntheticSequence
from src.lib.training import TrainingPair
from src.ndtensor.errors import UsageError
from src.ndtensor.tensor import Tensor, no_grad
from src.tracker.tracker import StepResult, Tracker
from src.transt.boxes import BBoxN, center_error, iou, iou_many
from src.transt.heads import assign_samples
from src.transt.model import TransT

IOU_THRESHOLDS = np.linspace(0.0, 1.0, 101)
PRECISION_PIXELS = 20.0


@dataclass
class EvalSummary:
    mean_iou: float
    success_auc: float
    precision: float
    frames: int

    def __str__(self) -> str:
        return (
            f"mean IoU {self.mean_iou:.3f} | success AUC {self.success_auc:.3f} | "
            f"precision@{PRECISION_PIXELS:g}px {self.precision:.3f} | {self.frames} frames"
        )


def success_auc(ious: np.ndarray) -> float:
    """Mean over thresholds 0, 0.01, ..., 1 of the fraction of frames with IoU > t."""
    ious = np.asarray(ious, dtype=np.float64)
    return float(np.mean([(ious > t).mean() for t in IOU_THRESHOLDS]))


def evaluate(results: Sequence[BBoxN], gt: Sequence[BBoxN], k: float = PRECISION_PIXELS) -> EvalSummary:
    if len(results) != len(gt):
        raise UsageError(f"{len(results)} results for {len(gt)} ground-truth boxes")
    if not results:
        raise UsageError("nothing to evaluate")
    ious = np.array([iou(r, g) for r, g in zip(results, gt)])
    errors = np.array([center_error(r, g) for r, g in zip(results, gt)])
    return EvalSummary(float(ious.mean()), success_auc(ious), float((errors < k).mean()), len(ious))


def mask_iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary masks; two empty masks agree perfectly."""
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise UsageError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = np.logical_or(pred, gt).sum()
    return 1.0 if union == 0 else float(np.logical_and(pred, gt).sum() / union)


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.size != b.size or a.size < 2:
        raise UsageError("pearson needs two equally long samples of at least 2 values")
    if a.std() == 0 or b.std() == 0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def run_sequence(
    model: TransT,
    frames: Sequence[np.ndarray],
    init_box: BBoxN,
    config: Optional[TrackerConfig] = None,
) -> list[StepResult]:
    """Track every frame after the first, which initializes the tracker."""
    return Tracker(model, config).run(frames, init_box)


def evaluate_sequences(
    model: TransT,
    sequences: Sequence[SyntheticSequence],
    config: Optional[TrackerConfig] = None,
    workers: int = 1,
) -> tuple[EvalSummary, Optional[float]]:
    """
    Pool every tracked frame (the initialization frame excluded) into one
    summary; with masks enabled also return the mean mask IoU.
    """

    def one(seq: SyntheticSequence) -> list[StepResult]:
        return run_sequence(model, seq.frames, seq.gt_boxes[0], config)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(one, sequences))
    else:
        runs = [one(seq) for seq in sequences]

    results = [r.box for run in runs for r in run]
    gt = [b for seq in sequences for b in seq.gt_boxes[1:]]
    summary = evaluate(results, gt)
    mask_scores = [
        mask_iou(r.mask > 0.5, m)
        for run, seq in zip(runs, sequences)
        for r, m in zip(run, seq.gt_masks[1:])
        if r.mask is not None
    ]
    return summary, (float(np.mean(mask_scores)) if mask_scores else None)


def iou_head_correlation(model: TransT, pairs: Sequence[TrainingPair]) -> float:
    """Pearson r between predicted and true IoU over the positive tokens of held-out pairs."""
    predicted, actual = [], []
    with no_grad():
        for pair in pairs:
            tokens = [model.encode_template(Tensor(p)) for p in pair.templates]
            out = model.forward(tokens, Tensor(pair.search))
            positives = np.flatnonzero(assign_samples(pair.gt, model.grid))
            predicted.extend(out.heads.iou_pred.data[positives])
            actual.extend(iou_many(out.heads.boxes.data[positives], pair.gt))
    return pearson(predicted, actual)


def pair_mask_iou(model: TransT, pairs: Sequence[TrainingPair]) -> float:
    """Mean mask IoU of the mask branch on held-out pairs."""
    scores = []
    with no_grad():
        for pair in pairs:
            tokens = [model.encode_template(Tensor(p)) for p in pair.templates]
            out = model.forward(tokens, Tensor(pair.search), with_mask=True)
            scores.append(mask_iou(out.mask.data[0] > 0.5, pair.mask))
    return float(np.mean(scores))
