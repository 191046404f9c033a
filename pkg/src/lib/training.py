"""
Two-stage training on synthetic sequences.

Stage 1 trains the backbone, fusion network and the classification and
regression heads on template/search pairs. Stage 2 freezes those and trains
the IoU head and the mask branch.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from src.lib.config import ModelConfig, TrainConfig, get_profile
from src.lib.synthetic import SyntheticSequence, gen_synthetic
from src.ndtensor.errors import DivergenceError, UsageError
from src.ndtensor.module import Parameter
from src.ndtensor.optim import AdamW, ParamGroup
from src.ndtensor import functional as F
from src.ndtensor.tensor import Tensor, grad, set_default_dtype
from src.tracker.crop import SEARCH_FACTOR, TEMPLATE_FACTOR, CropSpec, crop_patch, to_normalized
from src.transt.boxes import BBoxN
from src.transt.heads import assign_samples
from src.transt.losses import cls_loss, iou_pred_loss, reg_loss, seg_loss
from src.transt.model import TransT

# search-region augmentation, in units of sqrt(w·h) of the target
CENTER_JITTER = 0.75
SCALE_JITTER = 0.15

# held-out sequences are drawn far past any training seed
HELD_OUT_OFFSET = 1_000_000


@dataclass
class TrainingPair:
    templates: list[np.ndarray]
    search: np.ndarray
    gt: BBoxN
    mask: np.ndarray


@dataclass
class TrainResult:
    model: TransT
    losses: list[float] = field(default_factory=list)


def dtype_for(precision: int) -> type:
    return np.float32 if precision == 32 else np.float64


def training_sequences(config: TrainConfig, offset: int = 0, count: Optional[int] = None) -> list[SyntheticSequence]:
    """Deterministic sequences derived from the config seed; held-out sets use a different offset."""
    count = config.n_train_sequences if count is None else count
    return [
        gen_synthetic(
            config.seed * 100_003 + offset + i,
            n_frames=config.n_frames,
            n_distractors=config.n_distractors,
            motion_sigma=config.motion_sigma,
            jitter=config.jitter,
            frame_size=config.frame_size,
        )
        for i in range(count)
    ]


def _jitter_box(rng: np.random.Generator, box: BBoxN, amount: float) -> BBoxN:
    if amount <= 0:
        return box
    side = np.sqrt(box.w * box.h)
    dx, dy = rng.normal(0.0, amount, size=2) * side
    sw, sh = np.exp(rng.normal(0.0, amount, size=2))
    return BBoxN(box.cx + dx, box.cy + dy, box.w * sw, box.h * sh)


def sample_pair(
    seq: SyntheticSequence,
    rng: np.random.Generator,
    model_config: ModelConfig,
    templates: int = 2,
    jitter: float = 0.1,
) -> TrainingPair:
    """
    Draw M+1 frames. The search frame sits at the head or tail of the draw,
    the initial template is the frame farthest from it and the remaining frames
    become jittered updated templates.
    """
    if len(seq) < templates + 1:
        raise UsageError(f"sequence of {len(seq)} frames cannot provide {templates + 1} distinct frames")
    frames = np.sort(rng.choice(len(seq), size=templates + 1, replace=False))
    if rng.random() < 0.5:
        search_index, initial, middle = frames[-1], frames[0], frames[1:-1]
    else:
        search_index, initial, middle = frames[0], frames[-1], frames[1:-1]

    patches = []
    for k, index in enumerate([initial, *middle]):
        frame, box = seq.frames[index], seq.gt_boxes[index]
        if k > 0:
            box = _jitter_box(rng, box, jitter)
        patches.append(crop_patch(frame, CropSpec.around(frame, box, TEMPLATE_FACTOR, model_config.template_size)))

    frame, gt = seq.frames[search_index], seq.gt_boxes[search_index]
    side = np.sqrt(gt.w * gt.h)
    shift = rng.uniform(-CENTER_JITTER, CENTER_JITTER, size=2) * side
    scale = float(np.exp(rng.normal(0.0, SCALE_JITTER)))
    center_box = BBoxN(gt.cx + shift[0], gt.cy + shift[1], gt.w * scale, gt.h * scale)
    spec = CropSpec.around(frame, center_box, SEARCH_FACTOR, model_config.search_size)
    search = crop_patch(frame, spec) * (1.0 + rng.uniform(-jitter, jitter))

    target = to_normalized(gt, spec.center, spec.side)
    x1, y1, x2, y2 = (float(np.clip(v, 0.0, 1.0)) for v in target.corners())
    mask_spec = CropSpec(spec.center, spec.side, spec.out_size, np.zeros(1))
    mask = crop_patch(seq.gt_masks[search_index][None].astype(np.float64), mask_spec)[0] > 0.5
    return TrainingPair(patches, np.clip(search, 0.0, 1.0), BBoxN.from_corners(x1, y1, x2, y2), mask)


def stage1_loss(model: TransT, pair: TrainingPair) -> Tensor:
    tokens = [model.encode_template(Tensor(p)) for p in pair.templates]
    out = model.forward(tokens, Tensor(pair.search), with_iou=False)
    labels = assign_samples(pair.gt, model.grid)
    loss = cls_loss(out.fg, labels)
    positives = np.flatnonzero(labels)
    if positives.size:
        box_loss, _ = reg_loss(F.take_rows(out.heads.boxes, positives), pair.gt)
        loss = loss + box_loss
    return loss


def stage2_loss(model: TransT, pair: TrainingPair, train_iou: bool = True, train_seg: bool = True) -> Tensor:
    tokens = [model.encode_template(Tensor(p)) for p in pair.templates]
    out = model.forward(tokens, Tensor(pair.search), with_iou=train_iou, with_mask=train_seg)
    loss = Tensor(0.0)
    if train_iou:
        labels = assign_samples(pair.gt, model.grid)
        iou_loss, _ = iou_pred_loss(out.heads.iou_pred, out.heads.boxes.data, pair.gt, labels)
        loss = loss + iou_loss
    if train_seg:
        loss = loss + seg_loss(out.mask.reshape(*pair.mask.shape), pair.mask)
    return loss


LossFn = Callable[[TransT, TrainingPair], Tensor]


def _accumulate_batch(
    model: TransT,
    pairs: Sequence[TrainingPair],
    loss_fn: LossFn,
    params: list[Parameter],
    workers: int,
) -> float:
    """Sum of per-pair losses / batch size; gradients land in `.grad` in batch order."""
    scale = 1.0 / len(pairs)
    if workers <= 1:
        total = 0.0
        for pair in pairs:
            loss = loss_fn(model, pair) * scale
            loss.backward()
            total += loss.item()
        return total

    def one(pair: TrainingPair) -> tuple[float, list[np.ndarray]]:
        loss = loss_fn(model, pair) * scale
        return loss.item(), grad(loss, params)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, pairs))
    for _, grads in results:
        for p, g in zip(params, grads):
            p.grad = g.copy() if p.grad is None else p.grad + g
    return float(sum(value for value, _ in results))


def _run(
    model: TransT,
    optimizer: AdamW,
    loss_fn: LossFn,
    sequences: list[SyntheticSequence],
    config: TrainConfig,
    steps: int,
    label: str,
) -> list[float]:
    rng = np.random.default_rng(config.seed)
    params = [p for g in optimizer.groups for p in g.params if p.trainable]
    base_lr = optimizer.lr
    losses: list[float] = []
    print(f"Starting {label} for {steps} steps.")
    for step in range(1, steps + 1):
        if step > config.lr_drop_fraction * steps:
            optimizer.lr = base_lr * 0.1
        pairs = [
            sample_pair(sequences[rng.integers(len(sequences))], rng, model.config, config.templates, config.jitter)
            for _ in range(config.batch_size)
        ]
        value = _accumulate_batch(model, pairs, loss_fn, params, config.workers)
        if not np.isfinite(value):
            raise DivergenceError(step, value)
        optimizer.step()
        optimizer.zero_grad()
        losses.append(value)
        if step % config.log_every == 0 or step == steps:
            window = losses[-config.log_every :]
            print(f"{label} step {step}/{steps} loss={value:.4f} avg={np.mean(window):.4f}")
    optimizer.lr = base_lr
    print(f"Finished {label}.\n")
    return losses


def train_stage1(
    config: TrainConfig,
    sequences: Optional[list[SyntheticSequence]] = None,
    model_config: Optional[ModelConfig] = None,
) -> TrainResult:
    """Train backbone, fusion and cls/reg heads from scratch."""
    set_default_dtype(dtype_for(config.precision))
    model = TransT(model_config or get_profile(config.profile).model, seed=config.seed)
    sequences = sequences if sequences is not None else training_sequences(config)
    optimizer = AdamW(
        [
            ParamGroup(model.backbone.parameters(), config.backbone_lr_ratio),
            ParamGroup(model.non_backbone_base_parameters(), 1.0),
        ],
        lr=config.lr,
        weight_decay=config.weight_decay,
    )
    losses = _run(model, optimizer, stage1_loss, sequences, config, config.steps, "stage 1")
    return TrainResult(model, losses)


def train_stage2(
    model: TransT,
    config: TrainConfig,
    sequences: Optional[list[SyntheticSequence]] = None,
    train_iou: bool = True,
    train_seg: bool = True,
) -> TrainResult:
    """Freeze the stage-1 network and train the IoU head and/or the mask branch."""
    if not (train_iou or train_seg):
        raise UsageError("stage 2 needs the IoU head, the mask branch or both")
    set_default_dtype(dtype_for(config.precision))
    for module in model.base_modules():
        module.freeze()
    groups = []
    if train_iou:
        groups.append(ParamGroup(model.iou_head.parameters(), 1.0))
    if train_seg:
        groups.append(ParamGroup(model.seg.parameters(), config.seg_lr / config.iou_lr))
    optimizer = AdamW(groups, lr=config.iou_lr, weight_decay=config.weight_decay)
    sequences = sequences if sequences is not None else training_sequences(config)

    def loss_fn(m: TransT, pair: TrainingPair) -> Tensor:
        return stage2_loss(m, pair, train_iou, train_seg)

    losses = _run(model, optimizer, loss_fn, sequences, config, config.stage2_steps, "stage 2")
    return TrainResult(model, losses)
