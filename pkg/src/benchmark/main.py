"""
Toy-scale comparison of the attention fusion against the depthwise-correlation
baseline on held-out synthetic sequences, plus the stage-2 IoU head and mask branch.
"""

import sys
import time

import numpy as np

from src.lib.checkpoint import checkpoint_path, save_checkpoint
from src.lib.config import TrackerConfig, TrainConfig, get_profile
from src.lib.evaluation import EvalSummary, evaluate_sequences, iou_head_correlation
from src.lib.training import HELD_OUT_OFFSET, sample_pair, train_stage1, train_stage2, training_sequences

HELD_OUT_SEQUENCES = 20

# toy-scale targets for the attention variant; the correlation baseline is only reported
MIN_MEAN_IOU = 0.5
MIN_MASK_IOU = 0.6
MIN_IOU_R = 0.5


def run_variant(config: TrainConfig, fusion: str, held_out, stage2: bool) -> dict:
    model_config = get_profile(config.profile).model.model_copy(update={"fusion": fusion})
    started = time.perf_counter()
    model = train_stage1(config, model_config=model_config).model
    row = {"variant": fusion}
    if stage2:
        train_stage2(model, config)
    save_checkpoint(model, checkpoint_path(config.profile if fusion == "transformer" else f"{config.profile}-{fusion}"))

    summary, masks = evaluate_sequences(
        model, held_out, TrackerConfig(templates=config.templates, with_mask=stage2), workers=config.workers
    )
    row.update(summary=summary, masks=masks, minutes=(time.perf_counter() - started) / 60)
    if stage2:
        rng = np.random.default_rng(config.seed + 1)
        pairs = [sample_pair(seq, rng, model_config, config.templates, config.jitter) for seq in held_out]
        row["iou_r"] = iou_head_correlation(model, pairs)
    return row


def print_table(rows: list[dict]) -> None:
    print(f"{'variant':<12} {'mean IoU':>9} {'AUC':>7} {'prec@20':>8} {'mask IoU':>9} {'IoU r':>7} {'min':>6}")
    for row in rows:
        summary: EvalSummary = row["summary"]
        masks = "-" if row["masks"] is None else f"{row['masks']:.3f}"
        iou_r = f"{row['iou_r']:.3f}" if "iou_r" in row else "-"
        print(
            f"{row['variant']:<12} {summary.mean_iou:>9.3f} {summary.success_auc:>7.3f} "
            f"{summary.precision:>8.3f} {masks:>9} {iou_r:>7} {row['minutes']:>6.1f}"
        )


def acceptance_failures(row: dict) -> list[str]:
    """Targets the row misses; an empty list means it passes."""
    failures = []
    summary: EvalSummary = row["summary"]
    if summary.mean_iou < MIN_MEAN_IOU:
        failures.append(f"{row['variant']}: mean IoU {summary.mean_iou:.3f} < {MIN_MEAN_IOU}")
    if row["masks"] is not None and row["masks"] < MIN_MASK_IOU:
        failures.append(f"{row['variant']}: mask IoU {row['masks']:.3f} < {MIN_MASK_IOU}")
    if "iou_r" in row and not row["iou_r"] > MIN_IOU_R:
        failures.append(f"{row['variant']}: IoU-head correlation {row['iou_r']:.3f} <= {MIN_IOU_R}")
    return failures


if __name__ == "__main__":
    config = TrainConfig(profile="toy", seed=0)
    held_out = training_sequences(config, offset=HELD_OUT_OFFSET, count=HELD_OUT_SEQUENCES)

    # Attention fusion with the IoU head and mask branch
    rows = [run_variant(config, "transformer", held_out, stage2=True)]

    # Depthwise-correlation baseline with the same stage-1 budget
    rows.append(run_variant(config, "xcorr", held_out, stage2=False))

    print_table(rows)

    failures = acceptance_failures(rows[0])
    for failure in failures:
        print(f"FAIL {failure}")
    if not failures:
        print("transformer variant meets every toy-scale target")
    sys.exit(1 if failures else 0)
