from unittest.mock import patch

import numpy as np
import pytest

from src.benchmark.main import (
    HELD_OUT_SEQUENCES,
    MIN_IOU_R,
    MIN_MASK_IOU,
    MIN_MEAN_IOU,
    acceptance_failures,
    print_table,
    run_variant,
)
from src.lib.config import TrainConfig
from src.lib.evaluation import EvalSummary
from src.lib.training import HELD_OUT_OFFSET, training_sequences
from src.ndtensor.tensor import get_default_dtype, set_default_dtype


def make_row(mean_iou: float = 0.7, masks: float | None = 0.8, iou_r: float | None = 0.6) -> dict:
    row = {
        "variant": "transformer",
        "summary": EvalSummary(mean_iou, 0.6, 0.9, 100),
        "masks": masks,
        "minutes": 1.0,
    }
    if iou_r is not None:
        row["iou_r"] = iou_r
    return row


class TestAcceptance:
    """Test suite for the toy-scale targets checked after a benchmark run."""

    def test_passing_row(self):
        """Test a row above every target has no failures."""
        assert acceptance_failures(make_row()) == []

    def test_low_mean_iou(self):
        """Test a tracker below the mean-IoU target is reported."""
        failures = acceptance_failures(make_row(mean_iou=0.3))
        assert len(failures) == 1 and "mean IoU" in failures[0]

    def test_low_mask_iou(self):
        """Test a weak mask branch is reported."""
        failures = acceptance_failures(make_row(masks=0.5))
        assert len(failures) == 1 and "mask IoU" in failures[0]

    def test_correlation_must_exceed_target(self):
        """Test an IoU-head correlation equal to the target still fails."""
        failures = acceptance_failures(make_row(iou_r=MIN_IOU_R))
        assert len(failures) == 1 and "correlation" in failures[0]

    def test_stage1_only_row(self):
        """Test a row without masks or IoU head is judged on mean IoU alone."""
        assert acceptance_failures(make_row(masks=None, iou_r=None)) == []

    def test_print_table(self, capsys):
        """Test the table prints one line per variant plus a header."""
        print_table([make_row(), make_row(masks=None, iou_r=None)])
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        assert lines[2].split()[4:6] == ["-", "-"]


@pytest.fixture(scope="module")
def benchmark_rows():
    previous = get_default_dtype()
    config = TrainConfig(profile="toy", seed=0)
    held_out = training_sequences(config, offset=HELD_OUT_OFFSET, count=HELD_OUT_SEQUENCES)
    with patch("src.benchmark.main.save_checkpoint"), patch("src.benchmark.main.checkpoint_path"):
        rows = {
            "transformer": run_variant(config, "transformer", held_out, stage2=True),
            "xcorr": run_variant(config, "xcorr", held_out, stage2=False),
        }
    yield rows
    set_default_dtype(previous)


@pytest.mark.slow
class TestEndToEnd:
    """Test suite for training from scratch and evaluating on held-out sequences."""

    def test_tracks_held_out_sequences(self, benchmark_rows):
        """Test the toy tracker reaches mean IoU 0.5 on 20 held-out 60-frame sequences."""
        summary = benchmark_rows["transformer"]["summary"]
        assert summary.frames == HELD_OUT_SEQUENCES * 59
        assert summary.mean_iou >= MIN_MEAN_IOU

    def test_mask_branch(self, benchmark_rows):
        """Test the stage-2 mask branch reaches mean mask IoU 0.6."""
        assert benchmark_rows["transformer"]["masks"] >= MIN_MASK_IOU

    def test_iou_head_correlation(self, benchmark_rows):
        """Test predicted IoUs correlate with true IoUs on held-out pairs."""
        assert benchmark_rows["transformer"]["iou_r"] > MIN_IOU_R

    def test_correlation_baseline_reported(self, benchmark_rows):
        """Test the depthwise-correlation variant is evaluated on the same sequences."""
        row = benchmark_rows["xcorr"]
        assert row["summary"].frames == benchmark_rows["transformer"]["summary"].frames
        assert 0.0 <= row["summary"].mean_iou <= 1.0 and np.isfinite(row["summary"].success_auc)
        assert row["masks"] is None and "iou_r" not in row

    def test_meets_targets(self, benchmark_rows):
        """Test the attention variant passes the benchmark's own target check."""
        assert acceptance_failures(benchmark_rows["transformer"]) == []
