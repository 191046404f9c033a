"""
Sequence directories: numbered PPM frames, a `groundtruth.txt` of `x,y,w,h`
lines in pixels, and optional PGM masks under `masks/`.
"""

from pathlib import Path
from typing import Iterable

import numpy as np

from src.lib.imageio import read_ppm, write_mask, write_ppm
from src.lib.synthetic import SyntheticSequence
from src.ndtensor.errors import UsageError
from src.transt.boxes import BBoxN

GROUNDTRUTH = "groundtruth.txt"


def frame_name(index: int, suffix: str = ".ppm") -> str:
    return f"{index + 1:08d}{suffix}"


def format_box(box: BBoxN) -> str:
    return ",".join(f"{v:.4f}" for v in box.to_xywh())


def parse_box(line: str) -> BBoxN:
    parts = [p for p in line.replace("\t", ",").replace(" ", ",").split(",") if p]
    if len(parts) != 4:
        raise UsageError(f"expected x,y,w,h, got {line!r}")
    return BBoxN.from_xywh(*(float(p) for p in parts))


def read_groundtruth(path: str | Path) -> list[BBoxN]:
    return [parse_box(line) for line in Path(path).read_text().splitlines() if line.strip()]


def write_groundtruth(path: str | Path, boxes: Iterable[BBoxN]) -> None:
    Path(path).write_text("".join(f"{format_box(b)}\n" for b in boxes))


def save_sequence(seq: SyntheticSequence, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    for i, (frame, mask) in enumerate(zip(seq.frames, seq.gt_masks)):
        write_ppm(out / frame_name(i), frame)
        write_mask(out / "masks" / frame_name(i, ".pgm"), mask.astype(float))
    write_groundtruth(out / GROUNDTRUTH, seq.gt_boxes)
    return out


def load_sequence(seq_dir: str | Path) -> tuple[list[np.ndarray], list[BBoxN]]:
    """Frames in file-name order and their ground-truth boxes."""
    root = Path(seq_dir)
    paths = sorted(root.glob("*.ppm"))
    if not paths:
        raise UsageError(f"no .ppm frames in {root}")
    boxes = read_groundtruth(root / GROUNDTRUTH) if (root / GROUNDTRUTH).exists() else []
    if boxes and len(boxes) != len(paths):
        raise UsageError(f"{root}: {len(paths)} frames but {len(boxes)} ground-truth lines")
    return [read_ppm(p) for p in paths], boxes


def write_results(path: str | Path, lines: Iterable[str]) -> None:
    Path(path).write_text("".join(f"{line}\n" for line in lines))
