"""Attention-map dumps: one min-max normalized PGM per attention block."""

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from src.lib.config import ModelConfig
from src.lib.imageio import normalize_map, write_pgm
from src.lib.synthetic import SyntheticSequence
from src.ndtensor.errors import UsageError
from src.ndtensor.tensor import Tensor, no_grad
from src.tracker.crop import SEARCH_FACTOR, TEMPLATE_FACTOR, CropSpec, crop_patch
from src.transt.attention import AttentionRecorder, TokenSeq
from src.transt.fusion import combine_token_seqs
from src.transt.model import TransT


@dataclass
class AttentionMap:
    name: str
    path: Path
    values: np.ndarray


def _query_row(name: str, template: TokenSeq, top_index: int) -> int:
    """Template-side blocks read the template center, search-side blocks the top-score token."""
    if name.endswith("_z"):
        h, w = template.grids[0]
        return (h // 2) * w + w // 2
    return top_index


def _key_shape(name: str, template: TokenSeq, search_grid: tuple[int, int]) -> tuple[int, int]:
    self_attention = "eca_" in name
    reads_template = (name.endswith("_z") and self_attention) or (name.endswith("_x") and not self_attention)
    reads_template = reads_template or name == "final_cfa"
    if not reads_template:
        return search_grid
    # concatenated grids of equal width stack vertically
    return (sum(h for h, _ in template.grids), template.grids[0][1])


def dump_attention(
    model: TransT,
    template_patches: Sequence[np.ndarray],
    search_patch: np.ndarray,
    out_dir: str | Path,
) -> list[AttentionMap]:
    """Run one forward pass and write the head-averaged attention row of every ECA/CFA block."""
    if model.config.fusion != "transformer":
        raise UsageError("attention maps exist only for the transformer fusion")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    recorder = AttentionRecorder()
    with no_grad():
        template = combine_token_seqs([model.encode_template(Tensor(p)) for p in template_patches])
        result = model.forward(template, Tensor(search_patch), recorder=recorder, with_iou=False)
    top_index = int(np.argmax(result.scores))

    maps = []
    for name, heads in recorder.weights.items():
        row = np.mean([h[_query_row(name, template, top_index)] for h in heads], axis=0)
        values = row.reshape(_key_shape(name, template, model.grid))
        path = out / f"{name.replace('.', '_')}.pgm"
        write_pgm(path, normalize_map(values))
        maps.append(AttentionMap(name, path, values))
    return maps


def attention_inputs(
    seq: SyntheticSequence,
    model_config: ModelConfig,
    templates: int = 2,
    frame_index: int = 1,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Template patches from the first frame and the search patch of `frame_index`, both around ground truth."""
    first, box = seq.frames[0], seq.gt_boxes[0]
    patch = crop_patch(first, CropSpec.around(first, box, TEMPLATE_FACTOR, model_config.template_size))
    frame = seq.frames[frame_index]
    spec = CropSpec.around(frame, seq.gt_boxes[frame_index], SEARCH_FACTOR, model_config.search_size)
    return [patch] * templates, crop_patch(frame, spec)
