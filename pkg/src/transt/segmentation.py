"""
Mask branch: two query-conditioned attention maps over the search grid are
stacked on the fused search features, merged top-down with the backbone
pyramid and decoded to a full-resolution mask.
"""

from typing import Optional

import numpy as np

from src.ndtensor import functional as F
from src.ndtensor.errors import DimensionError
from src.ndtensor.layers import Conv
from src.ndtensor.module import Module
from src.ndtensor.tensor import Tensor, note_kink
from src.transt.attention import MhaParams, TokenSeq
from src.transt.backbone import PyramidFeatures
from src.transt.fusion import unflatten_tokens


class SegBranch(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        d: int,
        stage_channels: tuple[int, ...],
        n_heads: int = 8,
        channels: int = 8,
        attention: bool = True,
    ):
        self.attention = attention
        self.n_heads = n_heads
        if attention:
            self.attn_template = MhaParams(rng, d, n_heads)
            self.attn_search = MhaParams(rng, d, n_heads)
        entry_in = d + 2 * n_heads if attention else d
        self.entry = Conv(rng, entry_in, channels, 1)
        self.laterals = [Conv(rng, c, channels, 1) for c in stage_channels]
        # smoothing at strides 8, 4 and 2
        self.smooth = [Conv(rng, channels, channels, 3, padding=1) for _ in range(3)]
        self.mask_head = Conv(rng, channels, 1, 3, padding=1)


def center_template_query(template_tokens: TokenSeq) -> Tensor:
    """Token at the middle cell of the first (initial) template grid, 1×d."""
    h, w = template_tokens.grids[0]
    return F.take_rows(template_tokens.values, [(h // 2) * w + w // 2])


def top_score_query(fusion_tokens: TokenSeq, cls_scores: Tensor | np.ndarray) -> tuple[Tensor, int]:
    """Token with the highest foreground score; ties go to the lowest index."""
    scores = cls_scores.data if isinstance(cls_scores, Tensor) else np.asarray(cls_scores)
    if scores.shape[0] != fusion_tokens.count:
        raise DimensionError(f"{scores.shape[0]} scores for {fusion_tokens.count} tokens")
    index = int(np.argmax(scores))
    note_kink(np.array([index]))
    return F.take_rows(fusion_tokens.values, [index]), index


def query_attention_map(
    p: MhaParams,
    query: Tensor,
    tokens: TokenSeq,
    grid: Optional[tuple[int, int]] = None,
) -> Tensor:
    """Per-head softmax weights of one query over `tokens`, as n_h×H×W."""
    h, w = grid or tokens.grids[0]
    if h * w != tokens.count:
        raise DimensionError(f"grid {h}×{w} does not hold {tokens.count} tokens")
    q = F.linear(query, p.w_q, p.b_q)
    k = F.linear(tokens.values, p.w_k, p.b_k)
    rows = []
    for i in range(p.n_heads):
        qi = F.narrow(q, 1, i * p.d_k, (i + 1) * p.d_k)
        ki = F.narrow(k, 1, i * p.d_k, (i + 1) * p.d_k)
        rows.append(F.softmax((qi @ ki.T) * (1.0 / np.sqrt(p.d_k)), axis=1))
    return F.concat(rows, axis=0).reshape(p.n_heads, h, w)


def _upsample(x: Tensor) -> Tensor:
    return F.bilinear_resize(x, 2 * x.shape[1], 2 * x.shape[2])


def seg_forward(
    branch: SegBranch,
    fusion_tokens: TokenSeq,
    template_tokens: TokenSeq,
    cls_scores: Tensor | np.ndarray,
    pyramid: PyramidFeatures,
) -> Tensor:
    """Mask probabilities at the search-patch resolution, 1×8H_x×8W_x."""
    grid = fusion_tokens.grids[0]
    s1, s2, s3, s4 = pyramid.stages
    if s4.shape[1:] != grid or s3.shape[1:] != grid:
        raise DimensionError(f"pyramid stride-8 maps {s3.shape}/{s4.shape} do not match grid {grid}")
    if s2.shape[1:] != (2 * grid[0], 2 * grid[1]) or s1.shape[1:] != (4 * grid[0], 4 * grid[1]):
        raise DimensionError(f"pyramid maps {s1.shape}/{s2.shape} do not match grid {grid}")

    maps = [unflatten_tokens(fusion_tokens, grid)]
    if branch.attention:
        center = center_template_query(template_tokens)
        top, _ = top_score_query(fusion_tokens, cls_scores)
        maps.append(query_attention_map(branch.attn_template, center, fusion_tokens, grid))
        maps.append(query_attention_map(branch.attn_search, top, fusion_tokens, grid))
    lat1, lat2, lat3, lat4 = branch.laterals
    smooth8, smooth4, smooth2 = branch.smooth

    x = branch.entry(F.concat(maps, axis=0)) + lat4(s4) + lat3(s3)
    x = F.relu(smooth8(x))
    x = F.relu(smooth4(_upsample(x) + lat2(s2)))
    x = F.relu(smooth2(_upsample(x) + lat1(s1)))
    return F.sigmoid(_upsample(branch.mask_head(x)))
