from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from src.lib.config import ModelConfig
from src.ndtensor.module import Module, Parameter
from src.ndtensor.tensor import Tensor
from src.transt.attention import AttentionRecorder, TokenSeq
from src.transt.backbone import Backbone, PyramidFeatures, backbone_forward
from src.transt.fusion import FusionNetwork, XcorrFusion, combine_token_seqs, fusion_forward, xcorr_forward
from src.transt.heads import (
    HeadOutputs,
    Mlp,
    classification_head,
    foreground_scores,
    iou_head,
    regression_head,
)
from src.transt.segmentation import SegBranch, seg_forward


@dataclass
class ModelOutput:
    heads: HeadOutputs
    fg: Tensor
    f: TokenSeq
    template: TokenSeq
    pyramid: PyramidFeatures
    mask: Optional[Tensor] = None

    @property
    def scores(self) -> np.ndarray:
        return self.fg.data


class TransT(Module):
    """
    Siamese tracker: shared backbone, attention fusion (or the depthwise
    correlation baseline), classification/regression/IoU heads and the mask branch.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.config = config
        d, c = config.d, config.channels
        self.backbone = Backbone(rng, config.backbone_channels)
        if config.fusion == "transformer":
            self.fusion = FusionNetwork(rng, c, d, config.n_layers, config.n_heads, config.d_ffn, config.use_norm)
        else:
            self.fusion = XcorrFusion(rng, c, d)
        self.cls_head = Mlp(rng, d, d, 2)
        self.reg_head = Mlp(rng, d, d, 4)
        self.iou_head = Mlp(rng, 2 * d, d, 1)
        self.seg = SegBranch(
            rng,
            d,
            config.backbone_channels,
            n_heads=config.seg_heads,
            channels=config.seg_channels,
            attention=config.seg_attention,
        )

    @property
    def grid(self) -> tuple[int, int]:
        return self.config.search_grid

    def extract(self, patch: Tensor) -> PyramidFeatures:
        return backbone_forward(self.backbone, patch)

    def encode_template(self, patch: Tensor) -> TokenSeq:
        """Backbone plus channel reduction for one template patch."""
        return self.fusion.template_tokens(self.extract(patch).final)

    def forward(
        self,
        template: TokenSeq | Sequence[TokenSeq],
        search: Tensor,
        mode: Literal["concat", "avg"] = "concat",
        recorder: Optional[AttentionRecorder] = None,
        with_iou: bool = True,
        with_mask: bool = False,
    ) -> ModelOutput:
        if not isinstance(template, TokenSeq):
            template = combine_token_seqs(list(template), mode)
        pyramid = self.extract(search)
        if isinstance(self.fusion, FusionNetwork):
            f, z = fusion_forward(self.fusion, template, pyramid.final, recorder)
        else:
            f, z = xcorr_forward(self.fusion, template, pyramid.final)

        logits = classification_head(self.cls_head, f)
        boxes, hidden = regression_head(self.reg_head, f)
        heads = HeadOutputs(logits, boxes, hidden, iou_head(self.iou_head, hidden, f) if with_iou else None)
        fg = foreground_scores(logits)
        mask = seg_forward(self.seg, f, z, fg, pyramid) if with_mask else None
        return ModelOutput(heads, fg, f, z, pyramid, mask)

    def base_modules(self) -> list[Module]:
        """Everything trained in the first stage."""
        return [self.backbone, self.fusion, self.cls_head, self.reg_head]

    def base_parameters(self) -> list[Parameter]:
        return [p for m in self.base_modules() for p in m.parameters()]

    def non_backbone_base_parameters(self) -> list[Parameter]:
        return [p for m in self.base_modules()[1:] for p in m.parameters()]
