import numpy as np
import pytest

from src.lib.config import ModelConfig
from src.ndtensor.tensor import Tensor
from src.transt.attention import AttentionRecorder
from src.transt.fusion import XcorrFusion
from src.transt.model import TransT

TINY = ModelConfig(
    d=8,
    n_heads=2,
    d_ffn=16,
    n_layers=1,
    backbone_channels=(4, 4, 8, 8),
    template_size=16,
    search_size=32,
    seg_heads=2,
    seg_channels=4,
)


@pytest.fixture
def patches():
    rng = np.random.default_rng(10)
    return Tensor(rng.uniform(size=(3, 16, 16))), Tensor(rng.uniform(size=(3, 32, 32)))


class TestTransT:
    """Test suite for the assembled tracking network."""

    def test_output_shapes(self, patches):
        """Test one template and one search patch give per-token heads and a full mask."""
        template, search = patches
        model = TransT(TINY, seed=0)
        out = model.forward(model.encode_template(template), search, with_mask=True)
        assert out.heads.count == 16
        assert out.heads.cls_logits.shape == (16, 2)
        assert out.heads.boxes.shape == (16, 4)
        assert out.heads.iou_pred.shape == (16,)
        assert out.scores.shape == (16,)
        assert out.mask.shape == (1, 32, 32)

    def test_optional_outputs_skipped(self, patches):
        """Test the IoU head and mask branch only run when asked."""
        template, search = patches
        model = TransT(TINY)
        out = model.forward(model.encode_template(template), search, with_iou=False)
        assert out.heads.iou_pred is None and out.mask is None

    def test_seed_determines_weights(self, patches):
        """Test equal seeds build identical networks."""
        template, search = patches
        a, b = TransT(TINY, seed=3), TransT(TINY, seed=3)
        out_a = a.forward(a.encode_template(template), search)
        out_b = b.forward(b.encode_template(template), search)
        np.testing.assert_array_equal(out_a.heads.boxes.data, out_b.heads.boxes.data)

    def test_duplicate_templates_match_single(self, patches):
        """Test two copies of one template give the single-template output."""
        template, search = patches
        model = TransT(TINY)
        z = model.encode_template(template)
        single = model.forward(z, search).heads.boxes.data
        for mode in ("concat", "avg"):
            doubled = model.forward([z, z], search, mode=mode).heads.boxes.data
            np.testing.assert_allclose(doubled, single, atol=1e-9)

    def test_recorder_collects_fusion_attention(self, patches):
        """Test a recorder passed to forward receives attention weights."""
        template, search = patches
        model = TransT(TINY)
        recorder = AttentionRecorder()
        model.forward(model.encode_template(template), search, recorder=recorder)
        assert len(recorder.weights) > 0

    def test_xcorr_variant(self, patches):
        """Test the correlation baseline keeps the head and grid contract."""
        template, search = patches
        model = TransT(TINY.model_copy(update={"fusion": "xcorr"}))
        assert isinstance(model.fusion, XcorrFusion)
        out = model.forward(model.encode_template(template), search)
        assert out.heads.boxes.shape == (16, 4)

    def test_base_parameters_exclude_late_heads(self):
        """Test the first training stage leaves the IoU head and mask branch out."""
        model = TransT(TINY)
        base = {id(p) for p in model.base_parameters()}
        assert not any(id(p) in base for p in model.iou_head.parameters())
        assert not any(id(p) in base for p in model.seg.parameters())
        backbone = {id(p) for p in model.backbone.parameters()}
        rest = {id(p) for p in model.non_backbone_base_parameters()}
        assert rest == base - backbone
