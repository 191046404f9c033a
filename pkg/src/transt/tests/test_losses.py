import numpy as np
import pytest

from src.ndtensor.errors import DimensionError
from src.ndtensor.tensor import Tensor
from src.transt.boxes import BBoxN, giou
from src.transt.losses import (
    LossWeights,
    cls_loss,
    dice_loss,
    focal_loss,
    giou_tensor,
    iou_pred_loss,
    reg_loss,
    seg_loss,
)

LN2 = np.log(2.0)


class TestClassificationLoss:
    """Test suite for the weighted binary cross-entropy."""

    def test_undecided_positives(self):
        """Test p = 0.5 on positive tokens gives ln 2."""
        loss = cls_loss(Tensor(np.full(6, 0.5)), np.ones(6, dtype=bool))
        assert loss.item() == pytest.approx(LN2, abs=1e-6)

    def test_undecided_negatives_are_down_weighted(self):
        """Test p = 0.5 on negative tokens gives ln 2 / 16."""
        loss = cls_loss(Tensor(np.full(6, 0.5)), np.zeros(6, dtype=bool))
        assert loss.item() == pytest.approx(LN2 / 16, abs=1e-6)

    def test_saturated_scores_stay_finite(self):
        """Test scores of exactly 0 and 1 are clamped before the log."""
        loss = cls_loss(Tensor([0.0, 1.0]), np.array([True, False]))
        assert np.isfinite(loss.item()) and loss.item() > 5

    def test_shape_mismatch(self):
        """Test labels of a different length raise."""
        with pytest.raises(DimensionError):
            cls_loss(Tensor(np.full(3, 0.5)), np.ones(4, dtype=bool))

    def test_gradient_points_toward_label(self):
        """Test descending the loss raises positive scores and lowers negative ones."""
        p = Tensor(np.full(2, 0.5), requires_grad=True)
        cls_loss(p, np.array([True, False])).backward()
        assert p.grad[0] < 0 < p.grad[1]


class TestRegressionLoss:
    """Test suite for the L1 plus GIoU box loss."""

    def test_perfect_prediction(self):
        """Test predicting the ground truth gives zero loss."""
        gt = BBoxN(0.4, 0.6, 0.2, 0.3)
        loss, empty = reg_loss(Tensor(gt.as_array()[None, :]), gt)
        assert not empty
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_hand_case(self):
        """Test a concentric box of half the side."""
        pred = Tensor([[0.5, 0.5, 0.2, 0.2]])
        loss, _ = reg_loss(pred, BBoxN(0.5, 0.5, 0.4, 0.4))
        # GIoU = 0.04 / 0.16, so 2·0.75 + 5·(0.2 + 0.2)
        assert loss.item() == pytest.approx(3.5, abs=1e-9)

    def test_double_size_prediction(self):
        """Test a concentric prediction twice the ground-truth side gives 4.0."""
        pred = Tensor([[0.5, 0.5, 0.5, 0.5]])
        loss, _ = reg_loss(pred, BBoxN(0.5, 0.5, 0.25, 0.25))
        # GIoU = 0.0625 / 0.25, so 2·0.75 + 5·(0.25 + 0.25)
        assert loss.item() == pytest.approx(4.0, abs=1e-9)

    def test_empty_positive_set(self):
        """Test no positive tokens gives zero and flags it."""
        loss, empty = reg_loss(Tensor(np.zeros((0, 4))), BBoxN(0.5, 0.5, 0.2, 0.2))
        assert empty and loss.item() == 0.0

    def test_weights_scale_terms(self):
        """Test zeroing the GIoU weight leaves only the L1 term."""
        pred = Tensor([[0.5, 0.5, 0.2, 0.2]])
        loss, _ = reg_loss(pred, BBoxN(0.5, 0.5, 0.4, 0.4), LossWeights(giou=0.0))
        assert loss.item() == pytest.approx(2.0, abs=1e-9)

    def test_giou_tensor_matches_closed_form(self):
        """Test the differentiable GIoU against the float version."""
        rng = np.random.default_rng(0)
        rows = np.column_stack([rng.uniform(0.2, 0.8, (10, 2)), rng.uniform(0.05, 0.4, (10, 2))])
        gt = BBoxN(0.5, 0.45, 0.3, 0.2)
        expected = [giou(BBoxN(*row), gt) for row in rows]
        np.testing.assert_allclose(giou_tensor(Tensor(rows), gt).data[:, 0], expected, atol=1e-9)

    def test_bad_width(self):
        """Test a box tensor that is not k×4 raises."""
        with pytest.raises(DimensionError):
            reg_loss(Tensor(np.zeros((2, 3))), BBoxN(0.5, 0.5, 0.2, 0.2))

    def test_negative_weight_rejected(self):
        """Test negative loss weights are refused."""
        with pytest.raises(ValueError):
            LossWeights(l1=-1.0)


class TestIouPredictionLoss:
    """Test suite for the IoU-quality regression loss."""

    def test_hand_case(self):
        """Test a 0.5 prediction for a box with zero overlap gives 0.25."""
        boxes = np.array([[0.1, 0.1, 0.1, 0.1], [0.5, 0.5, 0.2, 0.2]])
        loss, empty = iou_pred_loss(Tensor([0.5, 0.9]), boxes, BBoxN(0.8, 0.8, 0.1, 0.1), np.array([True, False]))
        assert not empty
        assert loss.item() == pytest.approx(0.25, abs=1e-12)

    def test_only_positives_count(self):
        """Test negatives never contribute."""
        boxes = np.array([[0.5, 0.5, 0.2, 0.2], [0.1, 0.1, 0.1, 0.1]])
        gt = BBoxN(0.5, 0.5, 0.2, 0.2)
        loss, _ = iou_pred_loss(Tensor([1.0, 0.0]), boxes, gt, np.array([True, False]))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_no_positives(self):
        """Test an empty positive set is flagged."""
        loss, empty = iou_pred_loss(Tensor([0.5]), np.zeros((1, 4)), BBoxN(0.5, 0.5, 0.1, 0.1), np.array([False]))
        assert empty and loss.item() == 0.0


class TestMaskLosses:
    """Test suite for dice and focal mask losses."""

    def test_dice_disjoint(self):
        """Test an all-zero prediction against an all-one 64×64 target."""
        loss = dice_loss(Tensor(np.zeros((64, 64))), np.ones((64, 64)))
        assert loss.item() == pytest.approx(1.0 - 1.0 / 4097.0, abs=1e-12)

    def test_dice_empty_masks(self):
        """Test two empty masks agree perfectly."""
        assert dice_loss(Tensor(np.zeros((8, 8))), np.zeros((8, 8))).item() == pytest.approx(0.0, abs=1e-12)

    def test_focal_single_pixel(self):
        """Test p = 0.5 on a positive pixel gives 0.25·0.25·ln 2."""
        loss = focal_loss(Tensor([[0.5]]), np.ones((1, 1)))
        assert loss.item() == pytest.approx(0.043322, abs=1e-6)

    def test_shape_checked(self):
        """Test a target of another size raises."""
        with pytest.raises(DimensionError):
            dice_loss(Tensor(np.zeros((4, 4))), np.zeros((8, 8)))


def random_box(rng: np.random.Generator) -> BBoxN:
    return BBoxN(*rng.uniform(0.05, 0.95, 2), *rng.uniform(0.01, 0.6, 2))


class TestNonnegativity:
    """Test suite for the sign of every loss on random inputs."""

    TRIALS = 1000

    def test_all_losses_nonnegative(self):
        """Test all six losses are nonnegative on 1000 random inputs."""
        rng = np.random.default_rng(0)
        for _ in range(self.TRIALS):
            k = int(rng.integers(1, 6))
            labels = rng.uniform(size=k) > 0.5
            labels[0] = True
            scores = Tensor(rng.uniform(size=k))
            boxes = np.column_stack([rng.uniform(0.0, 1.0, (k, 2)), rng.uniform(0.0, 1.0, (k, 2))])
            gt = random_box(rng)
            m = Tensor(rng.uniform(size=(4, 4)))
            target = rng.uniform(size=(4, 4)) > 0.5

            assert cls_loss(scores, labels).item() >= 0
            assert reg_loss(Tensor(boxes), gt)[0].item() >= 0
            assert iou_pred_loss(scores, boxes, gt, labels)[0].item() >= 0
            assert dice_loss(m, target).item() >= 0
            assert focal_loss(m, target).item() >= 0
            assert seg_loss(m, target).item() >= 0
