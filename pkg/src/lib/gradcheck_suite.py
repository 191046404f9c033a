"""Finite-difference checks for every differentiable op, block, loss and the whole model."""

import zlib
from typing import Callable, Optional

import numpy as np

from src.lib.config import ModelConfig
from src.ndtensor import functional as F
from src.ndtensor.gradcheck import GradCheckResult, gradcheck
from src.ndtensor.tensor import Tensor, get_default_dtype, set_default_dtype
from src.transt.attention import MhaParams, TokenSeq, encode_grids, mha, sdpa
from src.transt.boxes import BBoxN
from src.transt.fusion import (
    CfaLayer,
    EcaLayer,
    FusionNetwork,
    cfa_forward,
    eca_forward,
    fusion_forward,
)
from src.transt.heads import assign_samples
from src.transt.losses import cls_loss, dice_loss, focal_loss, iou_pred_loss, reg_loss
from src.transt.model import TransT

Case = tuple[Callable[[], Tensor], list[Tensor], Optional[int]]

# smallest configuration that still exercises every block
TINY = ModelConfig(
    d=8,
    n_heads=2,
    d_ffn=16,
    n_layers=1,
    backbone_channels=(2, 2, 4, 4),
    template_size=16,
    search_size=32,
    seg_heads=2,
    seg_channels=2,
)


def _leaf(rng: np.random.Generator, *shape: int, lo: float = -1.0, hi: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _unary(op: Callable[[Tensor], Tensor], lo: float = -1.0, hi: float = 1.0) -> Callable[[np.random.Generator], Case]:
    def build(rng: np.random.Generator) -> Case:
        x = _leaf(rng, 3, 4, lo=lo, hi=hi)
        weights = Tensor(rng.normal(size=(3, 4)))
        return (lambda: (op(x) * weights).sum()), [x], None

    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor], lo: float = -1.0, hi: float = 1.0):
    def build(rng: np.random.Generator) -> Case:
        a, b = _leaf(rng, 3, 4, lo=lo, hi=hi), _leaf(rng, 3, 4, lo=lo, hi=hi)
        weights = Tensor(rng.normal(size=(3, 4)))
        return (lambda: (op(a, b) * weights).sum()), [a, b], None

    return build


def _matmul(rng):
    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    w = Tensor(rng.normal(size=(3, 2)))
    return (lambda: ((a @ b) * w).sum()), [a, b], None


def _layer_norm(rng):
    x, gain, bias = _leaf(rng, 3, 6), _leaf(rng, 6), _leaf(rng, 6)
    w = Tensor(rng.normal(size=(3, 6)))
    return (lambda: (F.layer_norm(x, gain, bias) * w).sum()), [x, gain, bias], None


def _structural(rng):
    a, b = _leaf(rng, 2, 3), _leaf(rng, 2, 3)
    w = Tensor(rng.normal(size=(3, 4)))

    def fn():
        joined = F.concat([a, b * a], axis=0).reshape(3, 4)
        return (joined * w).sum() + joined.T.mean() + F.narrow(joined, 1, 1, 3).sum()

    return fn, [a, b], None


def _conv2d(rng):
    x, k, bias = _leaf(rng, 2, 7, 7), _leaf(rng, 3, 2, 3, 3), _leaf(rng, 3)
    w = Tensor(rng.normal(size=(3, 3, 3)))
    return (lambda: (F.conv2d(x, k, bias, stride=2, padding=1, dilation=2) * w).sum()), [x, k, bias], None


def _depthwise(rng):
    x, k = _leaf(rng, 2, 5, 5), _leaf(rng, 2, 3, 3)
    w = Tensor(rng.normal(size=(2, 3, 3)))
    return (lambda: (F.depthwise_conv2d(x, k) * w).sum()), [x, k], None


def _resize_pad(rng):
    x = _leaf(rng, 2, 3, 2)
    w = Tensor(rng.normal(size=(2, 7, 6)))
    return (lambda: (F.pad2d(F.bilinear_resize(x, 5, 4), (1, 1, 1, 1)) * w).sum()), [x], None


def _take_rows(rng):
    x = _leaf(rng, 4, 3)
    w = Tensor(rng.normal(size=(3, 3)))
    return (lambda: (F.take_rows(x, [3, 0, 3]) * w).sum()), [x], None


def _sdpa(rng):
    q, k, v = _leaf(rng, 3, 4), _leaf(rng, 5, 4), _leaf(rng, 5, 2)
    w = Tensor(rng.normal(size=(3, 2)))
    return (lambda: (sdpa(q, k, v)[0] * w).sum()), [q, k, v], None


def _mha(rng):
    p = MhaParams(rng, 8, 2)
    q, kv = _leaf(rng, 3, 8), _leaf(rng, 5, 8)
    w = Tensor(rng.normal(size=(3, 8)))
    return (lambda: (mha(p, q, kv, kv) * w).sum()), [q, kv, *p.parameters()], None


def _eca(rng):
    layer = EcaLayer(rng, 8, 2)
    x = TokenSeq(_leaf(rng, 4, 8), [(2, 2)])
    pos = encode_grids(x.grids, 8)
    w = Tensor(rng.normal(size=(4, 8)))
    return (lambda: (eca_forward(layer, x, pos).values * w).sum()), [x.values, *layer.parameters()], 6


def _cfa(rng):
    layer = CfaLayer(rng, 8, 2, 16)
    xq, xkv = TokenSeq(_leaf(rng, 4, 8), [(2, 2)]), TokenSeq(_leaf(rng, 16, 8), [(4, 4)])
    pq, pkv = encode_grids(xq.grids, 8), encode_grids(xkv.grids, 8)
    w = Tensor(rng.normal(size=(4, 8)))

    def fn():
        return (cfa_forward(layer, xq, pq, xkv, pkv).values * w).sum()

    return fn, [xq.values, xkv.values, *layer.parameters()], 6


def _fusion(rng):
    net = FusionNetwork(rng, 3, 8, 1, 2, 16)
    fz, fx = _leaf(rng, 3, 2, 2), _leaf(rng, 3, 4, 4)
    w = Tensor(rng.normal(size=(16, 8)))
    return (lambda: (fusion_forward(net, fz, fx)[0].values * w).sum()), [fz, fx, *net.parameters()], 4


def _box_losses(rng):
    pred = _leaf(rng, 3, 4, lo=0.3, hi=0.7)
    iou_pred = _leaf(rng, 3, lo=0.1, hi=0.9)
    gt = BBoxN(0.5, 0.45, 0.3, 0.35)
    labels = np.array([True, False, True])

    def fn():
        box, _ = reg_loss(pred, gt)
        quality, _ = iou_pred_loss(iou_pred, pred.data, gt, labels)
        return box + quality

    return fn, [pred, iou_pred], None


def _cls_seg_losses(rng):
    p = _leaf(rng, 6, lo=0.05, hi=0.95)
    m = _leaf(rng, 4, 4, lo=0.05, hi=0.95)
    labels = rng.random(6) < 0.5
    target = rng.random((4, 4)) < 0.5
    return (lambda: cls_loss(p, labels) + dice_loss(m, target) + focal_loss(m, target)), [p, m], None


def _full_model(rng):
    model = TransT(TINY, seed=int(rng.integers(1 << 31)))
    template = Tensor(rng.uniform(0, 1, size=(3, 16, 16)))
    search = Tensor(rng.uniform(0, 1, size=(3, 32, 32)))
    gt = BBoxN(0.55, 0.5, 0.4, 0.3)
    labels = assign_samples(gt, model.grid)
    positives = np.flatnonzero(labels)
    target = np.zeros((32, 32))
    target[10:22, 8:24] = 1.0

    def fn():
        tokens = model.encode_template(template)
        out = model.forward([tokens, tokens], search, with_mask=True)
        box, _ = reg_loss(F.take_rows(out.heads.boxes, positives), gt)
        quality, _ = iou_pred_loss(out.heads.iou_pred, out.heads.boxes.data, gt, labels)
        return cls_loss(out.fg, labels) + box + quality + dice_loss(out.mask.reshape(32, 32), target)

    return fn, model.parameters(), 2


CASES: dict[str, Callable[[np.random.Generator], Case]] = {
    "matmul": _matmul,
    "add": _binary(lambda a, b: a + b),
    "sub": _binary(lambda a, b: a - b),
    "mul": _binary(lambda a, b: a * b),
    "div": _binary(lambda a, b: a / b, lo=0.5, hi=2.0),
    "maximum": _binary(F.maximum),
    "minimum": _binary(F.minimum),
    "exp": _unary(F.exp),
    "log": _unary(F.log, lo=0.2, hi=2.0),
    "sqrt": _unary(F.sqrt, lo=0.2, hi=2.0),
    "power": _unary(lambda x: F.power(x, 3.0)),
    "abs": _unary(F.abs),
    "relu": _unary(F.relu),
    "sigmoid": _unary(F.sigmoid),
    "clamp": _unary(lambda x: F.clamp(x, -0.5, 0.5)),
    "softmax": _unary(lambda x: F.softmax(x, axis=1)),
    "layer_norm": _layer_norm,
    "concat_reshape_transpose": _structural,
    "conv2d": _conv2d,
    "depthwise_conv2d": _depthwise,
    "bilinear_resize_pad": _resize_pad,
    "take_rows": _take_rows,
    "sdpa": _sdpa,
    "mha": _mha,
    "eca": _eca,
    "cfa": _cfa,
    "fusion": _fusion,
    "box_losses": _box_losses,
    "cls_seg_losses": _cls_seg_losses,
    "full_model": _full_model,
}


def run_suite(
    precision: int = 64,
    seed: int = 0,
    names: Optional[list[str]] = None,
) -> list[GradCheckResult]:
    """Build each case with fresh random inputs at the requested precision and check it."""
    previous = get_default_dtype()
    set_default_dtype(np.float64 if precision == 64 else np.float32)
    try:
        results = []
        for name in names or list(CASES):
            rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
            fn, inputs, max_coords = CASES[name](rng)
            results.append(gradcheck(fn, inputs, name=name, max_coords=max_coords, rng=rng))
        return results
    finally:
        set_default_dtype(previous)
