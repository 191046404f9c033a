"""
Feature fusion network: ego-context augment (ECA) and cross-feature augment
(CFA) layers, the N-times repeated fusion layer with a final decoding CFA, and
the depthwise cross-correlation baseline it is compared against.
"""

from typing import Literal, Optional

import numpy as np

from src.ndtensor import functional as F
from src.ndtensor.errors import DimensionError
from src.ndtensor.layers import Conv, Dense, Norm
from src.ndtensor.module import Module
from src.ndtensor.tensor import Tensor
from src.transt.attention import AttentionRecorder, MhaParams, TokenSeq, encode_grids, mha


class EcaLayer(Module):
    def __init__(self, rng: np.random.Generator, d: int, n_heads: int, use_norm: bool = True):
        self.mha = MhaParams(rng, d, n_heads)
        self.norm = Norm(d) if use_norm else None


class Ffn(Module):
    def __init__(self, rng: np.random.Generator, d: int, d_ffn: int):
        self.lin1 = Dense(rng, d, d_ffn)
        self.lin2 = Dense(rng, d_ffn, d)


class CfaLayer(Module):
    def __init__(self, rng: np.random.Generator, d: int, n_heads: int, d_ffn: int, use_norm: bool = True):
        self.mha = MhaParams(rng, d, n_heads)
        self.ffn = Ffn(rng, d, d_ffn)
        self.norm1 = Norm(d) if use_norm else None
        self.norm2 = Norm(d) if use_norm else None


class FusionLayer(Module):
    """Two ECAs and two CFAs applied symmetrically to the template and search branches."""

    def __init__(self, rng: np.random.Generator, d: int, n_heads: int, d_ffn: int, use_norm: bool = True):
        self.eca_z = EcaLayer(rng, d, n_heads, use_norm)
        self.eca_x = EcaLayer(rng, d, n_heads, use_norm)
        self.cfa_z = CfaLayer(rng, d, n_heads, d_ffn, use_norm)
        self.cfa_x = CfaLayer(rng, d, n_heads, d_ffn, use_norm)


def _check_pos(x: TokenSeq, pos: Tensor) -> None:
    if pos.shape != x.values.shape:
        raise DimensionError(f"encoding {pos.shape} does not match tokens {x.values.shape}")


def eca_forward(
    layer: EcaLayer,
    x: TokenSeq,
    pos: Tensor,
    recorder: Optional[AttentionRecorder] = None,
    name: str = "eca",
) -> TokenSeq:
    """X + MultiHead(X + P, X + P, X), then the optional norm."""
    _check_pos(x, pos)
    xp = x.values + pos
    out = x.values + mha(layer.mha, xp, xp, x.values, recorder, name)
    if layer.norm is not None:
        out = layer.norm(out)
    return TokenSeq(out, x.grids)


def ffn_forward(ffn: Ffn, x: TokenSeq) -> TokenSeq:
    """max(0, x W_1 + b_1) W_2 + b_2."""
    return TokenSeq(ffn.lin2(F.relu(ffn.lin1(x.values))), x.grids)


def cfa_forward(
    layer: CfaLayer,
    xq: TokenSeq,
    pq: Tensor,
    xkv: TokenSeq,
    pkv: Tensor,
    recorder: Optional[AttentionRecorder] = None,
    name: str = "cfa",
) -> TokenSeq:
    """X~ = X_q + MultiHead(X_q + P_q, X_kv + P_kv, X_kv); out = X~ + FFN(X~)."""
    _check_pos(xq, pq)
    _check_pos(xkv, pkv)
    mixed = xq.values + mha(layer.mha, xq.values + pq, xkv.values + pkv, xkv.values, recorder, name)
    if layer.norm1 is not None:
        mixed = layer.norm1(mixed)
    out = mixed + ffn_forward(layer.ffn, TokenSeq(mixed)).values
    if layer.norm2 is not None:
        out = layer.norm2(out)
    return TokenSeq(out, xq.grids)


def fusion_layer_forward(
    layer: FusionLayer,
    z: TokenSeq,
    pz: Tensor,
    x: TokenSeq,
    px: Tensor,
    recorder: Optional[AttentionRecorder] = None,
    prefix: str = "",
) -> tuple[TokenSeq, TokenSeq]:
    """Both CFAs read the ECA outputs of the same layer."""
    z_self = eca_forward(layer.eca_z, z, pz, recorder, f"{prefix}eca_z")
    x_self = eca_forward(layer.eca_x, x, px, recorder, f"{prefix}eca_x")
    z_out = cfa_forward(layer.cfa_z, z_self, pz, x_self, px, recorder, f"{prefix}cfa_z")
    x_out = cfa_forward(layer.cfa_x, x_self, px, z_self, pz, recorder, f"{prefix}cfa_x")
    return z_out, x_out


def flatten_map(feature: Tensor) -> TokenSeq:
    """d×H×W feature map -> H·W tokens in row-major order."""
    d, h, w = feature.shape
    return TokenSeq(feature.reshape(d, h * w).T, [(h, w)])


def unflatten_tokens(tokens: TokenSeq, grid: Optional[tuple[int, int]] = None) -> Tensor:
    """Inverse of `flatten_map` for a single grid."""
    h, w = grid or tokens.grids[0]
    if h * w != tokens.count:
        raise DimensionError(f"cannot reshape {tokens.count} tokens to {h}×{w}")
    return tokens.values.T.reshape(tokens.width, h, w)


def combine_token_seqs(seqs: list[TokenSeq], mode: Literal["concat", "avg"] = "concat") -> TokenSeq:
    """Join template token sets spatially (concat) or by elementwise mean (avg)."""
    if not seqs:
        raise DimensionError("no templates to combine")
    if len(seqs) == 1:
        return seqs[0]
    if mode == "concat":
        return TokenSeq(F.concat([s.values for s in seqs], axis=0), [g for s in seqs for g in s.grids])
    total = seqs[0].values
    for s in seqs[1:]:
        total = total + s.values
    return TokenSeq(total * (1.0 / len(seqs)), seqs[0].grids)


class FusionNetwork(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        c_in: int,
        d: int,
        n_layers: int,
        n_heads: int,
        d_ffn: int,
        use_norm: bool = True,
    ):
        self.d = d
        self.reduce_z = Conv(rng, c_in, d, 1)
        self.reduce_x = Conv(rng, c_in, d, 1)
        self.layers = [FusionLayer(rng, d, n_heads, d_ffn, use_norm) for _ in range(n_layers)]
        self.final_cfa = CfaLayer(rng, d, n_heads, d_ffn, use_norm)

    def template_tokens(self, feature: Tensor) -> TokenSeq:
        return flatten_map(self.reduce_z(feature))

    def search_tokens(self, feature: Tensor) -> TokenSeq:
        return flatten_map(self.reduce_x(feature))


def fusion_forward(
    net: FusionNetwork,
    template: Tensor | TokenSeq,
    search: Tensor,
    recorder: Optional[AttentionRecorder] = None,
) -> tuple[TokenSeq, TokenSeq]:
    """
    Fuse template and search features.

    `template` is either a C×H_z×W_z backbone map or already-reduced (possibly
    concatenated multi-template) tokens. Returns the decoded search tokens f
    and the template tokens of the last fusion layer.
    """
    z = template if isinstance(template, TokenSeq) else net.template_tokens(template)
    x = net.search_tokens(search)
    pz, px = encode_grids(z.grids, net.d), encode_grids(x.grids, net.d)
    for i, layer in enumerate(net.layers):
        z, x = fusion_layer_forward(layer, z, pz, x, px, recorder, f"layer{i}.")
    f = cfa_forward(net.final_cfa, x, px, z, pz, recorder, "final_cfa")
    return f, z


def depthwise_xcorr(template: Tensor, search: Tensor) -> Tensor:
    """Per-channel valid cross-correlation; output extent H_x - H_z + 1."""
    return F.depthwise_conv2d(search, template)


class XcorrFusion(Module):
    """Correlation baseline: depthwise cross-correlation in place of attention fusion."""

    def __init__(self, rng: np.random.Generator, c_in: int, d: int):
        self.d = d
        self.reduce_z = Conv(rng, c_in, d, 1)
        self.reduce_x = Conv(rng, c_in, d, 1)
        self.adjust = Dense(rng, d, d)

    def template_tokens(self, feature: Tensor) -> TokenSeq:
        return flatten_map(self.reduce_z(feature))

    def search_tokens(self, feature: Tensor) -> TokenSeq:
        return flatten_map(self.reduce_x(feature))


def xcorr_forward(net: XcorrFusion, template: Tensor | TokenSeq, search: Tensor) -> tuple[TokenSeq, TokenSeq]:
    """Correlate averaged template features with the zero-padded search map."""
    z = template if isinstance(template, TokenSeq) else net.template_tokens(template)
    if len(z.grids) > 1:
        h, w = z.grids[0]
        parts = [TokenSeq(F.narrow(z.values, 0, i * h * w, (i + 1) * h * w), [g]) for i, g in enumerate(z.grids)]
        z = combine_token_seqs(parts, "avg")
    kernel = unflatten_tokens(z)
    x = net.reduce_x(search)
    kh, kw = kernel.shape[1:]
    padded = F.pad2d(x, (kh // 2, (kh - 1) // 2, kw // 2, (kw - 1) // 2))
    response = depthwise_xcorr(kernel, padded)
    tokens = flatten_map(response)
    return TokenSeq(F.relu(net.adjust(tokens.values)), tokens.grids), z
