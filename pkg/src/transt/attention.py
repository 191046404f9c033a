"""Scaled dot-product attention, multi-head attention and 2-D sine encodings."""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from src.ndtensor import functional as F
from src.ndtensor.errors import ConfigurationError, DimensionError
from src.ndtensor.module import Module, Parameter, xavier_uniform
from src.ndtensor.tensor import Tensor


@dataclass
class TokenSeq:
    """Feature vectors of width d over one or more flattened grids, one token per row."""

    values: Tensor
    grids: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise DimensionError(f"TokenSeq values must be n×d, got {self.values.shape}")
        if self.grids and sum(h * w for h, w in self.grids) != self.count:
            raise DimensionError(f"grids {self.grids} do not cover {self.count} tokens")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def count(self) -> int:
        return self.values.shape[0]


@dataclass
class PosEncoding:
    values: Tensor
    grid: tuple[int, int]


@lru_cache(maxsize=64)
def _sine_table(h: int, w: int, d: int, temperature: float) -> np.ndarray:
    half = d // 2
    dim_t = temperature ** (2 * (np.arange(half) // 2) / half)
    rows = np.arange(h, dtype=np.float64)[:, None, None] / dim_t
    cols = np.arange(w, dtype=np.float64)[None, :, None] / dim_t
    rows = np.broadcast_to(rows, (h, w, half)).copy()
    cols = np.broadcast_to(cols, (h, w, half)).copy()
    for t in (rows, cols):
        t[..., 0::2] = np.sin(t[..., 0::2])
        t[..., 1::2] = np.cos(t[..., 1::2])
    table = np.concatenate([rows, cols], axis=-1).reshape(h * w, d)
    table.setflags(write=False)
    return table


def sine_pos_encoding(h: int, w: int, d: int, temperature: float = 10000.0) -> PosEncoding:
    """
    Fixed 2-D sine encoding: the first d/2 channels encode the row index and the
    last d/2 the column index, as (sin, cos) pairs of position / T^(2i/(d/2)).
    """
    if d % 4 != 0:
        raise ConfigurationError(f"sine encoding width must be divisible by 4, got {d}")
    return PosEncoding(Tensor(_sine_table(h, w, d, temperature)), (h, w))


def encode_grids(grids: list[tuple[int, int]], d: int) -> Tensor:
    """Encodings for concatenated grids; every grid reuses its own sine table."""
    return Tensor(np.concatenate([_sine_table(h, w, d, 10000.0) for h, w in grids], axis=0))


class MhaParams(Module):
    """
    Projections of one multi-head attention block. The per-head matrices
    W^Q_i, W^K_i, W^V_i are stored side by side as column blocks.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        d_m: int,
        n_heads: int,
        d_k: Optional[int] = None,
        d_v: Optional[int] = None,
    ):
        self.n_heads = n_heads
        self.d_k = d_k or d_m // n_heads
        self.d_v = d_v or d_m // n_heads
        qk, v = n_heads * self.d_k, n_heads * self.d_v
        self.w_q = Parameter(xavier_uniform(rng, (d_m, qk), d_m, qk))
        self.b_q = Parameter(np.zeros(qk))
        self.w_k = Parameter(xavier_uniform(rng, (d_m, qk), d_m, qk))
        self.b_k = Parameter(np.zeros(qk))
        self.w_v = Parameter(xavier_uniform(rng, (d_m, v), d_m, v))
        self.b_v = Parameter(np.zeros(v))
        self.w_o = Parameter(xavier_uniform(rng, (v, d_m), v, d_m))
        self.b_o = Parameter(np.zeros(d_m))

    @property
    def d_m(self) -> int:
        return self.w_q.shape[0]


@dataclass
class AttentionRecorder:
    """Collects per-head attention weights by block name during a forward pass."""

    weights: dict[str, list[np.ndarray]] = field(default_factory=dict)

    def record(self, name: str, heads: list[Tensor]) -> None:
        self.weights[name] = [h.data.copy() for h in heads]


def sdpa(q: Tensor, k: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
    """softmax(Q K^T / sqrt(d_k)) V, returning the output and the weights."""
    if q.shape[1] != k.shape[1]:
        raise DimensionError(f"sdpa: query width {q.shape[1]} vs key width {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise DimensionError(f"sdpa: {k.shape[0]} keys vs {v.shape[0]} values")
    weights = F.softmax((q @ k.T) * (1.0 / np.sqrt(q.shape[1])), axis=1)
    return weights @ v, weights


def mha(
    p: MhaParams,
    q_in: Tensor,
    k_in: Tensor,
    v_in: Tensor,
    recorder: Optional[AttentionRecorder] = None,
    name: str = "",
) -> Tensor:
    """Per-head attention on projected inputs, heads concatenated, then W^O."""
    for t in (q_in, k_in, v_in):
        if t.shape[1] != p.d_m:
            raise DimensionError(f"mha: input width {t.shape[1]} vs d_m {p.d_m}")
    q = F.linear(q_in, p.w_q, p.b_q)
    k = F.linear(k_in, p.w_k, p.b_k)
    v = F.linear(v_in, p.w_v, p.b_v)
    heads, weights = [], []
    for i in range(p.n_heads):
        out, w = sdpa(
            F.narrow(q, 1, i * p.d_k, (i + 1) * p.d_k),
            F.narrow(k, 1, i * p.d_k, (i + 1) * p.d_k),
            F.narrow(v, 1, i * p.d_v, (i + 1) * p.d_v),
        )
        heads.append(out)
        weights.append(w)
    if recorder is not None:
        recorder.record(name, weights)
    return F.linear(F.concat(heads, axis=1), p.w_o, p.b_o)
