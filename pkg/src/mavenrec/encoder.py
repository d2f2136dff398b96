"""Bidirectional self-attention encoder producing one vector per group.

Members are tokens; a learned summary token is prepended and its final state
is the group vector. There are no positional embeddings, so the output does
not depend on member order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class EncoderLayer:
    W_q: Tensor
    W_k: Tensor
    W_v: Tensor
    W_o: Tensor
    W_ff1: Tensor
    b_ff1: Tensor
    W_ff2: Tensor
    b_ff2: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    @classmethod
    def init(cls, d: int, d_ff: int, rng: np.random.Generator) -> "EncoderLayer":
        u = lambda shape: T.param(shape, "uniform", rng)  # noqa: E731
        return cls(
            W_q=u([d, d]), W_k=u([d, d]), W_v=u([d, d]), W_o=T.param([d, d], "zeros"),
            W_ff1=u([d, d_ff]), b_ff1=T.param([d_ff], "zeros"),
            W_ff2=T.param([d_ff, d], "zeros"), b_ff2=T.param([d], "zeros"),
            ln1_gain=T.Tensor(np.ones(d), requires_grad=True), ln1_bias=T.param([d], "zeros"),
            ln2_gain=T.Tensor(np.ones(d), requires_grad=True), ln2_bias=T.param([d], "zeros"),
        )

    def named(self) -> dict[str, Tensor]:
        return dict(vars(self))


@dataclass
class EncoderParams:
    summary_token: Tensor
    layers: list[EncoderLayer]
    heads: int

    @classmethod
    def init(cls, d: int, layers: int, heads: int, d_ff: int, seed) -> "EncoderParams":
        if d % heads:
            raise ValueError(f"embedding dim {d} is not divisible by {heads} heads")
        rng = np.random.default_rng(seed)
        summary = T.param([d], "zeros")
        return cls(summary, [EncoderLayer.init(d, d_ff, rng) for _ in range(layers)], heads)

    def named(self) -> dict[str, Tensor]:
        out = {"summary_token": self.summary_token}
        for i, layer in enumerate(self.layers):
            out.update({f"layer{i}.{k}": v for k, v in layer.named().items()})
        return out


def _project(x: Tensor, W: Tensor) -> Tensor:
    B, S, d = x.shape
    y = T.reshape(x, (B * S, d)) @ W
    return T.reshape(y, (B, S, W.shape[1]))


def _split_heads(x: Tensor, h: int) -> Tensor:
    B, S, d = x.shape
    return T.transpose(T.reshape(x, (B, S, h, d // h)), (0, 2, 1, 3))


def self_attention(x: Tensor, mask: np.ndarray, layer: EncoderLayer, heads: int) -> tuple[Tensor, Tensor]:
    """Masked multi-head self-attention. Returns (output, attention weights)."""
    B, S, d = x.shape
    dh = d // heads
    q = _split_heads(_project(x, layer.W_q), heads)
    k = _split_heads(_project(x, layer.W_k), heads)
    v = _split_heads(_project(x, layer.W_v), heads)
    scores = T.scale(q @ T.transpose(k, (0, 1, 3, 2)), 1.0 / math.sqrt(dh))
    attn = T.masked_softmax(scores, mask[:, None, None, :])
    ctx = T.reshape(T.transpose(attn @ v, (0, 2, 1, 3)), (B, S, d))
    return _project(ctx, layer.W_o), attn


def _feed_forward(x: Tensor, layer: EncoderLayer) -> Tensor:
    B, S, d = x.shape
    flat = T.reshape(x, (B * S, d))
    h = T.relu(T.add_bias(flat @ layer.W_ff1, layer.b_ff1))
    return T.reshape(T.add_bias(h @ layer.W_ff2, layer.b_ff2), (B, S, d))


def encode_group(members: Tensor, mask, p: EncoderParams, return_attention: bool = False):
    """Group vectors ``[B, d]`` from member embeddings ``[B, M, d]`` and mask ``[B, M]``."""
    B, M, d = members.shape
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (B, M):
        raise T.ShapeError(f"encoder mask {list(mask.shape)} vs members {[B, M]}")
    if not mask.any(axis=1).all():
        raise ValueError("encode_group: every group needs at least one unmasked member")
    if d % p.heads:
        raise ValueError(f"embedding dim {d} is not divisible by {p.heads} heads")
    summary = T.reshape(T.repeat(p.summary_token, B, axis=0), (B, 1, d))
    x = T.concat([summary, members], axis=1)
    full_mask = np.concatenate([np.ones((B, 1), dtype=bool), mask], axis=1)
    maps = []
    for layer in p.layers:
        att, a = self_attention(T.layer_norm(x, layer.ln1_gain, layer.ln1_bias), full_mask, layer, p.heads)
        x = x + att
        x = x + _feed_forward(T.layer_norm(x, layer.ln2_gain, layer.ln2_bias), layer)
        maps.append(a)
    out = x[:, 0, :]
    return (out, maps) if return_attention else out
