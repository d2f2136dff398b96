"""Item-conditioned attention over group members (maven mining)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


@dataclass
class AttentionParams:
    """Weights of the member-attention network.

    Matrices are stored input-major: ``H_v`` and ``H_u`` are ``[d, d_att]`` so
    that a batch of row vectors ``x`` maps to ``x @ H``. ``A`` is ``[d_att, 1]``.
    """

    H_v: Tensor
    H_u: Tensor
    b: Tensor
    A: Tensor

    @classmethod
    def init(cls, d: int, d_att: int, seeds) -> "AttentionParams":
        return cls(
            H_v=T.param([d, d_att], "uniform", seeds[0]),
            H_u=T.param([d, d_att], "uniform", seeds[1]),
            b=T.param([d_att], "zeros"),
            A=T.param([d_att, 1], "uniform", seeds[2]),
        )

    def named(self) -> dict[str, Tensor]:
        return {"H_v": self.H_v, "H_u": self.H_u, "b": self.b, "A": self.A}


def attention_logits(item_vecs: Tensor, member_vecs: Tensor, p: AttentionParams) -> Tensor:
    """A^T ReLU(H_v v + H_u u + b) for row-aligned batches ``[N, d]`` -> ``[N]``."""
    if item_vecs.shape != member_vecs.shape or item_vecs.data.ndim != 2:
        raise ShapeError(f"attention: item {list(item_vecs.shape)} vs member {list(member_vecs.shape)}")
    if item_vecs.shape[1] != p.H_v.shape[0]:
        raise ShapeError(f"attention: embedding dim {item_vecs.shape[1]} vs H_v {list(p.H_v.shape)}")
    hidden = T.relu(T.add_bias(item_vecs @ p.H_v + member_vecs @ p.H_u, p.b))
    z = hidden @ p.A
    return T.reshape(z, (z.shape[0],))


def attention_logit(item_vec: Tensor, member_vec: Tensor, p: AttentionParams) -> Tensor:
    """Scalar logit for one (item, member) pair of ``[d]`` vectors."""
    d = item_vec.shape[-1]
    z = attention_logits(T.reshape(item_vec, (1, d)), T.reshape(member_vec, (1, d)), p)
    return T.reshape(z, ())


def attention_weights(item_vecs: Tensor, member_vecs: Tensor, mask, p: AttentionParams) -> Tensor:
    """Softmax over members of the per-member logits.

    ``item_vecs`` is ``[B, d]``, ``member_vecs`` ``[B, M, d]`` and ``mask``
    ``[B, M]`` (True for real members). Returns ``[B, M]`` with padded slots 0.
    """
    B, M, d = member_vecs.shape
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (B, M):
        raise ShapeError(f"attention mask {list(mask.shape)} vs members {[B, M]}")
    if not mask.any(axis=1).all():
        raise ValueError("attention_weights: every group needs at least one member")
    items = T.reshape(T.repeat(item_vecs, M, axis=1), (B * M, d))
    z = attention_logits(items, T.reshape(member_vecs, (B * M, d)), p)
    return T.masked_softmax(T.reshape(z, (B, M)), mask)


def maven_vector(alpha: Tensor, member_vecs: Tensor) -> Tensor:
    """Attention-weighted sum of member embeddings, ``[B, M] x [B, M, d] -> [B, d]``."""
    return T.weighted_sum(alpha, member_vecs)
