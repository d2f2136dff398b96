"""Group profile aggregation and the shared NCF scoring network.

Both towers share one pooling -> hidden stack -> prediction network. The user
tower pools a user embedding with the item embedding; the group tower pools
the group profile (attentive maven vector plus encoder group vector).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .attention import AttentionParams, attention_weights, maven_vector
from .data import InteractionStore, Roster
from .encoder import EncoderParams, encode_group
from .tensor import ShapeError, Tensor

VARIANTS = ("siagr", "siagr-g", "siagr-m")


@dataclass
class ModelConfig:
    embedding_dim: int = 32
    hidden_widths: list[int] = field(default_factory=lambda: [96, 48, 16])
    attention_dim: int | None = None
    encoder_layers: int = 1
    encoder_heads: int = 2
    encoder_ff: int | None = None
    # siagr: maven + encoder; siagr-g: encoder only; siagr-m: maven only
    variant: str = "siagr"

    def __post_init__(self):
        self.hidden_widths = [int(w) for w in self.hidden_widths]
        if self.attention_dim is None:
            self.attention_dim = self.embedding_dim
        if self.encoder_ff is None:
            self.encoder_ff = 4 * self.embedding_dim
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.embedding_dim % self.encoder_heads:
            raise ValueError(
                f"embedding_dim {self.embedding_dim} is not divisible by encoder_heads {self.encoder_heads}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class ModelParameters:
    user_embeddings: Tensor
    item_embeddings: Tensor
    attention: AttentionParams
    encoder: EncoderParams
    hidden: list[tuple[Tensor, Tensor]]
    w: Tensor

    @classmethod
    def init(cls, config: ModelConfig, n_users: int, n_items: int, seed: int) -> "ModelParameters":
        d = config.embedding_dim
        seeds = np.random.SeedSequence(seed).spawn(8)
        rng = [np.random.default_rng(s) for s in seeds]
        hidden = []
        width = 3 * d
        for i, out in enumerate(config.hidden_widths):
            hidden.append((T.param([width, out], "uniform", rng[5]), T.param([out], "zeros")))
            width = out
        return cls(
            user_embeddings=T.param([n_users, d], "uniform", rng[0]),
            item_embeddings=T.param([n_items, d], "uniform", rng[1]),
            attention=AttentionParams.init(d, config.attention_dim, rng[2:5]),
            encoder=EncoderParams.init(d, config.encoder_layers, config.encoder_heads, config.encoder_ff, seeds[6]),
            hidden=hidden,
            w=T.param([width, 1], "uniform", rng[7]),
        )

    def named(self) -> dict[str, Tensor]:
        out = {"user_embeddings": self.user_embeddings, "item_embeddings": self.item_embeddings}
        out.update({f"attention.{k}": v for k, v in self.attention.named().items()})
        out.update({f"encoder.{k}": v for k, v in self.encoder.named().items()})
        for i, (W, b) in enumerate(self.hidden):
            out[f"hidden{i}.W"] = W
            out[f"hidden{i}.b"] = b
        out["predict.w"] = self.w
        return out

    def zero_grad(self) -> None:
        for t in self.named().values():
            t.grad = None

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named().items()}


def aggregate_group(maven_vec: Tensor | None, group_vec: Tensor | None) -> Tensor:
    """Group profile = maven vector + encoder group vector (either may be absent)."""
    if maven_vec is None:
        return group_vec
    if group_vec is None:
        return maven_vec
    if maven_vec.shape != group_vec.shape:
        raise ShapeError(f"aggregate_group: {list(maven_vec.shape)} vs {list(group_vec.shape)}")
    return maven_vec + group_vec


def pool(entity_vecs: Tensor, item_vecs: Tensor) -> Tensor:
    """[entity * item, entity, item] along the feature axis."""
    if entity_vecs.shape != item_vecs.shape:
        raise ShapeError(f"pool: {list(entity_vecs.shape)} vs {list(item_vecs.shape)}")
    return T.concat([entity_vecs * item_vecs, entity_vecs, item_vecs], axis=-1)


def hidden_forward(e0: Tensor, hidden: list[tuple[Tensor, Tensor]]) -> Tensor:
    e = e0
    for i, (W, b) in enumerate(hidden):
        if e.shape[-1] != W.shape[0]:
            raise ShapeError(f"hidden layer {i}: input width {e.shape[-1]} vs weight {list(W.shape)}")
        e = T.relu(T.add_bias(e @ W, b))
    return e


def predict_layer(eN: Tensor, w: Tensor) -> Tensor:
    s = eN @ w
    return T.reshape(s, (s.shape[0],))


class Siagr:
    """Scoring model bound to a group roster.

    All scoring methods are batched: they take aligned integer arrays of
    entity and item ids and return a ``[B]`` tensor of scores.
    """

    def __init__(self, config: ModelConfig, params: ModelParameters, roster: Roster):
        self.config = config
        self.params = params
        self.roster = roster

    @classmethod
    def init(cls, config: ModelConfig, store: InteractionStore, seed: int) -> "Siagr":
        return cls(config, ModelParameters.init(config, store.n_users, store.n_items, seed), store.roster)

    def _check(self, ids, n, what):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise IndexError(f"{what} id out of range [0, {n})")
        return ids

    def _score(self, entity_vecs: Tensor, item_vecs: Tensor) -> Tensor:
        return predict_layer(hidden_forward(pool(entity_vecs, item_vecs), self.params.hidden), self.params.w)

    def score_users(self, users, items) -> Tensor:
        p = self.params
        users = self._check(users, p.user_embeddings.shape[0], "user")
        items = self._check(items, p.item_embeddings.shape[0], "item")
        return self._score(
            T.embedding_lookup(p.user_embeddings, users), T.embedding_lookup(p.item_embeddings, items)
        )

    def _members(self, groups):
        groups = self._check(groups, self.roster.members.shape[0], "group")
        members = self.roster.members[groups]
        mask = self.roster.mask[groups]
        # trim padding columns unused by this batch
        width = int(mask.sum(axis=1).max()) if len(groups) else 1
        return members[:, :width], mask[:, :width]

    def group_profile(self, groups, items, variant: str | None = None) -> Tensor:
        variant = variant or self.config.variant
        p = self.params
        groups = np.asarray(groups, dtype=np.int64)
        members, mask = self._members(groups)
        items = self._check(items, p.item_embeddings.shape[0], "item")
        member_vecs = T.embedding_lookup(p.user_embeddings, members)
        maven = group = None
        if variant in ("siagr", "siagr-m"):
            item_vecs = T.embedding_lookup(p.item_embeddings, items)
            alpha = attention_weights(item_vecs, member_vecs, mask, p.attention)
            maven = maven_vector(alpha, member_vecs)
        if variant in ("siagr", "siagr-g"):
            # item-independent: encode each distinct group once, then gather
            uniq, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
            encoded = encode_group(
                T.embedding_lookup(p.user_embeddings, members[first]), mask[first], p.encoder
            )
            group = T.embedding_lookup(encoded, inverse)
        return aggregate_group(maven, group)

    def score_groups(self, groups, items, variant: str | None = None) -> Tensor:
        profile = self.group_profile(groups, items, variant)
        return self._score(profile, T.embedding_lookup(self.params.item_embeddings, items))

    def attention(self, groups, items) -> tuple[np.ndarray, np.ndarray]:
        """Attention weights ``[B, M]`` and the member ids they refer to."""
        p = self.params
        members, mask = self._members(groups)
        with T.no_grad():
            alpha = attention_weights(
                T.embedding_lookup(p.item_embeddings, items),
                T.embedding_lookup(p.user_embeddings, members), mask, p.attention,
            )
        return alpha.data, np.where(mask, members, -1)


# --- checkpoints -------------------------------------------------------------


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def save_checkpoint(path, config: ModelConfig, params: ModelParameters, meta: dict | None = None) -> Path:
    """Write config echo plus every parameter (shape + row-major values) as JSON.

    The write is atomic so an interrupted run leaves the previous file intact.
    """
    path = Path(path)
    doc = {
        "format": "mavenrec-checkpoint/1",
        "config": asdict(config),
        "meta": meta or {},
        "params": {k: {"shape": list(v.shape), "data": v.data.ravel().tolist()} for k, v in params.named().items()},
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")
    os.replace(tmp, path)
    return path


def load_checkpoint(path, n_users: int | None = None, n_items: int | None = None):
    """Return ``(config, params, meta)``; rejects any parameter shape mismatch."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    config = ModelConfig.from_dict(doc["config"])
    stored = doc["params"]
    nu = n_users if n_users is not None else stored["user_embeddings"]["shape"][0]
    ni = n_items if n_items is not None else stored["item_embeddings"]["shape"][0]
    params = ModelParameters.init(config, nu, ni, seed=0)
    named = params.named()
    if set(named) != set(stored):
        missing = sorted(set(named) ^ set(stored))
        raise ShapeError(f"checkpoint parameter names do not match the architecture: {missing}")
    for name, t in named.items():
        shape = tuple(stored[name]["shape"])
        if shape != t.shape:
            raise ShapeError(f"checkpoint {name}: stored shape {list(shape)} vs expected {list(t.shape)}")
        data = np.asarray(stored[name]["data"], dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ShapeError(f"checkpoint {name}: {data.size} values for shape {list(shape)}")
        t.data = data.reshape(shape)
    return config, params, doc.get("meta", {})
