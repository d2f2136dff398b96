"""Pairwise regression loss, Adam, and the joint user/group training loop."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .data import GROUP, USER, InteractionStore, TrainTriples, make_train_triples
from .model import ModelConfig, ModelParameters, Siagr, save_checkpoint
from .tensor import ShapeError, Tensor

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 0.001
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    negatives_per_positive: int = 4
    lambda_user: float = 1.0
    seed: int = 0
    checkpoint_path: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lambda_user < 0:
            raise ValueError("lambda_user must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.negatives_per_positive < 1:
            raise ValueError("negatives_per_positive must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        """Accepts flat files: architecture keys may sit beside the training keys."""
        d = dict(d)
        model = dict(d.pop("model", {}) or {})
        for k in ModelConfig.__dataclass_fields__:
            if k in d:
                model[k] = d.pop(k)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d, model=ModelConfig.from_dict(model))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["betas"] = list(self.betas)
        return out


def pairwise_loss(score_pos: Tensor, score_neg: Tensor) -> Tensor:
    """Elementwise (pos - neg - 1)^2: the score gap regresses to a unit margin."""
    one = Tensor(np.ones(score_pos.shape))
    return T.square(score_pos - score_neg - one)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"adam: gradient {list(g.shape)} vs parameter {list(p.shape)} for {name}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        if m.shape != p.shape:
            raise ShapeError(f"adam: moment {list(m.shape)} vs parameter {list(p.shape)} for {name}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def batch_loss(model: Siagr, kind: str, entities, pos, neg) -> Tensor:
    """Mean pairwise loss over one batch of same-kind triples."""
    n = len(entities)
    ents = np.concatenate([entities, entities])
    items = np.concatenate([pos, neg])
    scores = model.score_groups(ents, items) if kind == GROUP else model.score_users(ents, items)
    return T.mean(pairwise_loss(scores[:n], scores[n:]))


def _batches(triples: TrainTriples, kind: str, size: int):
    sub = triples.of_kind(kind)
    for start in range(0, len(sub), size):
        sl = slice(start, start + size)
        yield kind, sub.entity[sl], sub.positive[sl], sub.negative[sl]


@dataclass
class History:
    epochs: list[int] = field(default_factory=list)
    group_loss: list[float] = field(default_factory=list)
    user_loss: list[float] = field(default_factory=list)

    def append(self, epoch, g, u):
        self.epochs.append(epoch)
        self.group_loss.append(g)
        self.user_loss.append(u)

    def write_csv(self, path) -> Path:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "group_loss", "user_loss"])
            for row in zip(self.epochs, self.group_loss, self.user_loss):
                w.writerow([row[0], repr(row[1]), repr(row[2])])
        return Path(path)


def fit(
    store: InteractionStore,
    config: TrainConfig,
    on_step: Callable[[int, int, ModelParameters], None] | None = None,
    params: ModelParameters | None = None,
    on_epoch: Callable[[int, Siagr, History], None] | None = None,
) -> tuple[ModelParameters, History]:
    """Minimise mean group loss + lambda_user * mean user loss with Adam.

    Triples (and their negatives) are resampled every epoch from a seeded
    stream, user and group batches are interleaved in a seeded order, and a
    checkpoint is written after each epoch when ``checkpoint_path`` is set.
    ``on_step`` sees the parameters after backward and before the update;
    ``on_epoch`` sees the model after each epoch.
    """
    if not store.user_item and not store.group_item:
        raise TrainingError("training split is empty")
    mc = config.model
    model = Siagr(mc, params or ModelParameters.init(mc, store.n_users, store.n_items, config.seed), store.roster)
    named = model.params.named()
    state = AdamState()
    history = History()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    weights = {GROUP: 1.0, USER: config.lambda_user}

    if config.checkpoint_path and config.epochs == 0:
        save_checkpoint(config.checkpoint_path, mc, model.params, {"epoch": 0, "seed": config.seed})

    for epoch in range(1, config.epochs + 1):
        triples = make_train_triples(store, config.negatives_per_positive, rng)
        batches = list(_batches(triples, GROUP, config.batch_size)) + list(_batches(triples, USER, config.batch_size))
        order = rng.permutation(len(batches))
        sums = {GROUP: 0.0, USER: 0.0}
        counts = {GROUP: 0, USER: 0}
        for step, bi in enumerate(order):
            kind, ents, pos, neg = batches[bi]
            if weights[kind] == 0.0:
                continue
            loss = batch_loss(model, kind, ents, pos, neg)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite {kind} loss at epoch {epoch}, step {step}")
            sums[kind] += value * len(ents)
            counts[kind] += len(ents)
            model.params.zero_grad()
            T.backward(T.scale(loss, weights[kind]))
            if on_step is not None:
                on_step(epoch, step, model.params)
            adam_step(
                {k: t.data for k, t in named.items()},
                {k: t.grad for k, t in named.items() if t.grad is not None},
                state, config.learning_rate, config.betas, config.eps,
            )
        g = sums[GROUP] / counts[GROUP] if counts[GROUP] else float("nan")
        u = sums[USER] / counts[USER] if counts[USER] else float("nan")
        history.append(epoch, g, u)
        log.info("epoch %d group_loss=%.5f user_loss=%.5f", epoch, g, u)
        if config.checkpoint_path:
            save_checkpoint(config.checkpoint_path, mc, model.params, {"epoch": epoch, "seed": config.seed})
        if on_epoch is not None:
            on_epoch(epoch, model, history)
    model.params.zero_grad()
    return model.params, history
