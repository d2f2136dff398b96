"""Synthetic experiments shared by the scripts and the acceptance suite."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import data, evaluation, synth, training
from .data import GROUP, InteractionStore
from .model import ModelConfig, Siagr

log = logging.getLogger(__name__)

# Training setup used for the synthetic experiments: smaller embeddings than
# the library default keep five-seed sweeps within minutes, a wide attention
# layer, and a heavier user-tower weight so member embeddings stay anchored to
# individual preferences.
EXPERIMENT_TRAIN = dict(
    epochs=20,
    batch_size=256,
    learning_rate=0.005,
    lambda_user=10.0,
    negatives_per_positive=4,
)
EXPERIMENT_MODEL = dict(embedding_dim=16, hidden_widths=[48, 24, 8], attention_dim=64, encoder_layers=1, encoder_heads=2)


def experiment_config(seed: int, variant: str = "siagr", **overrides) -> training.TrainConfig:
    train = {**EXPERIMENT_TRAIN, **{k: v for k, v in overrides.items() if k in EXPERIMENT_TRAIN}}
    model = {**EXPERIMENT_MODEL, **{k: v for k, v in overrides.items() if k in EXPERIMENT_MODEL}, "variant": variant}
    return training.TrainConfig(seed=seed, model=ModelConfig(**model), **train)


def mean_attention(model: Siagr, store: InteractionStore, group: int, items=None) -> np.ndarray:
    """Attention per member of ``group`` averaged over ``items`` (default: its interactions)."""
    if items is None:
        items = store.positives(GROUP, group)
    items = np.asarray(items, dtype=np.int64)
    alpha, _ = model.attention(np.full(len(items), group), items)
    return alpha[:, : len(store.membership[group])].mean(axis=0)


def maven_recovery(model: Siagr, store: InteractionStore, maven_of: dict[str, str], min_size: int = 3) -> float:
    """Share of groups (size >= min_size) whose highest mean attention is on the maven."""
    hits = n = 0
    for g, members in enumerate(store.membership):
        if len(members) < min_size or store.positives(GROUP, g).size == 0:
            continue
        top = members[int(np.argmax(mean_attention(model, store, g)))]
        hits += store.user_ids[top] == maven_of[store.group_ids[g]]
        n += 1
    return hits / n if n else float("nan")


@dataclass
class SeedRun:
    seed: int
    store: InteractionStore
    truth: synth.GroundTruth
    split: data.Split
    models: dict[str, Siagr]
    histories: dict[str, training.History]


def run_seed(
    synth_config: synth.SynthConfig,
    seed: int,
    variants=("siagr",),
    **overrides,
) -> SeedRun:
    """Generate data for ``seed``, split it, and train one model per variant."""
    store, truth = synth.generate(replace(synth_config, seed=seed))
    split = data.split_leave_one_out(store, seed)
    models, histories = {}, {}
    for variant in variants:
        cfg = experiment_config(seed, variant, **overrides)
        params, hist = training.fit(split.train, cfg)
        models[variant] = Siagr(cfg.model, params, store.roster)
        histories[variant] = hist
        log.info("seed %d %s: final group loss %.4f", seed, variant, hist.group_loss[-1] if hist.group_loss else float("nan"))
    return SeedRun(seed, store, truth, split, models, histories)


def evaluate_run(run: SeedRun, methods=evaluation.METHODS, eval_negatives: int = 100) -> evaluation.EvalReport:
    return evaluation.evaluate(run.models, run.split.test, run.store, eval_negatives, seed=run.seed, methods=methods)


def summarize(reports: list[evaluation.EvalReport]) -> dict[str, dict[str, float]]:
    """Seed-averaged HR@5, HR@10 and MRR per method."""
    out = {}
    for m in reports[0].methods:
        out[m] = {
            "HR@5": float(np.mean([r.methods[m].hr[5] for r in reports])),
            "HR@10": float(np.mean([r.methods[m].hr[10] for r in reports])),
            "MRR": float(np.mean([r.methods[m].mrr for r in reports])),
        }
    return out
