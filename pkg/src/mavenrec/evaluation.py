"""Top-N evaluation: HR@n and MRR for SIAGR, its ablations and static baselines."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .data import GROUP, HeldOut, InteractionStore, eligible_items
from .model import Siagr

log = logging.getLogger(__name__)

METHODS = ("siagr", "siagr-g", "siagr-m", "ncf-avg", "ncf-lm")


def rank_candidates(scores: Mapping[int, float], held_out: int) -> int:
    """1 + #strictly higher + #ties with a smaller item id."""
    if held_out not in scores:
        raise KeyError(f"held-out item {held_out} is not among the scored candidates")
    s0 = scores[held_out]
    higher = sum(1 for v, s in scores.items() if s > s0)
    ties = sum(1 for v, s in scores.items() if s == s0 and v < held_out)
    return 1 + higher + ties


def rank_rows(scores: np.ndarray, items: np.ndarray) -> np.ndarray:
    """Vectorised :func:`rank_candidates`; column 0 holds the held-out item."""
    s0, v0 = scores[:, :1], items[:, :1]
    higher = (scores > s0).sum(axis=1)
    ties = ((scores == s0) & (items < v0)).sum(axis=1)
    return 1 + higher + ties


def hit_ratio(ranks: Sequence[int], n: int) -> float:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("hit_ratio of an empty rank list")
    return float((ranks <= n).sum()) / ranks.size


def mrr(ranks: Sequence[int]) -> float:
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("mrr of an empty rank list")
    return float((1.0 / ranks).mean())


def member_scores(model: Siagr, groups, items) -> tuple[np.ndarray, np.ndarray]:
    """User-tower scores of every member for each (group, item) row: ``[B, M]`` + mask."""
    members, mask = model.roster.members[groups], model.roster.mask[groups]
    B, M = members.shape
    with T.no_grad():
        s = model.score_users(members.reshape(-1), np.repeat(items, M)).data.reshape(B, M)
    return s, mask


def score_baseline(model: Siagr, groups, items, strategy: str) -> np.ndarray:
    """AVG: mean member score; LM: minimum member score (least misery)."""
    groups = np.atleast_1d(np.asarray(groups, dtype=np.int64))
    items = np.atleast_1d(np.asarray(items, dtype=np.int64))
    s, mask = member_scores(model, groups, items)
    if not mask.any(axis=1).all():
        raise ValueError("score_baseline: empty group")
    strategy = strategy.upper()
    if strategy == "AVG":
        return np.where(mask, s, 0.0).sum(axis=1) / mask.sum(axis=1)
    if strategy == "LM":
        return np.where(mask, s, np.inf).min(axis=1)
    raise ValueError(f"unknown baseline strategy {strategy!r}; expected AVG or LM")


@dataclass
class MethodResult:
    hr: dict[int, float]
    mrr: float


@dataclass
class EvalReport:
    methods: dict[str, MethodResult]
    n_cases: int
    eval_negatives: int
    seed: int
    config_hash: str
    skipped: int = 0
    ranks: dict[str, list[int]] = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("ranks")
        for m in d["methods"].values():
            m["hr"] = {str(k): v for k, v in m["hr"].items()}
        return d

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        jp, cp = out / "eval_report.json", out / "eval_report.csv"
        jp.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        with open(cp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "metric", "n", "value"])
            for name, r in self.methods.items():
                for n, v in sorted(r.hr.items()):
                    w.writerow([name, "HR", n, repr(v)])
                w.writerow([name, "MRR", "", repr(r.mrr)])
        return [jp, cp]


def build_candidates(store: InteractionStore, cases: Sequence[HeldOut], eval_negatives: int, seed: int):
    """Per case: held-out item first, then ``eval_negatives`` distinct never-interacted items."""
    rng = np.random.default_rng(seed)
    rows, kept = [], []
    skipped = 0
    for c in cases:
        pool = eligible_items(store, c.kind, c.entity)
        if pool.size < eval_negatives:
            skipped += 1
            continue
        negs = rng.choice(pool, size=eval_negatives, replace=False)
        rows.append(np.concatenate([[c.item], negs]))
        kept.append(c)
    if skipped:
        log.warning("skipped %d test cases with fewer than %d eligible negatives", skipped, eval_negatives)
    cand = np.array(rows, dtype=np.int64).reshape(len(rows), eval_negatives + 1)
    return kept, cand, skipped


def _score_method(method: str, models: Mapping[str, Siagr], groups: np.ndarray, items: np.ndarray) -> np.ndarray:
    if method in ("ncf-avg", "ncf-lm"):
        return score_baseline(models["siagr"], groups, items, method.split("-")[1])
    model = models.get(method)
    if model is not None:
        with T.no_grad():
            return model.score_groups(groups, items).data
    # no dedicated checkpoint: silence one path of the full model
    with T.no_grad():
        return models["siagr"].score_groups(groups, items, variant=method).data


def evaluate(
    model: Siagr | Mapping[str, Siagr],
    test: Sequence[HeldOut],
    store: InteractionStore,
    eval_negatives: int = 100,
    seed: int = 0,
    methods: Sequence[str] = METHODS,
    ns: Sequence[int] = (5, 10),
    config_hash: str = "",
    threads: int = 1,
    chunk: int = 8192,
) -> EvalReport:
    """Rank each group's held-out item against sampled negatives for every method.

    ``model`` is either one SIAGR model or a mapping method -> model, so that
    separately trained ablations can be compared on identical candidates.
    Missing ablation models fall back to the full model with a path silenced.
    """
    models = dict(model) if isinstance(model, Mapping) else {"siagr": model}
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected a subset of {METHODS}")
    if "siagr" not in models:
        raise ValueError("evaluate needs the full SIAGR model under key 'siagr'")
    cases = [c for c in test if c.kind == GROUP]
    if not cases:
        raise ValueError("no group test cases to evaluate")
    kept, cand, skipped = build_candidates(store, cases, eval_negatives, seed)
    if not kept:
        raise ValueError("every test case was skipped")
    C = cand.shape[1]
    groups = np.repeat(np.array([c.entity for c in kept], dtype=np.int64), C)
    items = cand.reshape(-1)

    rows_per_chunk = max(C, (chunk // C) * C)
    spans = [(s, min(s + rows_per_chunk, len(items))) for s in range(0, len(items), rows_per_chunk)]

    results, all_ranks = {}, {}
    for m in methods:
        def work(span, m=m):
            a, b = span
            return _score_method(m, models, groups[a:b], items[a:b])

        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                parts = list(ex.map(work, spans))
        else:
            parts = [work(s) for s in spans]
        scores = np.concatenate(parts).reshape(-1, C)
        ranks = rank_rows(scores, cand)
        results[m] = MethodResult({int(n): hit_ratio(ranks, n) for n in ns}, mrr(ranks))
        all_ranks[m] = ranks.tolist()
    return EvalReport(results, len(kept), eval_negatives, seed, config_hash, skipped, all_ranks)
