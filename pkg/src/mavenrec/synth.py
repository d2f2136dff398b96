"""Synthetic populations with one planted high-influence member (maven) per group.

World model: users and items carry Gaussian latent vectors; a user's
preference over items is the softmax of latent dot products. A group picks
items from the mixture of its members' preferences, weighted by an
influence vector that puts ``maven_weight`` on the maven and splits the rest
evenly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import softmax

from .data import InteractionStore, build_store, write_dir


@dataclass
class SynthConfig:
    n_users: int = 500
    n_items: int = 300
    n_groups: int = 200
    group_size_range: tuple[int, int] = (2, 8)
    latent_dim: int = 8
    maven_weight: float = 0.8
    interactions_per_user: int = 40
    interactions_per_group: int = 10
    seed: int = 0
    # multiplies user-item latent dot products; larger means more peaked preferences
    preference_scale: float = 1.0
    # optional probabilities over the sizes in group_size_range (uniform if None)
    group_size_weights: list[float] | None = None
    # give every catalogue item at least one user interaction, as in filtered
    # real datasets, so the loaded item count equals n_items
    cover_catalogue: bool = False

    def __post_init__(self):
        self.group_size_range = tuple(int(s) for s in self.group_size_range)
        lo, hi = self.group_size_range
        for name in ("n_users", "n_items", "n_groups", "latent_dim", "interactions_per_user", "interactions_per_group"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 1 <= lo <= hi:
            raise ValueError(f"invalid group_size_range {self.group_size_range}")
        if hi > self.n_users:
            raise ValueError(f"group_size_range {self.group_size_range} exceeds n_users={self.n_users}")
        if max(self.interactions_per_user, self.interactions_per_group) > self.n_items:
            raise ValueError("interactions per entity cannot exceed n_items")
        if self.preference_scale <= 0:
            raise ValueError("preference_scale must be positive")
        if not 0.0 < self.maven_weight < 1.0:
            raise ValueError("maven_weight must lie in (0, 1)")
        smallest_shared = max(lo, 2)
        if hi >= 2 and self.maven_weight <= 1.0 / smallest_shared:
            raise ValueError(
                f"maven_weight={self.maven_weight} must exceed the uniform share 1/{smallest_shared}"
            )
        if self.group_size_weights is not None:
            w = np.asarray(self.group_size_weights, dtype=float)
            if w.shape != (hi - lo + 1,) or (w < 0).any() or not np.isclose(w.sum(), 1.0):
                raise ValueError("group_size_weights must be a distribution over the size range")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class GroundTruth:
    user_latents: dict[str, np.ndarray]
    item_latents: dict[str, np.ndarray]
    maven_of: dict[str, str]
    influence: dict[str, dict[str, float]]
    # member preference distributions over the item catalogue, by user id
    preferences: np.ndarray = field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            g: {"maven": self.maven_of[g], "influence": self.influence[g]}
            for g in sorted(self.maven_of)
        }


def influence_vector(size: int, maven_pos: int, maven_weight: float) -> np.ndarray:
    if size == 1:
        return np.ones(1)
    w = np.full(size, (1.0 - maven_weight) / (size - 1))
    w[maven_pos] = maven_weight
    return w


def _ids(prefix: str, n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def _sample_distinct(rng: np.random.Generator, logp: np.ndarray, k: int) -> np.ndarray:
    # Gumbel top-k == sequential sampling without replacement
    keys = logp + rng.gumbel(size=logp.shape)
    return np.argsort(-keys, kind="stable")[:k]


def generate(config: SynthConfig) -> tuple[InteractionStore, GroundTruth]:
    rng = np.random.default_rng(config.seed)
    users, items, groups = _ids("u", config.n_users), _ids("i", config.n_items), _ids("g", config.n_groups)

    U = rng.standard_normal((config.n_users, config.latent_dim))
    V = rng.standard_normal((config.n_items, config.latent_dim))
    logits = config.preference_scale * (U @ V.T)
    prefs = softmax(logits, axis=1)

    ui_rows = []
    for u in range(config.n_users):
        for v in np.sort(_sample_distinct(rng, logits[u], config.interactions_per_user)):
            ui_rows.append((users[u], items[v], None))
    if config.cover_catalogue:
        seen = {r[1] for r in ui_rows}
        for v in range(config.n_items):
            if items[v] not in seen:
                u = rng.choice(config.n_users, p=prefs[:, v] / prefs[:, v].sum())
                ui_rows.append((users[u], items[v], None))

    lo, hi = config.group_size_range
    sizes = rng.choice(np.arange(lo, hi + 1), size=config.n_groups, p=config.group_size_weights)

    gi_rows, mem_rows = [], []
    maven_of, influence = {}, {}
    for g in range(config.n_groups):
        members = np.sort(rng.choice(config.n_users, size=sizes[g], replace=False))
        pos = int(rng.integers(sizes[g]))
        infl = influence_vector(int(sizes[g]), pos, config.maven_weight)
        mix = infl @ prefs[members]
        with np.errstate(divide="ignore"):
            chosen = _sample_distinct(rng, np.log(mix), config.interactions_per_group)
        gid = groups[g]
        for v in np.sort(chosen):
            gi_rows.append((gid, items[v], None))
        for u in members:
            mem_rows.append((gid, users[u]))
        maven_of[gid] = users[members[pos]]
        influence[gid] = {users[u]: float(w) for u, w in zip(members, infl)}

    truth = GroundTruth(
        user_latents=dict(zip(users, U)),
        item_latents=dict(zip(items, V)),
        maven_of=maven_of,
        influence=influence,
        preferences=prefs,
    )
    return build_store(ui_rows, gi_rows, mem_rows), truth


def write(store: InteractionStore, truth: GroundTruth, out_dir) -> list[Path]:
    """Write the three interaction CSVs plus ground_truth.json."""
    paths = write_dir(store, out_dir)
    gt = Path(out_dir) / "ground_truth.json"
    gt.write_text(json.dumps(truth.to_json(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths + [gt]


def read_ground_truth(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def config_dict(config: SynthConfig) -> dict:
    d = asdict(config)
    d["group_size_range"] = list(config.group_size_range)
    return d


def camra2011_shaped(seed: int = 0, **overrides) -> SynthConfig:
    """Counts of the CAMRa2011 household data: 290 groups, 690 users, 7710 items, mean size 2.08."""
    base = dict(
        n_users=690, n_items=7710, n_groups=290, group_size_range=(2, 3),
        group_size_weights=[0.92, 0.08], interactions_per_user=40, interactions_per_group=40,
        cover_catalogue=True, seed=seed,
    )
    return SynthConfig(**{**base, **overrides})
