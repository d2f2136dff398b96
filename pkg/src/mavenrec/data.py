"""Interaction storage, CSV ingestion, leave-one-out splits and negative sampling."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

USER, GROUP = "user", "group"
KIND_CODE = {USER: 0, GROUP: 1}


class DataError(ValueError):
    """Malformed or inconsistent interaction data."""


class Interaction(NamedTuple):
    entity: int
    item: int
    timestamp: int | None


@dataclass(frozen=True)
class InteractionStore:
    """Users, items, groups, their interactions and group rosters.

    Internal ids are dense integers; ``*_ids`` map them back to external
    string ids (sorted, so the mapping is stable across runs).
    """

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    group_ids: tuple[str, ...]
    user_item: tuple[Interaction, ...]
    group_item: tuple[Interaction, ...]
    membership: tuple[tuple[int, ...], ...]
    duplicates: int = field(default=0, compare=False)

    def __post_init__(self):
        for g, members in enumerate(self.membership):
            if not members:
                raise DataError(f"group {self.group_ids[g]!r} has no members")
            if len(set(members)) != len(members):
                raise DataError(f"group {self.group_ids[g]!r} has duplicate members")
        if len(self.membership) != len(self.group_ids):
            raise DataError("membership must list every group")

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_groups(self) -> int:
        return len(self.group_ids)

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.item_ids)}

    @cached_property
    def group_index(self) -> dict[str, int]:
        return {g: i for i, g in enumerate(self.group_ids)}

    def interactions(self, kind: str) -> tuple[Interaction, ...]:
        return self.user_item if kind == USER else self.group_item

    def n_entities(self, kind: str) -> int:
        return self.n_users if kind == USER else self.n_groups

    @cached_property
    def _positives(self) -> dict[str, list[np.ndarray]]:
        out = {}
        for kind in (USER, GROUP):
            buckets: list[list[int]] = [[] for _ in range(self.n_entities(kind))]
            for r in self.interactions(kind):
                buckets[r.entity].append(r.item)
            out[kind] = [np.unique(np.array(b, dtype=np.int64)) for b in buckets]
        return out

    def positives(self, kind: str, entity: int) -> np.ndarray:
        """Sorted item ids the entity interacted with."""
        return self._positives[kind][entity]

    @cached_property
    def roster(self) -> "Roster":
        return Roster.from_membership(self.membership)

    def with_interactions(self, user_item, group_item) -> "InteractionStore":
        return InteractionStore(
            self.user_ids, self.item_ids, self.group_ids,
            tuple(sorted(user_item)), tuple(sorted(group_item)), self.membership,
        )

    def summary(self) -> dict:
        sizes = [len(m) for m in self.membership]
        return {
            "groups": self.n_groups,
            "users": self.n_users,
            "items": self.n_items,
            "user_item": len(self.user_item),
            "group_item": len(self.group_item),
            "avg_group_size": float(np.mean(sizes)) if sizes else 0.0,
        }


@dataclass(frozen=True)
class Roster:
    """Padded member matrix: ``members[g, :sizes[g]]`` are the members of g."""

    members: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_membership(cls, membership: Sequence[Sequence[int]]) -> "Roster":
        width = max((len(m) for m in membership), default=1)
        members = np.zeros((len(membership), width), dtype=np.int64)
        mask = np.zeros((len(membership), width), dtype=bool)
        for g, m in enumerate(membership):
            members[g, : len(m)] = m
            mask[g, : len(m)] = True
        return cls(members, mask)

    @property
    def sizes(self) -> np.ndarray:
        return self.mask.sum(axis=1)


# --- CSV ingestion ---------------------------------------------------------

_SCHEMAS = {
    "user_item": (("user_id", "item_id"), True),
    "group_item": (("group_id", "item_id"), True),
    "membership": (("group_id", "user_id"), False),
}


def _read_csv(path: Path, schema: str) -> list[tuple[str, str, int | None, int]]:
    required, allow_ts = _SCHEMAS[schema]
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}:1: missing header row")
        header = [h.strip() for h in header]
        allowed = list(required) + (["timestamp"] if allow_ts else [])
        if tuple(header[:2]) != required or any(h not in allowed for h in header) or len(set(header)) != len(header):
            raise DataError(f"{path}:1: header {header} does not match expected columns {allowed}")
        has_ts = "timestamp" in header
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            a, b = row[0].strip(), row[1].strip()
            if not a or not b:
                raise DataError(f"{path}:{lineno}: empty id")
            ts = None
            if has_ts:
                try:
                    ts = int(row[2].strip())
                except ValueError:
                    raise DataError(f"{path}:{lineno}: timestamp {row[2]!r} is not an integer") from None
            rows.append((a, b, ts, lineno))
    return rows


def _dedup(records: list[Interaction]) -> tuple[list[Interaction], int]:
    # one interaction per (entity, item); keep the latest timestamp
    best: dict[tuple[int, int], Interaction] = {}
    dups = 0
    for r in records:
        key = (r.entity, r.item)
        if key in best:
            dups += 1
            old = best[key]
            if r.timestamp is not None and (old.timestamp is None or r.timestamp > old.timestamp):
                best[key] = r
        else:
            best[key] = r
    return sorted(best.values()), dups


def build_store(
    user_item: Sequence[tuple[str, str, int | None]],
    group_item: Sequence[tuple[str, str, int | None]],
    membership: Sequence[tuple[str, str]],
) -> InteractionStore:
    """Canonicalize external-id records into an :class:`InteractionStore`."""
    users = {u for u, _, _ in user_item} | {u for _, u in membership}
    items = {v for _, v, _ in user_item} | {v for _, v, _ in group_item}
    groups = {g for g, _ in membership} | {g for g, _, _ in group_item}
    user_ids, item_ids, group_ids = tuple(sorted(users)), tuple(sorted(items)), tuple(sorted(groups))
    ui = {u: i for i, u in enumerate(user_ids)}
    vi = {v: i for i, v in enumerate(item_ids)}
    gi = {g: i for i, g in enumerate(group_ids)}

    rosters: list[set[int]] = [set() for _ in group_ids]
    dup_members = 0
    for g, u in membership:
        if ui[u] in rosters[gi[g]]:
            dup_members += 1
        rosters[gi[g]].add(ui[u])
    for g, r in enumerate(rosters):
        if not r:
            raise DataError(f"group {group_ids[g]!r} has interactions but no members")

    uirec, d1 = _dedup([Interaction(ui[u], vi[v], t) for u, v, t in user_item])
    girec, d2 = _dedup([Interaction(gi[g], vi[v], t) for g, v, t in group_item])
    dups = d1 + d2 + dup_members
    if dups:
        log.warning("dropped %d duplicate rows", dups)
    return InteractionStore(
        user_ids, item_ids, group_ids, tuple(uirec), tuple(girec),
        tuple(tuple(sorted(r)) for r in rosters), duplicates=dups,
    )


def load(interactions_path, group_interactions_path, membership_path) -> InteractionStore:
    """Read the three CSV files into a store."""
    ui = [(a, b, t) for a, b, t, _ in _read_csv(Path(interactions_path), "user_item")]
    gi = [(a, b, t) for a, b, t, _ in _read_csv(Path(group_interactions_path), "group_item")]
    mem = [(a, b) for a, b, _, _ in _read_csv(Path(membership_path), "membership")]
    return build_store(ui, gi, mem)


def load_dir(data_dir) -> InteractionStore:
    d = Path(data_dir)
    return load(d / "user_item.csv", d / "group_item.csv", d / "membership.csv")


def data_files(data_dir) -> list[Path]:
    d = Path(data_dir)
    return [d / "user_item.csv", d / "group_item.csv", d / "membership.csv"]


def write_dir(store: InteractionStore, out_dir) -> list[Path]:
    """Write a store back to the three CSVs (deterministic byte output)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = data_files(out)

    def dump(path, header, rows):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    for path, kind, names, ename in (
        (paths[0], USER, store.user_ids, "user_id"),
        (paths[1], GROUP, store.group_ids, "group_id"),
    ):
        recs = store.interactions(kind)
        with_ts = any(r.timestamp is not None for r in recs)
        header = [ename, "item_id"] + (["timestamp"] if with_ts else [])
        rows = [
            [names[r.entity], store.item_ids[r.item]] + ([r.timestamp] if with_ts else []) for r in recs
        ]
        dump(path, header, rows)
    dump(
        paths[2], ["group_id", "user_id"],
        [[store.group_ids[g], store.user_ids[u]] for g, m in enumerate(store.membership) for u in m],
    )
    return paths


# --- splitting and sampling --------------------------------------------------


class HeldOut(NamedTuple):
    kind: str
    entity: int
    item: int


class Split(NamedTuple):
    train: InteractionStore
    test: list[HeldOut]
    skipped: dict[str, int]


def split_leave_one_out(store: InteractionStore, seed: int) -> Split:
    """Hold out one interaction per user and per group with at least two.

    The held-out interaction is the latest by timestamp, or a seeded uniform
    pick when the entity has any interaction without a timestamp.
    """
    rng = np.random.default_rng(seed)
    test: list[HeldOut] = []
    kept: dict[str, list[Interaction]] = {}
    skipped = {}
    for kind in (GROUP, USER):
        by_entity: list[list[Interaction]] = [[] for _ in range(store.n_entities(kind))]
        for r in store.interactions(kind):
            by_entity[r.entity].append(r)
        train_recs = []
        skipped[kind] = 0
        for e, recs in enumerate(by_entity):
            if len(recs) < 2:
                if recs:
                    skipped[kind] += 1
                train_recs.extend(recs)
                continue
            if all(r.timestamp is not None for r in recs):
                held = max(range(len(recs)), key=lambda i: (recs[i].timestamp, recs[i].item))
            else:
                held = int(rng.integers(len(recs)))
            test.append(HeldOut(kind, e, recs[held].item))
            train_recs.extend(r for i, r in enumerate(recs) if i != held)
        kept[kind] = train_recs
    if any(skipped.values()):
        log.info("leave-one-out skipped entities with <2 interactions: %s", skipped)
    return Split(store.with_interactions(kept[USER], kept[GROUP]), test, skipped)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def eligible_items(store: InteractionStore, kind: str, entity: int) -> np.ndarray:
    return np.setdiff1d(np.arange(store.n_items), store.positives(kind, entity), assume_unique=True)


def sample_negatives(store: InteractionStore, entity: tuple[str, int], k: int, seed) -> np.ndarray:
    """Draw ``k`` items the entity has not interacted with.

    Items are distinct within a call when enough are eligible; beyond that the
    remainder is drawn uniformly with replacement.
    """
    kind, e = entity
    pool = eligible_items(store, kind, e)
    if pool.size == 0:
        raise DataError(f"{kind} {e} has interacted with every item; no negatives available")
    rng = _rng(seed)
    if k <= pool.size:
        return rng.choice(pool, size=k, replace=False)
    head = rng.permutation(pool)
    return np.concatenate([head, rng.choice(pool, size=k - pool.size, replace=True)])


@dataclass(frozen=True)
class TrainTriples:
    """Training instances (entity kind, entity, positive item, negative item).

    ``kind`` holds 0 for users and 1 for groups.
    """

    kind: np.ndarray
    entity: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __len__(self) -> int:
        return len(self.kind)

    def of_kind(self, kind: str) -> "TrainTriples":
        sel = self.kind == KIND_CODE[kind]
        return TrainTriples(self.kind[sel], self.entity[sel], self.positive[sel], self.negative[sel])


def make_train_triples(train: InteractionStore, negatives_per_positive: int, seed) -> TrainTriples:
    """One triple per (positive, sampled negative) for every group and user."""
    if negatives_per_positive < 1:
        raise ValueError(f"negatives_per_positive must be >= 1, got {negatives_per_positive}")
    rng = _rng(seed)
    kinds, ents, pos, neg = [], [], [], []
    for kind in (GROUP, USER):
        for e in range(train.n_entities(kind)):
            p = train.positives(kind, e)
            if p.size == 0:
                continue
            n = sample_negatives(train, (kind, e), p.size * negatives_per_positive, rng)
            kinds.append(np.full(n.size, KIND_CODE[kind]))
            ents.append(np.full(n.size, e))
            pos.append(np.repeat(p, negatives_per_positive))
            neg.append(n)
    if not kinds:
        empty = np.zeros(0, dtype=np.int64)
        return TrainTriples(empty, empty, empty, empty)
    order = rng.permutation(sum(len(k) for k in kinds))
    cat = lambda xs: np.concatenate(xs).astype(np.int64)[order]  # noqa: E731
    return TrainTriples(cat(kinds), cat(ents), cat(pos), cat(neg))
