import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mavenrec import data, evaluation, synth
from mavenrec import tensor as T
from mavenrec.data import GROUP, HeldOut, Roster
from mavenrec.evaluation import hit_ratio, mrr, rank_candidates, rank_rows, score_baseline
from mavenrec.model import ModelConfig, Siagr


def brute_rank(scores: dict, held_out) -> int:
    # sort by (score descending, item id ascending); rank is 1-based position
    order = sorted(scores, key=lambda v: (-scores[v], v))
    return order.index(held_out) + 1


# --- ranking -----------------------------------------------------------------------


def test_rank_strict_best_is_one():
    assert rank_candidates({3: 0.9, 1: 0.2, 7: 0.5}, 3) == 1


def test_rank_all_equal_uses_id_order():
    scores = {v: 0.0 for v in range(101)}
    assert [rank_candidates(scores, v) for v in (0, 50, 100)] == [1, 51, 101]


def test_rank_missing_held_out():
    with pytest.raises(KeyError):
        rank_candidates({1: 0.0}, 2)


def test_rank_matches_sort_oracle_on_1000_maps():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        items = rng.choice(10_000, size=101, replace=False)
        # coarse scores force plenty of ties
        s = np.round(rng.standard_normal(101), 1)
        scores = dict(zip(items.tolist(), s.tolist()))
        assert rank_candidates(scores, int(items[0])) == brute_rank(scores, int(items[0]))
        assert rank_rows(s[None], items[None])[0] == brute_rank(scores, int(items[0]))


# --- metrics -----------------------------------------------------------------------


def test_hit_ratio_examples():
    assert hit_ratio([1, 3, 12, 50], 10) == 0.5
    assert hit_ratio([1, 3, 12, 50], 50) == 1.0
    with pytest.raises(ValueError):
        hit_ratio([], 5)


def test_mrr_examples():
    assert abs(mrr([1, 2, 4]) - 1.75 / 3) < 1e-15
    assert mrr([1, 1, 1]) == 1.0
    with pytest.raises(ValueError):
        mrr([])


@settings(max_examples=200)
@given(st.lists(st.integers(1, 101), min_size=1, max_size=300), st.integers(1, 101))
def test_metrics_match_recount(ranks, n):
    assert hit_ratio(ranks, n) == sum(r <= n for r in ranks) / len(ranks)
    assert abs(mrr(ranks) - math.fsum(1 / r for r in ranks) / len(ranks)) < 1e-12
    # monotone and bounded
    assert 0 <= hit_ratio(ranks, n) <= hit_ratio(ranks, n + 1) <= 1
    assert mrr(ranks) >= hit_ratio(ranks, n) / n
    assert 0 < mrr(ranks) <= 1


# --- baselines ---------------------------------------------------------------------


class FixedUsers(Siagr):
    """User tower replaced by a lookup table, for hand-checked baselines."""

    def __init__(self, table, roster):
        self.table, self.roster = np.asarray(table, float), roster

    def score_users(self, users, items):
        return T.Tensor(self.table[np.asarray(users), np.asarray(items)])


def test_baseline_hand_example():
    model = FixedUsers([[3.0], [1.0]], Roster.from_membership([[0, 1], [1]]))
    assert score_baseline(model, [0], [0], "AVG").tolist() == [2.0]
    assert score_baseline(model, [0], [0], "LM").tolist() == [1.0]
    assert score_baseline(model, [1], [0], "AVG").tolist() == [1.0]
    assert score_baseline(model, [1], [0], "LM").tolist() == [1.0]
    with pytest.raises(ValueError):
        score_baseline(model, [0], [0], "MAX")


def _trained_like_model(seed=0, n_users=40, n_items=30, n_groups=100):
    rng = np.random.default_rng(seed)
    membership = [sorted(rng.choice(n_users, size=int(rng.integers(1, 7)), replace=False).tolist())
                  for _ in range(n_groups)]
    cfg = ModelConfig(embedding_dim=8, hidden_widths=[24, 8])
    return Siagr.init(cfg, _store(membership, n_users, n_items), seed), membership


def _store(membership, n_users, n_items):
    ui = [(f"u{u:03d}", f"i{u % n_items:03d}", None) for u in range(n_users)]
    ui += [("u000", f"i{v:03d}", None) for v in range(n_items)]
    mem = [(f"g{g:03d}", f"u{u:03d}") for g, m in enumerate(membership) for u in m]
    return data.build_store(ui, [], mem)


def test_baselines_match_member_loop_oracle():
    model, membership = _trained_like_model()
    rng = np.random.default_rng(1)
    items = rng.integers(30, size=100)
    groups = np.arange(100)
    avg = score_baseline(model, groups, items, "AVG")
    lm = score_baseline(model, groups, items, "LM")
    # member scores come from one user-tower pass over every (member, item)
    # pair; aggregation is an explicit loop
    pairs = [(u, v) for g, v in zip(groups, items) for u in membership[g]]
    with T.no_grad():
        flat = model.score_users([u for u, _ in pairs], [v for _, v in pairs]).data
    k = 0
    for g in groups:
        s = flat[k:k + len(membership[g])].tolist()
        k += len(s)
        total = 0.0
        for x in s:
            total += x
        assert avg[g] == total / len(s)
        assert lm[g] == min(s)


# --- evaluate ----------------------------------------------------------------------


class Oracle(Siagr):
    """Scores the held-out item of each group highest."""

    def __init__(self, held, roster, config):
        self.held, self.roster, self.config = held, roster, config

    def score_groups(self, groups, items, variant=None):
        return T.Tensor(np.where(np.asarray(items) == self.held[np.asarray(groups)], 1.0, 0.0))

    def score_users(self, users, items):
        return T.Tensor(np.zeros(len(items)))


@pytest.fixture(scope="module")
def synthetic():
    store, _ = synth.generate(synth.SynthConfig(n_users=300, n_items=400, n_groups=600, group_size_range=(2, 5),
                                                interactions_per_user=10, interactions_per_group=5, seed=3))
    return store, data.split_leave_one_out(store, 3)


def test_perfect_model_scores_one(synthetic):
    store, split = synthetic
    held = np.full(store.n_groups, -1)
    for c in split.test:
        if c.kind == GROUP:
            held[c.entity] = c.item
    model = Oracle(held, store.roster, ModelConfig())
    rep = evaluation.evaluate(model, split.test, store, 100, seed=0, methods=["siagr"])
    r = rep.methods["siagr"]
    assert r.hr == {5: 1.0, 10: 1.0} and r.mrr == 1.0


def test_null_model_mrr(synthetic):
    store, split = synthetic
    model = Siagr.init(ModelConfig(embedding_dim=8, hidden_widths=[24, 8]), store, seed=11)
    rep = evaluation.evaluate(model, split.test, store, 100, seed=0, methods=["siagr"])
    assert rep.n_cases >= 500
    # uniform rank over 101: mean H_101 / 101, sd from the exact second moment
    mean, sd = 0.05145820304691713, 0.11636573093957427
    assert abs(rep.methods["siagr"].mrr - mean) <= 3 * sd / math.sqrt(rep.n_cases)


def test_evaluate_deterministic_and_shared_candidates(synthetic):
    store, split = synthetic
    model = Siagr.init(ModelConfig(embedding_dim=8, hidden_widths=[24, 8]), store, seed=2)
    a = evaluation.evaluate(model, split.test, store, 50, seed=4)
    b = evaluation.evaluate(model, split.test, store, 50, seed=4, threads=3, chunk=500)
    assert a == b
    cases = [c for c in split.test if c.kind == GROUP]
    kept, cand, _ = evaluation.build_candidates(store, cases, 50, 4)
    for c, row in zip(kept, cand):
        assert row[0] == c.item and len(set(row)) == 51
        assert not set(row[1:]) & set(store.positives(GROUP, c.entity).tolist())
    for m, r in a.methods.items():
        assert r.hr[5] <= r.hr[10]
        assert r.mrr >= r.hr[10] / 10


def test_insufficient_negatives_skipped():
    store = data.build_store(
        [("u1", f"i{v}", None) for v in range(6)],
        [("g", "i0", None), ("g", "i1", None), ("h", "i2", None), ("h", "i3", None)],
        [("g", "u1"), ("h", "u1")],
    )
    model = Siagr.init(ModelConfig(embedding_dim=4, hidden_widths=[12]), store, seed=0)
    test = [HeldOut(GROUP, 0, 0), HeldOut(GROUP, 1, 2)]
    rep = evaluation.evaluate(model, test, store, 4, seed=0, methods=["siagr"])
    assert rep.n_cases == 2 and rep.skipped == 0
    with pytest.raises(ValueError, match="skipped"):
        evaluation.evaluate(model, test, store, 5, seed=0, methods=["siagr"])


def test_report_files(tmp_path, synthetic):
    store, split = synthetic
    model = Siagr.init(ModelConfig(embedding_dim=8, hidden_widths=[24, 8]), store, seed=2)
    rep = evaluation.evaluate(model, split.test, store, 20, seed=1, config_hash="abc")
    jp, cp = rep.write(tmp_path)
    rows = cp.read_text().splitlines()
    assert rows[0] == "method,metric,n,value"
    assert len(rows) == 1 + 3 * len(evaluation.METHODS)
    assert '"config_hash": "abc"' in jp.read_text()


def test_unknown_method_rejected(synthetic):
    store, split = synthetic
    model = Siagr.init(ModelConfig(embedding_dim=8, hidden_widths=[24, 8]), store, seed=2)
    with pytest.raises(ValueError):
        evaluation.evaluate(model, split.test, store, 20, methods=["bpr"])
