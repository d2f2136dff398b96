import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from mavenrec import data
from mavenrec.data import GROUP, USER, DataError, build_store


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def files(tmp_path, ui="user_id,item_id\nu1,a\n", gi="group_id,item_id\n", mem="group_id,user_id\ng1,u1\n"):
    return write(tmp_path, "ui.csv", ui), write(tmp_path, "gi.csv", gi), write(tmp_path, "mem.csv", mem)


# --- load ------------------------------------------------------------------------


def test_empty_group_interactions_is_valid(tmp_path):
    store = data.load(*files(tmp_path))
    assert store.group_item == () and store.n_groups == 1


def test_membership_rows_become_member_list(tmp_path):
    store = data.load(*files(tmp_path, ui="user_id,item_id\nu1,a\nu2,b\n", mem="group_id,user_id\ng1,u1\ng1,u2\n"))
    g = store.group_index["g1"]
    assert [store.user_ids[u] for u in store.membership[g]] == ["u1", "u2"]


def test_malformed_row_reports_file_and_line(tmp_path):
    paths = files(tmp_path, ui="user_id,item_id,timestamp\nu1,a,5\nu1,b,later\n")
    with pytest.raises(DataError, match=r"ui\.csv:3: .*not an integer"):
        data.load(*paths)


def test_wrong_field_count(tmp_path):
    with pytest.raises(DataError, match=r"ui\.csv:2"):
        data.load(*files(tmp_path, ui="user_id,item_id\nu1\n"))


@pytest.mark.parametrize("header", ["item_id,user_id", "user_id,item_id,rating", "user_id"])
def test_bad_or_extra_columns_rejected(tmp_path, header):
    with pytest.raises(DataError, match=":1:"):
        data.load(*files(tmp_path, ui=f"{header}\n"))


def test_group_with_interactions_but_no_members(tmp_path):
    paths = files(tmp_path, gi="group_id,item_id\ng2,a\n")
    with pytest.raises(DataError, match="no members"):
        data.load(*paths)


def test_duplicates_dropped_and_counted(tmp_path):
    store = data.load(*files(tmp_path, ui="user_id,item_id,timestamp\nu1,a,1\nu1,a,9\nu1,b,2\n"))
    assert store.duplicates == 1
    assert len(store.user_item) == 2
    assert store.user_item[0].timestamp == 9


def test_table1_shaped_counts_round_trip(tmp_path):
    # 290 groups, 690 users, 7710 items
    rng = np.random.default_rng(0)
    users = [f"u{i}" for i in range(690)]
    items = [f"i{i}" for i in range(7710)]
    ui = [(users[i % 690], items[i], None) for i in range(7710)]
    mem = []
    for g in range(290):
        for u in rng.choice(690, size=2 + (g % 12 == 0), replace=False):
            mem.append((f"g{g}", users[u]))
    gi = [(f"g{g}", items[int(rng.integers(7710))], None) for g in range(290)]
    store = build_store(ui, gi, mem)
    data.write_dir(store, tmp_path)
    back = data.load_dir(tmp_path)
    assert (back.n_groups, back.n_users, back.n_items) == (290, 690, 7710)
    assert back == store


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_load_is_order_insensitive(rnd):
    ui = [(f"u{i % 7}", f"i{(3 * i) % 11}", i) for i in range(30)]
    gi = [(f"g{i % 3}", f"i{i % 11}", None) for i in range(12)]
    mem = [(f"g{g}", f"u{u}") for g in range(3) for u in (g, g + 2)]
    a = build_store(ui, gi, mem)
    for rows in (ui, gi, mem):
        rnd.shuffle(rows)
    assert build_store(ui, gi, mem) == a


def test_dense_ids_follow_sorted_external_ids():
    store = build_store([("zed", "b", None), ("amy", "a", None)], [], [("g", "zed")])
    assert store.user_ids == ("amy", "zed")
    assert store.user_index == {"amy": 0, "zed": 1}


# --- split -----------------------------------------------------------------------


def test_split_holds_out_latest():
    store = build_store([], [("g", "a", 1), ("g", "b", 2), ("g", "c", 3)], [("g", "u")])
    split = data.split_leave_one_out(store, seed=0)
    (case,) = [c for c in split.test if c.kind == GROUP]
    assert store.item_ids[case.item] == "c"


def test_single_interaction_stays_in_train():
    store = build_store([], [("g", "a", 1)], [("g", "u")])
    split = data.split_leave_one_out(store, seed=0)
    assert split.test == [] and len(split.train.group_item) == 1
    assert split.skipped[GROUP] == 1


def _random_store(n_groups=1000, seed=0):
    rng = np.random.default_rng(seed)
    gi, mem = [], []
    for g in range(n_groups):
        mem.append((f"g{g:04d}", f"u{int(rng.integers(50))}"))
        for v in rng.choice(40, size=int(rng.integers(1, 5)), replace=False):
            gi.append((f"g{g:04d}", f"i{v}", None))
    ui = [(f"u{u}", f"i{int(rng.integers(40))}", None) for u in range(50) for _ in range(3)]
    return build_store(ui, gi, mem)


def test_split_counts_match_recount():
    store = _random_store()
    split = data.split_leave_one_out(store, seed=1)
    eligible = sum(store.positives(GROUP, g).size >= 2 for g in range(store.n_groups))
    assert sum(c.kind == GROUP for c in split.test) == eligible


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_is_partition(seed):
    store = _random_store(60, seed % 1000)
    split = data.split_leave_one_out(store, seed)
    for kind in (GROUP, USER):
        train = {(r.entity, r.item) for r in split.train.interactions(kind)}
        test = {(c.entity, c.item) for c in split.test if c.kind == kind}
        full = {(r.entity, r.item) for r in store.interactions(kind)}
        assert not train & test
        assert train | test == full


def test_split_deterministic():
    store = _random_store(100)
    assert data.split_leave_one_out(store, 5) == data.split_leave_one_out(store, 5)


# --- negative sampling -----------------------------------------------------------


def _catalog_store(positives, n_items):
    ui = [("u", f"i{v:03d}", None) for v in positives]
    ui += [("other", f"i{v:03d}", None) for v in range(n_items)]
    return build_store(ui, [], [("g", "u")])


def test_forced_negative():
    store = build_store([("u", "a", None), ("u", "b", None), ("v", "c", None)], [], [("g", "u")])
    neg = data.sample_negatives(store, (USER, store.user_index["u"]), 1, seed=0)
    assert [store.item_ids[i] for i in neg] == ["c"]


def test_pigeonhole_repeat():
    store = _catalog_store([0, 1], 5)
    neg = data.sample_negatives(store, (USER, store.user_index["u"]), 4, seed=3)
    assert len(neg) == 4 and set(neg) == {2, 3, 4}


def test_no_eligible_items_raises():
    store = _catalog_store([0, 1], 2)
    with pytest.raises(DataError):
        data.sample_negatives(store, (USER, store.user_index["u"]), 1, seed=0)


def test_negatives_distinct_within_call_and_seeded():
    store = _catalog_store(range(10), 60)
    u = store.user_index["u"]
    a = data.sample_negatives(store, (USER, u), 30, seed=9)
    assert len(set(a)) == 30 and not set(a) & set(range(10))
    assert np.array_equal(a, data.sample_negatives(store, (USER, u), 30, seed=9))


def test_negative_sampling_uniform_chi_square():
    store = _catalog_store(range(20), 120)
    u = store.user_index["u"]
    rng = np.random.default_rng(2024)
    draws = np.concatenate([data.sample_negatives(store, (USER, u), 1, rng) for _ in range(10**5)])
    counts = np.bincount(draws - 20, minlength=100)
    assert counts.size == 100
    assert chisquare(counts).pvalue > 0.01


# --- triples ---------------------------------------------------------------------


def test_triple_count():
    store = build_store([], [("g", "a", None), ("g", "b", None), ("h", "c", None)], [("g", "u"), ("h", "u")])
    train = store.with_interactions([], [r for r in store.group_item if r.entity == 0])
    t = data.make_train_triples(train, 2, seed=0)
    assert len(t.of_kind(GROUP)) == 4


def test_zero_ratio_rejected():
    with pytest.raises(ValueError):
        data.make_train_triples(_random_store(5), 0, seed=0)


def test_triples_satisfy_membership_invariant():
    store = _random_store(1000)
    t = data.make_train_triples(store, 4, seed=7)
    assert len(t) >= 10**4
    for k, e, p, n in zip(t.kind, t.entity, t.positive, t.negative):
        pos = store.positives(GROUP if k == 1 else USER, e)
        assert p in pos and n not in pos


def test_triples_seeded_shuffle():
    store = _random_store(50)
    a, b = data.make_train_triples(store, 2, 3), data.make_train_triples(store, 2, 3)
    assert all(np.array_equal(x, y) for x, y in zip(vars(a).values(), vars(b).values()))
