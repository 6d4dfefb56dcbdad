import collections

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ngram_bdp.counts import (CountsDatabase, UserContribution, Vocabulary, aggregate,
                              apply_contribution_limits, build_vocabulary,
                              extract_ngrams, ingest, limit_matrix, read_counts,
                              read_public_counts, read_vocabulary, remove_user,
                              split_dataset, write_counts, write_public_counts,
                              write_vocabulary)
from ngram_bdp.errors import AdjacencyError, ConfigError, DataError

from conftest import make_db, make_vocab


def user(counts, uid="a"):
    counts = np.asarray(counts, dtype=np.int64)
    idx = np.flatnonzero(counts)
    return UserContribution(uid, idx, counts[idx])


# -- extract_ngrams ---------------------------------------------------------------

def test_extract_windows():
    assert extract_ngrams("a b c d", 3) == collections.Counter({("a", "b", "c"): 1,
                                                                 ("b", "c", "d"): 1})


def test_extract_short_sentence_is_empty():
    assert extract_ngrams("a b", 3) == collections.Counter()


def test_extract_repeated_window():
    assert extract_ngrams("a a a a", 3) == collections.Counter({("a", "a", "a"): 2})


def test_extract_no_cross_sentence_windows_and_lowercase():
    grams = extract_ngrams("A b\nc d", 2)
    assert grams == collections.Counter({("a", "b"): 1, ("c", "d"): 1})


def test_extract_empty_text():
    assert extract_ngrams("", 2) == collections.Counter()


@given(st.lists(st.sampled_from("abc"), max_size=12), st.integers(1, 4))
def test_extract_window_count(tokens, n):
    grams = extract_ngrams(" ".join(tokens), n)
    assert sum(grams.values()) == max(0, len(tokens) - n + 1)


# -- vocabulary ---------------------------------------------------------------------

def test_vocabulary_index_is_bijection():
    v = Vocabulary(["a b", "b c", "c d"], 2)
    assert [v.index[e] for e in v.entries] == [0, 1, 2]
    assert "b c" in v and "x y" not in v


def test_vocabulary_rejects_duplicates():
    with pytest.raises(DataError):
        Vocabulary(["a", "a"], 1)


def test_vocabulary_is_immutable():
    v = Vocabulary(["a", "b"], 1)
    with pytest.raises((AttributeError, TypeError)):
        v.entries[0] = "z"


def test_build_vocabulary_orders_by_count():
    vocab, alpha = build_vocabulary(["x y z", "x y z", "y z w"], 2)
    assert vocab.entries[0] == "y z"
    assert alpha.tolist() == [3.0, 2.0, 1.0]


# -- contribution limits --------------------------------------------------------------

def test_limits_clamp_only():
    out = apply_contribution_limits(user([15, 3]), C=10)
    assert out.dense(2).tolist() == [10, 3]


def test_limits_drop_smallest_first():
    out = apply_contribution_limits(user([10, 3]), C=10, T=10)
    assert out.dense(2).tolist() == [10, 0]


def test_limits_empty_user():
    out = apply_contribution_limits(user([0, 0]), C=3, T=2)
    assert out.dense(2).tolist() == [0, 0]


def test_limits_tie_break_by_index():
    out = apply_contribution_limits(user([2, 2, 2]), C=5, T=4)
    assert out.dense(3).tolist() == [0, 2, 2]


def test_limits_reject_bad_caps():
    with pytest.raises(ConfigError):
        apply_contribution_limits(user([1]), C=0)
    with pytest.raises(ConfigError):
        apply_contribution_limits(user([1]), T=0.5)


def _reference_limit(counts, C, T):
    counts = np.minimum(np.asarray(counts), C)
    order = sorted(range(len(counts)), key=lambda i: (counts[i], i))
    for i in order:
        if counts.sum() <= T:
            break
        counts[i] = 0
    return counts


@given(arrays(np.int64, st.integers(1, 12), elements=st.integers(0, 20)),
       st.integers(1, 8), st.integers(1, 40))
def test_limits_property(counts, C, T):
    out = apply_contribution_limits(user(counts), C=C, T=T).dense(len(counts))
    assert out.max(initial=0) <= C
    assert out.sum() <= T
    assert np.array_equal(out, _reference_limit(counts, C, T))


@given(arrays(np.int64, (6, 5), elements=st.integers(0, 9)), st.integers(1, 5),
       st.integers(1, 20))
def test_limit_matrix_matches_per_user(rows, C, T):
    db = make_db(rows)
    lim = db.limited(C=C, T=T)
    for uid in db.user_ids:
        expected = apply_contribution_limits(db.user(uid), C=C, T=T)
        assert np.array_equal(lim.user(uid).dense(5), expected.dense(5))


# -- aggregation and adjacency -------------------------------------------------------

def test_aggregate_hand_sum():
    c, N = aggregate([user([2, 0]), user([1, 1], "b")], 2)
    assert c.tolist() == [3, 1] and N.tolist() == [2, 1]


def test_aggregate_empty():
    c, N = aggregate([], 2)
    assert c.tolist() == [0, 0] and N.tolist() == [0, 0]


def test_aggregate_single_user():
    c, N = aggregate([user([5, 0])], 2)
    assert c.tolist() == [5, 0] and N.tolist() == [1, 0]


def test_database_totals_match_aggregate():
    db = make_db([[2, 0], [1, 1]])
    assert db.totals.tolist() == [3, 1] and db.supports.tolist() == [2, 1]


def test_remove_user_hand():
    db = make_db([[2, 0], [1, 1]])
    c, N = remove_user(db, "u1")
    assert c.tolist() == [2, 0] and N.tolist() == [1, 0]


def test_remove_only_user():
    c, N = remove_user(make_db([[5, 0]]), "u0")
    assert c.tolist() == [0, 0] and N.tolist() == [0, 0]


def test_remove_unknown_user():
    with pytest.raises(AdjacencyError):
        remove_user(make_db([[1, 0]]), "nobody")


@given(arrays(np.int64, (5, 4), elements=st.integers(0, 6)), st.integers(0, 4))
def test_remove_equals_reaggregate(rows, k):
    db = make_db(rows)
    uid = db.user_ids[k]
    c, N = remove_user(db, uid)
    rest = [u for u in db.users if u.user_id != uid]
    c2, N2 = aggregate(rest, 4)
    assert np.array_equal(c, c2) and np.array_equal(N, N2)
    assert np.array_equal(db.without(uid).totals, c)
    # re-adding the user restores the original aggregate
    back, backN = aggregate(rest + [db.user(uid)], 4)
    assert np.array_equal(back, db.totals) and np.array_equal(backN, db.supports)


@given(arrays(np.int64, (7, 4), elements=st.integers(0, 6)), st.integers(1, 5))
def test_supports_bounded(rows, C):
    db = make_db(rows).limited(C=C)
    assert np.all(db.supports <= len(db))
    assert np.all(db.supports <= db.totals)


# -- split ----------------------------------------------------------------------------

def test_split_sizes():
    db = make_db(np.eye(10, dtype=int))
    train, valid = split_dataset(db, 0.9, seed=1)
    assert (len(train), len(valid)) == (9, 1)


def test_split_partition_and_determinism():
    db = make_db(np.ones((23, 3), dtype=int))
    a1, b1 = split_dataset(db, 0.7, seed=4)
    a2, b2 = split_dataset(db, 0.7, seed=4)
    assert a1.user_ids == a2.user_ids and b1.user_ids == b2.user_ids
    assert set(a1.user_ids) | set(b1.user_ids) == set(db.user_ids)
    assert not set(a1.user_ids) & set(b1.user_ids)
    assert len(a1) == 17


def test_split_rejects_bad_fraction():
    with pytest.raises(ConfigError):
        split_dataset(make_db([[1]]), 1.0)


# -- ingestion and files ---------------------------------------------------------------

def test_ingest_drops_oov_and_merges_records():
    vocab = Vocabulary(["a b", "b c"], 2)
    db = ingest([("u1", "a b c"), ("u2", "b c d"), ("u1", "a b")], vocab)
    assert db.user("u1").dense(2).tolist() == [2, 1]
    assert db.user("u2").dense(2).tolist() == [0, 1]


def test_file_round_trip(tmp_path):
    vocab = Vocabulary(["a b", "b c", "c d"], 2)
    db = CountsDatabase.from_dense(vocab, [[1, 0, 2], [0, 3, 0]], ["x", "y"])
    write_vocabulary(tmp_path / "v.txt", vocab)
    write_counts(tmp_path / "c.tsv", db)
    write_public_counts(tmp_path / "p.tsv", vocab, [1.5, 0.0, 2.0])
    v2 = read_vocabulary(tmp_path / "v.txt")
    assert v2 == vocab
    db2 = read_counts(tmp_path / "c.tsv", v2)
    assert db2.user_ids == db.user_ids
    assert np.array_equal(db2.matrix.toarray(), db.matrix.toarray())
    assert read_public_counts(tmp_path / "p.tsv", v2).tolist() == [1.5, 0.0, 2.0]


def test_read_counts_rejects_garbage(tmp_path):
    (tmp_path / "c.tsv").write_text("x\ta b\tnotanumber\n")
    with pytest.raises(DataError):
        read_counts(tmp_path / "c.tsv", Vocabulary(["a b"], 2))


def test_negative_counts_rejected():
    with pytest.raises(DataError):
        make_db([[-1, 0]])


def test_vocab_helper():
    assert len(make_vocab(4)) == 4
