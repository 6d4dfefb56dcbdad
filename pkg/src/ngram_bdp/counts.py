"""Per-user n-gram counts: ingestion, contribution limits and aggregation.

Per-user counts are held in a CSR matrix (users x vocabulary); totals and
per-word user supports are dense vectors. Everything here is integer
arithmetic, so removing a user and re-aggregating agree exactly.
"""

from __future__ import annotations

import collections
import dataclasses
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import AdjacencyError, ConfigError, DataError
from .seeding import make_rng


def tokenize(text: str) -> List[List[str]]:
    """Lowercase ``text`` and split it into sentences (lines) of tokens."""
    return [line.split() for line in text.lower().splitlines()]


def extract_ngrams(text: str, n: int) -> collections.Counter:
    """Count contiguous ``n``-token windows, never crossing a sentence boundary.

    >>> sorted(extract_ngrams("a a a a", 3).items())
    [(('a', 'a', 'a'), 2)]
    """
    if n < 1:
        raise ConfigError(f"n-gram order must be >= 1, got {n}", field="n")
    grams = collections.Counter()
    for tokens in tokenize(text):
        for start in range(len(tokens) - n + 1):
            grams[tuple(tokens[start:start + n])] += 1
    return grams


def ngram_key(gram: Sequence[str]) -> str:
    return " ".join(gram)


class Vocabulary:
    """Ordered, immutable set of distinct n-grams.

    Entries are n-gram strings with tokens joined by a single space; the
    position of an entry is its index in every count vector.
    """

    __slots__ = ("_entries", "_index", "n")

    def __init__(self, entries: Iterable[str], n: int):
        entries = tuple(entries)
        if n < 1:
            raise ConfigError(f"n-gram order must be >= 1, got {n}", field="n")
        index = {}
        for i, entry in enumerate(entries):
            if entry in index:
                raise DataError(f"duplicate vocabulary entry {entry!r}")
            if len(entry.split(" ")) != n:
                raise DataError(f"entry {entry!r} is not a {n}-gram")
            index[entry] = i
        self._entries = entries
        self._index = index
        self.n = n

    @property
    def entries(self) -> Tuple[str, ...]:
        return self._entries

    @property
    def index(self) -> Mapping[str, int]:
        return self._index

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __contains__(self, entry):
        return entry in self._index

    def __getitem__(self, i):
        return self._entries[i]

    def __eq__(self, other):
        return (isinstance(other, Vocabulary) and self.n == other.n
                and self._entries == other._entries)

    def __hash__(self):
        return hash((self.n, self._entries))

    def __repr__(self):
        return f"Vocabulary(size={len(self)}, n={self.n})"

    def get(self, entry, default=None):
        return self._index.get(entry, default)


@dataclasses.dataclass(frozen=True)
class UserContribution:
    """One user's sparse count vector (sorted, strictly positive entries)."""

    user_id: str
    indices: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def dense(self, size: int) -> np.ndarray:
        out = np.zeros(size, dtype=np.int64)
        out[self.indices] = self.counts
        return out


class CountsDatabase:
    """The private database: one sparse count row per user.

    Parameters
    ----------
    vocabulary : Vocabulary
        Index space shared by all rows.
    user_ids : sequence of str
        Row labels, unique.
    matrix : scipy.sparse matrix, shape (len(user_ids), len(vocabulary))
        Non-negative integer counts.
    """

    def __init__(self, vocabulary: Vocabulary, user_ids: Sequence[str], matrix):
        matrix = sparse.csr_matrix(matrix, dtype=np.int64)
        matrix.eliminate_zeros()
        matrix.sort_indices()
        user_ids = [str(u) for u in user_ids]
        if matrix.shape != (len(user_ids), len(vocabulary)):
            raise DataError(
                f"matrix shape {matrix.shape} does not match "
                f"{len(user_ids)} users x {len(vocabulary)} words")
        if matrix.nnz and matrix.data.min() < 0:
            raise DataError("counts must be non-negative")
        if len(set(user_ids)) != len(user_ids):
            raise DataError("user ids must be unique")
        self.vocabulary = vocabulary
        self.user_ids = user_ids
        self.matrix = matrix
        self._row = {u: i for i, u in enumerate(user_ids)}
        self.totals, self.supports = _aggregate_matrix(matrix)

    @classmethod
    def from_users(cls, vocabulary: Vocabulary,
                   users: Iterable[UserContribution]) -> "CountsDatabase":
        users = list(users)
        V = len(vocabulary)
        rows = np.repeat(np.arange(len(users)),
                         [len(u.indices) for u in users]).astype(np.int64)
        cols = (np.concatenate([u.indices for u in users]).astype(np.int64)
                if users else np.zeros(0, dtype=np.int64))
        vals = (np.concatenate([u.counts for u in users]).astype(np.int64)
                if users else np.zeros(0, dtype=np.int64))
        if cols.size and (cols.min() < 0 or cols.max() >= V):
            raise DataError("user count index outside the vocabulary")
        mat = sparse.csr_matrix((vals, (rows, cols)), shape=(len(users), V))
        return cls(vocabulary, [u.user_id for u in users], mat)

    @classmethod
    def from_dense(cls, vocabulary: Vocabulary, rows, user_ids=None):
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, len(vocabulary))
        if user_ids is None:
            user_ids = [f"u{i}" for i in range(rows.shape[0])]
        if np.any(rows < 0):
            raise DataError("counts must be non-negative")
        return cls(vocabulary, user_ids, sparse.csr_matrix(rows))

    def __len__(self):
        return len(self.user_ids)

    def __repr__(self):
        return (f"CountsDatabase(users={len(self)}, vocab={len(self.vocabulary)}, "
                f"nnz={self.matrix.nnz})")

    @property
    def num_words(self) -> int:
        return len(self.vocabulary)

    def user(self, user_id) -> UserContribution:
        row = self.row_of(user_id)
        lo, hi = self.matrix.indptr[row], self.matrix.indptr[row + 1]
        return UserContribution(self.user_ids[row],
                                self.matrix.indices[lo:hi].astype(np.int64),
                                self.matrix.data[lo:hi].copy())

    @property
    def users(self) -> List[UserContribution]:
        return [self.user(u) for u in self.user_ids]

    def row_of(self, user_id) -> int:
        try:
            return self._row[str(user_id)]
        except KeyError:
            raise AdjacencyError(f"unknown user id {user_id!r}") from None

    def user_totals(self) -> np.ndarray:
        """l1 count per user, in row order."""
        return np.asarray(self.matrix.sum(axis=1)).ravel().astype(np.int64)

    def subset(self, rows) -> "CountsDatabase":
        rows = np.asarray(rows, dtype=np.int64)
        return CountsDatabase(self.vocabulary,
                              [self.user_ids[r] for r in rows],
                              self.matrix[rows])

    def without(self, user_id) -> "CountsDatabase":
        """The adjacent database with ``user_id`` removed."""
        row = self.row_of(user_id)
        keep = np.delete(np.arange(len(self)), row)
        return self.subset(keep)

    def limited(self, C: Optional[float] = None,
                T: Optional[float] = None) -> "CountsDatabase":
        """Apply per-word cap ``C`` and per-user total cap ``T`` to every user."""
        return CountsDatabase(self.vocabulary, self.user_ids,
                              limit_matrix(self.matrix, C, T))

    def max_count(self) -> int:
        return int(self.matrix.data.max()) if self.matrix.nnz else 0


def _aggregate_matrix(matrix) -> Tuple[np.ndarray, np.ndarray]:
    V = matrix.shape[1]
    totals = np.asarray(matrix.sum(axis=0), dtype=np.int64).ravel()
    supports = np.bincount(matrix.indices[matrix.data > 0], minlength=V)
    return totals, supports.astype(np.int64)


def _check_caps(C, T):
    if C is not None and C < 1:
        raise ConfigError(f"per-word cap must be >= 1, got {C}", field="C")
    if T is not None and T < 1:
        raise ConfigError(f"per-user total cap must be >= 1, got {T}", field="T")


def limit_matrix(matrix, C=None, T=None):
    """Vectorised contribution limits over a CSR users x words matrix.

    Counts are clamped to ``C``; then, per user, n-grams are dropped in
    ascending order of clamped count (ties: ascending word index) until the
    user's total is at most ``T``.
    """
    _check_caps(C, T)
    m = sparse.csr_matrix(matrix, dtype=np.int64, copy=True)
    m.sort_indices()
    if C is not None and m.nnz:
        np.minimum(m.data, int(math.floor(C)), out=m.data)
    if T is not None and m.nnz:
        T = int(math.floor(T))
        rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        # within a row: ascending count, then ascending word index
        order = np.lexsort((m.indices, m.data, rows))
        data_sorted = m.data[order]
        csum = np.cumsum(data_sorted)
        row_start = m.indptr[:-1]
        before_row = np.concatenate(([0], csum))[row_start]
        row_total = np.concatenate(([0], csum))[m.indptr[1:]] - before_row
        prefix_excl = csum - data_sorted - before_row[rows[order]]
        suffix = row_total[rows[order]] - prefix_excl
        drop_sorted = suffix > T
        drop = np.empty_like(drop_sorted)
        drop[order] = drop_sorted
        m.data[drop] = 0
        m.eliminate_zeros()
    return m


def apply_contribution_limits(user: UserContribution, C=None,
                              T=None) -> UserContribution:
    """Clamp one user's counts to ``C`` and truncate their total to ``T``.

    >>> u = UserContribution("a", np.array([0, 1]), np.array([10, 3]))
    >>> apply_contribution_limits(u, C=10, T=10).counts.tolist()
    [10]
    """
    _check_caps(C, T)
    width = int(user.indices.max()) + 1 if user.indices.size else 1
    row = sparse.csr_matrix(
        (user.counts, (np.zeros(user.indices.size, dtype=np.int64), user.indices)),
        shape=(1, width))
    out = limit_matrix(row, C, T)
    return UserContribution(user.user_id, out.indices.astype(np.int64),
                            out.data.astype(np.int64))


def aggregate(users: Iterable[UserContribution], size: int):
    """Return ``(totals, supports)`` for a collection of users over ``size`` words."""
    totals = np.zeros(size, dtype=np.int64)
    supports = np.zeros(size, dtype=np.int64)
    for u in users:
        np.add.at(totals, u.indices, u.counts)
        np.add.at(supports, u.indices[u.counts > 0], 1)
    return totals, supports


def remove_user(db: CountsDatabase, user_id):
    """Totals and supports of the adjacent database without ``user_id``."""
    u = db.user(user_id)
    totals = db.totals.copy()
    supports = db.supports.copy()
    totals[u.indices] -= u.counts
    supports[u.indices[u.counts > 0]] -= 1
    return totals, supports


def split_dataset(db: CountsDatabase, fraction: float = 0.9, seed: int = 0):
    """User-level random split into ``ceil(fraction*|U|)`` train users and the rest."""
    if not 0 < fraction < 1:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}",
                          field="fraction")
    n = len(db)
    n_train = min(n, math.ceil(round(fraction * n, 9)))
    perm = make_rng(seed, "split").permutation(n)
    train = np.sort(perm[:n_train])
    valid = np.sort(perm[n_train:])
    return db.subset(train), db.subset(valid)


# -- ingestion --------------------------------------------------------------

def build_vocabulary(texts: Iterable[str], n: int, max_size: Optional[int] = None):
    """Vocabulary and public counts from public text.

    Entries are ordered by descending public count, ties broken
    lexicographically; ``max_size`` keeps the most frequent entries.
    """
    grams = collections.Counter()
    for text in texts:
        grams.update(extract_ngrams(text, n))
    ranked = sorted(grams.items(), key=lambda kv: (-kv[1], kv[0]))
    if max_size is not None:
        ranked = ranked[:max_size]
    vocab = Vocabulary([ngram_key(g) for g, _ in ranked], n)
    alpha = np.array([c for _, c in ranked], dtype=np.float64)
    return vocab, alpha


def ingest(records: Iterable[Tuple[str, str]], vocabulary: Vocabulary) -> CountsDatabase:
    """Per-user counts from ``(user_id, text)`` records.

    A user may appear in several records; n-grams outside the vocabulary
    are dropped.
    """
    per_user: Dict[str, collections.Counter] = {}
    for user_id, text in records:
        acc = per_user.setdefault(str(user_id), collections.Counter())
        for gram, count in extract_ngrams(text, vocabulary.n).items():
            i = vocabulary.get(ngram_key(gram))
            if i is not None:
                acc[i] += count
    users = []
    for user_id, acc in per_user.items():
        idx = np.array(sorted(acc), dtype=np.int64)
        users.append(UserContribution(
            user_id, idx, np.array([acc[i] for i in idx], dtype=np.int64)))
    return CountsDatabase.from_users(vocabulary, users)


# -- files ------------------------------------------------------------------

def write_vocabulary(path, vocabulary: Vocabulary):
    with open(path, "w", encoding="utf-8") as f:
        for entry in vocabulary:
            f.write(entry + "\n")


def read_vocabulary(path, n: Optional[int] = None) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        entries = [line.rstrip("\n") for line in f if line.strip()]
    if n is None:
        if not entries:
            raise DataError(f"{path}: empty vocabulary")
        n = len(entries[0].split(" "))
    return Vocabulary(entries, n)


def write_public_counts(path, vocabulary: Vocabulary, alpha):
    with open(path, "w", encoding="utf-8") as f:
        for entry, a in zip(vocabulary, alpha):
            f.write(f"{entry}\t{float(a)!r}\n")


def read_public_counts(path, vocabulary: Vocabulary) -> np.ndarray:
    """Public counts file (``ngram<TAB>count``) aligned to ``vocabulary``.

    Vocabulary entries missing from the file get a count of zero.
    """
    alpha = np.zeros(len(vocabulary), dtype=np.float64)
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                gram, value = line.rstrip("\n").split("\t")
                value = float(value)
            except ValueError:
                raise DataError(f"{path}:{lineno}: expected 'ngram<TAB>count'") from None
            if value < 0:
                raise DataError(f"{path}:{lineno}: negative public count")
            i = vocabulary.get(gram)
            if i is not None:
                alpha[i] += value
    return alpha


def write_counts(path, db: CountsDatabase):
    """Counts file: ``user_id<TAB>ngram<TAB>count`` per non-zero entry."""
    m = db.matrix
    with open(path, "w", encoding="utf-8") as f:
        for row, user_id in enumerate(db.user_ids):
            for k in range(m.indptr[row], m.indptr[row + 1]):
                f.write(f"{user_id}\t{db.vocabulary[m.indices[k]]}\t{m.data[k]}\n")


def read_counts(path, vocabulary: Vocabulary) -> CountsDatabase:
    per_user: Dict[str, collections.Counter] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            user_id, gram, value = parts
            try:
                count = int(value)
            except ValueError:
                raise DataError(f"{path}:{lineno}: count {value!r} is not an integer") from None
            if count < 0:
                raise DataError(f"{path}:{lineno}: negative count")
            acc = per_user.setdefault(user_id, collections.Counter())
            i = vocabulary.get(gram)
            if i is not None:
                acc[i] += count
    users = []
    for user_id, acc in per_user.items():
        idx = np.array(sorted(acc), dtype=np.int64)
        users.append(UserContribution(
            user_id, idx, np.array([acc[i] for i in idx], dtype=np.int64)))
    return CountsDatabase.from_users(vocabulary, users)


def read_corpus_records(path):
    """Yield ``(user_id, text)`` from a ``user_id<TAB>text`` file."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            user_id, sep, text = line.rstrip("\n").partition("\t")
            if not sep:
                raise DataError(f"{path}:{lineno}: expected 'user_id<TAB>text'")
            yield user_id, text
