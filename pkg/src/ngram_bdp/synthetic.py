"""Synthetic Zipfian corpora standing in for real private/public text.

Tokens are drawn i.i.d. from a Zipfian unigram distribution. The public
corpus uses the same head but a re-shuffled tail, so public and private
agree on frequent n-grams and diverge on rare ones. The vocabulary is the
``vocab_size`` most frequent n-grams of the public corpus.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse

from .counts import CountsDatabase, Vocabulary
from .errors import ConfigError
from .seeding import make_rng


def zipf_probs(size: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, size + 1, dtype=np.float64)
    p = ranks ** (-float(exponent))
    return p / p.sum()


@dataclasses.dataclass(frozen=True)
class SyntheticLanguage:
    """Unigram token model for the private and the public population."""

    tokens: Tuple[str, ...]
    private_probs: np.ndarray
    public_probs: np.ndarray
    sentence_length: int = 8

    @classmethod
    def zipfian(cls, num_tokens: int, zipf_exponent: float, seed: int,
                tail_fraction: float = 0.5, sentence_length: int = 8):
        if num_tokens < 1:
            raise ConfigError("num_tokens must be positive", field="num_tokens")
        if zipf_exponent < 0:
            raise ConfigError("zipf_exponent must be >= 0", field="zipf_exponent")
        if not 0 <= tail_fraction <= 1:
            raise ConfigError("tail_fraction must lie in [0, 1]", field="tail_fraction")
        width = len(str(num_tokens - 1))
        tokens = tuple(f"w{i:0{width}d}" for i in range(num_tokens))
        private = zipf_probs(num_tokens, zipf_exponent)
        head = num_tokens - int(round(tail_fraction * num_tokens))
        public = private.copy()
        rng = make_rng(seed, "public-tail")
        public[head:] = rng.permutation(public[head:])
        return cls(tokens, private, public, sentence_length)

    @property
    def num_tokens(self) -> int:
        return len(self.tokens)

    def sample_ids(self, num_sentences: int, rng, public: bool = False) -> np.ndarray:
        """Token ids, shape ``(num_sentences, sentence_length)``."""
        probs = self.public_probs if public else self.private_probs
        return rng.choice(self.num_tokens, size=(num_sentences, self.sentence_length),
                          p=probs)

    def sentences(self, ids) -> List[str]:
        return [" ".join(self.tokens[t] for t in row) for row in np.asarray(ids)]

    def trigram_codes(self, ids, n: int = 3) -> np.ndarray:
        """Integer code of every n-gram window, shape ``(rows, L - n + 1)``."""
        ids = np.asarray(ids, dtype=np.int64)
        m = self.num_tokens
        width = ids.shape[1] - n + 1
        if width <= 0:
            return np.zeros((ids.shape[0], 0), dtype=np.int64)
        codes = np.zeros((ids.shape[0], width), dtype=np.int64)
        for k in range(n):
            codes = codes * m + ids[:, k:k + width]
        return codes

    def decode(self, code: int, n: int = 3) -> str:
        m = self.num_tokens
        parts = []
        for _ in range(n):
            code, r = divmod(int(code), m)
            parts.append(self.tokens[r])
        return " ".join(reversed(parts))

    def ngram_probs(self, n: int = 3, public: bool = False) -> np.ndarray:
        """Exact probability of every n-gram code under the unigram model."""
        p = self.public_probs if public else self.private_probs
        out = p
        for _ in range(n - 1):
            out = np.outer(out, p).ravel()
        return out


def default_num_tokens(vocab_size: int, n: int = 3) -> int:
    return max(3, math.ceil((4 * vocab_size) ** (1.0 / n)))


@dataclasses.dataclass
class SyntheticCorpus:
    language: SyntheticLanguage
    vocabulary: Vocabulary
    db: CountsDatabase
    alpha: np.ndarray
    codes: np.ndarray          # n-gram code of each vocabulary entry
    n: int = 3

    def heldout_sentences(self, num_sentences: int, seed: int) -> List[str]:
        """Private-distribution sentences whose every n-gram is in the vocabulary."""
        lookup = np.zeros(self.language.num_tokens ** self.n, dtype=bool)
        lookup[self.codes] = True
        rng = make_rng(seed, "heldout")
        out: List[str] = []
        while len(out) < num_sentences:
            ids = self.language.sample_ids(max(64, 2 * num_sentences), rng)
            covered = lookup[self.language.trigram_codes(ids, self.n)].all(axis=1)
            out.extend(self.language.sentences(ids[covered]))
        return out[:num_sentences]


def build_synthetic_corpus(num_users: int, vocab_size: int, zipf_exponent: float,
                           tokens_per_user: int, seed: int, *,
                           num_tokens: Optional[int] = None,
                           sentence_length: int = 8,
                           public_tokens: Optional[int] = None,
                           tail_fraction: float = 0.5,
                           dominant_user_tokens: int = 0,
                           n: int = 3) -> SyntheticCorpus:
    """Generate a private database and public counts over a shared vocabulary.

    Each user writes ``1 + Poisson(tokens_per_user / sentence_length - 1)``
    sentences. With ``dominant_user_tokens`` one extra user (id
    ``"dominant"``) writes that many tokens.
    """
    for name, value in (("num_users", num_users), ("vocab_size", vocab_size),
                        ("tokens_per_user", tokens_per_user)):
        if value <= 0:
            raise ConfigError(f"{name} must be positive, got {value}", field=name)
    if sentence_length < n:
        raise ConfigError("sentence_length must be at least the n-gram order",
                          field="sentence_length")
    m = num_tokens or default_num_tokens(vocab_size, n)
    if m ** n < vocab_size:
        raise ConfigError(f"{m} tokens give fewer than {vocab_size} distinct n-grams",
                          field="num_tokens")
    lang = SyntheticLanguage.zipfian(m, zipf_exponent, seed, tail_fraction,
                                     sentence_length)
    windows = sentence_length - n + 1

    # public corpus -> vocabulary (top counts, then most probable unseen)
    public_tokens = public_tokens or 50 * vocab_size
    n_pub = max(1, public_tokens // sentence_length)
    pub_codes = lang.trigram_codes(lang.sample_ids(n_pub, make_rng(seed, "public"),
                                                   public=True), n).ravel()
    pub_counts = np.bincount(pub_codes, minlength=m ** n)
    prior = lang.ngram_probs(n, public=True)
    all_codes = np.arange(m ** n)
    order = np.lexsort((all_codes, -prior, -pub_counts))
    codes = order[:vocab_size]
    alpha = pub_counts[codes].astype(np.float64)
    vocab = Vocabulary([lang.decode(c, n) for c in codes], n)
    lookup = np.full(m ** n, -1, dtype=np.int64)
    lookup[codes] = np.arange(vocab_size)

    # private users
    rng = make_rng(seed, "users")
    mean_sentences = max(tokens_per_user / sentence_length, 1.0)
    per_user = 1 + rng.poisson(mean_sentences - 1.0, size=num_users)
    user_ids = [f"user{i:06d}" for i in range(num_users)]
    if dominant_user_tokens > 0:
        per_user = np.append(per_user, max(1, dominant_user_tokens // sentence_length))
        user_ids.append("dominant")
    ids = lang.sample_ids(int(per_user.sum()), rng)
    idx = lookup[lang.trigram_codes(ids, n)]
    rows = np.repeat(np.repeat(np.arange(len(user_ids)), per_user), windows)
    idx = idx.ravel()
    keep = idx >= 0
    mat = sparse.csr_matrix(
        (np.ones(int(keep.sum()), dtype=np.int64), (rows[keep], idx[keep])),
        shape=(len(user_ids), vocab_size))
    mat.sum_duplicates()
    db = CountsDatabase(vocab, user_ids, mat)
    return SyntheticCorpus(lang, vocab, db, alpha, codes, n)


def synthetic_corpus(num_users: int, vocab_size: int, zipf_exponent: float,
                     tokens_per_user: int, seed: int, **kwargs):
    """``(CountsDatabase, public counts)`` for a synthetic Zipfian population."""
    corpus = build_synthetic_corpus(num_users, vocab_size, zipf_exponent,
                                    tokens_per_user, seed, **kwargs)
    return corpus.db, corpus.alpha
