"""Utility metrics and the membership inference attack."""

from __future__ import annotations

import dataclasses
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .counts import CountsDatabase, Vocabulary, tokenize
from .errors import ConfigError, DataError, NumericalError
from .mechanisms import (BAYESIAN, LAPLACE, MechanismParams, ReleasedDistribution,
                         bayesian_posterior, laplace_from_totals, sample_noise)
from .seeding import derive_seed, make_rng
from .transforms import log_normalize, softmax


@dataclasses.dataclass
class EvalReport:
    kl: float
    perplexity: Optional[float]
    mechanism: str
    params: Dict[str, Any]


@dataclasses.dataclass
class AttackReport:
    epsilons: List[float]
    inference_probabilities: List[float]
    n_trials: int
    removed_user_id: str
    mechanism: str

    def to_dict(self):
        return dataclasses.asdict(self)


def empirical_distribution(counts) -> np.ndarray:
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if not total > 0:
        raise DataError("cannot normalise an all-zero count vector")
    return c / total


def kl_divergence(p, q) -> float:
    """``KL(p || q)`` in nats; zero entries of ``p`` contribute nothing."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DataError(f"shape mismatch: {p.shape} vs {q.shape}")
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise NumericalError("KL divergence is infinite: q is zero where p is not")
    pm = p[mask]
    return max(float(np.sum(pm * (np.log(pm) - np.log(q[mask])))), 0.0)


# -- perplexity --------------------------------------------------------------

def _windows(sentence: str, n: int):
    for tokens in tokenize(sentence):
        for k in range(len(tokens) - n + 1):
            yield " ".join(tokens[k:k + n])


def filter_corpus(sentences: Iterable[str], vocabulary: Vocabulary) -> List[str]:
    """Keep sentences with at least one n-gram and every n-gram in the vocabulary."""
    kept = []
    for s in sentences:
        grams = list(_windows(s, vocabulary.n))
        if grams and all(g in vocabulary for g in grams):
            kept.append(s)
    return kept


def conditional_perplexity(theta, vocabulary: Vocabulary,
                           sentences: Iterable[str]) -> float:
    """Perplexity of the n-gram LM ``P(w | ctx) = theta(ctx, w) / sum_v theta(ctx, v)``.

    The corpus must be pre-filtered (see :func:`filter_corpus`); any n-gram
    outside the vocabulary raises :class:`DataError`.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (len(vocabulary),):
        raise DataError("theta does not match the vocabulary")
    contexts: Dict[str, int] = {}
    ctx_of = np.empty(len(vocabulary), dtype=np.int64)
    for i, entry in enumerate(vocabulary):
        ctx = entry.rsplit(" ", 1)[0] if vocabulary.n > 1 else ""
        ctx_of[i] = contexts.setdefault(ctx, len(contexts))
    ctx_mass = np.bincount(ctx_of, weights=theta, minlength=len(contexts))

    positions = []
    for s in sentences:
        for gram in _windows(s, vocabulary.n):
            i = vocabulary.get(gram)
            if i is None:
                raise DataError(f"n-gram {gram!r} is not in the vocabulary")
            positions.append(i)
    if not positions:
        raise DataError("corpus contains no scorable n-gram positions")
    idx = np.asarray(positions)
    num = theta[idx]
    den = ctx_mass[ctx_of[idx]]
    if np.any(num <= 0) or np.any(den <= 0):
        bad = vocabulary[int(idx[np.argmax((num <= 0) | (den <= 0))])]
        raise NumericalError(f"n-gram {bad!r} has zero probability")
    nll = -np.mean(np.log(num) - np.log(den))
    return float(np.exp(nll))


# -- membership inference ------------------------------------------------------

Mechanism = Callable[[CountsDatabase, float, int], Any]


def _theta(out) -> np.ndarray:
    return out.theta if isinstance(out, ReleasedDistribution) else np.asarray(out)


def most_contributing_user(db: CountsDatabase) -> str:
    """User with the largest l1 count; ties go to the smallest user id."""
    if len(db) == 0:
        raise DataError("empty database has no users to attack")
    totals = db.user_totals()
    best = totals.max()
    return min(u for u, t in zip(db.user_ids, totals) if t == best)


def membership_inference(db: CountsDatabase, mechanism: Mechanism,
                         epsilons: Sequence[float], n_trials: int,
                         seed: int = 0, user_id: Optional[str] = None) -> AttackReport:
    """Fraction of trials in which the release from ``D`` sits closer to the
    target user's own distribution than the release from ``D`` without them.

    Closeness is ``KL(p_u || theta)`` restricted to the user's support.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be positive", field="n_trials")
    target = user_id if user_id is not None else most_contributing_user(db)
    user = db.user(target)
    if user.total == 0:
        raise DataError(f"user {target!r} has no counts")
    support = user.indices
    p_u = user.counts / user.total
    neighbour = db.without(target)

    def distance(theta):
        return float(np.sum(p_u * (np.log(p_u) - np.log(theta[support]))))

    probs = []
    for k, eps in enumerate(epsilons):
        wins = 0
        for t in range(n_trials):
            theta_in = _theta(mechanism(db, eps, derive_seed(seed, f"attack-in-{k}", t)))
            theta_out = _theta(mechanism(neighbour, eps,
                                         derive_seed(seed, f"attack-out-{k}", t)))
            wins += distance(theta_in) < distance(theta_out)
        probs.append(wins / n_trials)
    name = getattr(mechanism, "name", getattr(mechanism, "__name__", "custom"))
    return AttackReport([float(e) for e in epsilons], probs, int(n_trials), target, name)


class BayesianMechanism:
    """Attack-ready Bayesian release; the deterministic part is cached per database."""

    name = BAYESIAN

    def __init__(self, alpha, S: float, C: float, rho: float, delta: float,
                 T: Optional[float] = None, sensitivity_method: str = "brute-force"):
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.S, self.C, self.rho, self.delta, self.T = S, C, rho, delta, T
        self.sensitivity_method = sensitivity_method
        self._cache: Dict[Any, Any] = {}

    def posterior(self, db: CountsDatabase, epsilon: float):
        key = (id(db), float(epsilon))
        hit = self._cache.get(key)
        if hit is None or hit[0] is not db:
            params = MechanismParams(epsilon=epsilon, delta=self.delta, S=self.S,
                                     C=self.C, rho=self.rho, T=self.T)
            hit = (db, bayesian_posterior(db, self.alpha, params,
                                          self.sensitivity_method))
            self._cache[key] = hit
        return hit[1]

    def __call__(self, db: CountsDatabase, epsilon: float, seed: int) -> np.ndarray:
        return self.posterior(db, epsilon).sample(make_rng(seed, "bayesian-release"))


class LaplaceMechanism:
    name = LAPLACE

    def __init__(self, W: float, C: Optional[float] = None):
        if not W >= 1:
            raise ConfigError(f"W must be >= 1, got {W}", field="W")
        self.W, self.C = W, C
        self._cache: Dict[Any, Any] = {}

    def __call__(self, db: CountsDatabase, epsilon: float, seed: int) -> np.ndarray:
        hit = self._cache.get(id(db))
        if hit is None or hit[0] is not db:
            hit = (db, db.limited(C=self.C, T=self.W).totals)
            self._cache[id(db)] = hit
        return laplace_from_totals(hit[1], self.W, epsilon, seed, C=self.C).theta


class PublicNoiseMechanism:
    """Data-independent release ``softmax(mu_p + N(0, sigma^2))``; attack calibration."""

    name = "public-noise"

    def __init__(self, alpha, sigma: float = 1.0):
        self.mu_p = log_normalize(alpha)
        self.sigma = sigma

    def __call__(self, db: CountsDatabase, epsilon: float, seed: int) -> np.ndarray:
        noise = sample_noise("gaussian", self.sigma, self.mu_p.size, make_rng(seed))
        return softmax(self.mu_p + noise)


def degrade_public(alpha, noise_scale: float, seed: int) -> np.ndarray:
    """Public counts with Laplace noise added and negatives clipped to zero."""
    alpha = np.asarray(alpha, dtype=np.float64)
    noise = sample_noise("laplace", noise_scale, alpha.size, make_rng(seed, "degrade"))
    return np.maximum(alpha + noise, 0.0)
