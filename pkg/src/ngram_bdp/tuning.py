"""Private selection of (S, rho) and the end-to-end tuned release."""

from __future__ import annotations

import dataclasses
import itertools
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .counts import CountsDatabase, split_dataset
from .errors import ConfigError
from .mechanisms import (BRUTE_FORCE, GaussianPosterior, MechanismParams,
                         ReleasedDistribution, bayesian_posterior,
                         release_from_posterior, sample_noise)
from .seeding import derive_seed, make_rng
from .transforms import log_softmax


@dataclasses.dataclass(frozen=True)
class HyperGrid:
    candidates: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if not self.candidates:
            raise ConfigError("hyperparameter grid is empty", field="grid")
        for S, rho in self.candidates:
            if not S > 0:
                raise ConfigError(f"grid S must be positive, got {S}", field="grid.S")
            if not 0 < rho <= 1:
                raise ConfigError(f"grid rho must lie in (0, 1], got {rho}",
                                  field="grid.rho")

    @classmethod
    def product(cls, S_values: Sequence[float], rho_values: Sequence[float]):
        return cls(tuple((float(s), float(r))
                         for s, r in itertools.product(S_values, rho_values)))

    @classmethod
    def default(cls):
        """8 log-spaced S in [1e-3, 1e4] times 5 rho in [0.1, 0.9]."""
        return cls.product(np.logspace(-3, 4, 8), np.linspace(0.1, 0.9, 5))

    def __len__(self):
        return len(self.candidates)


@dataclasses.dataclass
class ScoredCandidate:
    index: int
    S: float
    rho: float
    q: float
    noisy_q: float
    posterior: GaussianPosterior

    @property
    def sigma_ps(self) -> float:
        return self.posterior.sigma_ps


@dataclasses.dataclass
class PrivacyLedger:
    entries: List[Tuple[str, float, float]] = dataclasses.field(default_factory=list)

    def add(self, mechanism: str, epsilon: float, delta: float = 0.0):
        self.entries.append((mechanism, float(epsilon), float(delta)))

    @property
    def total(self) -> Tuple[float, float]:
        return compose_privacy(self)

    def to_dict(self):
        eps, delta = self.total
        return {"entries": [{"mechanism": m, "epsilon": e, "delta": d}
                            for m, e, d in self.entries],
                "epsilon_total": eps, "delta_total": delta}


def compose_privacy(ledger: PrivacyLedger) -> Tuple[float, float]:
    """Sum of spent epsilons and deltas."""
    if not ledger.entries:
        raise ConfigError("cannot compose an empty privacy ledger", field="ledger")
    return (float(sum(e for _, e, _ in ledger.entries)),
            float(sum(d for _, _, d in ledger.entries)))


def cross_entropy_score(counts, mu_ps) -> float:
    """Un-normalised cross-entropy ``-sum_i c_i log softmax(mu_ps)_i``."""
    c = np.asarray(counts, dtype=np.float64)
    return float(-np.dot(c, log_softmax(mu_ps)))


def score_lipschitz(c, rho: float, exact: bool = True) -> float:
    """Lipschitz constant of ``q(c, .)`` in the weighted log counts ``r``.

    The gradient of ``q`` in the mean is ``||c||_1 softmax(mu) - c``, whose
    norm is at most ``sqrt(||c||_1^2 + ||c||_2^2)``. ``exact=False`` gives
    the smaller ``rho * ||c||_2``, which does not hold in general.
    """
    c = np.asarray(c, dtype=np.float64)
    l2 = float(np.linalg.norm(c))
    if not exact:
        return rho * l2
    return rho * float(np.hypot(np.abs(c).sum(), l2))


def score_sensitivity(c1, C1: float, mu_ps, rho: float, gamma: float,
                      exact_lipschitz: bool = True) -> float:
    """Bound on the score change when one user leaves either split.

    The first branch covers the split the mean was fitted on (Lipschitz
    constant times ``gamma``), the second a user leaving the scoring split.
    """
    mean_side = score_lipschitz(c1, rho, exact_lipschitz) * gamma
    count_side = C1 * float(np.abs(log_softmax(mu_ps)).sum())
    return max(mean_side, count_side)


def noisy_scores(scores: Sequence[float], epsilon: float, sensitivity: float,
                 seed) -> np.ndarray:
    """Scores plus one independent Laplace(2 * sens / eps) draw each."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ConfigError("no candidates to select from", field="scores")
    if not epsilon > 0:
        raise ConfigError("epsilon must be positive", field="epsilon")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return scores + sample_noise("laplace", 2.0 * sensitivity / epsilon,
                                 scores.size, rng)


def noisy_min_select(scores: Sequence[float], epsilon: float, sensitivity: float,
                     seed) -> int:
    """Index of the smallest noisy score; ties go to the smallest index."""
    return int(np.argmin(noisy_scores(scores, epsilon, sensitivity, seed)))


@dataclasses.dataclass
class TuningResult:
    release: ReleasedDistribution
    ledger: PrivacyLedger
    candidates: List[ScoredCandidate]
    selected: int
    score_sensitivity: float

    def report(self):
        return {
            "candidates": [{"index": c.index, "S": c.S, "rho": c.rho, "q": c.q,
                            "noisy_q": c.noisy_q, "sigma_ps": c.sigma_ps}
                           for c in self.candidates],
            "selected": self.selected,
            "score_sensitivity": self.score_sensitivity,
            "ledger": self.ledger.to_dict(),
        }


def end_to_end_dp(db: CountsDatabase, alpha, eps1: float, eps2: float, delta: float,
                  grid: Optional[HyperGrid] = None, C: float = 1, seed: int = 0,
                  T: Optional[float] = None, C1: Optional[float] = None,
                  fraction: float = 0.9,
                  sensitivity_method: str = BRUTE_FORCE) -> TuningResult:
    """Split, fit a mean per candidate, pick one by noisy-min, release it.

    ``eps1`` pays for the selection, ``(eps2, delta)`` for the single
    Gaussian release. The validation split is clamped with its own cap
    ``C1`` (defaults to ``C``).
    """
    grid = grid or HyperGrid.default()
    if not (eps1 > 0 and eps2 > 0):
        raise ConfigError("eps1 and eps2 must be positive", field="epsilon")
    train, valid = split_dataset(db, fraction, derive_seed(seed, "split"))
    C1 = C if C1 is None else C1
    valid = valid.limited(C=C1, T=T)
    c1 = valid.totals

    scored = []
    for k, (S, rho) in enumerate(grid.candidates):
        params = MechanismParams(epsilon=eps2, delta=delta, S=S, C=C, rho=rho, T=T)
        post = bayesian_posterior(train, alpha, params, sensitivity_method)
        scored.append(ScoredCandidate(k, S, rho, cross_entropy_score(c1, post.mu_ps),
                                      np.nan, post))
    sens = max(score_sensitivity(c1, C1, s.posterior.mu_ps, s.rho,
                                 s.posterior.sensitivity.gamma) for s in scored)
    noisy = noisy_scores([s.q for s in scored], eps1, sens,
                         make_rng(seed, "noisy-min"))
    for s, value in zip(scored, noisy):
        s.noisy_q = float(value)
    selected = int(np.argmin(noisy))

    ledger = PrivacyLedger()
    ledger.add("noisy-min", eps1, 0.0)
    ledger.add("bayesian-gaussian", eps2, delta)
    chosen = scored[selected]
    release = release_from_posterior(
        chosen.posterior, derive_seed(seed, "final-release"),
        extra={"selected_index": selected, "eps1": eps1, "eps2": eps2})
    release.epsilon_spent, release.delta_spent = ledger.total
    return TuningResult(release, ledger, scored, selected, sens)
