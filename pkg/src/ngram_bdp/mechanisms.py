"""Release mechanisms: the Bayesian Gaussian mechanism and the baselines.

Every mechanism returns a :class:`ReleasedDistribution` whose ``theta`` is
strictly positive and sums to one, together with enough provenance to
replay the release.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, Dict, List, Optional

import numpy as np

from .counts import CountsDatabase
from .errors import ConfigError, DataError
from .seeding import make_rng
from .sensitivity import (BRUTE_FORCE, WORST_CASE, SensitivityEstimate,
                          brute_force_sensitivity, database_worst_case_bound)
from .transforms import decay_weights, log_normalize, posterior_mean, softmax

BAYESIAN = "bayesian"
LAPLACE = "laplace"
MODIFIED_LAPLACE = "modified_laplace"
K_ANONYMITY = "k_anonymity"
PUBLIC = "public"
PRIVATE = "private"

EXTRAPOLATED_FLAG = "classical-gaussian-extrapolated"
NON_PRIVATE_FLAG = "non-private"


def floor_value(vocab_size: int) -> float:
    """Additive floor for zeroed or suppressed entries."""
    return 1.0 / (vocab_size * 1e6)


@dataclasses.dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}",
                              field="epsilon")
        if not 0.0 <= self.delta < 1.0:
            raise ConfigError(f"delta must lie in [0, 1), got {self.delta}",
                              field="delta")


@dataclasses.dataclass(frozen=True)
class MechanismParams:
    """Privacy budget, contribution limits and the prior weight.

    ``C`` caps each per-user word count, ``T`` each user's total count and
    ``S`` scales the support-based decay weights.
    """

    epsilon: float
    delta: float = 1e-5
    S: float = 1.0
    C: float = 1
    rho: float = 0.5
    T: Optional[float] = None

    def __post_init__(self):
        PrivacyParams(self.epsilon, self.delta)
        if not self.S > 0:
            raise ConfigError(f"S must be positive, got {self.S}", field="S")
        if not self.C >= 1:
            raise ConfigError(f"C must be >= 1, got {self.C}", field="C")
        if self.T is not None and not self.T >= 1:
            raise ConfigError(f"T must be >= 1, got {self.T}", field="T")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}", field="rho")

    @property
    def privacy(self) -> PrivacyParams:
        return PrivacyParams(self.epsilon, self.delta)

    def replace(self, **changes) -> "MechanismParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclasses.dataclass
class ReleasedDistribution:
    theta: np.ndarray
    mechanism: str
    params: Dict[str, Any]
    seed: Optional[int]
    epsilon_spent: Optional[float]
    delta_spent: Optional[float]
    noise_scale: float
    flags: List[str] = dataclasses.field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mechanism": self.mechanism,
            "params": dict(self.params),
            "seed": self.seed,
            "epsilon_spent": self.epsilon_spent,
            "delta": self.delta_spent,
            "noise_scale": self.noise_scale,
            "flags": list(self.flags),
            "theta": [float(t) for t in self.theta],
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ReleasedDistribution":
        try:
            return cls(theta=np.asarray(doc["theta"], dtype=np.float64),
                       mechanism=doc["mechanism"], params=dict(doc["params"]),
                       seed=doc["seed"], epsilon_spent=doc["epsilon_spent"],
                       delta_spent=doc["delta"], noise_scale=doc["noise_scale"],
                       flags=list(doc.get("flags", [])))
        except KeyError as e:
            raise DataError(f"release document lacks field {e.args[0]!r}") from None


# -- noise ------------------------------------------------------------------

def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return make_rng(int(seed))


def sample_noise(kind: str, scale: float, dims, seed) -> np.ndarray:
    """I.i.d. Laplace or Gaussian noise of the given scale.

    Laplace uses the inverse CDF of a uniform draw; ``seed`` may be an int or
    a numpy Generator.
    """
    if scale < 0 or not math.isfinite(scale):
        raise ConfigError(f"noise scale must be finite and >= 0, got {scale}",
                          field="scale")
    if kind not in ("laplace", "gaussian"):
        raise ConfigError(f"unknown noise kind {kind!r}", field="kind")
    if scale == 0:
        return np.zeros(dims)
    rng = _as_rng(seed)
    if kind == "laplace":
        u = rng.random(dims) - 0.5
        a = np.minimum(np.abs(u), np.nextafter(0.5, 0.0))
        out = -scale * np.sign(u) * np.log1p(-2.0 * a)
    else:
        out = scale * rng.standard_normal(dims)
    return out


def gaussian_sigma(gamma: float, rho: float, epsilon: float, delta: float) -> float:
    """Posterior standard deviation needed for (epsilon, delta)-DP."""
    if gamma < 0:
        raise ConfigError(f"sensitivity must be >= 0, got {gamma}", field="gamma")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}", field="epsilon")
    if not 0 < delta < 1.25:
        raise ConfigError(f"delta must lie in (0, 1.25), got {delta}", field="delta")
    return rho * gamma * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


# -- Bayesian Gaussian mechanism ---------------------------------------------

@dataclasses.dataclass(frozen=True)
class GaussianPosterior:
    """Deterministic part of a Bayesian release: mean, spread and provenance."""

    mu_ps: np.ndarray
    sigma_ps: float
    sensitivity: SensitivityEstimate
    params: MechanismParams

    def sample_logits(self, rng, size=None) -> np.ndarray:
        dims = self.mu_ps.shape if size is None else (size,) + self.mu_ps.shape
        return self.mu_ps + sample_noise("gaussian", self.sigma_ps, dims, rng)

    def sample(self, rng) -> np.ndarray:
        return softmax(self.sample_logits(rng))


def bayesian_posterior(db: CountsDatabase, alpha, params: MechanismParams,
                       sensitivity_method: str = BRUTE_FORCE) -> GaussianPosterior:
    """Clamp, aggregate, weight and calibrate; everything but the draw."""
    if not 0 < params.rho <= 1:
        raise ConfigError(f"rho must lie in (0, 1], got {params.rho}", field="rho")
    if not 0 < params.delta < 1:
        raise ConfigError("the Gaussian mechanism needs delta in (0, 1)", field="delta")
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (db.num_words,):
        raise DataError(f"public counts have length {alpha.size}, "
                        f"vocabulary has {db.num_words}")
    db = db.limited(C=params.C, T=params.T)
    xhat = log_normalize(db.totals)
    w = decay_weights(db.supports, params.S, params.C)
    if sensitivity_method == BRUTE_FORCE:
        sens = brute_force_sensitivity(db, params.S, params.C)
    elif sensitivity_method == WORST_CASE:
        sens = database_worst_case_bound(db, params.S, params.C)
    else:
        raise ConfigError(f"unknown sensitivity method {sensitivity_method!r}",
                          field="sensitivity")
    sigma = gaussian_sigma(sens.gamma, params.rho, params.epsilon, params.delta)
    mu_p = log_normalize(alpha)
    mu_ps = posterior_mean(xhat, mu_p, w, params.rho)
    return GaussianPosterior(mu_ps, sigma, sens, params)


def release_from_posterior(posterior: GaussianPosterior, seed: int,
                           extra: Optional[Dict[str, Any]] = None) -> ReleasedDistribution:
    p = posterior.params
    theta = posterior.sample(make_rng(seed, "bayesian-release"))
    flags = [EXTRAPOLATED_FLAG] if p.epsilon >= 1 else []
    params = p.to_dict()
    params["sensitivity_method"] = posterior.sensitivity.method
    params["gamma"] = posterior.sensitivity.gamma
    if extra:
        params.update(extra)
    return ReleasedDistribution(theta, BAYESIAN, params, seed, p.epsilon, p.delta,
                                posterior.sigma_ps, flags)


def bayesian_dp(db: CountsDatabase, alpha, params: MechanismParams,
                sensitivity_method: str = BRUTE_FORCE, seed: int = 0) -> ReleasedDistribution:
    """Sample ``softmax(h)`` with ``h ~ N(mu_ps, sigma_ps^2 I)``."""
    posterior = bayesian_posterior(db, alpha, params, sensitivity_method)
    return release_from_posterior(posterior, seed)


# -- baselines ----------------------------------------------------------------

def _normalize_with_floor(values: np.ndarray, floored: np.ndarray) -> np.ndarray:
    """Normalise non-negative ``values``; entries in ``floored`` get a small floor.

    All-zero input falls back to the uniform distribution.
    """
    V = values.size
    total = values.sum()
    if not total > 0:
        return np.full(V, 1.0 / V)
    theta = values / total
    theta = np.where(floored, theta + floor_value(V), theta)
    return theta / theta.sum()


def laplace_baseline(db: CountsDatabase, W: float, epsilon: float, seed: int = 0,
                     C: Optional[float] = None) -> ReleasedDistribution:
    """Laplace noise of scale ``W / epsilon`` on the totals, threshold, normalise.

    Each user's total is capped at ``W`` first, which is the l1-sensitivity.
    """
    PrivacyParams(epsilon)
    if not W >= 1:
        raise ConfigError(f"W must be >= 1, got {W}", field="W")
    return laplace_from_totals(db.limited(C=C, T=W).totals, W, epsilon, seed, C)


def laplace_from_totals(totals, W: float, epsilon: float, seed: int = 0,
                        C: Optional[float] = None) -> ReleasedDistribution:
    """Noise-and-normalise step of :func:`laplace_baseline` on already capped totals."""
    PrivacyParams(epsilon)
    totals = np.asarray(totals, dtype=np.float64)
    scale = W / epsilon
    noisy = totals + sample_noise("laplace", scale, totals.size,
                                  make_rng(seed, "laplace-release"))
    values = np.maximum(noisy, 0.0)
    theta = _normalize_with_floor(values, values <= 0)
    return ReleasedDistribution(theta, LAPLACE,
                                {"W": W, "C": C, "epsilon": epsilon}, seed,
                                epsilon, 0.0, scale)


def _modified_laplace_parts(db: CountsDatabase, alpha_tilde: np.ndarray):
    """Deterministic part and per-user l1 change of the modified Laplace sum.

    With ``A_i = sum_n dc_i^n * dc~_i^n`` the sum collapses to
    ``A_i / c_i - alpha~_i`` on words with ``c_i > 0`` and 0 elsewhere.
    """
    m = db.matrix
    U, V = m.shape
    c = db.totals.astype(np.float64)
    rows = np.repeat(np.arange(U), np.diff(m.indptr))
    cols = m.indices
    dc = m.data.astype(np.float64)
    user_tot = np.bincount(rows, weights=dc, minlength=U)
    dct = dc / user_tot[rows]
    A = np.bincount(cols, weights=dc * dct, minlength=V)

    def f(A_, c_, a_):
        safe = np.where(c_ > 0, c_, 1.0)
        return np.where(c_ > 0, A_ / safe - a_, 0.0)

    full = f(A, c, alpha_tilde)
    minus = f(A[cols] - dc * dct, c[cols] - dc, alpha_tilde[cols])
    per_user = np.bincount(rows, weights=np.abs(full[cols] - minus), minlength=U)
    return full, per_user


def modified_laplace_baseline(db: CountsDatabase, alpha, epsilon: float, seed: int = 0,
                              C: Optional[float] = None,
                              T: Optional[float] = None) -> ReleasedDistribution:
    """Laplace mechanism on the count-weighted average of user-minus-public profiles."""
    PrivacyParams(epsilon)
    alpha = np.asarray(alpha, dtype=np.float64)
    if not alpha.sum() > 0:
        raise DataError("public counts must have a positive total")
    db = db.limited(C=C, T=T)
    alpha_tilde = alpha / alpha.sum()
    deterministic, per_user = _modified_laplace_parts(db, alpha_tilde)
    l1 = float(per_user.max()) if per_user.size else 0.0
    scale = l1 / epsilon
    noise = sample_noise("laplace", scale, db.num_words,
                         make_rng(seed, "modified-laplace-release"))
    values = np.maximum(deterministic + noise + alpha_tilde, 0.0)
    theta = _normalize_with_floor(values, values <= 0)
    return ReleasedDistribution(
        theta, MODIFIED_LAPLACE,
        {"epsilon": epsilon, "C": C, "T": T, "l1_sensitivity": l1}, seed,
        epsilon, 0.0, scale)


def modified_laplace_mean(db: CountsDatabase, alpha) -> np.ndarray:
    """Pre-noise, pre-threshold output (deterministic sum plus normalised public)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    alpha_tilde = alpha / alpha.sum()
    deterministic, _ = _modified_laplace_parts(db, alpha_tilde)
    return deterministic + alpha_tilde


def k_anonymize(db: CountsDatabase, K: int) -> ReleasedDistribution:
    """Suppress n-grams held by fewer than ``K`` distinct users."""
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}", field="K")
    suppressed = db.supports < K
    values = np.where(suppressed, 0.0, db.totals.astype(np.float64))
    theta = _normalize_with_floor(values, suppressed)
    return ReleasedDistribution(
        theta, K_ANONYMITY, {"K": int(K), "floor": floor_value(db.num_words)},
        None, None, None, 0.0, [NON_PRIVATE_FLAG])


def public_baseline(alpha) -> ReleasedDistribution:
    """``softmax`` of the public prior; touches no private data."""
    theta = softmax(log_normalize(alpha))
    return ReleasedDistribution(theta, PUBLIC, {}, None, 0.0, 0.0, 0.0)


def private_baseline(db: CountsDatabase) -> ReleasedDistribution:
    """Empirical private distribution (floored so it can be scored); not private."""
    values = db.totals.astype(np.float64)
    theta = _normalize_with_floor(values, values <= 0)
    return ReleasedDistribution(theta, PRIVATE, {}, None, None, None, 0.0,
                                [NON_PRIVATE_FLAG])
