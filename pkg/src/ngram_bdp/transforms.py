"""Log-space transforms shared by the Bayesian mechanism and its analysis."""

import numpy as np

from .errors import ConfigError, DataError

# exp(-700) is still a normal float64; keeps every softmax entry > 0
_MIN_LOG_RATIO = -700.0


def log_normalize(counts) -> np.ndarray:
    """Mean-centred ``log(c + 1)``.

    Works for private totals, for the totals of an adjacent database, and
    for public counts alike.
    """
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 1 or c.size == 0:
        raise DataError("log_normalize needs a non-empty 1-d count vector")
    if np.any(c < 0):
        raise DataError("counts must be non-negative")
    lc = np.log1p(c)
    return lc - lc.mean()


def public_prior(alpha) -> np.ndarray:
    """Prior mean in log space from public counts."""
    return log_normalize(alpha)


def decay_weights(supports, S: float, C: float) -> np.ndarray:
    """Per-word weights ``min(1, S * N / C)``."""
    if not S > 0:
        raise ConfigError(f"S must be positive, got {S}", field="S")
    if not C >= 1:
        raise ConfigError(f"C must be >= 1, got {C}", field="C")
    N = np.asarray(supports, dtype=np.float64)
    return np.minimum(1.0, S * N / C)


def posterior_mean(xhat, mu_p, w, rho: float) -> np.ndarray:
    """``rho * w * xhat + (1 - rho) * mu_p``."""
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"rho must lie in [0, 1], got {rho}", field="rho")
    xhat = np.asarray(xhat, dtype=np.float64)
    mu_p = np.asarray(mu_p, dtype=np.float64)
    w = np.broadcast_to(np.asarray(w, dtype=np.float64), xhat.shape)
    if xhat.shape != mu_p.shape:
        raise DataError(f"length mismatch: {xhat.shape} vs {mu_p.shape}")
    return rho * (w * xhat) + (1.0 - rho) * mu_p


def log_sum_exp(h) -> float:
    h = np.asarray(h, dtype=np.float64)
    m = h.max()
    return float(m + np.log(np.exp(h - m).sum()))


def log_softmax(h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    return h - log_sum_exp(h)


def softmax(h) -> np.ndarray:
    """Overflow-safe softmax; every output entry is strictly positive."""
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise DataError("softmax input must be finite")
    z = np.maximum(h - h.max(), _MIN_LOG_RATIO)
    e = np.exp(z)
    return e / e.sum()
