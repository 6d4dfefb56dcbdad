"""l2-sensitivity of the weighted log-space mean.

The quantity of interest is

    gamma = max_n || w(N) * xhat(c) - w(N_-n) * xhat(c_-n) ||_2

i.e. the sensitivity of the posterior mean divided by ``rho``. It is
computed exactly by scanning users, or bounded in O(|V|) from the word
supports alone.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .counts import CountsDatabase
from .errors import ConfigError, DataError
from .transforms import decay_weights, log_normalize

BRUTE_FORCE = "brute-force"
WORST_CASE = "worst-case-bound"


@dataclasses.dataclass(frozen=True)
class SensitivityEstimate:
    gamma: float
    method: str
    argmax_user: Optional[str] = None


def per_user_sensitivity(db: CountsDatabase, S: float, C: float) -> np.ndarray:
    """``||f(D) - f(D_-n)||_2`` for every user, in row order.

    Only the words a user holds change their total and support; every other
    coordinate moves by the same shift of the mean term. That makes each
    user O(W_n) after precomputing the global log-sum.
    """
    m = db.matrix
    U, V = m.shape
    if U == 0:
        return np.zeros(0)
    c = db.totals.astype(np.float64)
    N = db.supports.astype(np.float64)
    lc = np.log1p(c)
    mean = lc.mean()
    xhat = lc - mean
    w = decay_weights(N, S, C)
    w_sq_total = float(np.dot(w, w))

    rows = np.repeat(np.arange(U), np.diff(m.indptr))
    cols = m.indices
    lc_minus = np.log1p(c[cols] - m.data)
    dropped = np.bincount(rows, weights=lc[cols] - lc_minus, minlength=U)
    mean_shift = dropped / V                      # mean(lc) - mean(lc_-n)
    xhat_minus = lc_minus - (mean - mean_shift[rows])
    w_minus = decay_weights(N[cols] - 1.0, S, C)
    diff = w[cols] * xhat[cols] - w_minus * xhat_minus

    on_support = np.bincount(rows, weights=diff * diff, minlength=U)
    w_sq_support = np.bincount(rows, weights=w[cols] ** 2, minlength=U)
    off_support = mean_shift ** 2 * np.maximum(w_sq_total - w_sq_support, 0.0)
    return np.sqrt(on_support + off_support)


def brute_force_sensitivity(db: CountsDatabase, S: float, C: float) -> SensitivityEstimate:
    """Exact sensitivity by scanning every user; ``db`` must already be clamped."""
    if len(db) == 0:
        return SensitivityEstimate(0.0, BRUTE_FORCE, None)
    per_user = per_user_sensitivity(db, S, C)
    row = int(np.argmax(per_user))
    return SensitivityEstimate(float(per_user[row]), BRUTE_FORCE, db.user_ids[row])


def lipschitz_coeffs(supports, vocab_size: int) -> np.ndarray:
    """Per-word Lipschitz constants of the centred log transform.

    ``L_i = (1 - 1/V) / N_i + sum_{j != i} 1 / (V N_j)`` over the words
    passed in; ``vocab_size`` is the full ``V``.
    """
    N = np.asarray(supports, dtype=np.float64)
    if np.any(N <= 0):
        raise DataError("Lipschitz bound is undefined for words with zero support")
    V = float(vocab_size)
    if V < 1 or V < N.size:
        raise ConfigError(f"vocab_size {vocab_size} smaller than {N.size} words",
                          field="vocab_size")
    inv = 1.0 / N
    return (1.0 - 1.0 / V) * inv + (inv.sum() - inv) / V


def weight_drop(supports, S: float, C: float) -> np.ndarray:
    """Largest decrease of each word's weight when one holder is removed."""
    N = np.asarray(supports, dtype=np.float64)
    return decay_weights(N, S, C) - decay_weights(np.maximum(N - 1.0, 0.0), S, C)


def worst_case_bound(xhat, supports, S: float, C: float, vocab_size: int,
                     exact_weight_drop: bool = True) -> SensitivityEstimate:
    """Upper bound on the brute-force sensitivity from supports alone.

    Pass only words with non-zero support (their weight is zero and no user
    can move it). With ``exact_weight_drop`` the weight-change term uses
    ``w(N) - w(N - 1)``, which also covers words whose weight leaves the
    clamp at 1; otherwise it uses ``S/C * 1(N <= C/S)``.
    """
    xhat = np.asarray(xhat, dtype=np.float64)
    N = np.asarray(supports, dtype=np.float64)
    if xhat.shape != N.shape:
        raise DataError("xhat and supports must have the same length")
    if N.size == 0:
        return SensitivityEstimate(0.0, WORST_CASE)
    L = lipschitz_coeffs(N, vocab_size)
    w = decay_weights(N, S, C)
    if exact_weight_drop:
        drop = weight_drop(N, S, C)
    else:
        drop = (S / C) * (N <= C / S)
    bound = np.linalg.norm(w * L * C + drop * np.abs(xhat))
    return SensitivityEstimate(float(bound), WORST_CASE)


def database_worst_case_bound(db: CountsDatabase, S: float, C: float,
                              exact_weight_drop: bool = True) -> SensitivityEstimate:
    xhat = log_normalize(db.totals)
    keep = db.supports > 0
    return worst_case_bound(xhat[keep], db.supports[keep], S, C, db.num_words,
                            exact_weight_drop=exact_weight_drop)
