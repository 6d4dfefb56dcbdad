import math

import numpy as np
import pytest

from ngram_bdp.errors import ConfigError, DataError
from ngram_bdp.mechanisms import (EXTRAPOLATED_FLAG, MechanismParams, PrivacyParams,
                                  ReleasedDistribution, bayesian_dp, bayesian_posterior,
                                  floor_value, gaussian_sigma, k_anonymize,
                                  laplace_baseline, modified_laplace_baseline,
                                  modified_laplace_mean, private_baseline,
                                  public_baseline, sample_noise)
from ngram_bdp.seeding import make_rng
from ngram_bdp.transforms import log_normalize, softmax

from conftest import make_db


def assert_distribution(theta):
    assert np.all(theta > 0)
    assert abs(theta.sum() - 1.0) <= 1e-12


# -- noise ------------------------------------------------------------------------------

def test_zero_scale_gives_zeros():
    assert not sample_noise("laplace", 0.0, 5, 1).any()
    assert not sample_noise("gaussian", 0.0, 5, 1).any()


def test_negative_scale_rejected():
    with pytest.raises(ConfigError):
        sample_noise("laplace", -1.0, 3, 0)


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError):
        sample_noise("cauchy", 1.0, 3, 0)


def test_laplace_moments():
    x = sample_noise("laplace", 2.0, 10 ** 6, 42)
    assert -0.02 <= x.mean() <= 0.02
    assert 7.8 <= x.var() <= 8.2


def test_gaussian_moments():
    x = sample_noise("gaussian", 3.0, 10 ** 6, 42)
    assert 8.9 <= x.var() <= 9.1


def test_noise_is_deterministic_per_seed():
    assert np.array_equal(sample_noise("laplace", 1.0, 10, 3),
                          sample_noise("laplace", 1.0, 10, 3))
    assert not np.array_equal(sample_noise("laplace", 1.0, 10, 3),
                              sample_noise("laplace", 1.0, 10, 4))


# -- parameters ---------------------------------------------------------------------------

def test_privacy_params_validation():
    with pytest.raises(ConfigError):
        PrivacyParams(0.0)
    with pytest.raises(ConfigError):
        PrivacyParams(1.0, 1.0)
    with pytest.raises(ConfigError, match="rho"):
        MechanismParams(1.0, rho=2.0)


def test_gaussian_sigma_hand_value():
    # 24.2242 comes from the 5-digit root 4.84485; exact value is 24.22403
    assert gaussian_sigma(1.0, 0.5, 0.1, 1e-5) == pytest.approx(24.2242, abs=5e-4)
    assert gaussian_sigma(1.0, 0.5, 0.1, 1e-5) == pytest.approx(
        0.5 * math.sqrt(2 * math.log(1.25e5)) / 0.1, rel=1e-15)
    assert math.sqrt(2 * math.log(1.25e5)) == pytest.approx(4.84485, abs=5e-5)


def test_gaussian_sigma_zero_and_linearity():
    assert gaussian_sigma(0.0, 0.5, 0.1, 1e-5) == 0.0
    s1 = gaussian_sigma(0.7, 0.3, 0.2, 1e-6)
    assert gaussian_sigma(0.7, 0.3, 0.4, 1e-6) == pytest.approx(s1 / 2)


def test_gaussian_sigma_rejects_large_delta():
    with pytest.raises(ConfigError):
        gaussian_sigma(1.0, 0.5, 0.1, 1.25)


# -- Bayesian release ----------------------------------------------------------------------

ALPHA = np.array([5.0, 3.0, 0.0, 1.0])


def test_empty_database_gives_prior_blend():
    db = make_db(np.zeros((0, 4), dtype=int))
    rel = bayesian_dp(db, ALPHA, MechanismParams(0.5, 1e-5, S=1, C=1, rho=0.5), seed=3)
    assert rel.noise_scale == 0.0
    np.testing.assert_allclose(rel.theta, softmax(0.5 * log_normalize(ALPHA)),
                               atol=1e-15)


def test_noiseless_limit_is_add_one_smoothing():
    rng = np.random.default_rng(0)
    dense = rng.integers(0, 4, size=(30, 6))
    db = make_db(dense)
    params = MechanismParams(1e6, 1e-5, S=1e6, C=10, rho=1.0)
    rel = bayesian_dp(db, np.ones(6), params, seed=1)
    c = dense.sum(axis=0)
    np.testing.assert_allclose(rel.theta, (c + 1) / (c + 1).sum(), atol=1e-6)


def test_bayesian_release_is_deterministic_and_valid():
    db = make_db(np.random.default_rng(1).integers(0, 3, size=(20, 4)))
    params = MechanismParams(0.5, 1e-5, S=0.5, C=2, rho=0.5)
    a = bayesian_dp(db, ALPHA, params, seed=9)
    b = bayesian_dp(db, ALPHA, params, seed=9)
    assert np.array_equal(a.theta, b.theta)
    assert_distribution(a.theta)
    assert a.epsilon_spent == 0.5 and a.delta_spent == 1e-5
    assert a.params["sensitivity_method"] == "brute-force"
    assert EXTRAPOLATED_FLAG not in a.flags


def test_large_epsilon_is_flagged():
    db = make_db([[1, 2, 0, 0]])
    rel = bayesian_dp(db, ALPHA, MechanismParams(5.0, 1e-5), seed=0)
    assert EXTRAPOLATED_FLAG in rel.flags


def test_bayesian_requires_positive_delta_and_rho():
    db = make_db([[1, 2, 0, 0]])
    with pytest.raises(ConfigError):
        bayesian_dp(db, ALPHA, MechanismParams(0.5, 0.0))
    with pytest.raises(ConfigError):
        bayesian_dp(db, ALPHA, MechanismParams(0.5, 1e-5, rho=0.0))


def test_bayesian_rejects_misaligned_public_counts():
    with pytest.raises(DataError):
        bayesian_dp(make_db([[1, 2]]), [1.0, 2.0, 3.0], MechanismParams(0.5))


def test_worst_case_method_uses_larger_noise():
    db = make_db(np.random.default_rng(2).integers(0, 3, size=(15, 4)))
    params = MechanismParams(0.5, 1e-5, S=0.5, C=2, rho=0.5)
    bf = bayesian_posterior(db, ALPHA, params, "brute-force")
    wc = bayesian_posterior(db, ALPHA, params, "worst-case-bound")
    assert wc.sigma_ps >= bf.sigma_ps
    with pytest.raises(ConfigError):
        bayesian_posterior(db, ALPHA, params, "guess")


def test_release_round_trips_through_dict():
    rel = bayesian_dp(make_db([[1, 2, 0, 1]]), ALPHA, MechanismParams(0.5), seed=2)
    back = ReleasedDistribution.from_dict(rel.to_dict())
    assert np.array_equal(back.theta, rel.theta)
    assert back.params == rel.params and back.seed == rel.seed
    with pytest.raises(DataError):
        ReleasedDistribution.from_dict({"theta": [1.0]})


# -- empirical DP ratio --------------------------------------------------------------------

TOY = [[2, 1, 0], [0, 1, 1]]
TOY_ALPHA = np.array([3.0, 2.0, 1.0])
TRIALS = 10 ** 5
SLACK = 0.1  # generous Monte-Carlo allowance on the ratio


def _tail_ratios(a, b, thresholds):
    """Worst log-ratio over the events {x > t} and {x <= t}, both directions."""
    worst = 0.0
    for t in thresholds:
        for pa, pb in (((a > t).mean(), (b > t).mean()),
                       ((a <= t).mean(), (b <= t).mean())):
            if min(pa, pb) * TRIALS < 500:
                continue  # too rare to estimate
            worst = max(worst, abs(math.log(pa / pb)))
    return worst


def _bayes_samples(db, params, seed):
    post = bayesian_posterior(db, TOY_ALPHA, params)
    logits = post.sample_logits(make_rng(seed), TRIALS)
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return (z / z.sum(axis=1, keepdims=True))[:, 0]


@pytest.mark.parametrize("C,S,rho", [
    (2, 1.0, 0.5),
    (2, 10.0, 1.0),
    pytest.param(1, 0.5, 0.5, marks=pytest.mark.xfail(
        strict=True, reason="sigma is calibrated on the released database itself, "
                            "so neighbouring databases get different noise scales")),
])
def test_bayesian_empirical_dp_ratio(C, S, rho):
    eps = 0.5
    params = MechanismParams(eps, 1e-5, S=S, C=C, rho=rho)
    db = make_db(TOY)
    a = _bayes_samples(db, params, 1)
    b = _bayes_samples(db.without("u1"), params, 2)
    worst = _tail_ratios(a, b, np.quantile(a, np.linspace(0.05, 0.95, 10)))
    assert worst <= eps + SLACK


def test_laplace_empirical_dp_ratio():
    eps, W = 0.5, 2
    db = make_db(TOY).limited(T=W)
    out = []
    for d, seed in ((db, 1), (db.without("u1"), 2)):
        noisy = d.totals + sample_noise("laplace", W / eps, (TRIALS, 3), seed)
        v = np.maximum(noisy, 0)
        total = v.sum(axis=1)
        out.append(np.where(total > 0, v[:, 0] / np.where(total > 0, total, 1), 1 / 3))
    worst = _tail_ratios(out[0], out[1], np.quantile(out[0], np.linspace(0.05, 0.95, 10)))
    assert worst <= eps + SLACK


# -- Laplace baselines -----------------------------------------------------------------------

def test_laplace_scale_and_validity():
    rel = laplace_baseline(make_db([[3, 0, 1], [0, 2, 2]]), W=10, epsilon=0.1, seed=0)
    assert rel.noise_scale == pytest.approx(100.0)
    assert_distribution(rel.theta)


def test_laplace_noiseless_limit():
    rng = np.random.default_rng(4)
    for _ in range(5):
        dense = rng.integers(0, 5, size=(20, 7))
        W = int(dense.sum(axis=1).max())
        rel = laplace_baseline(make_db(dense), W=W, epsilon=1e6, seed=1)
        c = dense.sum(axis=0)
        np.testing.assert_allclose(rel.theta, c / c.sum(), atol=1e-6)


def test_laplace_zero_counts_still_valid():
    rel = laplace_baseline(make_db(np.zeros((3, 4), dtype=int)), W=1, epsilon=0.5, seed=2)
    assert_distribution(rel.theta)


def test_laplace_rejects_small_W():
    with pytest.raises(ConfigError):
        laplace_baseline(make_db([[1]]), W=0.5, epsilon=1.0)


def test_modified_laplace_single_user_matches_public():
    alpha = np.array([2.0, 1.0, 1.0])
    db = make_db([[4, 2, 2]])
    np.testing.assert_allclose(modified_laplace_mean(db, alpha), alpha / alpha.sum(),
                               atol=1e-15)


def test_modified_laplace_hand_example():
    db = make_db([[1, 0], [0, 1]])
    np.testing.assert_allclose(modified_laplace_mean(db, [1.0, 1.0]), [1.0, 1.0])
    rel = modified_laplace_baseline(db, [1.0, 1.0], epsilon=1.0, seed=0)
    assert rel.params["l1_sensitivity"] == pytest.approx(0.5)
    assert rel.noise_scale == pytest.approx(0.5)


def _modified_reference(dense, alpha):
    dense = np.asarray(dense, dtype=float)
    c = dense.sum(axis=0)
    at = np.asarray(alpha, dtype=float) / np.sum(alpha)
    out = np.zeros(dense.shape[1])
    for row in dense:
        if row.sum() == 0:
            continue
        w = np.divide(row, c, out=np.zeros_like(row), where=c > 0)
        out += w * (row / row.sum() - at)
    return out + at


def test_modified_laplace_matches_direct_formula():
    rng = np.random.default_rng(6)
    for _ in range(20):
        dense = rng.integers(0, 4, size=(int(rng.integers(1, 8)), 5))
        alpha = rng.random(5) + 0.1
        db = make_db(dense)
        np.testing.assert_allclose(modified_laplace_mean(db, alpha),
                                   _modified_reference(dense, alpha), atol=1e-12)
        # brute-force l1 sensitivity
        full = _modified_reference(dense, alpha)
        l1 = max(np.abs(full - _modified_reference(np.delete(dense, k, 0), alpha)
                        if len(dense) > 1 else full - alpha / alpha.sum()).sum()
                 for k in range(len(dense)))
        rel = modified_laplace_baseline(db, alpha, epsilon=1.0, seed=0)
        assert rel.params["l1_sensitivity"] == pytest.approx(l1, abs=1e-12)


def test_modified_laplace_noiseless_limit():
    dense = [[3, 1, 0, 0], [0, 2, 2, 1], [1, 0, 0, 4]]
    alpha = np.array([1.0, 2.0, 3.0, 4.0])
    rel = modified_laplace_baseline(make_db(dense), alpha, epsilon=1e9, seed=0)
    expected = np.maximum(_modified_reference(dense, alpha), 0)
    np.testing.assert_allclose(rel.theta, expected / expected.sum(), atol=1e-6)


def test_modified_laplace_needs_public_mass():
    with pytest.raises(DataError):
        modified_laplace_baseline(make_db([[1, 1]]), [0.0, 0.0], 1.0)


# -- k-anonymity and reference releases -------------------------------------------------------

def test_k1_is_empirical_up_to_floor():
    dense = [[1, 2, 0], [3, 0, 0]]
    rel = k_anonymize(make_db(dense), 1)
    c = np.array([4, 2, 0])
    np.testing.assert_allclose(rel.theta, c / c.sum(), atol=1e-6)
    assert_distribution(rel.theta)


def test_k_suppresses_low_support():
    db = make_db([[1, 0, 1], [1, 1, 1], [1, 0, 0]])
    assert db.supports.tolist() == [3, 1, 2]
    rel = k_anonymize(db, 2)
    assert rel.theta[1] < floor_value(3) * 2
    assert rel.theta[0] > 0.4


def test_k_above_users_is_uniform():
    rel = k_anonymize(make_db([[1, 2, 3]]), 5)
    np.testing.assert_allclose(rel.theta, 1 / 3)


def test_k_rejects_zero():
    with pytest.raises(ConfigError):
        k_anonymize(make_db([[1]]), 0)


def test_public_and_private_baselines():
    pub = public_baseline(ALPHA)
    np.testing.assert_allclose(pub.theta, (ALPHA + 1) / (ALPHA + 1).sum())
    assert pub.epsilon_spent == 0.0
    priv = private_baseline(make_db([[1, 0, 3, 0]]))
    assert_distribution(priv.theta)
    assert "non-private" in priv.flags
