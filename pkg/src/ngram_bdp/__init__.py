"""Differentially private release of n-gram distributions with a public prior."""

__version__ = "0.1.0"

from .counts import (CountsDatabase, UserContribution, Vocabulary,  # noqa: E402
                     apply_contribution_limits, build_vocabulary, ingest, split_dataset)
from .errors import (AdjacencyError, ConfigError, DataError,  # noqa: E402
                     NgramDPError, NumericalError)
from .evaluation import (conditional_perplexity, degrade_public,  # noqa: E402
                         kl_divergence, membership_inference)
from .mechanisms import (MechanismParams, PrivacyParams,  # noqa: E402
                         ReleasedDistribution, bayesian_dp, k_anonymize,
                         laplace_baseline, modified_laplace_baseline)
from .sensitivity import brute_force_sensitivity, worst_case_bound  # noqa: E402
from .synthetic import synthetic_corpus  # noqa: E402
from .transforms import log_normalize, posterior_mean, softmax  # noqa: E402
from .tuning import HyperGrid, compose_privacy, end_to_end_dp  # noqa: E402

__all__ = [
    "AdjacencyError", "ConfigError", "CountsDatabase", "DataError", "HyperGrid",
    "MechanismParams", "NgramDPError", "NumericalError", "PrivacyParams",
    "ReleasedDistribution", "UserContribution", "Vocabulary",
    "apply_contribution_limits", "bayesian_dp", "brute_force_sensitivity",
    "build_vocabulary", "compose_privacy", "conditional_perplexity", "degrade_public",
    "end_to_end_dp", "ingest", "k_anonymize", "kl_divergence", "laplace_baseline",
    "log_normalize", "membership_inference", "modified_laplace_baseline",
    "posterior_mean", "softmax", "split_dataset", "synthetic_corpus",
    "worst_case_bound",
]
