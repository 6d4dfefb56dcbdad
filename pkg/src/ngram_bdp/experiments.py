"""Experiment orchestration: data -> mechanism -> evaluation -> files."""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import time
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, MechanismConfig
from .counts import (CountsDatabase, Vocabulary, read_counts, read_public_counts,
                     read_vocabulary)
from .errors import ConfigError, DataError
from .evaluation import (BayesianMechanism, LaplaceMechanism, PublicNoiseMechanism,
                         conditional_perplexity, degrade_public,
                         empirical_distribution, filter_corpus, kl_divergence,
                         membership_inference)
from .mechanisms import (BAYESIAN, K_ANONYMITY, LAPLACE, MODIFIED_LAPLACE, PRIVATE,
                         PUBLIC, MechanismParams, ReleasedDistribution, bayesian_dp,
                         k_anonymize, laplace_baseline, modified_laplace_baseline,
                         private_baseline, public_baseline)
from .seeding import derive_seed
from .synthetic import SyntheticCorpus, build_synthetic_corpus
from .tuning import HyperGrid, PrivacyLedger, TuningResult, end_to_end_dp

CSV_HEADER = ("mechanism", "epsilon", "delta", "seed", "metric", "value")


# -- data ---------------------------------------------------------------------

@dataclasses.dataclass
class Dataset:
    db: CountsDatabase
    alpha: np.ndarray
    vocabulary: Vocabulary
    corpus: Optional[SyntheticCorpus] = None
    heldout_path: Optional[str] = None

    def reference(self) -> np.ndarray:
        """Empirical distribution of the raw private counts."""
        return empirical_distribution(self.db.totals)

    def heldout(self, num_sentences: int, seed: int) -> List[str]:
        if self.corpus is not None:
            return self.corpus.heldout_sentences(num_sentences, seed)
        if self.heldout_path is None:
            raise ConfigError("perplexity needs data.heldout", field="data.heldout")
        try:
            with open(self.heldout_path, encoding="utf-8") as f:
                lines = [ln.strip() for ln in f if ln.strip()]
        except OSError as e:
            raise DataError(f"cannot read held-out corpus: {e}") from None
        return filter_corpus(lines, self.vocabulary)


def load_dataset(cfg: ExperimentConfig, **overrides) -> Dataset:
    """Materialise the configured data; ``overrides`` patch synthetic fields."""
    d = cfg.data
    public_noise = overrides.pop("public_noise", d.public_noise)
    if d.synthetic is not None:
        s = dataclasses.replace(d.synthetic, **overrides)
        corpus = build_synthetic_corpus(
            s.num_users, s.vocab_size, s.zipf_exponent, s.tokens_per_user,
            derive_seed(cfg.seed, "data"), num_tokens=s.num_tokens,
            sentence_length=s.sentence_length, tail_fraction=s.tail_fraction,
            dominant_user_tokens=s.dominant_user_tokens)
        data = Dataset(corpus.db, corpus.alpha, corpus.vocabulary, corpus)
    else:
        if overrides:
            raise ConfigError("only synthetic data can be regenerated", field="sweep")
        vocab = read_vocabulary(cfg.resolve(d.vocabulary))
        alpha = read_public_counts(cfg.resolve(d.public_counts), vocab)
        db = read_counts(cfg.resolve(d.counts), vocab)
        data = Dataset(db, alpha, vocab, heldout_path=cfg.resolve(d.heldout))
    if public_noise > 0:
        data.alpha = degrade_public(data.alpha, public_noise,
                                    derive_seed(cfg.seed, "public-noise"))
    return data


def default_limits(m: MechanismConfig, num_users: int):
    """``(C, T)``: C is 1 below a million users else 10; T is |U|/1000, at least 1."""
    C = m.C if m.C is not None else (1 if num_users < 1_000_000 else 10)
    T = m.T if m.T is not None else max(1, num_users // 1000)
    return C, T


# -- single releases -------------------------------------------------------------

def release_mechanism(name: str, data: Dataset, m: MechanismConfig, seed: int,
                      epsilon: Optional[float] = None):
    """Run one mechanism; returns ``(release, ledger)`` (ledger empty if non-private)."""
    eps = m.epsilon if epsilon is None else epsilon
    C, T = default_limits(m, len(data.db))
    ledger = PrivacyLedger()
    if name == BAYESIAN:
        params = MechanismParams(epsilon=eps, delta=m.delta, S=m.S, C=C, rho=m.rho, T=T)
        rel = bayesian_dp(data.db, data.alpha, params, m.sensitivity, seed)
        ledger.add("bayesian-gaussian", eps, m.delta)
    elif name == LAPLACE:
        rel = laplace_baseline(data.db, T, eps, seed, C=C)
        ledger.add("laplace", eps, 0.0)
    elif name == MODIFIED_LAPLACE:
        rel = modified_laplace_baseline(data.db, data.alpha, eps, seed, C=C, T=T)
        ledger.add("modified-laplace", eps, 0.0)
    elif name == K_ANONYMITY:
        rel = k_anonymize(data.db, m.K)
    elif name == PUBLIC:
        rel = public_baseline(data.alpha)
        ledger.add("public", 0.0, 0.0)
    elif name == PRIVATE:
        rel = private_baseline(data.db)
    else:
        raise ConfigError(f"unknown mechanism {name!r}", field="mechanism.name")
    _stamp(rel, ledger)
    return rel, ledger


def _stamp(release: ReleasedDistribution, ledger: PrivacyLedger):
    """Overwrite the spent budget with the ledger total (None when non-private)."""
    if ledger.entries:
        release.epsilon_spent, release.delta_spent = ledger.total
    else:
        release.epsilon_spent = release.delta_spent = None


def evaluate_release(release: ReleasedDistribution, data: Dataset, cfg: ExperimentConfig,
                     heldout: Optional[Sequence[str]] = None) -> Dict[str, float]:
    metrics = {}
    if cfg.eval.kl:
        metrics["kl"] = kl_divergence(data.reference(), release.theta)
    if cfg.eval.perplexity:
        if heldout is None:
            heldout = data.heldout(cfg.eval.heldout_sentences,
                                   derive_seed(cfg.seed, "heldout"))
        metrics["perplexity"] = conditional_perplexity(release.theta, data.vocabulary,
                                                       heldout)
    return metrics


def metric_rows(release: ReleasedDistribution, metrics: Dict[str, float],
                seed, suffix: str = "") -> List[list]:
    return [[release.mechanism, release.epsilon_spent, release.delta_spent, seed,
             name + suffix, value] for name, value in metrics.items()]


# -- files -------------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(doc), f, indent=1, sort_keys=True, allow_nan=False)
        f.write("\n")


def read_release(path) -> ReleasedDistribution:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read release {path}: {e}") from None
    return ReleasedDistribution.from_dict(doc)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


@dataclasses.dataclass
class RunManifest:
    config_hash: str
    artifacts: Dict[str, str]
    ledger: Dict[str, Any]
    duration_seconds: float
    version: str
    root_seed: int
    command: str

    def to_dict(self):
        return dataclasses.asdict(self)


def _output_dir(cfg: ExperimentConfig) -> str:
    out = cfg.resolve(cfg.output_dir)
    os.makedirs(out, exist_ok=True)
    return out


def _finish(cfg, command, out, artifacts, ledger_doc, started) -> RunManifest:
    manifest = RunManifest(cfg.digest(), artifacts, ledger_doc,
                           time.perf_counter() - started, __version__, cfg.seed, command)
    path = os.path.join(out, "manifest.json")
    write_json(path, manifest.to_dict())
    manifest.artifacts["manifest"] = path
    return manifest


def _ledger_doc(ledger: PrivacyLedger):
    if not ledger.entries:
        return {"entries": [], "epsilon_total": None, "delta_total": None}
    return ledger.to_dict()


# -- run modes ---------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, tune: Optional[bool] = None) -> RunManifest:
    """Release (optionally tuned), evaluate, and write release/eval/manifest files."""
    started = time.perf_counter()
    out = _output_dir(cfg)
    data = load_dataset(cfg)
    tune = cfg.tuning is not None if tune is None else tune
    artifacts = {}
    release_seed = derive_seed(cfg.seed, "release")
    if tune:
        if cfg.mechanism.name != BAYESIAN:
            raise ConfigError("tuning applies to the bayesian mechanism only",
                              field="mechanism.name")
        result = run_tuning(cfg, data, release_seed)
        release, ledger = result.release, result.ledger
        path = os.path.join(out, "tuning.json")
        write_json(path, result.report())
        artifacts["tuning"] = path
    else:
        release, ledger = release_mechanism(cfg.mechanism.name, data, cfg.mechanism,
                                            release_seed)
    doc = release.to_dict()
    doc["ledger"] = _ledger_doc(ledger)
    path = os.path.join(out, "release.json")
    write_json(path, doc)
    artifacts["release"] = path

    metrics = evaluate_release(release, data, cfg)
    path = os.path.join(out, "eval.csv")
    write_csv(path, metric_rows(release, metrics, release_seed))
    artifacts["eval"] = path
    return _finish(cfg, "tune" if tune else "release", out, artifacts,
                   _ledger_doc(ledger), started)


def run_tuning(cfg: ExperimentConfig, data: Dataset, seed: int) -> TuningResult:
    m, t = cfg.mechanism, cfg.tuning
    eps1, eps2 = cfg.budget_split()
    if t is not None and (t.S or t.rho):
        default = HyperGrid.default()
        S_vals = t.S or sorted({s for s, _ in default.candidates})
        rho_vals = t.rho or sorted({r for _, r in default.candidates})
        grid = HyperGrid.product(S_vals, rho_vals)
    else:
        grid = HyperGrid.default()
    C, T = default_limits(m, len(data.db))
    return end_to_end_dp(data.db, data.alpha, eps1, eps2, m.delta, grid, C=C, seed=seed,
                         T=T, C1=None if t is None else t.C1,
                         fraction=0.9 if t is None else t.fraction,
                         sensitivity_method=m.sensitivity)


def sweep_rows(cfg: ExperimentConfig) -> List[list]:
    """One row per (value, mechanism, seed, metric)."""
    sw = cfg.sweep
    if sw is None:
        raise ConfigError("missing sweep section", field="sweep")
    rows = []
    fixed = None
    for value in sw.values:
        if sw.parameter == "num_users":
            data = load_dataset(cfg, num_users=int(value))
        elif sw.parameter == "vocab_size":
            data = load_dataset(cfg, vocab_size=int(value))
        elif sw.parameter == "public_noise":
            data = load_dataset(cfg, public_noise=float(value))
        else:
            fixed = fixed or load_dataset(cfg)
            data = fixed
        heldout = None
        if cfg.eval.perplexity:
            heldout = data.heldout(cfg.eval.heldout_sentences,
                                   derive_seed(cfg.seed, "heldout"))
        m = cfg.mechanism
        if sw.parameter == "K":
            m = dataclasses.replace(m, K=int(value))
        eps = float(value) if sw.parameter == "epsilon" else None
        suffix = "" if sw.parameter == "epsilon" else f"[{sw.parameter}={value:g}]"
        for name in sw.mechanisms:
            deterministic = name in (K_ANONYMITY, PUBLIC, PRIVATE)
            if deterministic and eps is not None and value != sw.values[0]:
                continue  # does not depend on epsilon; one row is enough
            for k in range(1 if deterministic else sw.seeds):
                seed = derive_seed(cfg.seed, f"sweep-{name}", k)
                rel, _ = release_mechanism(name, data, m, seed, epsilon=eps)
                metrics = evaluate_release(rel, data, cfg, heldout)
                row_seed = None if deterministic else seed
                rows.extend(metric_rows(rel, metrics, row_seed, suffix))
    return rows


def run_sweep(cfg: ExperimentConfig) -> RunManifest:
    from .plotting import plot_sweep

    started = time.perf_counter()
    out = _output_dir(cfg)
    rows = sweep_rows(cfg)
    path = os.path.join(out, "sweep.csv")
    write_csv(path, rows)
    artifacts = {"sweep": path}
    for metric in sorted({r[4].split("[")[0] for r in rows}):
        fig = os.path.join(out, f"sweep_{metric}.png")
        plot_sweep(read_csv(path), cfg.sweep.parameter, metric, fig)
        artifacts[f"figure_{metric}"] = fig
    return _finish(cfg, "sweep", out, artifacts, {"per_row": True}, started)


def attack_mechanism(name: str, data: Dataset, m: MechanismConfig):
    C, T = default_limits(m, len(data.db))
    if name == BAYESIAN:
        return BayesianMechanism(data.alpha, m.S, C, m.rho, m.delta, T=T,
                                 sensitivity_method=m.sensitivity)
    if name == LAPLACE:
        return LaplaceMechanism(T, C=C)
    if name == "public-noise":
        return PublicNoiseMechanism(data.alpha)
    raise ConfigError(f"unknown attack mechanism {name!r}", field="attack.mechanisms")


def attack_rows(cfg: ExperimentConfig, data: Optional[Dataset] = None):
    a = cfg.attack
    if a is None:
        raise ConfigError("missing attack section", field="attack")
    data = data or load_dataset(cfg)
    m = cfg.mechanism
    C, T = default_limits(m, len(data.db))
    # attack the user who contributes most after preprocessing
    target = a.user
    if target is None:
        from .evaluation import most_contributing_user
        target = most_contributing_user(data.db.limited(C=C, T=T))
    rows, reports = [], []
    for name in a.mechanisms:
        mech = attack_mechanism(name, data, m)
        rep = membership_inference(data.db, mech, a.epsilons, a.trials,
                                   seed=derive_seed(cfg.seed, f"attack-{name}"),
                                   user_id=target)
        reports.append(rep)
        delta = m.delta if name == BAYESIAN else 0.0
        for eps, prob in zip(rep.epsilons, rep.inference_probabilities):
            rows.append([name, eps, delta, cfg.seed, "inference_probability", prob])
    return rows, reports


def run_attack(cfg: ExperimentConfig) -> RunManifest:
    from .plotting import plot_attack

    started = time.perf_counter()
    out = _output_dir(cfg)
    rows, reports = attack_rows(cfg)
    path = os.path.join(out, "attack.csv")
    write_csv(path, rows)
    json_path = os.path.join(out, "attack.json")
    write_json(json_path, [r.to_dict() for r in reports])
    fig = os.path.join(out, "attack.png")
    plot_attack(reports, fig)
    return _finish(cfg, "attack", out,
                   {"attack": path, "attack_report": json_path, "figure": fig},
                   {"per_row": True}, started)
