"""Declarative experiment configuration (YAML).

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from typing import Any, Dict, List, Optional

import yaml

from .errors import ConfigError

MECHANISMS = ("bayesian", "laplace", "modified_laplace", "k_anonymity",
              "public", "private")
SWEEP_PARAMETERS = ("epsilon", "num_users", "vocab_size", "public_noise", "K")


@dataclasses.dataclass
class SyntheticConfig:
    num_users: int = 10000
    vocab_size: int = 1000
    zipf_exponent: float = 1.0
    tokens_per_user: int = 40
    num_tokens: Optional[int] = None
    sentence_length: int = 8
    tail_fraction: float = 0.5
    dominant_user_tokens: int = 0


@dataclasses.dataclass
class DataConfig:
    synthetic: Optional[SyntheticConfig] = None
    counts: Optional[str] = None
    vocabulary: Optional[str] = None
    public_counts: Optional[str] = None
    heldout: Optional[str] = None
    public_noise: float = 0.0


@dataclasses.dataclass
class MechanismConfig:
    name: str = "bayesian"
    epsilon: float = 0.1
    delta: float = 1e-5
    S: float = 0.1
    rho: float = 0.1
    C: Optional[float] = None
    T: Optional[float] = None
    sensitivity: str = "brute-force"
    K: int = 50


@dataclasses.dataclass
class TuningConfig:
    eps1: Optional[float] = None
    eps2: Optional[float] = None
    fraction: float = 0.9
    S: Optional[List[float]] = None
    rho: Optional[List[float]] = None
    C1: Optional[float] = None


@dataclasses.dataclass
class EvalConfig:
    kl: bool = True
    perplexity: bool = False
    heldout_sentences: int = 500


@dataclasses.dataclass
class AttackConfig:
    epsilons: List[float] = dataclasses.field(default_factory=lambda: [0.1, 1.0, 5.0, 10.0])
    trials: int = 1000
    mechanisms: List[str] = dataclasses.field(default_factory=lambda: ["bayesian", "laplace"])
    user: Optional[str] = None


@dataclasses.dataclass
class SweepConfig:
    parameter: str = "epsilon"
    values: List[float] = dataclasses.field(default_factory=lambda: [0.05, 0.1, 0.2, 0.5])
    mechanisms: List[str] = dataclasses.field(default_factory=lambda: ["bayesian", "laplace"])
    seeds: int = 10


@dataclasses.dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "out"
    data: DataConfig = dataclasses.field(default_factory=DataConfig)
    mechanism: MechanismConfig = dataclasses.field(default_factory=MechanismConfig)
    tuning: Optional[TuningConfig] = None
    eval: EvalConfig = dataclasses.field(default_factory=EvalConfig)
    attack: Optional[AttackConfig] = None
    sweep: Optional[SweepConfig] = None
    base_dir: str = dataclasses.field(default=".", compare=False, repr=False)

    def resolve(self, path: Optional[str]) -> Optional[str]:
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def to_dict(self) -> Dict[str, Any]:
        out = _to_dict(self)
        out.pop("base_dir", None)
        return out

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def budget_split(self):
        """``(eps1, eps2)`` for tuned runs; the pair must sum to the total epsilon."""
        total = self.mechanism.epsilon
        t = self.tuning or TuningConfig()
        eps1 = total / 3.0 if t.eps1 is None else t.eps1
        eps2 = total - eps1 if t.eps2 is None else t.eps2
        if abs(eps1 + eps2 - total) > 1e-12 * max(1.0, total):
            raise ConfigError(f"eps1 + eps2 = {eps1 + eps2} but total epsilon is {total}",
                              field="tuning")
        return eps1, eps2


def _to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, list):
        return [_to_dict(x) for x in obj]
    return obj


def _strip_optional(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return tp


def _coerce(value, tp, field):
    tp = _strip_optional(tp)
    if value is None:
        return None
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, field + ".")
    origin = typing.get_origin(tp)
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", field=field)
        (item,) = typing.get_args(tp)
        return [_coerce(v, item, f"{field}[{i}]") for i, v in enumerate(value)]
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"expected a number, got {value!r}", field=field)
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"expected a number, got {value!r}", field=field) from None
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", field=field)
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", field=field)
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", field=field)
        return value
    return value


def _from_dict(cls, doc, prefix=""):
    if not isinstance(doc, dict):
        raise ConfigError(f"expected a mapping, got {doc!r}", field=prefix.rstrip(".") or None)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.name != "base_dir"}
    unknown = set(doc) - names
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown field", field=f"{prefix}{key}")
    kwargs = {k: _coerce(v, hints[k], f"{prefix}{k}") for k, v in doc.items()}
    return cls(**kwargs)


def _check(cond, msg, field):
    if not cond:
        raise ConfigError(msg, field=field)


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    d, m = cfg.data, cfg.mechanism
    _check((d.synthetic is None) != (d.counts is None),
           "exactly one of data.synthetic or data.counts is required", "data")
    if d.counts is not None:
        _check(d.vocabulary is not None, "required with data.counts", "data.vocabulary")
        _check(d.public_counts is not None, "required with data.counts",
               "data.public_counts")
    if d.synthetic is not None:
        s = d.synthetic
        for name in ("num_users", "vocab_size", "tokens_per_user"):
            _check(getattr(s, name) > 0, "must be positive", f"data.synthetic.{name}")
        _check(s.zipf_exponent >= 0, "must be >= 0", "data.synthetic.zipf_exponent")
    _check(d.public_noise >= 0, "must be >= 0", "data.public_noise")
    _check(m.name in MECHANISMS, f"must be one of {', '.join(MECHANISMS)}",
           "mechanism.name")
    _check(m.epsilon > 0, "must be positive", "mechanism.epsilon")
    _check(0 < m.delta < 1, "must lie in (0, 1)", "mechanism.delta")
    _check(m.S > 0, "must be positive", "mechanism.S")
    _check(0 < m.rho <= 1, "must lie in (0, 1]", "mechanism.rho")
    _check(m.C is None or m.C >= 1, "must be >= 1", "mechanism.C")
    _check(m.T is None or m.T >= 1, "must be >= 1", "mechanism.T")
    _check(m.K >= 1, "must be >= 1", "mechanism.K")
    _check(m.sensitivity in ("brute-force", "worst-case-bound"),
           "must be brute-force or worst-case-bound", "mechanism.sensitivity")
    if cfg.tuning is not None:
        _check(m.name == "bayesian", "tuning applies to the bayesian mechanism only",
               "tuning")
        _check(0 < cfg.tuning.fraction < 1, "must lie in (0, 1)", "tuning.fraction")
        eps1, eps2 = cfg.budget_split()
        _check(eps1 > 0 and eps2 > 0, "both parts of the budget must be positive",
               "tuning")
    if cfg.attack is not None:
        _check(cfg.attack.trials >= 1, "must be positive", "attack.trials")
        _check(all(e > 0 for e in cfg.attack.epsilons), "must be positive",
               "attack.epsilons")
        for i, name in enumerate(cfg.attack.mechanisms):
            _check(name in ("bayesian", "laplace", "public-noise"),
                   "must be bayesian, laplace or public-noise",
                   f"attack.mechanisms[{i}]")
    if cfg.sweep is not None:
        _check(cfg.sweep.parameter in SWEEP_PARAMETERS,
               f"must be one of {', '.join(SWEEP_PARAMETERS)}", "sweep.parameter")
        _check(len(cfg.sweep.values) > 0, "must not be empty", "sweep.values")
        _check(cfg.sweep.seeds >= 1, "must be positive", "sweep.seeds")
        for i, name in enumerate(cfg.sweep.mechanisms):
            _check(name in MECHANISMS, f"must be one of {', '.join(MECHANISMS)}",
                   f"sweep.mechanisms[{i}]")
        if cfg.sweep.parameter in ("num_users", "vocab_size"):
            _check(d.synthetic is not None, "requires synthetic data", "sweep.parameter")
    return cfg


def config_from_dict(doc: Dict[str, Any], base_dir: str = ".") -> ExperimentConfig:
    cfg = _from_dict(ExperimentConfig, doc or {})
    cfg.base_dir = base_dir
    return validate(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as f:
            doc = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", field="config") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML: {e}", field="config") from None
    return config_from_dict(doc, os.path.dirname(os.path.abspath(path)))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
