"""Engine configuration: defaults, TOML round trip and whole-config validation."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .claims import ClaimsConfig, ModelSpec, default_frequency_spec, default_severity_spec
from .errors import ConfigError
from .investigate import BusinessRules
from .labeling import LabelingConfig, network_fraud_spec, non_network_fraud_spec
from .network import PARTY_KINDS, PartyPools
from .portfolio import PortfolioConfig

FRAUD_PRESETS = {"network": network_fraud_spec, "non-network": non_network_fraud_spec}


@dataclass
class PartyConfig:
    """Pool sizes; ``None`` means derived from the number of policyholders."""

    garages: Optional[int] = None
    brokers: Optional[int] = None
    experts: Optional[int] = None
    persons: Optional[int] = None
    excluded_kinds: tuple = ("expert",)
    expert_threshold: float = 250.0

    def pools(self, n_ph: int) -> PartyPools:
        d = PartyPools.default(n_ph, self.excluded_kinds)
        return PartyPools(
            garages=d.garages if self.garages is None else self.garages,
            brokers=d.brokers if self.brokers is None else self.brokers,
            experts=d.experts if self.experts is None else self.experts,
            persons=d.persons if self.persons is None else self.persons,
            excluded_kinds=frozenset(self.excluded_kinds),
            expert_threshold=self.expert_threshold,
        )


@dataclass
class EngineConfig:
    n_ph: int = 10_000
    master_seed: int = 1
    fraud_preset: str = "network"
    eval_labels: str = "ground_truth"
    portfolio: PortfolioConfig = field(default_factory=PortfolioConfig)
    claims: ClaimsConfig = field(default_factory=ClaimsConfig)
    parties: PartyConfig = field(default_factory=PartyConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    rules: BusinessRules = field(default_factory=BusinessRules)
    frequency: ModelSpec = field(default_factory=default_frequency_spec)
    severity: ModelSpec = field(default_factory=default_severity_spec)
    fraud: Optional[ModelSpec] = None

    def fraud_spec(self) -> ModelSpec:
        if self.fraud is not None:
            return self.fraud
        return FRAUD_PRESETS[self.fraud_preset]()

    def validate(self):
        errs = []
        if not isinstance(self.n_ph, int) or self.n_ph < 1:
            errs.append("engine.n_ph must be an integer >= 1")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            errs.append("engine.master_seed must be a nonnegative integer")
        if self.fraud is None and self.fraud_preset not in FRAUD_PRESETS:
            errs.append(f"engine.fraud_preset must be one of {sorted(FRAUD_PRESETS)}")
        if self.eval_labels not in ("ground_truth", "expert"):
            errs.append("engine.eval_labels must be 'ground_truth' or 'expert'")
        errs += [f"portfolio: {e}" for e in self.portfolio.validate()]
        errs += [f"claims: {e}" for e in self.claims.validate()]
        errs += [f"labeling: {e}" for e in self.labeling.validate()]
        errs += [f"rules: {e}" for e in self.rules.validate()]
        unknown = set(self.parties.excluded_kinds) - set(PARTY_KINDS)
        if unknown:
            errs.append(f"parties: unknown party kinds {sorted(unknown)}")
        elif isinstance(self.n_ph, int) and self.n_ph >= 1:
            errs += [f"parties: {e}" for e in self.parties.pools(self.n_ph).validate()]
        return errs

    def check(self):
        errs = self.validate()
        if errs:
            raise ConfigError(errs)
        return self

    def replace(self, **kw) -> "EngineConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        out = {
            "engine": {
                "n_ph": self.n_ph,
                "master_seed": self.master_seed,
                "fraud_preset": self.fraud_preset,
                "eval_labels": self.eval_labels,
            },
            "portfolio": _section(self.portfolio),
            "claims": _section(self.claims),
            "parties": _section(self.parties),
            "labeling": _section(self.labeling),
            "rules": _section(self.rules),
            "models": {"frequency": _spec_to_dict(self.frequency), "severity": _spec_to_dict(self.severity)},
        }
        if self.fraud is not None:
            out["models"]["fraud"] = _spec_to_dict(self.fraud)
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def dump(self, path):
        Path(path).write_text(self.dumps())

    def content_hash(self, include_seed: bool = False) -> str:
        d = self.to_dict()
        if not include_seed:
            d["engine"].pop("master_seed")
        return hashlib.sha256(tomli_w.dumps(d).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        errs = []
        known = {"engine", "portfolio", "claims", "parties", "labeling", "rules", "models"}
        errs += [f"unknown section [{k}]" for k in data if k not in known]
        kw = {}
        eng = dict(data.get("engine", {}))
        for key in ("n_ph", "master_seed", "fraud_preset", "eval_labels"):
            if key in eng:
                kw[key] = eng.pop(key)
        errs += [f"engine: unknown key {k!r}" for k in eng]
        for name, typ in (("portfolio", PortfolioConfig), ("claims", ClaimsConfig), ("parties", PartyConfig),
                          ("labeling", LabelingConfig), ("rules", BusinessRules)):
            obj, e = _load_section(typ, data.get(name, {}), name)
            errs += e
            if obj is not None:
                kw[name] = obj
        models = dict(data.get("models", {}))
        for name in ("frequency", "severity", "fraud"):
            if name in models:
                try:
                    kw[name] = _spec_from_dict(models.pop(name))
                except (KeyError, TypeError, ValueError) as exc:
                    errs.append(f"models.{name}: {exc}")
        errs += [f"models: unknown model {k!r}" for k in models]
        # sections that failed to build fall back to defaults so the rest still gets validated
        try:
            errs += cls(**kw).validate()
        except (TypeError, ValueError) as exc:
            errs.append(str(exc))
        if errs:
            raise ConfigError(errs)
        return cls(**kw)

    @classmethod
    def loads(cls, text: str) -> "EngineConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"malformed config: {exc}"]) from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "EngineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc}"]) from exc
        return cls.loads(text)


def _plain(v):
    if isinstance(v, (tuple, list, frozenset, set)):
        return [_plain(x) for x in (sorted(v) if isinstance(v, (set, frozenset)) else v)]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if hasattr(v, "item"):
        return v.item()
    return v


def _section(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if v is not None:
            out[f.name] = _plain(v)
    return out


def _load_section(typ, values: dict, name: str):
    names = {f.name: f for f in dataclasses.fields(typ)}
    errs = [f"{name}: unknown key {k!r}" for k in values if k not in names]
    kw = {}
    for k, v in values.items():
        if k not in names:
            continue
        default = getattr(typ(), k) if k != "n_ph" else None
        if isinstance(default, tuple) and isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        kw[k] = v
    if errs:
        return None, errs
    try:
        return typ(**kw), []
    except (TypeError, ValueError) as exc:
        return None, [f"{name}: {exc}"]


def _spec_to_dict(spec: ModelSpec) -> dict:
    d = {"intercept": float(spec.intercept)}
    if spec.offset_feature:
        d["offset"] = spec.offset_feature
    d["terms"] = [[f, "" if lvl is None else str(lvl), float(c)] for f, lvl, c in spec.to_triples()]
    return d


def _spec_from_dict(d: dict) -> ModelSpec:
    extra = set(d) - {"intercept", "offset", "terms"}
    if extra:
        raise KeyError(f"unknown keys {sorted(extra)}")
    triples = []
    for t in d.get("terms", []):
        if len(t) != 3:
            raise ValueError(f"term {t!r} is not a (feature, level, coefficient) triple")
        f, lvl, c = t
        triples.append((str(f), None if lvl in ("", None) else lvl, float(c)))
    return ModelSpec.from_triples(float(d.get("intercept", 0.0)), triples, offset_feature=d.get("offset"))
