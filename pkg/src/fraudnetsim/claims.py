"""Claim counts, claim severities and claim-level attributes (steps 3 and 4)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from .errors import ParameterError, SchemaError
from .stochastics import Categorical, RandomStream

log = np.log


@dataclass(frozen=True)
class BinningRule:
    """Cut a continuous feature into labelled intervals.

    ``closed="right"`` gives ``[e0, e1]; (e1, e2]; ...`` and ``closed="left"``
    gives ``[e0, e1); [e1, e2); ...; [e_{n-1}, e_n]``.  Values outside the outer
    edges fall into the nearest extreme bin.
    """

    feature: str
    edges: tuple
    closed: str = "right"
    top_label: Optional[str] = None

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if len(e) < 2 or np.any(np.diff(e) <= 0):
            raise ParameterError("bin edges must be strictly increasing")
        if self.closed not in ("left", "right"):
            raise ParameterError("closed must be 'left' or 'right'")

    @property
    def labels(self):
        e = [_fmt(x) for x in self.edges]
        n = len(e) - 1
        out = []
        for i in range(n):
            hi = self.top_label if (i == n - 1 and self.top_label) else e[i + 1]
            if self.closed == "right":
                out.append(f"[{e[i]},{hi}]" if i == 0 else f"({e[i]},{hi}]")
            else:
                out.append(f"[{e[i]},{hi}]" if i == n - 1 else f"[{e[i]},{hi})")
        return out

    def index(self, values):
        inner = np.asarray(self.edges[1:-1], dtype=float)
        side = "left" if self.closed == "right" else "right"
        return np.searchsorted(inner, np.asarray(values, dtype=float), side=side)

    def apply(self, values):
        return np.asarray(self.labels, dtype=object)[self.index(values)]


def _fmt(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def bin_feature(value, rule: BinningRule) -> str:
    return str(rule.apply([value])[0])


AGEPH_BINS = BinningRule("AgePH", (18, 26, 30, 36, 50, 60, 65, 70, 80), "right")
AGECAR_BINS = BinningRule("AgeCar", (0, 5, 10, 20, 1e9), "right", top_label="max")
BONUSMALUS_BINS = BinningRule("BonusMalus", (0, 1, 2, 3, 7, 9, 11, 22), "left")
DEFAULT_BINS = {"AgePHBin": AGEPH_BINS, "AgeCarBin": AGECAR_BINS, "BonusMalusBin": BONUSMALUS_BINS}


@dataclass(frozen=True)
class Term:
    feature: str
    level: Optional[str]
    coef: float


@dataclass
class ModelSpec:
    """Intercept plus additive terms of a GLM linear predictor.

    A term with ``level`` set is an indicator ``feature == level``; a term with
    ``level=None`` multiplies the (numeric) feature.  Reference levels are
    simply absent.
    """

    intercept: float = 0.0
    terms: list = field(default_factory=list)
    offset_feature: Optional[str] = None

    @classmethod
    def from_triples(cls, intercept, triples: Sequence, offset_feature=None):
        terms = [Term(f, None if lvl in (None, "") else lvl, float(c)) for f, lvl, c in triples]
        return cls(float(intercept), terms, offset_feature)

    def to_triples(self):
        return [[t.feature, t.level or "", t.coef] for t in self.terms]

    @property
    def features(self):
        return sorted({t.feature for t in self.terms})

    def without(self, features) -> "ModelSpec":
        drop = set(features)
        return ModelSpec(self.intercept, [t for t in self.terms if t.feature not in drop], self.offset_feature)

    def with_intercept(self, intercept) -> "ModelSpec":
        return ModelSpec(float(intercept), list(self.terms), self.offset_feature)

    def coef(self, feature, level=None):
        for t in self.terms:
            if t.feature == feature and t.level == level:
                return t.coef
        return 0.0


def linear_predictor(spec: ModelSpec, record) -> np.ndarray:
    """Evaluate ``intercept + sum(term contributions)``.

    ``record`` is a mapping or DataFrame; scalars in a mapping give a 0-d
    result, columns give one value per row.
    """
    eta = spec.intercept
    for t in spec.terms:
        try:
            col = record[t.feature]
        except KeyError as exc:
            raise SchemaError(f"feature {t.feature!r} missing from record") from exc
        col = np.asarray(col)
        if t.level is None:
            eta = eta + t.coef * col.astype(float)
        else:
            eta = eta + t.coef * (col == t.level)
    return np.asarray(eta, dtype=float)


def default_frequency_spec() -> ModelSpec:
    return ModelSpec.from_triples(
        -2.18,
        [
            ("AgePHBin", "(26,30]", log(0.85)),
            ("AgePHBin", "(30,36]", log(0.75)),
            ("AgePHBin", "(36,50]", log(0.70)),
            ("AgePHBin", "(50,60]", log(0.60)),
            ("AgePHBin", "(60,65]", log(0.55)),
            ("AgePHBin", "(65,70]", log(0.60)),
            ("AgePHBin", "(70,80]", log(0.70)),
            ("Coverage", "PO", -0.12),
            ("Coverage", "FO", -0.11),
            ("AgeCarBin", "(5,10]", log(0.90)),
            ("AgeCarBin", "(10,20]", log(0.80)),
            ("AgeCarBin", "(20,max]", log(0.60)),
            ("Fuel", "diesel", log(1.19)),
            ("BonusMalusBin", "[1,2)", 0.12),
            ("BonusMalusBin", "[2,3)", 0.18),
            ("BonusMalusBin", "[3,7)", 0.34),
            ("BonusMalusBin", "[7,9)", 0.48),
            ("BonusMalusBin", "[9,11)", 0.54),
            ("BonusMalusBin", "[11,22]", 0.78),
        ],
        offset_feature="ExpPHContracts",
    )


def default_severity_spec() -> ModelSpec:
    return ModelSpec.from_triples(
        6.06,
        [
            ("AgePHBin", "(26,30]", log(0.85)),
            ("AgePHBin", "(30,36]", log(0.75)),
            ("AgePHBin", "(36,50]", log(0.85)),
            ("AgePHBin", "(50,60]", log(0.85)),
            ("AgePHBin", "(60,65]", log(1.15)),
            ("AgePHBin", "(65,70]", log(1.25)),
            ("AgePHBin", "(70,80]", log(1.50)),
            ("Coverage", "PO", -0.16),
            ("Coverage", "FO", 0.11),
            ("BonusMalusBin", "[1,2)", 0.10),
            ("BonusMalusBin", "[2,3)", 0.15),
            ("BonusMalusBin", "[3,7)", 0.15),
            ("BonusMalusBin", "[7,9)", 0.15),
            ("BonusMalusBin", "[9,11)", 0.20),
            ("BonusMalusBin", "[11,22]", 0.30),
        ],
    )


@dataclass
class ClaimsConfig:
    severity_shape: float = 0.25
    zeta: float = 0.0
    min_amount: float = 50.0
    floor_low: float = 50.0
    floor_high: float = 150.0
    claim_age_rate: float = 0.25
    police_prob: float = 0.25
    n_persons_values: tuple = (0, 1, 2, 3, 4, 5)
    n_persons_probs: tuple = (0.025, 0.6, 0.2, 0.1, 0.1, 0.025)

    def validate(self):
        errs = []
        if self.severity_shape <= 0:
            errs.append("severity_shape must be > 0")
        if self.claim_age_rate <= 0:
            errs.append("claim_age_rate must be > 0")
        if not 0 <= self.police_prob <= 1:
            errs.append("police_prob must lie in [0, 1]")
        if not self.floor_low <= self.floor_high:
            errs.append("floor_low must be <= floor_high")
        if len(self.n_persons_values) != len(self.n_persons_probs):
            errs.append("n_persons values/probs length mismatch")
        elif any(p < 0 for p in self.n_persons_probs) or sum(self.n_persons_probs) <= 0:
            errs.append("n_persons probabilities must be nonnegative with positive sum")
        return errs


def add_bins(contracts: pd.DataFrame, bins: Mapping = DEFAULT_BINS) -> pd.DataFrame:
    out = contracts.copy()
    for name, rule in bins.items():
        out[name] = rule.apply(out[rule.feature].to_numpy())
    return out


def simulate_claim_counts(contracts: pd.DataFrame, spec: ModelSpec, stream: RandomStream) -> np.ndarray:
    """Poisson claim counts with mean ``exposure * exp(eta)`` per contract."""
    eta = linear_predictor(spec, contracts)
    offset = contracts[spec.offset_feature].to_numpy(dtype=float) if spec.offset_feature else 1.0
    if np.any(np.asarray(offset) <= 0):
        raise ParameterError("contract exposure must be > 0")
    return stream.rng.poisson(offset * np.exp(eta))


def simulate_claim_amounts(eta, n_claims, config: ClaimsConfig, stream: RandomStream):
    """Gamma severities with mean ``exp(eta + N * zeta)`` and shape ``alpha``.

    Draws under ``config.min_amount`` are replaced by ``U(floor_low, floor_high)``.
    Returns ``(amounts, raw_draws)``.
    """
    eta = np.asarray(eta, dtype=float)
    mean = np.exp(eta + np.asarray(n_claims) * config.zeta)
    alpha = config.severity_shape
    raw = stream.child("gamma").rng.gamma(alpha, mean / alpha)
    low = raw < config.min_amount
    amounts = raw.copy()
    amounts[low] = stream.child("floor").rng.uniform(config.floor_low, config.floor_high, int(low.sum()))
    return amounts, raw


def generate_claim_attributes(exposure, config: ClaimsConfig, stream: RandomStream) -> pd.DataFrame:
    """ClaimAge, ClaimDate, Police and nPersons for claims with the given contract exposures."""
    w = np.asarray(exposure, dtype=float)
    n = len(w)
    raw_age = np.floor(stream.child("ClaimAge").rng.exponential(1.0 / config.claim_age_rate, n))
    claim_age = np.minimum(raw_age, np.floor(w * 12.0)).astype(np.int64)
    date = np.maximum(stream.child("ClaimDate").rng.uniform(0.0, 1.0, n) * w, claim_age / 12.0)
    police = (stream.child("Police").rng.random(n) < config.police_prob).astype(np.int64)
    persons = Categorical(
        tuple(config.n_persons_values), tuple(config.n_persons_probs), normalize=True
    ).sample(stream.child("nPersons"), n)
    return pd.DataFrame(
        {"ClaimAge": claim_age, "ClaimDate": date, "Police": police, "nPersons": persons.astype(np.int64)}
    )


def simulate_claims(
    contracts: pd.DataFrame,
    frequency: ModelSpec,
    severity: ModelSpec,
    config: ClaimsConfig,
    stream: RandomStream,
):
    """Run steps 3 and 4.

    Returns ``(contracts, claims)``: the contracts with ``NrClaims`` and bin
    columns added, and one row per claim ordered by policyholder, contract and
    ClaimDate.  Only contracts with at least one claim contribute rows.
    """
    contracts = add_bins(contracts)
    counts = simulate_claim_counts(contracts, frequency, stream.child("frequency"))
    contracts["NrClaims"] = counts
    row = np.repeat(np.arange(len(contracts)), counts)
    base = contracts.iloc[row].reset_index(drop=True)

    attrs = generate_claim_attributes(base["ExpPHContracts"].to_numpy(), config, stream.child("attributes"))
    eta = linear_predictor(severity, base)
    amount, _ = simulate_claim_amounts(eta, counts[row], config, stream.child("severity"))

    claims = pd.DataFrame(
        {
            "IDPH": base["IDPH"].to_numpy(),
            "ContractID": base["ContractID"].to_numpy(),
            "ClaimAmount": amount,
        }
    )
    claims = pd.concat([claims, attrs], axis=1)
    order = np.lexsort((claims["ClaimDate"].to_numpy(), claims["ContractID"].to_numpy(), claims["IDPH"].to_numpy()))
    claims = claims.iloc[order].reset_index(drop=True)
    claims.insert(0, "ClaimID", np.arange(1, len(claims) + 1))
    claims.insert(3, "ClaimNr", claims.groupby(["IDPH", "ContractID"]).cumcount().to_numpy() + 1)
    return contracts, claims
