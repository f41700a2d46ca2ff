"""Policyholder and contract generation (pipeline steps 1 and 2)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DegenerateInputError, ParameterError
from .featurize import normalize_or_zero, normalize_signed_unit
from .stochastics import (
    CopulaSpec,
    Exponential,
    Normal,
    Poisson,
    RandomStream,
    copula_conditional_inverse,
    couple_feature,
)

GENDERS = ("female", "male", "non-binary")
COVERAGES = ("TPL", "PO", "FO")
FUELS = ("gasoline_lpg_other", "diesel")

# rows: TPL, PO, FO; columns: ValueCar, AgeCar, AgePH (normalised)
COVERAGE_COEFS = np.log(
    np.array(
        [
            [0.50, 1.25, 0.25],
            [1.25, 0.75, 1.05],
            [1.50, 0.75, 1.25],
        ]
    )
)


@dataclass(frozen=True)
class RangePolicy:
    """Admissible range and how out-of-range values are brought back in.

    ``max`` may be an array for per-element upper bounds (``redraw_uniform``).
    """

    min: float
    max: object
    strategy: str = "clamp"

    def __post_init__(self):
        if self.strategy not in ("redistribute_integer", "redraw_uniform", "clamp"):
            raise ParameterError(f"unknown range strategy {self.strategy!r}")
        hi = np.asarray(self.max, dtype=float)
        if hi.ndim == 0 and not self.min < hi:
            raise ParameterError("RangePolicy requires min < max")
        if hi.ndim > 0 and np.any(hi < self.min):
            raise ParameterError("RangePolicy requires min <= max elementwise")


def apply_range_policy(values, policy: RangePolicy, stream: RandomStream):
    """Force ``values`` into ``[policy.min, policy.max]``."""
    x = np.array(values, dtype=float)
    lo, hi = policy.min, np.broadcast_to(np.asarray(policy.max, dtype=float), x.shape)
    outside = (x < lo) | (x > hi)
    if policy.strategy == "clamp":
        return np.clip(x, lo, hi)
    if not outside.any():
        return x
    if policy.strategy == "redraw_uniform":
        x[outside] = stream.rng.uniform(lo, hi[outside])
        return x
    inside = x[~outside]
    if inside.size == 0:
        raise DegenerateInputError("no in-range values to redistribute over")
    top = float(hi.flat[0])
    # integers k with k + U(0, 1) still inside the range
    ints = np.minimum(np.floor(inside), np.ceil(top) - 1).astype(np.int64)
    levels, counts = np.unique(ints, return_counts=True)
    picks = stream.rng.choice(levels, size=int(outside.sum()), p=counts / counts.sum())
    x[outside] = picks + stream.rng.random(picks.size)
    return x


@dataclass
class PortfolioConfig:
    age_mean: float = 40.0
    age_sd: float = 15.0
    min_age: float = 18.0
    max_age: float = 80.0
    exposure_mean: float = 5.0
    exposure_sd: float = 1.5
    min_exposure: float = 0.0
    max_exposure: float = 20.0
    gender_thresholds: tuple = (0.28, 0.29)
    min_contracts: int = 1
    max_contracts: int = 5
    contract_rate_coefs: tuple = (0.25, 1.05, -2.5e-6, 0.0025, -2.65e-5)
    theta_age_gender: float = -0.15
    theta_age_exposure: float = 0.15
    theta_age_contracts: float = 0.95
    theta_agecar_value: float = -25.0
    car_age_mean: float = 7.5
    car_age_sd: float = float(np.sqrt(5.0))
    value_scale: dict = field(
        default_factory=lambda: {"male": 25_000.0, "female": 20_000.0, "non-binary": 22_500.0}
    )
    depreciation_threshold: float = 30_000.0
    depreciation_low_value: float = 0.15
    depreciation_high_value: float = 0.075
    diesel_prob: float = 0.3
    bonus_malus_shape: float = 1.0
    bonus_malus_rate: float = 1.0 / 3.0
    bonus_malus_max: int = 22

    def validate(self):
        errs = []
        if not self.min_age < self.max_age:
            errs.append("min_age must be < max_age")
        if not self.min_exposure < self.max_exposure:
            errs.append("min_exposure must be < max_exposure")
        if not 1 <= self.min_contracts <= self.max_contracts:
            errs.append("contract range must satisfy 1 <= min <= max")
        lo, hi = self.gender_thresholds
        if not 0 <= lo <= hi <= 1:
            errs.append("gender thresholds must satisfy 0 <= lo <= hi <= 1")
        if self.age_sd <= 0 or self.exposure_sd <= 0 or self.car_age_sd <= 0:
            errs.append("standard deviations must be > 0")
        if not 0 <= self.diesel_prob <= 1:
            errs.append("diesel_prob must lie in [0, 1]")
        for name in ("theta_age_gender", "theta_age_exposure", "theta_age_contracts"):
            if not -1 <= getattr(self, name) < 1:
                errs.append(f"{name} must lie in [-1, 1) for the AMH copula")
        if self.theta_agecar_value == 0:
            errs.append("theta_agecar_value must be nonzero for the Frank copula")
        return errs


def contract_rate(age, coefs=PortfolioConfig.contract_rate_coefs):
    """Poisson rate for the number of contracts, a cubic in policyholder age."""
    scale, c0, c1, c2, c3 = coefs
    age = np.asarray(age, dtype=float)
    return scale * (c0 + c1 * age + c2 * age**2 + c3 * age**3)


def gender_from_uniform(u, thresholds=(0.28, 0.29)):
    lo, hi = thresholds
    u = np.asarray(u)
    return np.where(u <= lo, "female", np.where(u <= hi, "non-binary", "male"))


def _coupled_uniform(existing, theta, stream):
    from scipy.stats import rankdata

    u = rankdata(existing) / (len(existing) + 1.0)
    w = stream.rng.random(len(existing))
    if theta == 0:
        return w
    return copula_conditional_inverse(CopulaSpec("AMH", theta), u, w)


def generate_policyholders(n_ph: int, config: PortfolioConfig, stream: RandomStream) -> pd.DataFrame:
    """Simulate ``n_ph`` policyholders.

    Columns: IDPH, AgePH, GenderPH, ExpPH, RateNrContracts, NrContractsPH.
    """
    errs = config.validate()
    if n_ph < 1:
        errs.append("n_ph must be >= 1")
    if errs:
        raise ConfigError(errs)

    age = Normal(config.age_mean, config.age_sd).sample(stream.child("AgePH"), n_ph)
    age = apply_range_policy(
        age,
        RangePolicy(config.min_age, config.max_age, "redistribute_integer"),
        stream.child("AgePH.range"),
    )

    gender_u = _coupled_uniform(age, config.theta_age_gender, stream.child("GenderPH"))
    gender = gender_from_uniform(gender_u, config.gender_thresholds)

    exposure = couple_feature(
        age,
        Normal(config.exposure_mean, config.exposure_sd),
        CopulaSpec("AMH", config.theta_age_exposure),
        stream.child("ExpPH"),
    )
    max_exp = np.minimum(config.max_exposure, age - config.min_age)
    exposure = apply_range_policy(
        exposure,
        RangePolicy(config.min_exposure, max_exp, "redraw_uniform"),
        stream.child("ExpPH.range"),
    )

    rate = contract_rate(age, config.contract_rate_coefs)
    q = _coupled_uniform(age, config.theta_age_contracts, stream.child("NrContractsPH"))
    n_contracts = Poisson(np.maximum(rate, 0.0)).ppf(q)
    n_contracts = apply_range_policy(
        n_contracts, RangePolicy(config.min_contracts, config.max_contracts, "clamp"), stream
    ).astype(np.int64)

    return pd.DataFrame(
        {
            "IDPH": np.arange(1, n_ph + 1),
            "AgePH": age,
            "GenderPH": gender,
            "ExpPH": exposure,
            "RateNrContracts": rate,
            "NrContractsPH": n_contracts,
        }
    )


def depreciated_value(orig_value, age_car, threshold=30_000.0, low=0.15, high=0.075):
    orig_value = np.asarray(orig_value, dtype=float)
    delta = np.where(orig_value < threshold, low, high)
    return orig_value * (1.0 - delta) ** np.asarray(age_car, dtype=float)


def coverage_probabilities(value_car, age_car, age_ph):
    """Softmax of the three coverage scores; inputs already on ``[-1, 1]``."""
    x = np.column_stack(
        [np.atleast_1d(value_car), np.atleast_1d(age_car), np.atleast_1d(age_ph)]
    ).astype(float)
    scores = x @ COVERAGE_COEFS.T
    scores -= scores.max(axis=1, keepdims=True)
    p = np.exp(scores)
    return p / p.sum(axis=1, keepdims=True)


def simulate_coverage(value_car, age_car, age_ph, stream: RandomStream):
    """Draw a coverage type per row; inputs already normalised to ``[-1, 1]``."""
    p = coverage_probabilities(value_car, age_car, age_ph)
    cdf = np.cumsum(p, axis=1)
    cdf[:, -1] = 1.0
    u = stream.rng.random(len(p))
    idx = (u[:, None] > cdf).sum(axis=1)
    return np.asarray(COVERAGES)[idx]


def generate_contracts(policyholders: pd.DataFrame, config: PortfolioConfig, stream: RandomStream) -> pd.DataFrame:
    """Simulate the contracts of every policyholder.

    Coverage needs portfolio-wide normalisation constants, so all contracts are
    generated together.  One row per contract, carrying the policyholder
    attributes alongside ``ContractID`` (1-based within the policyholder).
    """
    ph = policyholders
    n_per = ph["NrContractsPH"].to_numpy()
    owner = np.repeat(np.arange(len(ph)), n_per)
    starts = np.repeat(np.cumsum(n_per) - n_per, n_per)
    contract_id = np.arange(len(owner)) - starts + 1

    w_i = ph["ExpPH"].to_numpy()[owner]
    multi = n_per[owner] > 1
    shave = stream.child("ExpPHContracts").rng.uniform(0.0, 1.0, len(owner)) * w_i / 2.0
    exposure = np.where(multi, w_i - shave, w_i)

    age_car = Normal(config.car_age_mean, config.car_age_sd).sample(stream.child("AgeCar"), len(owner))
    age_car = np.maximum(age_car, exposure)

    rate = ph["RateNrContracts"].to_numpy()[owner] / n_per[owner]
    scale = ph["GenderPH"].map(config.value_scale).to_numpy(dtype=float)[owner]
    orig = couple_feature(
        age_car,
        Exponential(rate),
        CopulaSpec("FRANK", config.theta_agecar_value),
        stream.child("OrigValueCar"),
    ) * scale
    value = depreciated_value(
        orig,
        age_car,
        config.depreciation_threshold,
        config.depreciation_low_value,
        config.depreciation_high_value,
    )

    diesel = stream.child("Fuel").rng.random(len(owner)) < config.diesel_prob
    bm = np.floor(
        stream.child("BonusMalus").rng.gamma(config.bonus_malus_shape, 1.0 / config.bonus_malus_rate, len(owner))
    )
    bm = np.minimum(bm, config.bonus_malus_max).astype(np.int64)

    age_ph = ph["AgePH"].to_numpy()[owner]
    norm = [normalize_or_zero(v) for v in (value, age_car, age_ph)]
    coverage = simulate_coverage(*norm, stream.child("Coverage"))

    out = ph.iloc[owner].reset_index(drop=True)
    out.insert(1, "ContractID", contract_id)
    out["ExpPHContracts"] = exposure
    out["AgeCar"] = age_car
    out["OrigValueCar"] = orig
    out["ValueCar"] = value
    out["Coverage"] = coverage
    out["Fuel"] = np.where(diesel, FUELS[1], FUELS[0])
    out["BonusMalus"] = bm
    return out
