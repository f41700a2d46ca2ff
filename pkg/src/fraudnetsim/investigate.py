"""Business-rule flagging and noisy expert investigation of claims."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import ParameterError
from .stochastics import RandomStream

FRAUDULENT = "fraudulent"
NON_FRAUDULENT = "non-fraudulent"
UNINVESTIGATED = "uninvestigated"
EXPERT_LABELS = (FRAUDULENT, NON_FRAUDULENT, UNINVESTIGATED)


@dataclass(frozen=True)
class BusinessRules:
    recency_years: float = 1.0
    single_claim_ratio: float = 0.75
    cumulative_ratio: float = 2.0
    expert_tpr: float = 0.99
    expert_tnr: float = 0.99

    def validate(self):
        errs = []
        if self.recency_years < 0:
            errs.append("recency_years must be >= 0")
        if self.single_claim_ratio <= 0 or self.cumulative_ratio <= 0:
            errs.append("claim-to-value ratios must be > 0")
        for name in ("expert_tpr", "expert_tnr"):
            if not 0 <= getattr(self, name) <= 1:
                errs.append(f"{name} must lie in [0, 1]")
        return errs

    def __post_init__(self):
        errs = self.validate()
        if errs:
            raise ParameterError("; ".join(errs))


def flag_suspicious(claims: pd.DataFrame, rules: BusinessRules = BusinessRules(), detail: bool = False):
    """Flag claims that trip any business rule.

    ``claims`` needs IDPH, ContractID, ClaimDate, ClaimAmount and ValueCar.
    A claim is suspicious when it follows the previous claim on the same
    contract within ``recency_years``, when its amount exceeds
    ``single_claim_ratio * ValueCar``, or when the running total on the
    contract exceeds ``cumulative_ratio * ValueCar``.

    Returns a boolean array aligned with the rows of ``claims``, or a frame
    with one column per rule when ``detail`` is set.
    """
    n = len(claims)
    ph = claims["IDPH"].to_numpy()
    ct = claims["ContractID"].to_numpy()
    date = claims["ClaimDate"].to_numpy(dtype=float)
    amount = claims["ClaimAmount"].to_numpy(dtype=float)
    value = claims["ValueCar"].to_numpy(dtype=float)

    order = np.lexsort((date, ct, ph))
    ph_s, ct_s, d_s, a_s = ph[order], ct[order], date[order], amount[order]
    same = np.zeros(n, dtype=bool)
    if n > 1:
        same[1:] = (ph_s[1:] == ph_s[:-1]) & (ct_s[1:] == ct_s[:-1])
    gap = np.full(n, np.inf)
    if n > 1:
        gap[1:] = d_s[1:] - d_s[:-1]
    recency_s = same & (gap <= rules.recency_years)

    group = np.cumsum(~same) - 1
    csum = np.cumsum(a_s)
    start = np.flatnonzero(~same)
    prior = csum[start] - a_s[start]
    running_s = csum - prior[group]

    recency = np.empty(n, dtype=bool)
    recency[order] = recency_s
    running = np.empty(n)
    running[order] = running_s
    single = amount > rules.single_claim_ratio * value
    cumulative = running > rules.cumulative_ratio * value
    flagged = recency | single | cumulative
    if detail:
        return pd.DataFrame({"recency": recency, "single": single, "cumulative": cumulative, "flagged": flagged})
    return flagged


def expert_judgement(labels, flagged, rules: BusinessRules, stream: RandomStream) -> np.ndarray:
    """Expert label per claim.

    Unflagged claims stay uninvestigated.  A flagged fraud is called
    fraudulent with probability ``expert_tpr``; a flagged non-fraud is called
    fraudulent with probability ``1 - expert_tnr``.  Every claim consumes one
    uniform so the draws do not depend on which claims are flagged.
    """
    y = np.asarray(labels).astype(bool)
    flagged = np.asarray(flagged, dtype=bool)
    u = stream.rng.random(len(y))
    p_fraud = np.where(y, rules.expert_tpr, 1.0 - rules.expert_tnr)
    called = u < p_fraud
    out = np.where(called, FRAUDULENT, NON_FRAUDULENT).astype(object)
    out[~flagged] = UNINVESTIGATED
    return out
