"""Ground-truth fraud labels: iterative propagation and prevalence calibration.

Labels are generated batch by batch.  A small random batch is labeled first
from the non-network part of the fraud model; every later batch combines a
random draw of unlabeled claims with the unlabeled second-order neighbours of
the frauds found in the previous batch, and is labeled with the full model
using network features computed from the labels known at that point.

Each claim owns one uniform ``u`` and is fraudulent iff ``u < pi``.  The
batches follow one fixed random permutation.  Holding both fixed across
intercept probes (common random numbers) keeps the achieved prevalence close
to monotone in the intercept, which is what the bisection relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
from scipy.special import expit

from .claims import ModelSpec, linear_predictor
from .errors import CalibrationError, ParameterError, PipelineOrderError
from .featurize import (
    FEATURE_NAMES,
    FRAUD,
    LABEL_DEPENDENT,
    NONFRAUD,
    SCORE_FEATURES,
    UNLABELED,
    compute_features,
    neighborhood_table,
    normalize_or_zero,
)
from .network import BipartiteGraph, birank
from .stochastics import RandomStream

DEFAULT_NORMALIZED = (
    "ClaimAmount", "ClaimAge", "AgePH", "n1.size", "n2.size", "n2.ratioFraud", "n2.ratioNonFraud",
) + SCORE_FEATURES


def network_fraud_spec(intercept: float = 0.0) -> ModelSpec:
    return ModelSpec.from_triples(
        intercept,
        [
            ("AgePH", None, -2.00),
            ("NrContractsPH", None, -1.50),
            ("ClaimAmount", None, 0.20),
            ("ClaimAge", None, -0.35),
            ("n1.size", None, 2.00),
            ("n2.size", None, -2.00),
            ("n2.ratioFraud", None, 3.00),
        ],
    )


def non_network_fraud_spec(intercept: float = 0.0) -> ModelSpec:
    return network_fraud_spec(intercept).without(FEATURE_NAMES)


@dataclass
class LabelingConfig:
    init_fraction: float = 0.01
    batch_fraction: float = 0.10
    alpha: float = 0.85
    normalized: tuple = DEFAULT_NORMALIZED
    target_prevalence: float = 0.01
    intercept_bounds: tuple = (-15.0, 5.0)
    tolerance: float = 0.0005
    max_steps: int = 40
    # "subset": normalise over each batch being labeled; "global": over all claims
    normalize_scope: str = "subset"

    def validate(self):
        errs = []
        if self.normalize_scope not in ("subset", "global"):
            errs.append("normalize_scope must be 'subset' or 'global'")
        if not 0 < self.init_fraction <= 1:
            errs.append("init_fraction must lie in (0, 1]")
        if not 0 < self.batch_fraction <= 1:
            errs.append("batch_fraction must lie in (0, 1]")
        if not 0 <= self.alpha <= 1:
            errs.append("alpha must lie in [0, 1]")
        if not 0 < self.target_prevalence < 0.5:
            errs.append("target_prevalence must lie in (0, 0.5)")
        lo, hi = self.intercept_bounds
        if not lo < hi:
            errs.append("intercept_bounds must be increasing")
        if self.tolerance <= 0 or self.max_steps < 1:
            errs.append("calibration tolerance must be > 0 and max_steps >= 1")
        return errs


@dataclass(frozen=True)
class ImbalanceTarget:
    p_t: float
    bounds: tuple = (-15.0, 5.0)
    tolerance: float = 0.0005
    max_steps: int = 40

    def __post_init__(self):
        if not 0 < self.p_t < 0.5:
            raise ParameterError("target prevalence must lie in (0, 0.5)")
        if not self.bounds[0] < self.bounds[1]:
            raise ParameterError("search interval must be increasing")


@dataclass
class LabelState:
    labels: np.ndarray
    iteration: np.ndarray
    n_iterations: int
    batch_sizes: list = field(default_factory=list)
    frontier_sizes: list = field(default_factory=list)
    intercept: Optional[float] = None

    @property
    def prevalence(self) -> float:
        known = self.labels != UNLABELED
        return float((self.labels[known] == FRAUD).mean()) if known.any() else float("nan")

    @property
    def n_fraud(self) -> int:
        return int((self.labels == FRAUD).sum())


def label_batch(features: pd.DataFrame, spec: ModelSpec, uniforms, normalized=DEFAULT_NORMALIZED,
                tol: float = 1e-9):
    """Bernoulli labels ``u < logistic(eta)`` for the rows of ``features``.

    Returns ``(labels, pi)``.
    """
    for name in spec.features:
        if name in normalized and name in features:
            col = features[name].to_numpy(dtype=float)
            if col.size and (col.min() < -1 - tol or col.max() > 1 + tol):
                raise PipelineOrderError(f"{name} is not normalised to [-1, 1]")
    pi = expit(linear_predictor(spec, features))
    labels = np.where(np.asarray(uniforms) < pi, FRAUD, NONFRAUD).astype(np.int8)
    return labels, pi


def static_design(graph: BipartiteGraph, covariates: pd.DataFrame, spec: ModelSpec,
                  normalized=DEFAULT_NORMALIZED) -> pd.DataFrame:
    """Label-independent model inputs for every claim.

    Columns named in ``normalized`` are mapped to ``[-1, 1]`` over all claims;
    pass ``normalized=()`` for raw values.
    """
    out = {}
    wanted = [f for f in spec.features if f not in LABEL_DEPENDENT]
    net = None
    for name in wanted:
        if name in ("n1.size", "n2.size"):
            if net is None:
                net = neighborhood_table(graph, np.full(graph.n_claims, UNLABELED), np.arange(graph.n_claims))
            col = net[name].to_numpy(dtype=float)
        elif name in covariates:
            col = covariates[name].to_numpy()
        else:
            continue
        out[name] = normalize_or_zero(col) if name in normalized else col
    return pd.DataFrame(out, index=pd.RangeIndex(graph.n_claims))


def _dynamic_design(graph, labels, rows, spec, normalized, alpha):
    wanted = [f for f in spec.features if f in LABEL_DEPENDENT]
    if not wanted:
        return pd.DataFrame(index=pd.RangeIndex(len(rows)))
    scores = None
    if any(f in SCORE_FEATURES for f in wanted):
        scores = birank(graph, (labels == FRAUD).astype(float), alpha=alpha)
    feats = compute_features(graph, labels, scores, rows)
    out = {}
    for name in wanted:
        col = feats[name].to_numpy(dtype=float)
        out[name] = normalize_or_zero(col) if name in normalized else col
    return pd.DataFrame(out)


def _static_for(graph, covariates, spec, config):
    scope_all = config.normalize_scope == "global"
    return static_design(graph, covariates, spec, config.normalized if scope_all else ())


def _batch_static(static, rows, config):
    out = static.iloc[rows].reset_index(drop=True)
    if config.normalize_scope == "subset":
        for name in out.columns:
            if name in config.normalized:
                out[name] = normalize_or_zero(out[name].to_numpy(dtype=float))
    return out


def run_label_algorithm(graph: BipartiteGraph, covariates: pd.DataFrame, spec: ModelSpec,
                        config: LabelingConfig, stream: RandomStream, static: Optional[pd.DataFrame] = None) -> LabelState:
    """Label every claim by iterative fraud propagation."""
    n = graph.n_claims
    labels = np.full(n, UNLABELED, dtype=np.int8)
    iteration = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return LabelState(labels, iteration, 0, intercept=spec.intercept)
    u = stream.child("bernoulli").rng.random(n)
    order = stream.child("subset").rng.permutation(n)
    if static is None:
        static = _static_for(graph, covariates, spec, config)
    reduced = spec.without(FEATURE_NAMES)
    P = graph.projection

    first = order[: max(1, int(round(config.init_fraction * n)))]
    lab, _ = label_batch(_batch_static(static, first, config), reduced, u[first], config.normalized)
    labels[first] = lab
    iteration[first] = 0
    new_fraud = first[lab == FRAUD]
    batch_sizes, frontier_sizes = [len(first)], [0]

    batch = max(1, int(round(config.batch_fraction * n)))
    t = 0
    while True:
        remaining = order[labels[order] == UNLABELED]
        if remaining.size == 0:
            break
        t += 1
        if new_fraud.size:
            nb = np.unique(P[new_fraud].indices)
            frontier = nb[labels[nb] == UNLABELED]
        else:
            frontier = np.array([], dtype=np.int64)
        rows = np.union1d(remaining[:batch], frontier)
        dyn = _dynamic_design(graph, labels, rows, spec, config.normalized, config.alpha)
        design = pd.concat([_batch_static(static, rows, config), dyn], axis=1)
        lab, _ = label_batch(design, spec, u[rows], config.normalized)
        labels[rows] = lab
        iteration[rows] = t
        new_fraud = rows[lab == FRAUD]
        batch_sizes.append(len(rows))
        frontier_sizes.append(len(frontier))
    return LabelState(labels, iteration, t + 1, batch_sizes, frontier_sizes, spec.intercept)


@dataclass
class CalibrationResult:
    intercept: float
    achieved: float
    state: LabelState
    probes: list


def calibrate_intercept(graph: BipartiteGraph, covariates: pd.DataFrame, spec: ModelSpec,
                        target: ImbalanceTarget, config: LabelingConfig, stream: RandomStream) -> CalibrationResult:
    """Bisection on the fraud-model intercept to reach prevalence ``target.p_t``.

    Every probe reruns the full labeling with the same stream, so the objective
    is deterministic.  The probe closest to the target is returned.
    """
    static = _static_for(graph, covariates, spec, config)
    probes = []
    best = None

    def probe(b):
        nonlocal best
        state = run_label_algorithm(graph, covariates, spec.with_intercept(b), config, stream, static)
        p = state.prevalence
        probes.append((b, p))
        if best is None or abs(p - target.p_t) < abs(best[1] - target.p_t):
            best = (b, p, state)
        return p

    lo, hi = target.bounds
    p_lo, p_hi = probe(lo), probe(hi)
    if not p_lo <= target.p_t <= p_hi:
        raise CalibrationError(
            f"target {target.p_t} not bracketed by prevalence {p_lo:.4g}..{p_hi:.4g} on [{lo}, {hi}]",
            best_intercept=best[0],
            best_prevalence=best[1],
        )
    for _ in range(target.max_steps):
        if abs(best[1] - target.p_t) <= target.tolerance:
            break
        mid = 0.5 * (lo + hi)
        if probe(mid) < target.p_t:
            lo = mid
        else:
            hi = mid
    return CalibrationResult(best[0], best[1], best[2], probes)
