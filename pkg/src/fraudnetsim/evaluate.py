"""Fraud-detection models: logistic fits, AUC, top-decile lift and experiments."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit, log_expit
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ParameterError, SingularSystemError, UndefinedMetricError
from .investigate import FRAUDULENT, NON_FRAUDULENT, UNINVESTIGATED

INTERCEPT = "(Intercept)"

MODEL_1 = ("AgePH", "NrContractsPH", "ClaimAmount", "ClaimAge")
MODEL_2 = MODEL_1 + ("n1.size", "n2.size", "n2.ratioFraud")
MODELS = {"model1": MODEL_1, "model2": MODEL_2}


class SeparationWarning(UserWarning):
    """Coefficients diverged past the bound; the fit was capped."""


def log_likelihood(beta, X, y):
    eta = X @ beta
    return float(np.sum(y * log_expit(eta) + (1.0 - y) * log_expit(-eta)))


def score_vector(beta, X, y):
    return X.T @ (y - expit(X @ beta))


class IRLSLogisticRegression(BaseEstimator, ClassifierMixin):
    """Unpenalised logistic regression fitted by Newton-Raphson (IRLS).

    Each Newton step is halved until the log-likelihood does not decrease.
    Iteration stops when the relative change of the log-likelihood drops
    below ``tol`` and the largest score component is below ``grad_tol``.
    If any coefficient exceeds ``bound`` in absolute value the data are
    treated as separated: a :class:`SeparationWarning` is issued and the last
    iterate inside the bound is kept.
    """

    def __init__(self, fit_intercept=True, max_iter=100, tol=1e-8, grad_tol=1e-6, bound=50.0):
        self.fit_intercept = fit_intercept
        self.max_iter = max_iter
        self.tol = tol
        self.grad_tol = grad_tol
        self.bound = bound

    def _design(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.fit_intercept:
            X = np.column_stack([np.ones(len(X)), X])
        return X

    def fit(self, X, y):
        Z = self._design(X)
        y = np.asarray(y, dtype=float)
        if len(y) != len(Z):
            raise ParameterError("X and y have different lengths")
        if not (np.any(y == 1) and np.any(y == 0)) or np.any((y != 0) & (y != 1)):
            raise ParameterError("outcomes must be binary with both classes present")
        if np.linalg.matrix_rank(Z) < Z.shape[1]:
            raise SingularSystemError("design matrix is rank deficient")

        beta = np.zeros(Z.shape[1])
        if self.fit_intercept:
            f = y.mean()
            beta[0] = math.log(f / (1.0 - f))
        ll = log_likelihood(beta, Z, y)
        converged, separated = False, False
        it = 0
        for it in range(1, self.max_iter + 1):
            p = expit(Z @ beta)
            grad = Z.T @ (y - p)
            H = (Z * (p * (1.0 - p))[:, None]).T @ Z
            try:
                step = np.linalg.solve(H, grad)
            except np.linalg.LinAlgError as exc:
                raise SingularSystemError("information matrix is singular") from exc
            t = 1.0
            for _ in range(50):
                cand = beta + t * step
                ll_new = log_likelihood(cand, Z, y)
                if ll_new >= ll - 1e-12 * abs(ll):
                    break
                t *= 0.5
            if np.max(np.abs(cand)) > self.bound:
                separated = True
                break
            rel = abs(ll_new - ll) / (abs(ll) + 1e-300)
            beta, ll = cand, ll_new
            if rel < self.tol and np.max(np.abs(score_vector(beta, Z, y))) < self.grad_tol:
                converged = True
                break
        if separated:
            warnings.warn("quasi-complete separation: coefficients capped", SeparationWarning)

        p = expit(Z @ beta)
        H = (Z * (p * (1.0 - p))[:, None]).T @ Z
        try:
            cov = np.linalg.inv(H)
        except np.linalg.LinAlgError:
            cov = np.full(H.shape, np.nan)
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(beta[0]), beta[1:].copy()
        else:
            self.intercept_, self.coef_ = 0.0, beta.copy()
        self.params_ = beta
        self.cov_ = cov
        self.n_iter_ = it
        self.converged_ = converged
        self.separated_ = separated
        self.log_likelihood_ = ll
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        return self._design(X) @ self.params_

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


@dataclass
class LogisticFit:
    coefficients: dict
    std_errors: dict
    converged: bool
    iterations: int
    log_likelihood: float
    features: tuple
    separated: bool = False

    def linear_predictor(self, rows: pd.DataFrame) -> np.ndarray:
        eta = np.full(len(rows), self.coefficients[INTERCEPT])
        for f in self.features:
            eta = eta + self.coefficients[f] * rows[f].to_numpy(dtype=float)
        return eta

    def predict(self, rows: pd.DataFrame) -> np.ndarray:
        return expit(self.linear_predictor(rows))


def fit_logistic(rows: pd.DataFrame, outcomes, features: Sequence[str], **kw) -> LogisticFit:
    features = tuple(features)
    X = rows[list(features)].to_numpy(dtype=float) if features else np.empty((len(rows), 0))
    model = IRLSLogisticRegression(**kw).fit(X, outcomes)
    names = (INTERCEPT,) + features
    se = np.sqrt(np.diag(model.cov_))
    return LogisticFit(
        coefficients=dict(zip(names, map(float, model.params_))),
        std_errors=dict(zip(names, map(float, se))),
        converged=model.converged_,
        iterations=model.n_iter_,
        log_likelihood=model.log_likelihood_,
        features=features,
        separated=model.separated_,
    )


def _binary(outcomes):
    y = np.asarray(outcomes).astype(float)
    n1 = int((y == 1).sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise UndefinedMetricError("metric needs both classes")
    return y, n1, n0


def auc(scores, outcomes) -> float:
    """Mann-Whitney AUC; tied scores count one half."""
    y, n1, n0 = _binary(outcomes)
    r = rankdata(np.asarray(scores, dtype=float))
    return float((r[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def top_decile_lift(scores, outcomes) -> float:
    """Fraud rate among the ``ceil(0.1 n)`` highest scores over the overall rate.

    Ties keep their input order.
    """
    y, _, _ = _binary(outcomes)
    if len(y) < 10:
        raise ParameterError("top decile lift needs at least 10 observations")
    k = math.ceil(0.1 * len(y))
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    return float(y[order[:k]].mean() / y.mean())


@dataclass
class PerformanceReport:
    model_id: str
    auc_in: float
    auc_out: float
    tdl_in: float
    tdl_out: float
    n_in: int
    n_out: int
    response: str = "expert"
    fit: LogisticFit = field(default=None, repr=False)

    def row(self) -> dict:
        out = {
            "model_id": self.model_id, "response": self.response,
            "auc_in": self.auc_in, "auc_out": self.auc_out,
            "tdl_in": self.tdl_in, "tdl_out": self.tdl_out,
            "n_in": self.n_in, "n_out": self.n_out,
        }
        if self.fit is not None:
            out.update({f"coef.{k}": v for k, v in self.fit.coefficients.items()})
        return out


def _safe(metric, scores, y):
    try:
        return metric(scores, y)
    except (UndefinedMetricError, ParameterError):
        return float("nan")


def run_experiment(dataset: pd.DataFrame, models: Mapping[str, Sequence[str]] = MODELS,
                   response: str = "expert") -> list:
    """Fit each model on the investigated claims and score both partitions.

    ``dataset`` holds one row per claim with the model features, the ground
    truth ``Fraud`` (0/1) and the expert label ``Expert``.  In-sample metrics
    use the fitting response; out-of-sample metrics always use ground truth.
    """
    if response not in ("expert", "ground_truth"):
        raise ParameterError(f"unknown response mode {response!r}")
    expert = dataset["Expert"].to_numpy()
    truth = dataset["Fraud"].to_numpy().astype(int)
    investigated = expert != UNINVESTIGATED
    if not investigated.any() or investigated.all():
        raise ParameterError("dataset needs both investigated and uninvestigated claims")
    if not np.isin(expert, (FRAUDULENT, NON_FRAUDULENT, UNINVESTIGATED)).all():
        raise ParameterError("unknown expert label")
    ins, outs = dataset[investigated], dataset[~investigated]
    y_in = (expert[investigated] == FRAUDULENT).astype(int) if response == "expert" else truth[investigated]
    y_out = truth[~investigated]

    reports = []
    for name, features in models.items():
        fit = fit_logistic(ins, y_in, features)
        s_in, s_out = fit.linear_predictor(ins), fit.linear_predictor(outs)
        reports.append(
            PerformanceReport(
                model_id=name,
                auc_in=_safe(auc, s_in, y_in), auc_out=_safe(auc, s_out, y_out),
                tdl_in=_safe(top_decile_lift, s_in, y_in), tdl_out=_safe(top_decile_lift, s_out, y_out),
                n_in=int(investigated.sum()), n_out=int((~investigated).sum()),
                response=response, fit=fit,
            )
        )
    return reports
