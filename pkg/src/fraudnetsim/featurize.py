"""Social-network features of claims and the ``[-1, 1]`` normalisation."""

from __future__ import annotations

from typing import Optional

import numpy as np
import pandas as pd

from .errors import DegenerateInputError
from .network import BiRankResult, BipartiteGraph

SCORE_FEATURES = ("scores0", "n1.q1", "n1.med", "n1.midmean", "n2.q1", "n2.med", "n2.midmean")
NEIGHBORHOOD_FEATURES = ("n1.size", "n2.size", "n2.ratioFraud", "n2.ratioNonFraud", "n2.binFraud")
FEATURE_NAMES = SCORE_FEATURES + NEIGHBORHOOD_FEATURES
# features whose value depends on the labels known so far
LABEL_DEPENDENT = frozenset(SCORE_FEATURES + ("n2.ratioFraud", "n2.ratioNonFraud", "n2.binFraud"))

UNLABELED, NONFRAUD, FRAUD = -1, 0, 1


def normalize_signed_unit(values):
    """Affine map of ``values`` onto ``[-1, 1]`` (min to -1, max to +1).

    Raises :class:`DegenerateInputError` for a constant vector.
    """
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise DegenerateInputError("cannot normalise an empty vector")
    lo, hi = np.min(a), np.max(a)
    if not hi > lo:
        raise DegenerateInputError("cannot normalise a constant vector")
    return 2.0 * (a - lo) / (hi - lo) - 1.0


def normalize_or_zero(values):
    """:func:`normalize_signed_unit`, substituting zeros for constant input."""
    try:
        return normalize_signed_unit(values)
    except DegenerateInputError:
        return np.zeros(np.shape(values))


def quartile_summary(values):
    """``(q1, median, midmean)`` of a sample, or zeros when it is empty.

    Quartiles interpolate linearly between order statistics at position
    ``(n - 1) * q``.  The midmean averages the order statistics whose position
    lies strictly between the first- and third-quartile positions together
    with the two interpolated quartile values.
    """
    x = np.sort(np.asarray(values, dtype=float))
    q1, med, mid = _row_summaries(x, np.array([0, x.size]))
    return float(q1[0]), float(med[0]), float(mid[0])


def _interp(x, start, n, q):
    h = (n - 1) * q
    lo = np.floor(h).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = h - lo
    a = x[start + lo]
    b = x[start + hi]
    return a + frac * (b - a)


def _row_summaries(x_sorted, indptr):
    """Vectorised :func:`quartile_summary` over CSR-style row segments of sorted values."""
    indptr = np.asarray(indptr, dtype=np.int64)
    n = np.diff(indptr)
    out = np.zeros((3, len(n)))
    ok = n > 0
    if not ok.any():
        return out
    start, m = indptr[:-1][ok], n[ok]
    q1 = _interp(x_sorted, start, m, 0.25)
    q3 = _interp(x_sorted, start, m, 0.75)
    out[0, ok] = q1
    out[1, ok] = _interp(x_sorted, start, m, 0.5)

    row = np.repeat(np.arange(len(n)), n)
    pos = np.arange(indptr[-1] - indptr[0]) - (np.repeat(indptr[:-1], n) - indptr[0])
    inside = (pos > (n[row] - 1) * 0.25) & (pos < (n[row] - 1) * 0.75)
    x = x_sorted[indptr[0]:indptr[-1]]
    total = np.bincount(row, weights=np.where(inside, x, 0.0), minlength=len(n))[ok]
    count = np.bincount(row, weights=inside.astype(float), minlength=len(n))[ok]
    out[2, ok] = (total + q1 + q3) / (count + 2.0)
    return out


def _sorted_row_values(M, rows, node_values):
    sub = M[rows]
    counts = np.diff(sub.indptr)
    row_id = np.repeat(np.arange(len(rows)), counts)
    vals = node_values[sub.indices]
    order = np.lexsort((vals, row_id))
    return vals[order], sub.indptr


def fraud_score_table(graph: BipartiteGraph, scores: BiRankResult, rows) -> pd.DataFrame:
    rows = np.asarray(rows, dtype=np.int64)
    x1, p1 = _sorted_row_values(graph.claim_parties, rows, scores.party_scores)
    x2, p2 = _sorted_row_values(graph.projection, rows, scores.claim_scores)
    s1 = _row_summaries(x1, p1)
    s2 = _row_summaries(x2, p2)
    return pd.DataFrame(
        {
            "scores0": scores.claim_scores[rows],
            "n1.q1": s1[0], "n1.med": s1[1], "n1.midmean": s1[2],
            "n2.q1": s2[0], "n2.med": s2[1], "n2.midmean": s2[2],
        }
    )


def neighborhood_table(graph: BipartiteGraph, labels, rows) -> pd.DataFrame:
    rows = np.asarray(rows, dtype=np.int64)
    labels = np.asarray(labels)
    sub = graph.projection[rows]
    n2 = np.diff(sub.indptr).astype(float)
    fraud = sub @ (labels == FRAUD).astype(float)
    legit = sub @ (labels == NONFRAUD).astype(float)
    safe = np.where(n2 > 0, n2, 1.0)
    ratio_f = np.where(n2 > 0, fraud / safe, 0.0)
    ratio_n = np.where(n2 > 0, legit / safe, 0.0)
    return pd.DataFrame(
        {
            "n1.size": graph.claim_degree[rows].astype(float),
            "n2.size": n2,
            "n2.ratioFraud": ratio_f,
            "n2.ratioNonFraud": ratio_n,
            "n2.binFraud": (ratio_f > 0).astype(np.int64),
        }
    )


def fraud_score_features(graph: BipartiteGraph, scores: BiRankResult, claim: int) -> dict:
    return fraud_score_table(graph, scores, [claim]).iloc[0].to_dict()


def neighborhood_features(graph: BipartiteGraph, labels, claim: int) -> dict:
    row = neighborhood_table(graph, labels, [claim]).iloc[0].to_dict()
    row["n2.binFraud"] = bool(row["n2.binFraud"])
    return row


def compute_features(graph: BipartiteGraph, labels, scores: Optional[BiRankResult] = None,
                     rows=None) -> pd.DataFrame:
    """All network features for ``rows`` (default: every claim).

    Score-based columns are filled only when ``scores`` is given.
    """
    rows = np.arange(graph.n_claims) if rows is None else np.asarray(rows, dtype=np.int64)
    parts = [neighborhood_table(graph, labels, rows)]
    if scores is not None:
        parts.insert(0, fraud_score_table(graph, scores, rows))
    out = pd.concat(parts, axis=1)
    cols = [c for c in FEATURE_NAMES if c in out.columns]
    return out[cols]
