"""Bipartite claim-party network, BiRank scoring and homophily diagnostics.

The weight matrix is stored with parties as rows and claims as columns
(``n_P x n_C``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp

from .errors import ConfigError, ParameterError, UndefinedMetricError
from .stochastics import RandomStream

PARTY_KINDS = ("policyholder", "garage", "broker", "expert", "person")
_PREFIX = {"policyholder": "PH", "garage": "G", "broker": "B", "expert": "E", "person": "P"}


@dataclass
class PartyPools:
    garages: int
    brokers: int
    experts: int
    persons: int
    excluded_kinds: frozenset = field(default_factory=lambda: frozenset({"expert"}))
    expert_threshold: float = 250.0

    @classmethod
    def default(cls, n_ph: int, excluded=("expert",)):
        return cls(
            garages=int(np.floor(0.03 * n_ph)),
            brokers=int(np.floor(0.01 * n_ph)),
            experts=int(np.floor(0.01 * n_ph)),
            persons=int(1.5 * n_ph),
            excluded_kinds=frozenset(excluded),
        )

    def validate(self):
        errs = []
        for kind, size in (("garage", self.garages), ("broker", self.brokers), ("expert", self.experts), ("person", self.persons)):
            if size < 0:
                errs.append(f"{kind} pool size must be >= 0")
            elif size < 1 and kind not in self.excluded_kinds and kind != "person":
                errs.append(f"{kind} pool must have >= 1 member unless excluded")
        unknown = set(self.excluded_kinds) - set(PARTY_KINDS)
        if unknown:
            errs.append(f"unknown party kinds excluded: {sorted(unknown)}")
        return errs


class BipartiteGraph:
    """Immutable claim-party graph.

    Parameters
    ----------
    W : sparse (n_P, n_C) matrix of nonnegative edge weights.
    party_kind, party_label : per-party arrays.
    claim_label : per-claim identifiers (default ``0..n_C-1``).
    """

    def __init__(self, W, party_kind=None, party_label=None, claim_label=None):
        W = sp.csr_matrix(W, dtype=float)
        if not np.all(np.isfinite(W.data)):
            raise ParameterError("edge weights must be finite")
        if np.any(W.data < 0):
            raise ParameterError("edge weights must be nonnegative")
        W.eliminate_zeros()
        self.W = W
        self.n_parties, self.n_claims = W.shape
        self.party_kind = np.asarray(party_kind if party_kind is not None else ["party"] * self.n_parties)
        self.party_label = np.asarray(
            party_label if party_label is not None else [f"p{j + 1}" for j in range(self.n_parties)]
        )
        self.claim_label = np.asarray(claim_label if claim_label is not None else np.arange(self.n_claims))
        self.claim_degree = np.diff(W.tocsc().indptr)
        self.party_degree = np.diff(W.indptr)
        self._claim_parties = W.T.tocsr()
        self._projection = None

    @property
    def n_edges(self):
        return int(self.W.nnz)

    @property
    def claim_parties(self):
        """CSR (n_C, n_P): row ``i`` lists the parties of claim ``i``."""
        return self._claim_parties

    @property
    def projection(self):
        """Boolean claim-claim adjacency (shared party), zero diagonal, CSR."""
        if self._projection is None:
            A = self._claim_parties.copy()
            A.data[:] = 1.0
            P = (A @ A.T).tocsr()
            P.setdiag(0)
            P.eliminate_zeros()
            P.data[:] = 1.0
            P.sort_indices()
            self._projection = P
        return self._projection

    def edge_list(self) -> pd.DataFrame:
        coo = self.W.tocoo()
        order = np.lexsort((coo.row, coo.col))
        rows, cols, vals = coo.row[order], coo.col[order], coo.data[order]
        return pd.DataFrame(
            {
                "ClaimID": self.claim_label[cols],
                "PartyID": self.party_label[rows],
                "PartyKind": self.party_kind[rows],
                "Weight": vals,
            }
        )

    @classmethod
    def from_edges(cls, claim_index, party_index, n_claims, n_parties, weights=None, **kw):
        claim_index = np.asarray(claim_index)
        w = np.ones(len(claim_index)) if weights is None else np.asarray(weights, dtype=float)
        W = sp.csr_matrix((w, (np.asarray(party_index), claim_index)), shape=(n_parties, n_claims))
        W.sum_duplicates()
        return cls(W, **kw)


def assign_parties(claims: pd.DataFrame, n_ph: int, pools: PartyPools, stream: RandomStream) -> BipartiteGraph:
    """Link every claim to its policyholder and randomly chosen parties.

    ``claims`` needs ``IDPH`` (1-based), ``nPersons`` and ``ClaimAmount``.
    Party rows are laid out as policyholders, garages, brokers, experts,
    persons; excluded kinds get no rows.
    """
    errs = pools.validate()
    n_c = len(claims)
    persons = claims["nPersons"].to_numpy()
    if "person" not in pools.excluded_kinds and n_c and persons.max() > pools.persons:
        errs.append("nPersons exceeds the size of the person pool")
    if errs:
        raise ConfigError(errs)

    sizes = {"policyholder": n_ph, "garage": pools.garages, "broker": pools.brokers,
             "expert": pools.experts, "person": pools.persons}
    offsets, kinds, labels = {}, [], []
    start = 0
    for kind in PARTY_KINDS:
        if kind in pools.excluded_kinds:
            continue
        offsets[kind] = start
        kinds.append(np.full(sizes[kind], kind))
        labels.append(np.char.add(_PREFIX[kind], np.arange(1, sizes[kind] + 1).astype(str)))
        start += sizes[kind]
    n_parties = start

    claim_idx, party_idx = [], []
    ids = np.arange(n_c)
    if "policyholder" in offsets:
        claim_idx.append(ids)
        party_idx.append(offsets["policyholder"] + claims["IDPH"].to_numpy() - 1)
    for kind, size in (("garage", pools.garages), ("broker", pools.brokers)):
        if kind in offsets:
            claim_idx.append(ids)
            party_idx.append(offsets[kind] + stream.child(kind).rng.integers(0, size, n_c))
    if "expert" in offsets:
        eligible = ids[claims["ClaimAmount"].to_numpy() >= pools.expert_threshold]
        claim_idx.append(eligible)
        party_idx.append(offsets["expert"] + stream.child("expert").rng.integers(0, pools.experts, len(eligible)))
    if "person" in offsets:
        rng = stream.child("person").rng
        has = ids[persons > 0]
        chosen = [rng.choice(pools.persons, size=persons[i], replace=False) for i in has]
        if chosen:
            claim_idx.append(np.repeat(has, persons[has]))
            party_idx.append(offsets["person"] + np.concatenate(chosen))

    claim_idx = np.concatenate(claim_idx) if claim_idx else np.array([], dtype=int)
    party_idx = np.concatenate(party_idx) if party_idx else np.array([], dtype=int)
    claim_label = claims["ClaimID"].to_numpy() if "ClaimID" in claims else None
    return BipartiteGraph.from_edges(
        claim_idx,
        party_idx,
        n_c,
        n_parties,
        party_kind=np.concatenate(kinds) if kinds else np.array([], dtype=str),
        party_label=np.concatenate(labels) if labels else np.array([], dtype=str),
        claim_label=claim_label,
    )


def neighborhood(graph: BipartiteGraph, claim: int, order: int = 1) -> set:
    """First-order (party indices) or second-order (claim indices) neighbourhood."""
    if not 0 <= claim < graph.n_claims:
        raise LookupError(f"unknown claim {claim}")
    if order == 1:
        row = graph.claim_parties
        return set(row.indices[row.indptr[claim]:row.indptr[claim + 1]].tolist())
    if order == 2:
        P = graph.projection
        return set(P.indices[P.indptr[claim]:P.indptr[claim + 1]].tolist())
    raise ValueError("order must be 1 or 2")


@dataclass
class BiRankResult:
    claim_scores: np.ndarray
    party_scores: np.ndarray
    iterations: int
    converged: bool


def _inv_sqrt(d):
    out = np.zeros(len(d), dtype=float)
    nz = d > 0
    out[nz] = 1.0 / np.sqrt(d[nz])
    return out


def normalized_operator(graph: BipartiteGraph):
    """``D_C^{-1/2} W^T D_P^{-1/2}`` as a CSR (n_C, n_P) matrix; zero degree maps to 0."""
    d_c = np.asarray(graph.W.sum(axis=0)).ravel()
    d_p = np.asarray(graph.W.sum(axis=1)).ravel()
    return (sp.diags(_inv_sqrt(d_c)) @ graph.W.T @ sp.diags(_inv_sqrt(d_p))).tocsr()


def birank(graph: BipartiteGraph, query, alpha: float = 0.85, tol: float = 1e-9,
           max_iter: int = 1000, init: Optional[tuple] = None, operator=None) -> BiRankResult:
    """Score claims and parties by mutual reinforcement toward ``query``.

    Iterates ``c <- alpha * S p + (1 - alpha) * c0`` and ``p <- S^T c`` with the
    symmetrically degree-normalised operator until the max-abs change of both
    vectors drops below ``tol``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ParameterError("alpha must lie in [0, 1]")
    c0 = np.asarray(query, dtype=float)
    if c0.shape != (graph.n_claims,):
        raise ParameterError("query vector must have one entry per claim")
    S = normalized_operator(graph) if operator is None else operator
    ST = S.T.tocsr()
    if init is None:
        c = np.full(graph.n_claims, 1.0 / max(graph.n_claims, 1))
        p = np.full(graph.n_parties, 1.0 / max(graph.n_parties, 1))
    else:
        c, p = (np.asarray(v, dtype=float).copy() for v in init)
    base = (1.0 - alpha) * c0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        c_new = alpha * (S @ p) + base
        p_new = ST @ c_new
        delta = max(np.max(np.abs(c_new - c), initial=0.0), np.max(np.abs(p_new - p), initial=0.0))
        c, p = c_new, p_new
        if delta < tol:
            converged = True
            break
    return BiRankResult(c, p, it, converged)


@dataclass
class HomophilyResult:
    dyadicity: Optional[float]
    heterophilicity: Optional[float]
    m11: int
    m10: int
    m00: int
    n_fraud: int
    n_claims: int

    @property
    def n_dyads(self):
        return self.m11 + self.m10 + self.m00


def homophily_metrics(graph: BipartiteGraph, fraud) -> HomophilyResult:
    """Dyadicity and heterophilicity of fraud labels on the claim projection.

    ``fraud`` is a boolean per claim; unlabeled claims count as non-fraud.
    Undefined metrics are returned as ``None``.
    """
    f = np.asarray(fraud, dtype=bool).astype(float)
    if f.shape != (graph.n_claims,):
        raise ParameterError("one fraud flag per claim required")
    P = graph.projection
    n = graph.n_claims
    n1 = int(f.sum())
    Pf = P @ f
    m11 = int(round(f @ Pf / 2.0))
    m10 = int(round((1.0 - f) @ Pf))
    total = int(P.nnz // 2)
    m00 = total - m11 - m10
    dyad, het = None, None
    if n >= 2 and total > 0:
        rho = 2.0 * total / (n * (n - 1.0))
        if n1 >= 2:
            dyad = m11 / (n1 * (n1 - 1) * rho / 2.0)
        if n1 >= 1 and n - n1 >= 1:
            het = m10 / (n1 * (n - n1) * rho)
        elif n1 == n:
            het = 0.0  # no fraud/non-fraud dyad can exist
    return HomophilyResult(dyad, het, m11, m10, m00, n1, n)


def require_metric(value, name):
    if value is None:
        raise UndefinedMetricError(f"{name} is undefined for these labels")
    return value


def toy_graph():
    """Seven-claim, seven-party example network with a fraud cluster.

    Claims ``c5``, ``c6`` and ``c7`` are fraudulent and all share party ``p7``.
    Returns ``(graph, fraud_flags)``; claim/party index ``k`` is label ``k+1``.
    """
    links = {
        1: (1,),
        2: (1, 2),
        3: (2, 3),
        4: (4,),
        5: (3, 5, 7),
        6: (5, 6, 7),
        7: (6, 7),
    }
    claim_idx = [c - 1 for c, ps in links.items() for _ in ps]
    party_idx = [p - 1 for ps in links.values() for p in ps]
    graph = BipartiteGraph.from_edges(
        claim_idx, party_idx, 7, 7,
        party_kind=["party"] * 7,
        party_label=[f"p{j}" for j in range(1, 8)],
        claim_label=[f"c{i}" for i in range(1, 8)],
    )
    fraud = np.array([False, False, False, False, True, True, True])
    return graph, fraud
