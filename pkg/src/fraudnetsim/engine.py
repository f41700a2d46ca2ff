"""The seven-step pipeline and the on-disk dataset bundle."""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from . import __version__
from .claims import simulate_claims
from .config import EngineConfig
from .errors import SimulationError, StepError
from .evaluate import MODELS, run_experiment
from .featurize import FEATURE_NAMES, FRAUD, NONFRAUD, UNLABELED, compute_features, normalize_or_zero
from .investigate import FRAUDULENT, NON_FRAUDULENT, UNINVESTIGATED, expert_judgement, flag_suspicious
from .labeling import ImbalanceTarget, calibrate_intercept
from .network import BipartiteGraph, assign_parties, birank, homophily_metrics
from .portfolio import generate_contracts, generate_policyholders
from .stochastics import RandomStream

CONTRACT_COLUMNS = (
    "AgePH", "GenderPH", "NrContractsPH", "ExpPH", "ExpPHContracts", "AgeCar", "OrigValueCar",
    "ValueCar", "Coverage", "Fuel", "BonusMalus", "AgePHBin", "AgeCarBin", "BonusMalusBin",
)
FILES = ("claims.csv", "portfolio.csv", "edges.csv", "features.csv", "manifest.json", "config.toml")


@dataclass
class DatasetBundle:
    claims: pd.DataFrame
    portfolio: pd.DataFrame
    edges: pd.DataFrame
    features: pd.DataFrame
    manifest: dict
    config: EngineConfig
    graph: Optional[BipartiteGraph] = field(default=None, repr=False)

    def network(self) -> BipartiteGraph:
        if self.graph is None:
            self.graph = graph_from_edges(self.edges, self.claims["ClaimID"].to_numpy())
        return self.graph

    def homophily(self):
        return homophily_metrics(self.network(), self.claims["Fraud"].to_numpy() == 1)

    def label_counts(self) -> dict:
        return label_counts(self.claims)

    def evaluation_frame(self) -> pd.DataFrame:
        return evaluation_frame(self.claims, self.features, self.config)

    def evaluate(self, models=None, response="expert"):
        if models is None:
            models = dict(MODELS)
            models["dgm"] = tuple(self.config.fraud_spec().features)
        return run_experiment(self.evaluation_frame(), models, response)

    def write(self, out_dir):
        """Write all files into ``out_dir`` atomically (temp dir + rename)."""
        out = Path(out_dir)
        out.parent.mkdir(parents=True, exist_ok=True)
        if out.exists() and any(out.iterdir()) and not (out / "manifest.json").exists():
            raise FileExistsError(f"{out} exists and is not a dataset bundle")
        tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
        try:
            self.claims.to_csv(tmp / "claims.csv", index=False)
            self.portfolio.to_csv(tmp / "portfolio.csv", index=False)
            self.edges.to_csv(tmp / "edges.csv", index=False)
            self.features.to_csv(tmp / "features.csv", index=False)
            (tmp / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")
            self.config.dump(tmp / "config.toml")
            if out.exists():
                shutil.rmtree(out)
            os.replace(tmp, out)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return out

    @classmethod
    def load(cls, path) -> "DatasetBundle":
        path = Path(path)
        missing = [f for f in FILES if not (path / f).exists()]
        if missing:
            raise FileNotFoundError(f"{path} is missing {missing}")
        claims = pd.read_csv(path / "claims.csv", keep_default_na=False, na_values=[""])
        return cls(
            claims=claims,
            portfolio=pd.read_csv(path / "portfolio.csv"),
            edges=pd.read_csv(path / "edges.csv"),
            features=pd.read_csv(path / "features.csv"),
            manifest=json.loads((path / "manifest.json").read_text()),
            config=EngineConfig.load(path / "config.toml"),
        )


def graph_from_edges(edges: pd.DataFrame, claim_ids) -> BipartiteGraph:
    claim_ids = np.asarray(claim_ids)
    pos = pd.Index(claim_ids).get_indexer(edges["ClaimID"].to_numpy())
    if (pos < 0).any():
        raise SimulationError("edge list references unknown claims")
    party_codes, party_labels = pd.factorize(edges["PartyID"], sort=False)
    kinds = edges.groupby(party_codes)["PartyKind"].first().to_numpy()
    return BipartiteGraph.from_edges(
        pos, party_codes, len(claim_ids), len(party_labels),
        weights=edges["Weight"].to_numpy(dtype=float) if "Weight" in edges else None,
        party_kind=kinds, party_label=np.asarray(party_labels), claim_label=claim_ids,
    )


def label_counts(claims: pd.DataFrame) -> dict:
    n = len(claims)
    fraud = int((claims["Fraud"] == 1).sum())
    expert = claims["Expert"].value_counts()
    out = {"n_claims": n, "fraud": fraud, "nonfraud": n - fraud}
    for lbl in (FRAUDULENT, NON_FRAUDULENT, UNINVESTIGATED):
        out[f"expert.{lbl}"] = int(expert.get(lbl, 0))
    return out


def _view_labels(claims: pd.DataFrame, view: str) -> np.ndarray:
    if view == "ground_truth":
        return np.where(claims["Fraud"].to_numpy() == 1, FRAUD, NONFRAUD)
    expert = claims["Expert"].to_numpy()
    return np.select([expert == FRAUDULENT, expert == NON_FRAUDULENT], [FRAUD, NONFRAUD], UNLABELED)


def final_features(graph: BipartiteGraph, claims: pd.DataFrame, config: EngineConfig) -> pd.DataFrame:
    """Network features of every claim from the completed labels."""
    labels = _view_labels(claims, config.eval_labels)
    scores = birank(graph, (labels == FRAUD).astype(float), alpha=config.labeling.alpha)
    feats = compute_features(graph, labels, scores)
    feats.insert(0, "ClaimID", claims["ClaimID"].to_numpy())
    return feats


def evaluation_frame(claims: pd.DataFrame, features: pd.DataFrame, config: EngineConfig) -> pd.DataFrame:
    """Model inputs for every claim, normalised over all claims where configured."""
    merged = claims.merge(features, on="ClaimID", how="left", validate="one_to_one")
    out = {"ClaimID": merged["ClaimID"].to_numpy(), "Fraud": merged["Fraud"].to_numpy(),
           "Expert": merged["Expert"].to_numpy()}
    wanted = set(MODELS["model2"]) | set(config.fraud_spec().features)
    for name in sorted(wanted):
        if name not in merged:
            continue
        col = merged[name].to_numpy(dtype=float)
        out[name] = normalize_or_zero(col) if name in config.labeling.normalized else col
    return pd.DataFrame(out)


def _step(n, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except SimulationError as exc:
        raise StepError(n, exc) from exc


def generate(config: EngineConfig) -> DatasetBundle:
    """Run the full pipeline deterministically in ``(config, master_seed)``."""
    config.check()
    s = RandomStream(config.master_seed)
    n_ph = config.n_ph

    ph = _step(1, generate_policyholders, n_ph, config.portfolio, s.child("policyholders"))
    contracts = _step(2, generate_contracts, ph, config.portfolio, s.child("contracts"))
    contracts, claims = _step(
        "3-4", simulate_claims, contracts, config.frequency, config.severity, config.claims, s.child("claims")
    )
    claims = claims.merge(
        contracts[["IDPH", "ContractID", *CONTRACT_COLUMNS]], on=["IDPH", "ContractID"], how="left", validate="many_to_one"
    )

    graph = _step("5a", assign_parties, claims, n_ph, config.parties.pools(n_ph), s.child("network"))
    lab = config.labeling
    target = ImbalanceTarget(lab.target_prevalence, lab.intercept_bounds, lab.tolerance, lab.max_steps)
    cal = _step("5b", calibrate_intercept, graph, claims, config.fraud_spec(), target, lab, s.child("labels"))
    claims["Fraud"] = (cal.state.labels == FRAUD).astype(np.int64)
    claims["LabelIteration"] = cal.state.iteration

    flagged = _step(6, flag_suspicious, claims, config.rules)
    claims["Flagged"] = flagged.astype(np.int64)
    claims["Expert"] = _step(6, expert_judgement, claims["Fraud"].to_numpy(), flagged, config.rules, s.child("expert"))

    features = _step(7, final_features, graph, claims, config)
    hom = homophily_metrics(graph, claims["Fraud"].to_numpy() == 1)
    manifest = {
        "engine_version": __version__,
        "config_hash": config.content_hash(),
        "master_seed": config.master_seed,
        "n_ph": n_ph,
        "n_contracts": int(len(contracts)),
        "n_claims": int(len(claims)),
        "n_edges": int(graph.n_edges),
        "fraud_intercept": cal.intercept,
        "target_prevalence": lab.target_prevalence,
        "achieved_imbalance": cal.achieved,
        "calibration_probes": len(cal.probes),
        "label_iterations": cal.state.n_iterations,
        "dyadicity": hom.dyadicity,
        "heterophilicity": hom.heterophilicity,
        "label_counts": label_counts(claims),
    }
    return DatasetBundle(claims, contracts, graph.edge_list(), features, manifest, config, graph)


def _replicate_worker(args):
    config, out_dir, evaluate_models = args
    bundle = generate(config)
    if out_dir is not None:
        bundle.write(out_dir)
    row = {"replicate_seed": config.master_seed, **summary_row(bundle)}
    reports = []
    if evaluate_models:
        for response in ("expert", "ground_truth"):
            for rep in bundle.evaluate(response=response):
                reports.append({"replicate_seed": config.master_seed, **rep.row(),
                                "achieved_imbalance": bundle.manifest["achieved_imbalance"],
                                "dyadicity": bundle.manifest["dyadicity"],
                                "heterophilicity": bundle.manifest["heterophilicity"]})
    return row, reports


def summary_row(bundle: DatasetBundle) -> dict:
    m = bundle.manifest
    return {
        "config_hash": m["config_hash"],
        "n_claims": m["n_claims"],
        "achieved_imbalance": m["achieved_imbalance"],
        "fraud_intercept": m["fraud_intercept"],
        "dyadicity": m["dyadicity"],
        "heterophilicity": m["heterophilicity"],
        **m["label_counts"],
    }


def replicate(config: EngineConfig, n: int, seed_base: int, out_dir=None, evaluate_models: bool = True,
              workers: Optional[int] = None):
    """Generate ``n`` bundles with seeds ``seed_base + i``.

    Returns ``(summary, results)`` data frames: one summary row per replicate
    and one result row per replicate, response mode and model.
    """
    jobs = []
    for i in range(n):
        cfg = config.replace(master_seed=seed_base + i)
        sub = None if out_dir is None else Path(out_dir) / f"replicate_{i:03d}"
        jobs.append((cfg, sub, evaluate_models))
    workers = workers or default_workers()
    if workers <= 1 or n <= 1:
        outputs = [_replicate_worker(j) for j in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(workers, n)) as pool:
            outputs = list(pool.map(_replicate_worker, jobs))
    summary = pd.DataFrame([o[0] for o in outputs])
    summary.insert(0, "replicate", range(n))
    results = pd.DataFrame([r for o in outputs for r in o[1]])
    if len(results):
        seeds = dict(zip(summary["replicate_seed"], summary["replicate"]))
        results.insert(0, "replicate", results["replicate_seed"].map(seeds))
    return summary, results


def default_workers() -> int:
    cap = os.environ.get("ENGINE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise SimulationError(f"ENGINE_THREADS must be an integer, got {cap!r}") from None
    return n


def aggregate_labels(summary: pd.DataFrame) -> pd.DataFrame:
    """Average, minimum and maximum frequency (and share) of each label kind."""
    hashes = summary["config_hash"].unique()
    if len(hashes) > 1:
        raise SimulationError("refusing to aggregate replicates generated from different configs")
    rows = []
    for col, name in (("fraud", "Fraud"), ("nonfraud", "Non-fraud"),
                      (f"expert.{FRAUDULENT}", "Expert fraudulent"),
                      (f"expert.{NON_FRAUDULENT}", "Expert non-fraudulent"),
                      (f"expert.{UNINVESTIGATED}", "Expert uninvestigated")):
        share = summary[col] / summary["n_claims"]
        rows.append({
            "label": name,
            "avg": summary[col].mean(), "avg_pct": 100 * share.mean(),
            "min": summary[col].min(), "min_pct": 100 * share.min(),
            "max": summary[col].max(), "max_pct": 100 * share.max(),
        })
    return pd.DataFrame(rows)
