import json
import os

import pandas as pd
import pytest

from fraudnetsim import cli
from fraudnetsim.config import EngineConfig
from fraudnetsim.engine import FILES, DatasetBundle, aggregate_labels, default_workers, generate, replicate
from fraudnetsim.errors import SimulationError
from fraudnetsim.investigate import UNINVESTIGATED
from fraudnetsim.labeling import LabelingConfig
from fraudnetsim.network import homophily_metrics

SMALL = EngineConfig(n_ph=3000, master_seed=7, labeling=LabelingConfig(target_prevalence=0.02, tolerance=0.002))


@pytest.fixture(scope="module")
def bundle():
    return generate(SMALL)


@pytest.fixture(scope="module")
def written(bundle, tmp_path_factory):
    return bundle.write(tmp_path_factory.mktemp("ds") / "bundle")


class TestGenerate:
    def test_byte_identical_reruns(self, written, tmp_path):
        other = generate(SMALL).write(tmp_path / "again")
        for name in FILES:
            assert (other / name).read_bytes() == (written / name).read_bytes(), name

    def test_different_seed_differs(self, bundle):
        other = generate(SMALL.replace(master_seed=8))
        assert not other.claims["Fraud"].equals(bundle.claims["Fraud"]) or len(other.claims) != len(bundle.claims)

    def test_referential_integrity(self, bundle):
        cl, pf, ed = bundle.claims, bundle.portfolio, bundle.edges
        assert set(ed.ClaimID) <= set(cl.ClaimID)
        keys = set(zip(pf.IDPH, pf.ContractID))
        assert set(zip(cl.IDPH, cl.ContractID)) <= keys
        assert cl.ClaimID.is_unique
        assert len(bundle.features) == len(cl)

    def test_labels(self, bundle):
        cl = bundle.claims
        assert set(cl.Fraud.unique()) <= {0, 1}
        assert ((cl.Expert == UNINVESTIGATED) == ~cl.Flagged.astype(bool)).all()
        assert abs(cl.Fraud.mean() - 0.02) <= 0.002

    def test_manifest_matches_data(self, bundle):
        m = bundle.manifest
        hom = homophily_metrics(bundle.graph, bundle.claims.Fraud.to_numpy().astype(bool))
        assert m["dyadicity"] == hom.dyadicity and m["heterophilicity"] == hom.heterophilicity
        assert m["n_claims"] == len(bundle.claims) and m["n_edges"] == len(bundle.edges)
        assert m["achieved_imbalance"] == bundle.claims.Fraud.mean()
        assert m["config_hash"] == SMALL.content_hash()
        assert m["master_seed"] == 7

    def test_reload_reproduces_metrics(self, bundle, written):
        again = DatasetBundle.load(written)
        hom = again.homophily()
        assert hom.dyadicity == bundle.manifest["dyadicity"]
        assert hom.heterophilicity == bundle.manifest["heterophilicity"]
        assert again.label_counts() == bundle.label_counts()
        assert again.config == SMALL

    def test_write_refuses_foreign_directory(self, bundle, tmp_path):
        (tmp_path / "notes.txt").write_text("keep me")
        with pytest.raises(FileExistsError):
            bundle.write(tmp_path)
        assert (tmp_path / "notes.txt").read_text() == "keep me"

    def test_evaluate(self, bundle):
        reports = bundle.evaluate()
        assert [r.model_id for r in reports] == ["model1", "model2", "dgm"]
        for r in reports:
            assert 0 <= r.auc_out <= 1

    def test_zeroed_network_effects_give_neutral_homophily(self):
        spec = EngineConfig().fraud_spec().without(("n1.size", "n2.size", "n2.ratioFraud"))
        b = generate(SMALL.replace(fraud=spec))
        assert abs(b.manifest["dyadicity"] - 1) < 0.5
        assert abs(b.manifest["heterophilicity"] - 1) < 0.3


class TestReplicate:
    def test_summary_and_results(self, tmp_path):
        summary, results = replicate(SMALL, 2, 100, tmp_path, evaluate_models=True, workers=1)
        assert list(summary.replicate_seed) == [100, 101]
        assert set(results.response) == {"expert", "ground_truth"}
        assert set(results.model_id) == {"model1", "model2", "dgm"}
        assert (tmp_path / "replicate_000" / "manifest.json").exists()
        table = aggregate_labels(summary)
        assert len(table) > 0

    def test_parallel_matches_serial(self):
        a, _ = replicate(SMALL, 2, 5, evaluate_models=False, workers=1)
        b, _ = replicate(SMALL, 2, 5, evaluate_models=False, workers=2)
        pd.testing.assert_frame_equal(a, b)

    def test_refuses_mixed_configs(self):
        a, _ = replicate(SMALL, 1, 1, evaluate_models=False, workers=1)
        b, _ = replicate(SMALL.replace(n_ph=2500), 1, 1, evaluate_models=False, workers=1)
        with pytest.raises(SimulationError):
            aggregate_labels(pd.concat([a, b]))

    def test_engine_threads(self, monkeypatch):
        monkeypatch.setenv("ENGINE_THREADS", "1")
        assert default_workers() == 1
        monkeypatch.setenv("ENGINE_THREADS", "64")
        assert default_workers() == min(64, os.cpu_count() or 1)
        monkeypatch.setenv("ENGINE_THREADS", "lots")
        with pytest.raises(SimulationError):
            default_workers()


class TestCli:
    def test_generate_and_diagnose(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        SMALL.dump(cfg)
        out = tmp_path / "ds"
        assert cli.main(["generate", "--config", str(cfg), "--seed", "3", "--out", str(out)]) == 0
        for name in FILES:
            assert (out / name).exists()
        capsys.readouterr()
        assert cli.main(["diagnose", "--dataset", str(out)]) == 0
        report = json.loads(capsys.readouterr().out)
        assert all(report["manifest_matches"].values())
        assert report["n_claims"] > 0

    def test_evaluate_prints_csv(self, written, capsys):
        assert cli.main(["evaluate", "--dataset", str(written), "--model", "model2", "--response", "ground_truth"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("model_id,response,auc_in")
        assert len(lines) == 2 and lines[1].startswith("model2,ground_truth")

    def test_replicate_writes_tables(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        SMALL.dump(cfg)
        out = tmp_path / "rep"
        code = cli.main(["replicate", "--config", str(cfg), "--n", "2", "--out", str(out),
                         "--workers", "1", "--no-write-bundles"])
        assert code == 0
        for name in ("replicates.csv", "label_summary.csv", "results.csv"):
            assert (out / name).exists()
        assert not any(p.is_dir() for p in out.iterdir())

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "bad.toml"
        cfg.write_text("[engine]\nn_ph = -5\n[labeling]\nalpha = 4.0\n")
        assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        err = capsys.readouterr().err
        assert "n_ph" in err and "alpha" in err

    def test_missing_dataset_and_unknown_flag(self, tmp_path, capsys):
        assert cli.main(["diagnose", "--dataset", str(tmp_path / "nope")]) != 0
        assert cli.main(["generate", "--bogus"]) != 0
