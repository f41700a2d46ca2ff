"""Command line entry point: ``fraudnetsim <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import pandas as pd

from .config import EngineConfig
from .engine import DatasetBundle, aggregate_labels, generate, replicate
from .errors import ConfigError, SimulationError
from .evaluate import MODELS


def _config(args) -> EngineConfig:
    cfg = EngineConfig.load(args.config) if args.config else EngineConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "n_ph", None) is not None:
        changes["n_ph"] = args.n_ph
    if getattr(args, "type", None):
        changes["fraud_preset"] = args.type
        changes["fraud"] = None
    return cfg.replace(**changes).check() if changes else cfg


def cmd_generate(args):
    bundle = generate(_config(args))
    out = bundle.write(args.out)
    m = bundle.manifest
    print(f"wrote {out}: {m['n_claims']} claims, imbalance {m['achieved_imbalance']:.4f}, "
          f"D={m['dyadicity']}, H={m['heterophilicity']}")
    return 0


def cmd_evaluate(args):
    bundle = DatasetBundle.load(args.dataset)
    names = list(MODELS) + ["dgm"] if args.model == "all" else [args.model]
    models = {}
    for name in names:
        models[name] = tuple(bundle.config.fraud_spec().features) if name == "dgm" else MODELS[name]
    reports = bundle.evaluate(models, response=args.response)
    pd.DataFrame([r.row() for r in reports]).to_csv(sys.stdout, index=False)
    return 0


def cmd_replicate(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, results = replicate(
        cfg, args.n, args.seed_base, out if args.write_bundles else None,
        evaluate_models=not args.no_evaluate, workers=args.workers,
    )
    summary.to_csv(out / "replicates.csv", index=False)
    table = aggregate_labels(summary)
    table.to_csv(out / "label_summary.csv", index=False)
    if len(results):
        results.to_csv(out / "results.csv", index=False)
    print(table.to_string(index=False, float_format=lambda x: f"{x:.2f}"))
    return 0


def cmd_diagnose(args):
    bundle = DatasetBundle.load(args.dataset)
    hom = bundle.homophily()
    counts = bundle.label_counts()
    n = counts["n_claims"]
    report = {
        "n_claims": n,
        "dyadicity": hom.dyadicity,
        "heterophilicity": hom.heterophilicity,
        "dyads": {"fraud-fraud": hom.m11, "fraud-nonfraud": hom.m10, "nonfraud-nonfraud": hom.m00},
        "labels": {k: {"count": v, "share": v / n if n else None} for k, v in counts.items() if k != "n_claims"},
        "manifest_matches": {
            "dyadicity": hom.dyadicity == bundle.manifest["dyadicity"],
            "heterophilicity": hom.heterophilicity == bundle.manifest["heterophilicity"],
            "imbalance": counts["fraud"] / n == bundle.manifest["achieved_imbalance"] if n else None,
        },
    }
    print(json.dumps(report, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fraudnetsim", description="Synthetic insurance fraud data engine")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate one dataset bundle")
    g.add_argument("--config", help="TOML config file (defaults if omitted)")
    g.add_argument("--seed", type=int, help="override the master seed")
    g.add_argument("--n-ph", type=int, help="override the number of policyholders")
    g.add_argument("--type", choices=("network", "non-network"), help="fraud model preset")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="fit detection models on a bundle")
    e.add_argument("--dataset", required=True)
    e.add_argument("--model", choices=("model1", "model2", "dgm", "all"), default="all")
    e.add_argument("--response", choices=("expert", "ground_truth"), default="expert")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("replicate", help="generate and evaluate many bundles")
    r.add_argument("--config")
    r.add_argument("--n", type=int, default=10)
    r.add_argument("--seed-base", type=int, default=1)
    r.add_argument("--n-ph", type=int)
    r.add_argument("--type", choices=("network", "non-network"))
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, help="process count (default: ENGINE_THREADS or CPU count)")
    r.add_argument("--write-bundles", action=argparse.BooleanOptionalAction, default=True)
    r.add_argument("--no-evaluate", action="store_true")
    r.set_defaults(func=cmd_replicate)

    d = sub.add_parser("diagnose", help="homophily and label summary of a bundle")
    d.add_argument("--dataset", required=True)
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 2
    except (SimulationError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
