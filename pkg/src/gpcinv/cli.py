"""Command-line entry point: ``gpcinv {synth,train,invert,validate,importance}``.

Exit status is 0 on success, 1 when ``validate`` flags a channel, and 2 on
bad input (missing or malformed files, inconsistent configuration).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .distributions import DomainError

EXIT_OK, EXIT_FLAGGED, EXIT_INPUT = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--seed", type=int, help="root random seed (overrides config)")
    common.add_argument("--out", type=Path, default=Path("."), help="working/output directory")
    common.add_argument("--mode", choices=("bma", "mpm"), help="surrogate estimator")
    common.add_argument("--fast", action="store_true", help="short chains for smoke tests and CI")
    common.add_argument("--jobs", type=int, help="parallel training processes")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gpcinv", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate a synthetic scenario")
    tr = sub.add_parser("train", parents=[common], help="fit per-channel surrogates")
    tr.add_argument("--save-chains", action="store_true", help="also write Gibbs chains as CSV")
    sub.add_parser("invert", parents=[common], help="sample the input posterior")
    sub.add_parser("validate", parents=[common], help="posterior predictive check")
    sub.add_parser("importance", parents=[common], help="input significance table")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = pipeline.load_config(args.config, {"seed": args.seed, "mode": args.mode, "jobs": args.jobs})
        if args.fast:
            cfg.apply_fast()
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            truth = pipeline.cmd_synth(cfg, out)
            print(f"wrote scenario to {out} (active inputs: {', '.join(truth['active_inputs'])})")
        elif args.command == "train":
            models = pipeline.cmd_train(cfg, out, save_chains=args.save_chains)
            print(f"trained {len(models)} channel surrogates into {cfg.path('models', out)}")
        elif args.command == "invert":
            chain, summary = pipeline.cmd_invert(cfg, out)
            for d in summary["parameters"]:
                q = d["quantiles"]
                print(f"{d['name']:>16s}  mean {d['mean']:.4g}  95% [{q['0.025']:.4g}, {q['0.975']:.4g}]")
            for msg in chain.diagnostics:
                print("warning:", msg, file=sys.stderr)
        elif args.command == "validate":
            doc = pipeline.cmd_validate(cfg, out)
            for r in doc["channels"]:
                mark = "  FLAGGED" if r["flagged"] else ""
                print(f"{r['channel']:>8s}  observed {r['observed']:.4g}  quantile {r['quantile']:.3f}{mark}")
            if doc["n_flagged"]:
                return EXIT_FLAGGED
        elif args.command == "importance":
            rows = pipeline.cmd_importance(cfg, out)
            for r in rows:
                print(f"{r['name']:>10s}  {'significant' if r['significant'] else '-':>11s}  "
                      f"score {r['score']:.3f}  channels {r['n_channels']}")
    except (pipeline.InputError, DomainError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
