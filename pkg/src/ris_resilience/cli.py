"""Command-line entry points for the two experiments and manifest tooling.

Exit codes: 0 on success, 2 for configuration errors, 3 when more than half
of the sub-iteration solves failed numerically.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ConfigError, SystemConfig
from .experiments import (METHODS, ExperimentSpec, rerun_from_manifest,
                          run_adaptation_experiment, run_scaling_experiment,
                          verify_manifest)

ENV_SEEDS = "RIS_RESILIENCE_SEEDS"
ENV_OUT = "RIS_RESILIENCE_OUT"


def parse_seed_list(text: str) -> tuple[int, ...]:
    """'0-19' or '1,4,7' or a single integer."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError(f"no seeds in {text!r}")
    return tuple(seeds)


def load_spec(args) -> ExperimentSpec:
    payload: dict = {}
    if args.config:
        if args.config.endswith(".toml"):
            import tomli
            with open(args.config, "rb") as f:
                payload = tomli.load(f)
        else:
            with open(args.config) as f:
                payload = json.load(f)
    system = SystemConfig(**payload.get("system", {}))
    exp = dict(payload.get("experiment", {}))
    exp["system"] = system.to_dict()

    seeds = os.environ.get(ENV_SEEDS) or args.seeds
    if seeds:
        exp["seeds"] = parse_seed_list(seeds) if isinstance(seeds, str) else seeds
    out = os.environ.get(ENV_OUT) or args.out
    if out:
        exp["out_dir"] = out
    if args.method and args.method != "all":
        exp["methods"] = (args.method,)
    if args.jobs:
        exp["jobs"] = args.jobs
    return ExperimentSpec.from_dict(exp)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ris-resilience",
                                description="Blockage-resilience experiments for a "
                                            "RIS-aided cell-free MIMO downlink")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON or TOML config file")
        sp.add_argument("--seeds", help="seed list, e.g. 0-19 or 1,2,5")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--method", choices=(*METHODS, "all"), default="all")
        sp.add_argument("--jobs", type=int, default=0, help="parallel workers")

    common(sub.add_parser("adapt", help="blockage/recovery timelines and summaries"))
    common(sub.add_parser("scale", help="resilience vs. RIS element count"))

    v = sub.add_parser("verify-manifest", help="re-hash a manifest's outputs")
    v.add_argument("manifest")
    r = sub.add_parser("rerun", help="repeat an experiment from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify-manifest":
            problems = verify_manifest(args.manifest)
            for msg in problems:
                print(msg, file=sys.stderr)
            return 0 if not problems else 1
        if args.command == "rerun":
            path = rerun_from_manifest(args.manifest, args.out)
            print(path)
            return 0
        spec = load_spec(args)
        run = run_adaptation_experiment if args.command == "adapt" else run_scaling_experiment
        manifest_path = run(spec)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    with open(manifest_path) as f:
        summary = json.load(f)["summary"]
    print(manifest_path)
    if summary.get("failure_fraction", 0.0) > 0.5:
        print(f"numerical failures in {summary['failure_fraction']:.0%} of solves",
              file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
