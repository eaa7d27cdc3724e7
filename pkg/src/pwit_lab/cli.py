"""``pwit-lab`` command line.

Exit codes: 0 success, 1 check failure or IO error, 2 usage error,
3 resource limit reached.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .errors import DomainError, ResourceError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RESOURCE = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pwit-lab", description="Random conductance models: spectra, walks and traps.")
    p.add_argument("experiment", choices=experiments.EXPERIMENTS)
    p.add_argument("--config", help="JSON config; flags override its fields")
    p.add_argument("--seed", type=int, dest="master_seed")
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--levy", help="e.g. 'stable:c=1,alpha=0.5' or 'tempered:c=1,alpha=0.5,p=1'")
    p.add_argument("--n", type=int, nargs="+", dest="n_list")
    p.add_argument("--horizon", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--quiet", action="store_true", help="do not print the summary")
    return p


def make_config(args) -> experiments.ExperimentConfig:
    data = experiments.load_config(args.config) if args.config else {}
    if data.get("experiment", args.experiment) != args.experiment:
        raise DomainError(f"config is for experiment {data['experiment']!r}, not {args.experiment!r}")
    data["experiment"] = args.experiment
    for name in ("master_seed", "out_dir", "levy", "n_list", "horizon", "replicas", "workers"):
        value = getattr(args, name)
        if value is not None:
            data[name] = value
    return experiments.ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = make_config(args)
        if cfg.experiment == "validate":
            from .validation import run_validation_suite

            status, result = run_validation_suite(cfg)
        else:
            status, result = EXIT_OK, experiments.run(cfg)
    except (DomainError, TypeError) as exc:
        print(f"pwit-lab: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ResourceError as exc:
        print(f"pwit-lab: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(f"pwit-lab: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if not args.quiet:
        print(json.dumps(experiments._jsonable(result), indent=2, sort_keys=True))
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
