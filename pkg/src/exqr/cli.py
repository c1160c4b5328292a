"""Command-line interface.

Exit status: 0 on success, 1 on domain or regime failures, 2 on malformed
options, configuration or I/O problems.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import ConfigError, ExqrError
from .extreme_limit import sample_limit_distribution, univariate_design
from .harness import ExperimentConfig, extreme_setup, read_dataset, run_qq_experiment
from .qr_core import fit
from .tail_index import estimate_tail
from .tails import HeterogeneityProfile, make_model


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--tau", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--l", type=float, default=2.0)
    p.add_argument("--m", type=float, default=2.0)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="exqr", description="Quantile regression at extreme and intermediate levels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit a regression quantile to a dataset CSV")
    p.add_argument("--data", required=True)

    p = sub.add_parser("limit-sim", parents=[common], help="simulate the extreme-order limit law")
    p.add_argument("--model", help="error model for a univariate run without --config")
    p.add_argument("--xi", type=float)

    p = sub.add_parser("tail-index", parents=[common], help="spacing-based tail-index report")
    p.add_argument("--data", required=True)
    p.add_argument("--coverage", type=float, default=0.95)
    p.add_argument(
        "--point", action="append", default=[],
        help="comma-separated covariates (no intercept) at which to report c_hat; repeatable",
    )

    p = sub.add_parser("mc-qq", parents=[common], help="Monte Carlo QQ comparison")
    p.add_argument(
        "--certified-limit", action="store_true",
        help="use the certified limit variable instead of the default truncation",
    )
    return parser


def _write_text(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _cmd_fit(args) -> None:
    if args.tau is None:
        raise ConfigError("fit needs --tau")
    data = read_dataset(args.data)
    _write_text(args.out, json.dumps(fit(data, args.tau).to_dict(), indent=2) + "\n")


def _cmd_limit_sim(args) -> None:
    reps = 2000 if args.reps is None else args.reps
    seed = 0 if args.seed is None else args.seed
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        k = cfg.k if args.k is None else args.k
        setup = extreme_setup(cfg.generator, k / cfg.generator.T)
        model, profile, design = setup.model, setup.profile, setup.design
    else:
        if args.model is None or args.k is None:
            raise ConfigError("limit-sim needs --config, or --model and --k")
        k = args.k
        model = make_model(args.model, args.xi)
        profile = HeterogeneityProfile.homogeneous(1, model.tail_type)
        design = univariate_design
    dist = sample_limit_distribution(k, model, profile, design, reps, seed, workers=args.workers)
    if args.out is None:
        raise ConfigError("limit-sim needs --out")
    dist.write_csv(args.out)


def _cmd_tail_index(args) -> None:
    data = read_dataset(args.data)
    points = None
    if args.point:
        try:
            points = np.array([[1.0] + [float(v) for v in s.split(",") if v.strip()] for s in args.point])
        except ValueError as exc:
            raise ConfigError(f"malformed --point: {exc}") from exc
    est = estimate_tail(data, args.tau, args.l, args.m, points, args.coverage)
    _write_text(args.out, json.dumps(est.to_dict(), indent=2) + "\n")


def _cmd_mc_qq(args) -> None:
    if not args.config:
        raise ConfigError("mc-qq needs --config")
    obj = ExperimentConfig.load(args.config).to_json()
    if args.reps is not None:
        obj["R"] = args.reps
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.tau is not None or args.k is not None:
        obj.pop("tau")
        obj.pop("k")
        if args.tau is not None:
            obj["tau"] = args.tau
        if args.k is not None:
            obj["k"] = args.k
    cfg = ExperimentConfig.from_json(obj)
    out = args.out or cfg.output_path
    if out is None:
        raise ConfigError("mc-qq needs --out or output_path in the config")
    run_qq_experiment(cfg, workers=args.workers, certified_limit=args.certified_limit).write_csv(out)


COMMANDS = {
    "fit": _cmd_fit,
    "limit-sim": _cmd_limit_sim,
    "tail-index": _cmd_tail_index,
    "mc-qq": _cmd_mc_qq,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"exqr: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"exqr: I/O error: {exc}", file=sys.stderr)
        return 2
    except ExqrError as exc:
        print(f"exqr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
