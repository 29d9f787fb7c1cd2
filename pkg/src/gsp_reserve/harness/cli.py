"""Command line entry point ``gsp-reserve``.

Exit status is 0 on success, 2 when the configuration is invalid and 3 on
a numerical failure (a singular equilibrium system or a reserve search
without a root).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..exceptions import ConfigError, GSPError, NumericalError
from ..reserve_density import require_root
from .data import Dataset, ResultRecord
from .experiments import (
    ExperimentConfig,
    csv_text,
    default_experiment,
    fit_bid_function,
    learn_density,
    learn_sweep,
    run_convergence,
    run_histograms,
    run_table1,
    simulate_auctions,
    write_convergence,
    write_table1,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3



def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {text}")
    return value


def _int_list(text: str):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config (JSON); defaults to the mixture setting")
    common.add_argument("--seed", type=_seed, help="override the master seed")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gsp-reserve", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="write train.csv and test.csv")

    learn = sub.add_parser("learn", parents=[common], help="fit one reserve and score it")
    learn.add_argument("--method", choices=("sweep", "density"), required=True)
    learn.add_argument("--dataset", type=Path, help="training dataset CSV (simulated when omitted)")
    learn.add_argument("--test", type=Path, help="test dataset CSV (simulated when omitted)")

    sub.add_parser("equilibrium", parents=[common], help="write the fitted bid grid")

    conv = sub.add_parser("convergence", parents=[common], help="equilibrium convergence study")
    conv.add_argument("--n-list", type=_int_list, default=[100, 200, 400, 800, 1600])
    conv.add_argument("--reps", type=int, default=10)
    conv.add_argument("--workers", type=int, default=1)
    conv.add_argument("--reference-n", type=int, default=None)

    sub.add_parser("table1", parents=[common], help="train both learners and compare test revenue")

    hist = sub.add_parser("histograms", parents=[common], help="true vs recovered valuation histograms")
    hist.add_argument("--bins", type=int, default=30)
    return parser


def load_config(args) -> ExperimentConfig:
    econfig = ExperimentConfig.load(args.config) if args.config else default_experiment()
    if args.seed is not None:
        econfig = econfig.with_seed(args.seed)
    return econfig


def _cmd_simulate(args, econfig):
    f = fit_bid_function(econfig)
    for split in ("train", "test"):
        path = simulate_auctions(econfig, split, bid_function=f).save(args.out / f"{split}.csv")
        print(path)


def _cmd_learn(args, econfig):
    cfg = econfig.auction
    f = None
    if args.dataset is None or args.test is None:
        f = fit_bid_function(econfig)
    train = Dataset.load(args.dataset) if args.dataset else simulate_auctions(econfig, "train", bid_function=f)
    test = Dataset.load(args.test) if args.test else simulate_auctions(econfig, "test", bid_function=f)
    if args.method == "sweep":
        reserve = learn_sweep(train, cfg).reserve
    else:
        reserve = require_root(learn_density(train, cfg))
    record = ResultRecord.evaluate(args.method, reserve, test, cfg)
    path = record.save(args.out / f"result_{args.method}.json")
    print(f"{args.method}: reserve {record.reserve:.6g}, mean revenue {record.mean_revenue:.6g} -> {path}")


def _cmd_equilibrium(args, econfig):
    f = fit_bid_function(econfig)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = [(repr(float(v)), repr(float(b))) for v, b in zip(f.grid_values, f.grid_bids)]
    path = args.out / "equilibrium.csv"
    path.write_text(csv_text(("value", "bid"), rows))
    for msg in f.diagnostics:
        print(f"warning: {msg}", file=sys.stderr)
    print(path)


def _cmd_convergence(args, econfig):
    result = run_convergence(econfig, args.n_list, args.reps, args.workers, args.reference_n)
    paths = write_convergence(result, args.out)
    print(f"c = {result.envelope_c:.4g}, log-log slope = {result.slope:.3f} -> {paths['csv']}")


def _cmd_table1(args, econfig):
    result = run_table1(econfig)
    if not result.density_is_root:
        raise NumericalError("density learner found no root of the reserve equation")
    paths = write_table1(result, econfig, args.out)
    for r in (result.sweep, result.density, result.oracle):
        print(f"{r.method:8s} reserve {r.reserve:.4f}  revenue {r.mean_revenue:.4f} +/- {r.std_error:.4f}")
    print(paths["json"])


def _cmd_histograms(args, econfig):
    out = run_histograms(econfig, args.out, bins=args.bins)
    for name, d in out["ks"].items():
        print(f"KS({name}, true) = {d:.4f}")


COMMANDS = {
    "simulate": _cmd_simulate,
    "learn": _cmd_learn,
    "equilibrium": _cmd_equilibrium,
    "convergence": _cmd_convergence,
    "table1": _cmd_table1,
    "histograms": _cmd_histograms,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        econfig = load_config(args)
        COMMANDS[args.command](args, econfig)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GSPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
