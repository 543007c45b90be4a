"""
qkern command line: ingest, gram, train, sweep-bandwidth, gen-gap, shots and mercer.

Exit codes: 0 on success, 2 on input or format errors, 3 on capacity errors.
"""
import argparse
import logging
import sys
from typing import List, Optional, Sequence

from src.errors import CapacityError, InputError
from src.measurement.shot_noise import ConstantMode
from src.quantum_utils.configuration import DefaultValues, ExperimentConfig
from src.services.experiment_service import ExperimentService

logger = logging.getLogger("qkern")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAPACITY = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def parse_list(text: str, cast=float) -> List:
    try:
        return [cast(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Cannot parse {text!r} as a comma-separated list.") from None


def parse_int_list(text: str) -> List[int]:
    return parse_list(text, int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkern", description="Trace-induced quantum kernel workbench.")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="parse IDX files and prepare train/test splits")
    ingest.add_argument("--images", required=True)
    ingest.add_argument("--labels", required=True)
    ingest.add_argument("--classes", type=parse_int_list, default=list(DefaultValues.ClassPair))
    ingest.add_argument("--train", type=int, default=DefaultValues.TrainSize)
    ingest.add_argument("--test", type=int, default=DefaultValues.TestSize)
    ingest.add_argument("--pca", type=int, default=DefaultValues.PcaDimension)
    ingest.add_argument("--out", required=True)

    for name, description in (("gram", "Gram matrix of the configured kernel and estimator"),
                              ("sweep-bandwidth", "test accuracy over bandwidths and feature counts"),
                              ("gen-gap", "generalization gap over feature counts"),
                              ("mercer", "empirical Mercer decomposition and checks")):
        command = commands.add_parser(name, help=description)
        command.add_argument("--config", required=True)
        command.add_argument("--out", required=True)

    train = commands.add_parser("train", help="train an SVM on a saved Gram matrix")
    train.add_argument("--gram", required=True)
    train.add_argument("--labels", required=True)
    train.add_argument("--C", type=float, default=None)
    train.add_argument("--cv", type=parse_list, default=None, help="comma-separated C grid")
    train.add_argument("--folds", type=int, default=DefaultValues.Folds)
    train.add_argument("--out", default=None)

    shots = commands.add_parser("shots", help="measurement budgets of the GFQK and H-body LPQKs")
    shots.add_argument("--n", type=int, default=DefaultValues.BudgetQubits)
    shots.add_argument("--H", type=parse_int_list, default=list(DefaultValues.BudgetBodies))
    shots.add_argument("--eps", type=float, default=DefaultValues.BudgetEpsilon)
    shots.add_argument("--N-max", dest="n_max", type=int, default=DefaultValues.BudgetMaxN)
    shots.add_argument("--m", type=int, default=None, help="shots per GFQK element instead of ceil(1/eps^2)")
    shots.add_argument("--mode", choices=[mode.value for mode in ConstantMode], default=ConstantMode.ASYMPTOTIC.value)
    shots.add_argument("--gfqk-constant", type=float, default=1.0)
    shots.add_argument("--lpqk-constant", type=float, default=1.0)
    shots.add_argument("--out", required=True)

    for command in commands.choices.values():
        command.add_argument("--seed", type=int, default=None)
    return parser


def configure_logging(verbose: bool):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, stream=sys.stderr)


def run_command(args: argparse.Namespace) -> str:
    if args.command == "ingest":
        if len(args.classes) != 2:
            raise InputError(f"--classes needs two labels, got {args.classes}.")
        return ExperimentService.ingest(args.images, args.labels, tuple(args.classes), args.train, args.test,
                                        args.pca, args.seed or 0, args.out)
    if args.command == "train":
        return ExperimentService.train_model(args.gram, args.labels, args.C, args.cv, args.folds, args.seed or 0,
                                             args.out)
    if args.command == "shots":
        rows = ExperimentService().shots(args.n, args.H, args.eps, args.n_max, args.out, m=args.m, mode=args.mode,
                                         gfqk_constant=args.gfqk_constant, lpqk_constant=args.lpqk_constant)
        return f"Wrote {len(rows)} budget rows to {args.out}"

    config = ExperimentConfig.load(args.config).with_seed(args.seed)
    service = ExperimentService(config)
    service.load_data()
    if args.command == "gram":
        K = service.run_gram(args.out)
        return f"Wrote {K.size}x{K.size} {K.estimator.value} Gram matrix to {args.out}"
    if args.command == "sweep-bandwidth":
        return f"Wrote {len(service.sweep_bandwidth(args.out))} sweep rows to {args.out}"
    if args.command == "gen-gap":
        return f"Wrote {len(service.gen_gap(args.out))} gap rows to {args.out}"
    report = service.mercer(args.out)
    return f"Mercer decomposition with {report['modes']} nonzero modes written to {args.out}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        print(run_command(args))
    except CapacityError as error:
        logger.error("%s", error)
        return EXIT_CAPACITY
    except InputError as error:
        logger.error("%s", error)
        return EXIT_INPUT
    except OSError as error:
        logger.error("%s", error)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
