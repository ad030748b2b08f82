import argparse
import logging

from capbound.cli.reports import FORMATS
from capbound.oracle.suite import ORACLE_GROUPS

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """The capbound command line with every sub-command registered."""
    parser = argparse.ArgumentParser(
        prog="capbound",
        description="Radius-margin VC bounds, constrained training and margin verification for dense networks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python run_capbound.py bound --spec demo/relu_p2.yaml
  python run_capbound.py bound --spec demo/relu_p2.yaml --robust 1
  python run_capbound.py train --spec demo/two_moons.yaml --data moons.csv --model moons.json
  python run_capbound.py margins --model moons.json --data moons.csv --format csv
  python run_capbound.py verify --only lipschitz
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_commands(subparsers)
    return parser


def register_commands(subparsers):
    """Register available commands with the argument parser"""

    register_bound_command(subparsers)
    register_train_command(subparsers)
    register_margins_command(subparsers)
    register_verify_command(subparsers)

    logger.debug("All commands registered.")


def register_bound_command(subparsers):
    parser = subparsers.add_parser("bound", help="Evaluate every applicable VC bound for a spec")
    _add_common(parser)
    parser.add_argument("--spec", dest="spec_path", required=True, help="Network or resnet spec (YAML)")
    parser.add_argument("--radius", type=float, help="Input radius R, overriding the spec's data section")
    parser.add_argument("--robust", type=float, metavar="C", help="Add the bound for inputs perturbed within radius C")
    parser.add_argument(
        "--profile", type=int, default=0, metavar="K", help="Also report the bound with the last layer repeated up to K times"
    )


def register_train_command(subparsers):
    parser = subparsers.add_parser("train", help="Train a max-norm constrained net with projected SGD")
    _add_common(parser)
    parser.add_argument("--spec", dest="spec_path", required=True, help="Network spec (YAML)")
    parser.add_argument("--data", dest="dataset_path", required=True, help="Headerless CSV dataset")
    parser.add_argument("--model", dest="model_path", required=True, help="Output model file (JSON)")
    parser.add_argument("--history", dest="history_path", help="Output history CSV (default: next to the model)")
    parser.add_argument("--radius", type=float, help="Declared input radius R")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--lr", type=float, default=0.05)
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=16)
    parser.add_argument("--objective", choices=["hinge", "robust"], default="hinge")
    parser.add_argument("--c", type=float, help="Noise radius c of the robust objective")
    parser.add_argument("--mask-policy", dest="mask_policy", choices=["none", "dropout", "dropconnect"], default="none")
    parser.add_argument("--margin-every", dest="margin_every", type=int, default=0, help="Record margin reports every K epochs")
    parser.add_argument("--ball-samples", dest="ball_samples", type=int)


def register_margins_command(subparsers):
    parser = subparsers.add_parser("margins", help="Per-sample output and input margins of a saved model")
    _add_common(parser)
    parser.add_argument("--model", dest="model_path", required=True, help="Model file written by train")
    parser.add_argument("--data", dest="dataset_path", required=True, help="Headerless CSV dataset")
    parser.add_argument("--radius", type=float, help="Input radius R (search radius is 4R)")
    parser.add_argument("--c", type=float, help="Noise radius c recorded with the certificate settings")
    parser.add_argument("--ball-samples", dest="ball_samples", type=int)


def register_verify_command(subparsers):
    parser = subparsers.add_parser("verify", help="Run the oracle suite")
    _add_common(parser)
    parser.add_argument("--spec", dest="spec_path", help="Network spec (default: the bundled demo spec)")
    parser.add_argument("--radius", type=float, help="Input radius R")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per statistical oracle")
    parser.add_argument("--nets", type=int, help="Random nets per feature-radius oracle")
    parser.add_argument("--ball-samples", dest="ball_samples", type=int)
    parser.add_argument("--only", nargs="+", choices=ORACLE_GROUPS, help="Run only these oracle groups")


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--seed", type=int, help="Run seed (CAPBOUND_SEED overrides it)")
    parser.add_argument("--output", "-o", help="Report file (default: stdout)")
    parser.add_argument("--format", choices=FORMATS, default="json")
