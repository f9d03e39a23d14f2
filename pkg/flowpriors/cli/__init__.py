"""
Command-line front end.

    flowpriors gen --preset walk --frames 16 --size 128x128 --seed 7 --out walk.hfsf
    flowpriors eval --pred pred.hfsf --gt walk.hfsf
    flowpriors score --clip walk.hfsf --disable com
    flowpriors optimize --clip walk.hfsf --steps 500 --log trajectory.csv
    flowpriors ablate --clip walk.hfsf --steps 500
    flowpriors gradcheck --constraint skel --seed 3
    flowpriors info --clip walk.hfsf

Exit codes: 0 success, 1 validation or usage, 2 I/O, 3 numeric.
"""

import argparse
import contextlib
import io
import logging
import sys
from dataclasses import dataclass
from typing import List, Optional, Sequence

from ..config import load_environment
from ..errors import ClipIOError, FlowPriorsError, UsageError
from ..optimizer import ABLATION_COMPONENTS
from ..priors.gradcheck import DEFAULT_STEP
from ..priors.types import CONSTRAINT_NAMES
from ..synthbench import PRESETS
from . import commands

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CommandResult:
    """Exit code and the text to show; a nonzero code always carries a diagnostic."""

    exit_code: int
    report: str


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad input."""

    def error(self, message: str):
        raise UsageError(f"{message}\n\n{self.format_usage()}")


def _add_prior_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value file overriding tolerances and weights")
    parser.add_argument(
        "--disable",
        action="append",
        choices=CONSTRAINT_NAMES,
        default=[],
        help="Zero the weight of a constraint (repeatable)",
    )
    parser.add_argument(
        "--contacts-on-mask",
        action="store_true",
        help="Only count ground contacts that project into the foreground mask",
    )
    parser.add_argument("--seed", type=int, default=0, help="Seed for all randomness (default: 0)")


def _add_optim_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--clip", required=True, help="Ground-truth clip (.hfsf)")
    parser.add_argument("--steps", type=int, default=500, help="Descent iterations (default: 500)")
    parser.add_argument("--sigma-flow", type=float, default=0.1, help="Flow perturbation, meters (default: 0.1)")
    parser.add_argument("--sigma-depth", type=float, default=0.05, help="Depth perturbation, meters (default: 0.05)")
    parser.add_argument("--sigma-pose", type=float, default=0.05, help="Joint perturbation, meters (default: 0.05)")
    _add_prior_flags(parser)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flowpriors", description="Physical priors for human scene flow")
    parser.add_argument("--verbose", "-v", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("gen", help="Generate a synthetic ground-truth clip")
    p.add_argument("--preset", required=True, choices=PRESETS, help="Motion preset")
    p.add_argument("--frames", type=int, default=16, help="Number of frames (default: 16)")
    p.add_argument("--size", default="128x128", help="Grid as WIDTHxHEIGHT (default: 128x128)")
    p.add_argument("--dt", type=float, default=1.0 / 30.0, help="Frame interval, seconds (default: 1/30)")
    p.add_argument("--seed", type=int, default=0, help="Seed (default: 0)")
    p.add_argument("--subdivisions", type=int, default=5, help="Capsule subdivisions, at least 4 (default: 5)")
    p.add_argument("--orbit", action="store_true", help="Orbit the camera around the subject")
    p.add_argument("--dump-ppm", metavar="DIR", help="Also write flow magnitude images to DIR")
    p.add_argument("--out", required=True, help="Output clip path")
    p.set_defaults(handler=commands.gen)

    p = sub.add_parser("eval", help="Metrics of a predicted clip against ground truth")
    p.add_argument("--pred", required=True, help="Predicted clip")
    p.add_argument("--gt", required=True, help="Ground-truth clip")
    p.set_defaults(handler=commands.evaluate)

    p = sub.add_parser("score", help="Constraint values of a clip against synthetic teachers")
    p.add_argument("--clip", required=True, help="Clip to score")
    p.add_argument("--teacher-depth-noise", type=float, default=0.0, help="Teacher depth noise, meters (default: 0)")
    p.add_argument("--teacher-bias", type=float, default=0.0, help="Teacher depth bias, meters (default: 0)")
    p.add_argument("--teacher-pose-noise", type=float, default=0.0, help="Teacher joint noise, meters (default: 0)")
    _add_prior_flags(p)
    p.set_defaults(handler=commands.score)

    p = sub.add_parser("optimize", help="Perturb a clip and descend the prior objective")
    _add_optim_flags(p)
    p.add_argument("--log", help="Write the trajectory CSV to this path")
    p.set_defaults(handler=commands.optimize)

    p = sub.add_parser("ablate", help="Full run plus one run per removed constraint")
    _add_optim_flags(p)
    p.add_argument(
        "--components",
        nargs="+",
        choices=ABLATION_COMPONENTS,
        default=list(ABLATION_COMPONENTS),
        help="Constraints to remove one at a time",
    )
    p.set_defaults(handler=commands.ablate)

    p = sub.add_parser("gradcheck", help="Finite-difference check of the analytic gradients")
    p.add_argument("--constraint", default="all", choices=("all",) + CONSTRAINT_NAMES, help="Constraint (default: all)")
    p.add_argument("--seed", type=int, default=0, help="First fixture seed (default: 0)")
    p.add_argument("--seeds", type=int, default=1, help="Number of consecutive seeds (default: 1)")
    p.add_argument("--step", type=float, default=DEFAULT_STEP, help=f"Difference step (default: {DEFAULT_STEP})")
    p.set_defaults(handler=commands.gradcheck)

    p = sub.add_parser("info", help="Inspect a clip container")
    p.add_argument("--clip", required=True, help="Clip to inspect")
    p.set_defaults(handler=commands.info)
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def dispatch(argv: Sequence[str]) -> CommandResult:
    """Parse ``argv`` (without the program name) and run the subcommand."""
    parser = build_parser()
    output = io.StringIO()
    try:
        with contextlib.redirect_stdout(output):
            args = parser.parse_args(list(argv))
    except SystemExit as e:
        # --help exits through argparse; anything it printed is the report
        return CommandResult(int(e.code or 0), output.getvalue())
    except UsageError as e:
        return CommandResult(e.exit_code, f"error: {e}")

    _configure_logging(args.verbose)
    try:
        return CommandResult(0, args.handler(args))
    except FlowPriorsError as e:
        logger.debug(f"{args.command} failed", exc_info=True)
        return CommandResult(e.exit_code, f"error: {e}\n")
    except OSError as e:
        return CommandResult(ClipIOError.exit_code, f"error: {e}\n")


def main(argv: Optional[List[str]] = None) -> int:
    load_environment()
    result = dispatch(sys.argv[1:] if argv is None else argv)
    stream = sys.stdout if result.exit_code == 0 else sys.stderr
    stream.write(result.report)
    return result.exit_code


__all__ = ["CommandResult", "build_parser", "dispatch", "main"]
