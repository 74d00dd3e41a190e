import argparse
import asyncio
import logging
import sys
from typing import Any, Dict, Optional, Sequence

from iganet.config import load_config, parse_assignments
from iganet.db import Database
from iganet.errors import ConfigError, IganetError
from iganet.handlers import convergence as convergence_handlers
from iganet.handlers import geometry as geometry_handlers
from iganet.handlers import solve as solve_handlers
from iganet.handlers import training as training_handlers
from iganet.middlewares import LoggingMiddleware

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_IO = 3


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError so they share exit code 1."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def create_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="iganet", description="IGA-BEM EFIE solver and physics-informed network")
    parser.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--config", default=None, help="config file with section.field=value lines")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    parser.add_argument("--threads", default=None, help="runtime.threads")
    parser.add_argument("--cache-dir", default=None, help="paths.cache_dir")
    parser.add_argument("--solver", default=None, help="solver.method (lu or gmres)")
    parser.add_argument("--refinement", default=None, help="discretization.refinement")
    parser.add_argument("--seed", default=None, help="training.seed")

    subparsers = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    subparsers.required = True
    geometry_handlers.register(subparsers)
    solve_handlers.register(subparsers)
    convergence_handlers.register(subparsers)
    training_handlers.register(subparsers)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = parse_assignments(args.set)
    flags = {
        "runtime.threads": args.threads,
        "paths.cache_dir": args.cache_dir,
        "solver.method": args.solver,
        "discretization.refinement": args.refinement,
        "training.seed": args.seed,
    }
    overrides.update({k: v for k, v in flags.items() if v is not None})
    return overrides


async def run(args: argparse.Namespace) -> Any:
    config = load_config(args.config, _overrides(args))
    db = Database(config.paths.database)
    data = {"config": config, "db": db}
    try:
        await db.init_db()
        return await LoggingMiddleware()(args.handler, args, data)
    finally:
        await db.close()


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = create_parser().parse_args(argv)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return ConfigError.exit_code

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    try:
        asyncio.run(run(args))
    except IganetError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_IO
    except ArithmeticError as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
