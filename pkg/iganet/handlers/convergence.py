import logging
from argparse import Namespace
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

from iganet.config import RunConfig
from iganet.db import Database
from iganet.geometry import make_unit_sphere
from iganet.handlers.solve import solve_surface
from iganet.reports import write_csv

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("convergence", help="h-refinement study on the unit sphere")
    parser.add_argument("--out", default=None, help="CSV path")
    parser.set_defaults(handler=cmd_convergence)


def fit_slope(h: np.ndarray, errors: np.ndarray) -> float:
    """Least-squares slope of log(error) against log(h)."""
    if len(h) < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(h), np.log(errors), 1)
    return float(slope)


async def cmd_convergence(args: Namespace, data: Dict[str, Any]) -> pd.DataFrame:
    config: RunConfig = data["config"]
    db: Database = data["db"]
    sphere = make_unit_sphere()

    rows = []
    for level in config.convergence.levels:
        level_config = replace(config, discretization=replace(config.discretization, refinement=level))
        outcome = await solve_surface(sphere, level_config, db)
        rows.append(
            {
                "level": level,
                "dofs": outcome.space.num_dofs,
                "h": 2.0 ** (-level),
                "delta_max": outcome.delta_max,
            }
        )
        await db.record_run("convergence", level_config.config_hash(), outcome.space.num_dofs, outcome.delta_max)

    frame = pd.DataFrame(rows, columns=["level", "dofs", "h", "delta_max"])
    slope = fit_slope(frame["h"].to_numpy(), frame["delta_max"].to_numpy())
    logger.info("Convergence: %s, log-log slope %.3f", frame.to_dict("records"), slope)

    out = Path(args.out) if args.out else Path(config.paths.output_dir) / "convergence.csv"
    write_csv(frame, out, config.provenance())
    return frame
