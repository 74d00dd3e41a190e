import json
import logging
from argparse import Namespace
from pathlib import Path
from typing import Any, Dict, NamedTuple

import numpy as np

from iganet.analytic import dipole_field, export_evaluation_csv, max_pointwise_error, sample_eval_points
from iganet.config import RunConfig
from iganet.db import Database
from iganet.efie import EfieSystem, eval_scattered_field, sample_surface_current
from iganet.errors import ContractError
from iganet.geometry import MultipatchSurface, load_geometry, to_params
from iganet.linalg import SolveResult, solve
from iganet.neural import forward, load_model
from iganet.problem import ProblemSetup
from iganet.reports import write_csv
from iganet.spaces import DivConformingSpace
from iganet.training import cached_system

logger = logging.getLogger(__name__)


class SolveOutcome(NamedTuple):
    space: DivConformingSpace
    system: EfieSystem
    result: SolveResult
    points: np.ndarray
    reference: np.ndarray
    computed: np.ndarray
    delta_max: float


def register(subparsers) -> None:
    parser = subparsers.add_parser("solve", help="assemble and solve the EFIE system for a geometry file")
    parser.add_argument("geometry", help="geometry JSON file")
    parser.add_argument("--out", default=None, help="solution JSON path")
    parser.set_defaults(handler=cmd_solve)

    parser = subparsers.add_parser("surface-current", help="export |Re J| and |Im J| on the surface")
    parser.add_argument("geometry", help="geometry JSON file")
    parser.add_argument("--model", default=None, help="predict the coefficients with a trained model")
    parser.add_argument("--samples", type=int, default=3, help="samples per element direction")
    parser.add_argument("--out", default=None, help="CSV path")
    parser.set_defaults(handler=cmd_surface_current)


async def solve_surface(surface: MultipatchSurface, config: RunConfig, db: Database) -> SolveOutcome:
    setup = ProblemSetup.from_config(config)
    space = setup.discretize(surface)
    system = await cached_system(space, setup, config.paths.cache_dir, db, config.runtime.threads)
    result = solve(
        system.matrix,
        -system.rhs,
        config.solver.method,
        tol=config.solver.tol,
        restart=config.solver.restart,
        max_iter=config.solver.max_iter,
    )
    evaluation = config.evaluation
    points = sample_eval_points(space.geometry, evaluation.points, evaluation.seed, evaluation.radius).points
    reference = dipole_field(points, setup.excitation)
    computed = eval_scattered_field(
        space, result.x, points, setup.excitation.kappa, order=config.quadrature.field_order
    )
    delta = max_pointwise_error(reference, computed)
    logger.info(
        "Solved %d DOFs with %s: residual %.3e, delta_max %.6e",
        space.num_dofs, result.method, result.residual, delta,
    )
    return SolveOutcome(space, system, result, points, reference, computed, delta)


async def cmd_solve(args: Namespace, data: Dict[str, Any]) -> Dict[str, Any]:
    config: RunConfig = data["config"]
    db: Database = data["db"]

    surface = load_geometry(args.geometry)
    outcome = await solve_surface(surface, config, db)

    output_dir = Path(config.paths.output_dir)
    out = Path(args.out) if args.out else output_dir / "solution.json"
    report = {
        "geometry": str(args.geometry),
        "num_dofs": outcome.space.num_dofs,
        "solver": outcome.result.method,
        "iterations": outcome.result.iterations,
        "residual": outcome.result.residual,
        "delta_max": outcome.delta_max,
        "j_re": outcome.result.x.real.tolist(),
        "j_im": outcome.result.x.imag.tolist(),
        **config.provenance(),
    }
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=1))
    export_evaluation_csv(
        out.with_name(out.stem + "_evaluation.csv"),
        outcome.points, outcome.reference, outcome.computed, config.provenance(),
    )
    await db.record_run("solve", config.config_hash(), outcome.space.num_dofs, outcome.delta_max)
    logger.info("Solution written to %s (delta_max %.6e)", out, outcome.delta_max)
    return report


async def cmd_surface_current(args: Namespace, data: Dict[str, Any]) -> Path:
    config: RunConfig = data["config"]
    db: Database = data["db"]

    surface = load_geometry(args.geometry)
    if args.model:
        model = load_model(args.model)
        space = ProblemSetup.from_config(config).discretize(surface)
        if model.num_dofs != space.num_dofs:
            raise ContractError(
                f"model predicts {model.num_dofs} coefficients but the discretization has {space.num_dofs}"
            )
        coeffs = forward(model, to_params(surface))
    else:
        outcome = await solve_surface(surface, config, db)
        space, coeffs = outcome.space, outcome.result.x

    frame = sample_surface_current(space, coeffs, args.samples)
    out = Path(args.out) if args.out else Path(config.paths.output_dir) / "surface_current.csv"
    return write_csv(frame, out, config.provenance())
