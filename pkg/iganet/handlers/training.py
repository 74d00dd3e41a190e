import logging
from argparse import Namespace
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict

import numpy as np
import pandas as pd

from iganet.analytic import dipole_field, export_evaluation_csv, sample_eval_points
from iganet.config import RunConfig
from iganet.db import Database
from iganet.efie import eval_scattered_field, load_system
from iganet.errors import ContractError, DivergenceError
from iganet.geometry import make_unit_sphere, to_params
from iganet.neural import MlpSpec, forward, load_model, save_model
from iganet.problem import ProblemSetup
from iganet.reports import write_csv
from iganet.training import (
    TEST,
    TRAIN,
    OptimizerSettings,
    TrainResult,
    cached_system,
    evaluate,
    generate_dataset,
    load_batch,
    load_manifest,
    precompute_systems,
    save_manifest,
    time_inference_vs_solve,
    train,
    train_single,
)

logger = logging.getLogger(__name__)

SINGLE_STOP_EPSILON = 1e-9


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train the network on the spheroid dataset")
    parser.add_argument("--single", action="store_true", help="fit the unit sphere only")
    parser.add_argument("--out-dir", default=None, help="directory for the model and logs")
    parser.set_defaults(handler=cmd_train)

    parser = subparsers.add_parser("evaluate", help="losses and field errors of a trained network")
    parser.add_argument("--model", default=None, help="model file (default <out-dir>/model.mlp)")
    parser.add_argument("--manifest", default=None, help="dataset manifest (default <out-dir>/manifest.json)")
    parser.add_argument("--out-dir", default=None, help="directory for the reports")
    parser.set_defaults(handler=cmd_evaluate)


def _output_dir(args: Namespace, config: RunConfig) -> Path:
    out = Path(args.out_dir) if args.out_dir else Path(config.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _optimizer(config: RunConfig) -> OptimizerSettings:
    opt = config.optimizer
    return OptimizerSettings(opt.lr, opt.beta1, opt.beta2, opt.eps)


async def _train_single(config: RunConfig, setup: ProblemSetup, db: Database, out_dir: Path) -> TrainResult:
    space = setup.spheroid_space(1.0)
    system = await cached_system(space, setup, config.paths.cache_dir, db, config.runtime.threads)
    params = to_params(make_unit_sphere())
    spec = MlpSpec.for_problem(params.size, system.num_dofs, config.network.hidden)
    return train_single(
        system,
        params,
        spec,
        stop_epsilon=SINGLE_STOP_EPSILON,
        max_steps=config.training.max_steps,
        seed=config.training.seed,
        optimizer=_optimizer(config),
        checkpoint_dir=out_dir / "checkpoints",
        checkpoint_every=config.training.checkpoint_every,
        log_every=config.training.log_every,
    )


async def _train_dataset(config: RunConfig, setup: ProblemSetup, db: Database, out_dir: Path) -> TrainResult:
    tc = config.training
    dataset = generate_dataset(tc.dataset_size, tc.r_min, tc.r_max, tc.seed, tc.train_fraction)
    report = await precompute_systems(dataset, setup, config.paths.cache_dir, db, config.runtime.threads)
    dataset = replace(dataset, system_keys=report.keys)
    save_manifest(dataset, out_dir / "manifest.json", config.provenance())
    logger.info("Systems: %d assembled, %d reused", report.assembled, report.reused)

    batch = load_batch(dataset, report.paths, dataset.ids(TRAIN))
    spec = MlpSpec.for_problem(batch.inputs.shape[1], batch.rhs.shape[1], config.network.hidden)
    return train(
        batch,
        spec,
        stop_epsilon=tc.stop_epsilon,
        max_steps=tc.max_steps,
        seed=tc.seed,
        optimizer=_optimizer(config),
        checkpoint_dir=out_dir / "checkpoints",
        checkpoint_every=tc.checkpoint_every,
        log_every=tc.log_every,
    )


async def cmd_train(args: Namespace, data: Dict[str, Any]) -> TrainResult:
    config: RunConfig = data["config"]
    db: Database = data["db"]
    setup = ProblemSetup.from_config(config)
    out_dir = _output_dir(args, config)
    (out_dir / "checkpoints").mkdir(exist_ok=True)

    try:
        if args.single:
            result = await _train_single(config, setup, db, out_dir)
        else:
            result = await _train_dataset(config, setup, db, out_dir)
    except DivergenceError as exc:
        if exc.checkpoint is not None:
            path = save_model(exc.checkpoint, out_dir / "checkpoints" / "last_good.mlp")
            logger.error("Training diverged at step %s, last checkpoint saved to %s", exc.step, path)
        raise

    model_path = save_model(result.model, out_dir / "model.mlp")
    write_csv(result.log, out_dir / "training_log.csv", config.provenance())
    await db.record_run("train-single" if args.single else "train", config.config_hash(),
                        result.model.num_dofs, loss=result.loss)
    if not result.converged:
        logger.warning("Stopping threshold not reached after %d steps (loss %.3e)", result.steps, result.loss)
    logger.info("Training outputs in %s (model %s)", out_dir, model_path.name)
    return result


async def cmd_evaluate(args: Namespace, data: Dict[str, Any]) -> pd.DataFrame:
    config: RunConfig = data["config"]
    db: Database = data["db"]
    setup = ProblemSetup.from_config(config)
    out_dir = _output_dir(args, config)

    model = load_model(args.model or out_dir / "model.mlp")
    dataset = load_manifest(args.manifest or out_dir / "manifest.json")
    report = await precompute_systems(dataset, setup, config.paths.cache_dir, db, config.runtime.threads)
    for entry_id, key in dataset.system_keys.items():
        if report.keys.get(entry_id) != key:
            logger.warning("Geometry %d: system key changed since training (%s)", entry_id, report.keys.get(entry_id))

    first = load_system(report.paths[dataset.entries[0].id])
    if first.num_dofs != model.num_dofs:
        raise ContractError(
            f"model predicts {model.num_dofs} coefficients but the systems have {first.num_dofs}"
        )

    ev = config.evaluation
    eval_points = sample_eval_points(make_unit_sphere(), ev.points, ev.seed, ev.radius)
    frame = evaluate(model, dataset, report.paths, setup, eval_points)
    write_csv(frame, out_dir / "evaluation.csv", config.provenance())

    spheres = [e for e in dataset.entries if e.is_sphere]
    if spheres:
        sphere = spheres[0]
        j = forward(model, dataset.params(sphere.id))
        space = setup.spheroid_space(sphere.r_semi)
        reference = dipole_field(eval_points.points, setup.excitation)
        computed = eval_scattered_field(
            space, j, eval_points.points, setup.excitation.kappa, order=config.quadrature.field_order
        )
        export_evaluation_csv(out_dir / "sphere_field.csv", eval_points.points, reference, computed, config.provenance())

    test_ids = dataset.ids(TEST) or dataset.ids()
    timing = time_inference_vs_solve(
        model, setup, dataset.entry(test_ids[0]).r_semi, threads=config.runtime.threads
    )

    test = frame[frame["split"] == TEST]
    worst_delta = float(test["delta_max"].max()) if len(test) else float(np.nan)
    worst_loss = float(test["loss"].max()) if len(test) else float(np.nan)
    logger.info(
        "Test set: max loss %.3e, max delta %.3e (speedup over assembly and solve x%.1f)",
        worst_loss, worst_delta, timing["speedup"],
    )
    await db.record_run("evaluate", config.config_hash(), model.num_dofs, worst_delta, worst_loss)
    return frame
