"""
Spheroid dataset, EFIE system precomputation, physics-informed training and
evaluation of the trained network.
"""
from __future__ import annotations

import asyncio
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
import pandas as pd

from iganet.analytic import EvalPointSet, dipole_field, max_pointwise_error
from iganet.db import Database
from iganet.efie import (
    EfieSystem,
    assemble_system,
    eval_scattered_field,
    load_system,
    residual_loss,
    save_system,
    system_key,
)
from iganet.errors import AssemblyError, ContractError, DivergenceError, DomainError, IganetError, StorageError
from iganet.geometry import make_spheroid, to_params
from iganet.linalg import lu_solve
from iganet.neural import (
    Batch,
    MlpModel,
    MlpSpec,
    adam_init,
    adam_step,
    forward,
    init,
    loss_and_gradient,
    save_model,
)
from iganet.problem import ProblemSetup
from iganet.spaces import DivConformingSpace

logger = logging.getLogger(__name__)

SPHERE_TOL = 1e-12
TRAIN, TEST = "train", "test"


class DatasetEntry(NamedTuple):
    id: int
    r_semi: float
    split: str

    @property
    def is_sphere(self) -> bool:
        return abs(self.r_semi - 1.0) < SPHERE_TOL


@dataclass(frozen=True, eq=False)
class Dataset:
    entries: tuple[DatasetEntry, ...]
    seed: int = 0
    system_keys: dict[int, str] = field(default_factory=dict)

    def ids(self, split: Optional[str] = None) -> list[int]:
        return [e.id for e in self.entries if split is None or e.split == split]

    def entry(self, entry_id: int) -> DatasetEntry:
        return self.entries[entry_id]

    def params(self, entry_id: int) -> np.ndarray:
        return to_params(make_spheroid(self.entries[entry_id].r_semi))


def generate_dataset(
    n: int,
    r_min: float = 0.6,
    r_max: float = 1.0,
    seed: int = 0,
    train_fraction: float = 0.25,
) -> Dataset:
    """Uniform r_semi grid with a seeded split that keeps the unit sphere out of training."""
    if n < 4:
        raise ContractError(f"need at least 4 geometries to split, got {n}")
    if not 0.0 < r_min < r_max <= 1.0:
        raise DomainError(f"need 0 < r_min < r_max <= 1, got [{r_min}, {r_max}]")

    radii = np.linspace(r_min, r_max, n)
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    candidates = [i for i, r in enumerate(radii) if abs(r - 1.0) >= SPHERE_TOL]
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(candidates, size=n_train, replace=False).tolist())

    entries = tuple(
        DatasetEntry(i, float(r), TRAIN if i in chosen else TEST) for i, r in enumerate(radii)
    )
    logger.info("Generated dataset: %d geometries, %d train / %d test", n, n_train, n - n_train)
    return Dataset(entries, seed)


def save_manifest(dataset: Dataset, path: str | Path, provenance: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {
        "seed": dataset.seed,
        "geometries": [
            {
                "id": e.id,
                "r_semi": e.r_semi,
                "split": e.split,
                "system_key": dataset.system_keys.get(e.id),
            }
            for e in dataset.entries
        ],
    }
    if provenance:
        data.update(provenance)
    path.write_text(json.dumps(data, indent=1))
    return path


def load_manifest(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        entries = tuple(
            DatasetEntry(int(g["id"]), float(g["r_semi"]), str(g["split"])) for g in data["geometries"]
        )
        keys = {int(g["id"]): g["system_key"] for g in data["geometries"] if g.get("system_key")}
    except FileNotFoundError as exc:
        raise StorageError(f"manifest not found: {path}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise StorageError(f"malformed manifest {path}: {exc}") from exc
    return Dataset(entries, int(data.get("seed", 0)), keys)


# ---------- precompute ----------


class PrecomputeReport(NamedTuple):
    paths: dict[int, Path]
    keys: dict[int, str]
    assembled: int
    reused: int


def _assemble_to_file(r_semi: float, setup: ProblemSetup, path: str) -> tuple[str, int]:
    """Worker entry point: assemble one spheroid system and write its cache file."""
    space = setup.spheroid_space(r_semi)
    system = assemble_system(space, setup.excitation, setup.quadrature, threads=1)
    save_system(system, path)
    return system.geometry_hash, system.num_dofs


async def precompute_systems(
    dataset: Dataset,
    setup: ProblemSetup,
    cache_dir: str | Path,
    db: Database,
    workers: int = 1,
) -> PrecomputeReport:
    """Assemble every missing system; reuse the ones already indexed and present on disk."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    await db.init_db()

    paths: dict[int, Path] = {}
    keys: dict[int, str] = {}
    missing: list[tuple[DatasetEntry, str, Path]] = []
    for entry in dataset.entries:
        surface = setup.refine(make_spheroid(entry.r_semi))
        key = system_key(surface, setup.degree, setup.excitation, setup.quadrature)
        keys[entry.id] = key
        row = await db.get_system(key)
        if row is not None and Path(row["path"]).is_file():
            paths[entry.id] = Path(row["path"])
            continue
        if row is not None:
            await db.forget_system(key)
        missing.append((entry, key, cache_dir / f"{key}.efie"))

    logger.info(
        "System cache: %d hits, %d to assemble (%d workers)",
        len(paths), len(missing), workers,
    )

    async def run(entry: DatasetEntry, path: Path, pool) -> tuple[str, int]:
        loop = asyncio.get_running_loop()
        try:
            if pool is None:
                return _assemble_to_file(entry.r_semi, setup, str(path))
            return await loop.run_in_executor(pool, _assemble_to_file, entry.r_semi, setup, str(path))
        except IganetError as exc:
            raise AssemblyError(f"assembly failed for geometry {entry.id} (r_semi={entry.r_semi}): {exc}") from exc

    if missing:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = await asyncio.gather(*(run(e, p, pool) for e, _, p in missing))
        else:
            results = [await run(e, p, None) for e, _, p in missing]
        for (entry, key, path), (ghash, num_dofs) in zip(missing, results):
            await db.register_system(key, ghash, num_dofs, setup.excitation.kappa, str(path))
            paths[entry.id] = path

    return PrecomputeReport(paths, keys, len(missing), len(dataset.entries) - len(missing))


async def cached_system(
    space: DivConformingSpace,
    setup: ProblemSetup,
    cache_dir: str | Path,
    db: Database,
    threads: int = 1,
) -> EfieSystem:
    """System of one discretization, from the cache index when possible."""
    await db.init_db()
    key = system_key(space.geometry, space.degree, setup.excitation, setup.quadrature)
    row = await db.get_system(key)
    if row is not None and Path(row["path"]).is_file():
        logger.info("System cache hit %s (%d DOFs)", key, row["num_dofs"])
        return load_system(row["path"])

    logger.info("System cache miss %s, assembling", key)
    system = assemble_system(space, setup.excitation, setup.quadrature, threads)
    path = save_system(system, Path(cache_dir) / f"{key}.efie")
    await db.register_system(key, system.geometry_hash, system.num_dofs, system.kappa, str(path))
    return system


def load_batch(dataset: Dataset, paths: dict[int, Path], ids: Sequence[int]) -> Batch:
    systems = [load_system(paths[i]) for i in ids]
    sizes = {s.num_dofs for s in systems}
    if len(sizes) != 1:
        raise ContractError(f"systems in one batch must share K, got {sorted(sizes)}")
    return Batch(
        inputs=np.stack([dataset.params(i) for i in ids]),
        matrices=np.stack([s.matrix for s in systems]),
        rhs=np.stack([s.rhs for s in systems]),
    )


def check_systems(paths: dict[int, Path], tol: float = 1e-12) -> dict[int, float]:
    """Relative direct-solve residual of every cached system."""
    out = {}
    for entry_id, path in paths.items():
        system = load_system(path)
        x = lu_solve(system.matrix, -system.rhs)
        norm = np.linalg.norm(system.rhs)
        out[entry_id] = float(np.linalg.norm(system.matrix @ x + system.rhs) / norm) if norm else 0.0
        if out[entry_id] > tol:
            logger.warning("System %d: direct-solve residual %.3e", entry_id, out[entry_id])
    return out


# ---------- training ----------


@dataclass(frozen=True)
class OptimizerSettings:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class TrainResult(NamedTuple):
    model: MlpModel
    log: pd.DataFrame
    converged: bool
    steps: int
    loss: float


def train(
    batch: Batch,
    spec: MlpSpec,
    stop_epsilon: float,
    max_steps: int,
    seed: int,
    optimizer: OptimizerSettings = OptimizerSettings(),
    checkpoint_dir: Optional[str | Path] = None,
    checkpoint_every: int = 500,
    log_every: int = 100,
) -> TrainResult:
    """Full-batch ADAM until the mean residual loss drops to ``stop_epsilon``."""
    if max_steps < 0:
        raise ContractError("max_steps must be non-negative")
    model = init(spec, seed, inputs=batch.inputs)
    state = adam_init(model, optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps)
    checkpoint = model
    started = time.perf_counter()
    rows = []
    converged = False
    step = 0
    loss = float("nan")

    logger.info(
        "Training %s on %d geometries (stop at %.1e, at most %d steps)",
        "-".join(map(str, spec.sizes)), len(batch.rhs), stop_epsilon, max_steps,
    )
    while True:
        try:
            loss, grad = loss_and_gradient(model, batch)
        except DivergenceError as exc:
            raise DivergenceError(
                f"training diverged at step {step}; last checkpoint kept",
                checkpoint=checkpoint,
                step=step,
            ) from exc
        if loss <= stop_epsilon:
            converged = True
        if converged or step >= max_steps or (log_every and step % log_every == 0):
            rows.append({"step": step, "loss": loss, "wall_time": time.perf_counter() - started})
            logger.info("step %d loss %.3e", step, loss)
        if converged or step >= max_steps:
            break

        model, state = adam_step(model, state, grad)
        step += 1
        if checkpoint_every and step % checkpoint_every == 0:
            checkpoint = model
            if checkpoint_dir is not None:
                save_model(model, Path(checkpoint_dir) / f"checkpoint_{step:07d}.mlp")

    log = pd.DataFrame(rows, columns=["step", "loss", "wall_time"])
    log["status"] = ""
    log.loc[log.index[-1], "status"] = "converged" if converged else "max_steps"
    logger.info(
        "Training finished after %d steps: loss %.3e (%s)",
        step, loss, "converged" if converged else "step limit reached",
    )
    return TrainResult(model, log, converged, step, loss)


def train_single(
    system: EfieSystem,
    params: np.ndarray,
    spec: MlpSpec,
    stop_epsilon: float = 1e-9,
    max_steps: int = 200000,
    seed: int = 0,
    **kwargs,
) -> TrainResult:
    batch = Batch(np.asarray(params)[None, :], system.matrix[None], system.rhs[None])
    return train(batch, spec, stop_epsilon, max_steps, seed, **kwargs)


# ---------- evaluation ----------


def field_error(setup: ProblemSetup, r_semi: float, j: np.ndarray, eval_points: EvalPointSet, field_order: int) -> float:
    space = setup.spheroid_space(r_semi)
    reference = dipole_field(eval_points.points, setup.excitation)
    computed = eval_scattered_field(space, j, eval_points.points, setup.excitation.kappa, order=field_order)
    return max_pointwise_error(reference, computed)


def evaluate(
    model: MlpModel,
    dataset: Dataset,
    paths: dict[int, Path],
    setup: ProblemSetup,
    eval_points: EvalPointSet,
) -> pd.DataFrame:
    """Per-geometry residual loss and maximum field error, for network and direct solve."""
    rows = []
    for entry in dataset.entries:
        system = load_system(paths[entry.id])
        params = dataset.params(entry.id)
        j_net = forward(model, params)
        j_direct = lu_solve(system.matrix, -system.rhs)
        rows.append(
            {
                "id": entry.id,
                "r_semi": entry.r_semi,
                "split": entry.split,
                "is_sphere": entry.is_sphere,
                "loss": residual_loss(system.matrix, system.rhs, j_net),
                "delta_max": field_error(setup, entry.r_semi, j_net, eval_points, setup.quadrature.field_order),
                "delta_max_direct": field_error(setup, entry.r_semi, j_direct, eval_points, setup.quadrature.field_order),
            }
        )
    report = pd.DataFrame(rows)
    for split in (TRAIN, TEST):
        losses = report.loc[report["split"] == split, "loss"]
        if len(losses):
            logger.info("%s losses in [%.3e, %.3e]", split, losses.min(), losses.max())
    return report


def time_inference_vs_solve(
    model: MlpModel,
    setup: ProblemSetup,
    r_semi: float,
    repeats: int = 20,
    solve_repeats: int = 1,
    threads: int = 1,
) -> dict:
    """Wall time of one network prediction against discretize + assemble + LU solve (informational)."""
    params = to_params(make_spheroid(r_semi))
    started = time.perf_counter()
    for _ in range(repeats):
        forward(model, params)
    inference = (time.perf_counter() - started) / repeats

    started = time.perf_counter()
    for _ in range(solve_repeats):
        system = assemble_system(setup.spheroid_space(r_semi), setup.excitation, setup.quadrature, threads)
        lu_solve(system.matrix, -system.rhs)
    solve = (time.perf_counter() - started) / solve_repeats
    logger.info("Inference %.3e s vs assembly and direct solve %.3e s per geometry", inference, solve)
    return {"inference_s": inference, "solve_s": solve, "speedup": solve / inference if inference else float("inf")}
