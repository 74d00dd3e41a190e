"""
Hertzian dipole reference field, exterior evaluation points and the
maximum pointwise error.

Fields use the e^{-j kappa r} phase convention of the Green's function
and the prefactor 1/(4 pi eps) with eps = 1 by default, the normalization
of the kernel e^{-j kappa r} / (4 pi r).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

from iganet.errors import ContractError, DomainError, SingularityError
from iganet.geometry import MultipatchSurface, max_radius
from iganet.reports import write_csv

logger = logging.getLogger(__name__)

EVAL_RADIUS = 2.0
EVAL_RADIUS_BOUND = 3.0


@dataclass(frozen=True, eq=False)
class ExcitationDipole:
    position: np.ndarray
    moment: np.ndarray
    kappa: float
    permittivity: float = 1.0

    def __post_init__(self):
        position = np.asarray(self.position, dtype=float)
        moment = np.asarray(self.moment, dtype=float)
        if position.shape != (3,) or moment.shape != (3,):
            raise ContractError("dipole position and moment must be 3-vectors")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")
        if not self.permittivity > 0:
            raise DomainError(f"permittivity must be positive, got {self.permittivity}")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "moment", moment)
        object.__setattr__(self, "kappa", float(self.kappa))
        object.__setattr__(self, "permittivity", float(self.permittivity))

    @property
    def prefactor(self) -> float:
        return 1.0 / (4.0 * np.pi * self.permittivity)

    def scaled(self, factor: float) -> "ExcitationDipole":
        return ExcitationDipole(self.position, self.moment * factor, self.kappa, self.permittivity)


def dipole_field(x: np.ndarray, excitation: ExcitationDipole) -> np.ndarray:
    """Electric field of the dipole at ``x`` ((3,) or (m, 3)); complex, same leading shape."""
    x = np.asarray(x, dtype=float)
    points = np.atleast_2d(x)
    d = points - excitation.position
    r = np.linalg.norm(d, axis=-1)
    if np.any(r < 1e-12):
        raise SingularityError("dipole field evaluated at the source position")

    n = d / r[:, None]
    p = excitation.moment
    k = excitation.kappa
    phase = np.exp(-1j * k * r)
    radiation = np.cross(np.cross(n, p), n)
    static = 3.0 * n * (n @ p)[:, None] - p
    field = excitation.prefactor * (
        k**2 * radiation * (phase / r)[:, None]
        + static * ((1.0 / r**3 + 1j * k / r**2) * phase)[:, None]
    )
    return field[0] if x.ndim == 1 else field


@dataclass(frozen=True, eq=False)
class EvalPointSet:
    points: np.ndarray
    radius: float
    count: int
    seed: int


def fibonacci_sphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


def sample_eval_points(
    geometry: Optional[MultipatchSurface],
    count: int,
    seed: int,
    radius: float = EVAL_RADIUS,
) -> EvalPointSet:
    """Seeded, randomly rotated Fibonacci lattice on the sphere of the given radius."""
    if count < 1:
        raise ContractError(f"count must be at least 1, got {count}")
    if not 0 < radius <= EVAL_RADIUS_BOUND:
        raise DomainError(f"evaluation radius must lie in (0, {EVAL_RADIUS_BOUND}]")
    if geometry is not None and radius <= max_radius(geometry):
        raise DomainError(
            f"evaluation radius {radius} does not enclose the geometry "
            f"(surface radius {max_radius(geometry):.3f})"
        )
    rotation = Rotation.random(None, seed)
    points = radius * rotation.apply(fibonacci_sphere(count))
    return EvalPointSet(points, float(radius), int(count), int(seed))


def max_pointwise_error(e_ref: np.ndarray, e_h: np.ndarray) -> float:
    e_ref = np.asarray(e_ref, dtype=complex)
    e_h = np.asarray(e_h, dtype=complex)
    if e_ref.shape != e_h.shape:
        raise ContractError(f"field lists differ in shape: {e_ref.shape} vs {e_h.shape}")
    if e_ref.size == 0:
        return 0.0
    return float(np.max(pointwise_errors(e_ref, e_h)))


def pointwise_errors(e_ref: np.ndarray, e_h: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.abs(np.asarray(e_ref) - np.asarray(e_h)) ** 2, axis=-1))


def evaluation_frame(points: np.ndarray, e_ref: np.ndarray, e_h: np.ndarray) -> pd.DataFrame:
    columns = {"x": points[:, 0], "y": points[:, 1], "z": points[:, 2]}
    for label, values in (("ref", e_ref), ("h", e_h)):
        for c, axis in enumerate("xyz"):
            columns[f"{label}_{axis}_re"] = values[:, c].real
            columns[f"{label}_{axis}_im"] = values[:, c].imag
    columns["error"] = pointwise_errors(e_ref, e_h)
    return pd.DataFrame(columns)


def export_evaluation_csv(
    path: str | Path,
    points: np.ndarray,
    e_ref: np.ndarray,
    e_h: np.ndarray,
    provenance: Optional[dict] = None,
) -> Path:
    if not (len(points) == len(e_ref) == len(e_h)):
        raise ContractError("points and field lists must have equal length")
    return write_csv(evaluation_frame(np.asarray(points), np.asarray(e_ref), np.asarray(e_h)), path, provenance)
