"""
Galerkin discretization of the electric field integral equation on a
perfectly conducting closed surface.

    V_mn = int int g(x, y) [phi_m(x) . phi_n(y) - div phi_m(x) div phi_n(y) / kappa^2]
    f_m  = int E_i(x) . phi_m(x)

and the discrete system is V j = -f. The scattered field is reconstructed as

    E_s(x) = -[ int g(x, y) J(y) + (1 / kappa^2) grad_x int g(x, y) div J(y) ]

which, for an excitation placed inside the surface, reproduces the
excitation field outside.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
import pandas as pd

from iganet.analytic import ExcitationDipole, dipole_field
from iganet.errors import AssemblyError, ContractError, DomainError, SingularityError, StorageError
from iganet.geometry import MultipatchSurface, geometry_hash
from iganet.quadrature import (
    CORNERS,
    QuadratureSettings,
    canonical_maps,
    classify_pair,
    is_near,
    panel_diameter,
    singular_rule,
    tensor_rule,
)
from iganet.spaces import DivConformingSpace, element_values

logger = logging.getLogger(__name__)

MIN_DISTANCE = 1e-14
CACHE_MAGIC = b"IGAEFIE1"
CACHE_VERSION = 1
_HEADER = np.dtype(
    [
        ("magic", "S8"),
        ("version", "<u4"),
        ("num_dofs", "<u8"),
        ("kappa", "<f8"),
        ("geometry_hash", "S64"),
    ]
)


@dataclass(frozen=True, eq=False)
class EfieSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    kappa: float
    geometry_hash: str = ""

    @property
    def num_dofs(self) -> int:
        return self.rhs.shape[0]


class ElementTable(NamedTuple):
    """Signed basis data of every element at one tensor rule, stacked over elements."""

    points: np.ndarray  # (E, q, 3)
    vectors: np.ndarray  # (E, q, nloc, 3), weights folded in
    divergence: np.ndarray  # (E, q, nloc), weights folded in


class Panels(NamedTuple):
    corners: np.ndarray  # (E, 4, 3)
    centers: np.ndarray  # (E, 3)
    diameters: np.ndarray  # (E,)


# ---------- kernel ----------


def greens_kernel(r: np.ndarray, kappa: float) -> np.ndarray:
    return np.exp(-1j * kappa * r) / (4.0 * np.pi * r)


def greens(x: np.ndarray, y: np.ndarray, kappa: float) -> complex:
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if r < MIN_DISTANCE:
        raise SingularityError("Green's function evaluated at coincident points")
    return complex(greens_kernel(r, kappa))


# ---------- element data ----------


def element_table(space: DivConformingSpace, order: int) -> ElementTable:
    rule = tensor_rule(order, 2)
    s, t = rule.nodes[:, 0], rule.nodes[:, 1]
    points, vectors, divergence = [], [], []
    for element in space.elements:
        values = element_values(space, element, s, t)
        points.append(values.points)
        vectors.append(values.vectors * rule.weights[:, None, None])
        divergence.append(values.divergence * rule.weights[:, None])
    return ElementTable(np.stack(points), np.stack(vectors), np.stack(divergence))


def panels(space: DivConformingSpace) -> Panels:
    corners = np.stack(
        [element_values(space, el, CORNERS[:, 0], CORNERS[:, 1]).points for el in space.elements]
    )
    centers = np.stack(
        [element_values(space, el, [0.5], [0.5]).points[0] for el in space.elements]
    )
    diameters = np.array([panel_diameter(c) for c in corners])
    return Panels(corners, centers, diameters)


# ---------- matrix ----------


def _batched_blocks(a_data, b_data, kappa: float) -> np.ndarray:
    """Blocks (B, nloc, nloc) between one element and a batch of separated elements."""
    xa, va, da = a_data
    xb, vb, db = b_data
    r = np.linalg.norm(xa[None, :, None, :] - xb[:, None, :, :], axis=-1)
    g = greens_kernel(r, kappa)
    vec = np.einsum("ikc,bij,bjlc->bkl", va, g, vb, optimize=True)
    sca = np.einsum("ik,bij,bjl->bkl", da, g, db, optimize=True)
    return vec - sca / kappa**2


def _singular_block(space, el_a, el_b, topology, order: int, kappa: float) -> np.ndarray:
    rule = singular_rule(topology.kind, order)
    map_a, map_b = canonical_maps(topology)
    xa = map_a.apply(rule.nodes[:, :2])
    yb = map_b.apply(rule.nodes[:, 2:])
    va = element_values(space, el_a, xa[:, 0], xa[:, 1])
    vb = element_values(space, el_b, yb[:, 0], yb[:, 1])
    r = np.linalg.norm(va.points - vb.points, axis=-1)
    if np.any(r < MIN_DISTANCE):
        raise AssemblyError(
            f"singular rule hit coincident points for elements {el_a.index} and {el_b.index}"
        )
    g = greens_kernel(r, kappa) * rule.weights
    vec = np.einsum("qkc,q,qlc->kl", va.vectors, g, vb.vectors, optimize=True)
    sca = np.einsum("qk,q,ql->kl", va.divergence, g, vb.divergence, optimize=True)
    return vec - sca / kappa**2


class _RowAssembler:
    """Computes the blocks (a, b) for b >= a of one element row."""

    def __init__(self, space: DivConformingSpace, kappa: float, settings: QuadratureSettings):
        self.space = space
        self.kappa = kappa
        self.settings = settings
        self.panels = panels(space)
        self.regular = element_table(space, settings.regular_order)
        self.near = (
            element_table(space, settings.near_order)
            if settings.near_order != settings.regular_order
            else self.regular
        )

    def __call__(self, a: int) -> list[tuple[int, np.ndarray]]:
        space, pan, kappa = self.space, self.panels, self.kappa
        elements = space.elements
        others = np.arange(a, len(elements))

        dist = np.linalg.norm(
            pan.corners[a][None, :, None, :] - pan.corners[others][:, None, :, :], axis=-1
        )
        touching = np.any(dist < 1e-10, axis=(1, 2))
        touching[0] = True
        near = ~touching & is_near(
            pan.centers[a], pan.diameters[a], pan.centers[others], pan.diameters[others], self.settings.near_factor
        )
        far = ~touching & ~near

        blocks: list[tuple[int, np.ndarray]] = []
        for mask, table in ((far, self.regular), (near, self.near)):
            idx = others[mask]
            if idx.size:
                result = _batched_blocks(
                    (table.points[a], table.vectors[a], table.divergence[a]),
                    (table.points[idx], table.vectors[idx], table.divergence[idx]),
                    kappa,
                )
                blocks.extend(zip(idx.tolist(), result))

        for b in others[touching].tolist():
            topology = classify_pair(pan.corners[a], pan.corners[b], same=(a == b))
            blocks.append(
                (b, _singular_block(space, elements[a], elements[b], topology,
                                    self.settings.singular_order, kappa))
            )
        blocks.sort(key=lambda item: item[0])
        return blocks


def assemble_matrix(
    space: DivConformingSpace,
    kappa: float,
    settings: Optional[QuadratureSettings] = None,
    threads: int = 1,
) -> np.ndarray:
    """Dense complex-symmetric Galerkin matrix; rows are reduced in element order."""
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    settings = settings or QuadratureSettings()
    started = time.perf_counter()
    logger.info(
        "Assembling %dx%d EFIE matrix (%d elements, kappa=%g, %d threads)",
        space.num_dofs, space.num_dofs, len(space.elements), kappa, threads,
    )

    row = _RowAssembler(space, kappa, settings)
    elements = space.elements
    matrix = np.zeros((space.num_dofs, space.num_dofs), dtype=complex)

    def scatter(a: int, blocks) -> None:
        dofs_a = elements[a].dofs
        for b, block in blocks:
            if not np.all(np.isfinite(block)):
                raise AssemblyError(f"non-finite entries in block of elements ({a}, {b})")
            dofs_b = elements[b].dofs
            np.add.at(matrix, (dofs_a[:, None], dofs_b[None, :]), block)
            if b != a:
                np.add.at(matrix, (dofs_b[:, None], dofs_a[None, :]), block.T)

    rows = range(len(elements))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for a, blocks in zip(rows, pool.map(row, rows)):
                scatter(a, blocks)
    else:
        for a in rows:
            scatter(a, row(a))

    logger.info("Assembled EFIE matrix in %.2f s", time.perf_counter() - started)
    return matrix


# ---------- right-hand side ----------


def winding_number(space: DivConformingSpace, point: np.ndarray, order: int = 8) -> float:
    """Solid angle of the surface seen from ``point`` divided by 4 pi (1 inside, 0 outside)."""
    rule = tensor_rule(order, 2)
    point = np.asarray(point, dtype=float)
    total = 0.0
    for element in space.elements:
        values = element_values(space, element, rule.nodes[:, 0], rule.nodes[:, 1])
        d = values.points - point
        r = np.linalg.norm(d, axis=-1)
        if np.any(r < 1e-8):
            raise DomainError(f"point {point.tolist()} lies on the surface")
        total += float(np.sum(rule.weights * values.measure * np.einsum("qc,qc->q", d, values.normals) / r**3))
    return total / (4.0 * np.pi)


def assemble_rhs(
    space: DivConformingSpace,
    excitation: ExcitationDipole,
    order: int = 8,
    check_inside: bool = True,
) -> np.ndarray:
    if check_inside:
        w = winding_number(space, excitation.position, order)
        if abs(w - 1.0) > 0.5:
            raise DomainError(
                f"dipole at {excitation.position.tolist()} is not inside the surface "
                f"(winding number {w:.3f})"
            )
    table = element_table(space, order)
    field = dipole_field(table.points.reshape(-1, 3), excitation).reshape(table.points.shape)
    local = np.einsum("eqc,eqkc->ek", field, table.vectors)
    rhs = np.zeros(space.num_dofs, dtype=complex)
    for element, values in zip(space.elements, local):
        np.add.at(rhs, element.dofs, values)
    return rhs


def system_key(
    geometry: MultipatchSurface, degree: int, excitation: ExcitationDipole, settings: QuadratureSettings
) -> str:
    """Hash of everything that determines V and f."""
    payload = {
        "geometry": geometry_hash(geometry),
        "degree": degree,
        "kappa": excitation.kappa,
        "permittivity": excitation.permittivity,
        "position": excitation.position.tolist(),
        "moment": excitation.moment.tolist(),
        "quadrature": asdict(settings),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:32]


def assemble_system(
    space: DivConformingSpace,
    excitation: ExcitationDipole,
    settings: Optional[QuadratureSettings] = None,
    threads: int = 1,
) -> EfieSystem:
    settings = settings or QuadratureSettings()
    rhs = assemble_rhs(space, excitation, settings.rhs_order)
    matrix = assemble_matrix(space, excitation.kappa, settings, threads)
    return EfieSystem(matrix, rhs, excitation.kappa, geometry_hash(space.geometry))


# ---------- scattered field ----------


def _current_table(space: DivConformingSpace, j: np.ndarray, order: int):
    table = element_table(space, order)
    dofs = np.stack([el.dofs for el in space.elements])
    coeffs = j[dofs]  # (E, nloc)
    current = np.einsum("ek,eqkc->eqc", coeffs, table.vectors).reshape(-1, 3)
    divergence = np.einsum("ek,eqk->eq", coeffs, table.divergence).reshape(-1)
    return table.points.reshape(-1, 3), current, divergence


def eval_scattered_field(
    space: DivConformingSpace,
    j: np.ndarray,
    points: np.ndarray,
    kappa: float,
    order: int = 8,
    return_flags: bool = False,
    chunk: int = 32,
):
    j = np.asarray(j, dtype=complex)
    if j.shape != (space.num_dofs,):
        raise ContractError(f"expected {space.num_dofs} coefficients, got {j.shape}")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    y, current, divergence = _current_table(space, j, order)
    max_diam = float(np.max(panels(space).diameters))

    fields = np.zeros(points.shape, dtype=complex)
    flags = np.zeros(len(points), dtype=bool)
    for start in range(0, len(points), chunk):
        x = points[start : start + chunk]
        d = x[:, None, :] - y[None, :, :]
        r = np.linalg.norm(d, axis=-1)
        if np.any(r < MIN_DISTANCE):
            raise SingularityError("evaluation point coincides with a quadrature point")
        flags[start : start + chunk] = r.min(axis=1) < max_diam
        g = greens_kernel(r, kappa)
        grad = (g * (-1j * kappa - 1.0 / r) / r)[..., None] * d
        vector_part = g @ current
        scalar_part = np.einsum("pqc,q->pc", grad, divergence)
        fields[start : start + chunk] = -(vector_part + scalar_part / kappa**2)

    if np.any(flags):
        logger.warning(
            "%d of %d evaluation points are closer to the surface than one element diameter; "
            "field accuracy is degraded",
            int(flags.sum()), len(points),
        )
    return (fields, flags) if return_flags else fields


def residual_loss(matrix: np.ndarray, rhs: np.ndarray, j: np.ndarray) -> float:
    """Mean squared modulus of the residual V j + f."""
    matrix, rhs, j = np.asarray(matrix), np.asarray(rhs), np.asarray(j)
    if matrix.ndim != 2 or matrix.shape[0] != rhs.shape[0] or matrix.shape[1] != j.shape[0]:
        raise ContractError(
            f"incompatible shapes: V {matrix.shape}, f {rhs.shape}, j {j.shape}"
        )
    residual = matrix @ j + rhs
    return float(np.mean(np.abs(residual) ** 2))


def sample_surface_current(space: DivConformingSpace, j: np.ndarray, samples: int = 3) -> pd.DataFrame:
    """|Re J| and |Im J| on a samples x samples grid of every element."""
    j = np.asarray(j, dtype=complex)
    if j.shape != (space.num_dofs,):
        raise ContractError(f"expected {space.num_dofs} coefficients, got {j.shape}")
    local = (np.arange(samples) + 0.5) / samples
    ss, tt = np.meshgrid(local, local, indexing="ij")
    s, t = ss.ravel(), tt.ravel()
    rows = []
    for element in space.elements:
        values = element_values(space, element, s, t)
        current = np.einsum("k,qkc->qc", j[element.dofs], values.vectors) / values.measure[:, None]
        u0, u1, v0, v1 = element.bounds
        rows.append(
            pd.DataFrame(
                {
                    "patch": element.patch,
                    "element": element.index,
                    "u": u0 + (u1 - u0) * s,
                    "v": v0 + (v1 - v0) * t,
                    "x": values.points[:, 0],
                    "y": values.points[:, 1],
                    "z": values.points[:, 2],
                    "abs_re": np.linalg.norm(current.real, axis=-1),
                    "abs_im": np.linalg.norm(current.imag, axis=-1),
                }
            )
        )
    return pd.concat(rows, ignore_index=True)


# ---------- cache files ----------


def save_system(system: EfieSystem, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.zeros(1, dtype=_HEADER)
    header["magic"] = CACHE_MAGIC
    header["version"] = CACHE_VERSION
    header["num_dofs"] = system.num_dofs
    header["kappa"] = system.kappa
    header["geometry_hash"] = system.geometry_hash.encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.asarray(system.matrix, dtype="<c16").tobytes(order="F"))
        fh.write(np.asarray(system.rhs, dtype="<c16").tobytes())
    tmp.replace(path)
    logger.debug("System cache written to %s", path)
    return path


def load_system(path: str | Path) -> EfieSystem:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise StorageError(f"system cache not found: {path}") from exc
    if len(data) < _HEADER.itemsize:
        raise StorageError(f"system cache {path} is truncated")
    header = np.frombuffer(data[: _HEADER.itemsize], dtype=_HEADER)[0]
    if header["magic"] != CACHE_MAGIC:
        raise StorageError(f"{path} is not a system cache file")
    if int(header["version"]) != CACHE_VERSION:
        raise StorageError(f"unsupported system cache version {int(header['version'])}")
    k = int(header["num_dofs"])
    expected = _HEADER.itemsize + 16 * (k * k + k)
    if len(data) != expected:
        raise StorageError(f"system cache {path} has {len(data)} bytes, expected {expected}")
    body = np.frombuffer(data[_HEADER.itemsize :], dtype="<c16")
    matrix = body[: k * k].reshape((k, k), order="F").astype(complex)
    rhs = body[k * k :].astype(complex)
    return EfieSystem(matrix, rhs, float(header["kappa"]), header["geometry_hash"].decode())
