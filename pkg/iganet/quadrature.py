"""
Quadrature for the double surface integrals of the Galerkin operator.

Separated panel pairs use tensor Gauss-Legendre rules. Pairs that touch
(same panel, common edge, common vertex) use relative-coordinate
transforms with Duffy splits on [0, 1]^4, so that the 1/|x - y| kernel
becomes smooth in the integration variables.

Canonical configurations of the singular rules, in local coordinates
x = (x1, x2) of panel A and y = (y1, y2) of panel B:

- coincident: x and y live on the same panel;
- common edge: A(t, 0) = B(t, 0) for t in [0, 1];
- common vertex: A(0, 0) = B(0, 0).

``canonical_maps`` returns the square symmetries that bring an actual
pair into that configuration.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from iganet.errors import ContractError

logger = logging.getLogger(__name__)

COINCIDENCE_TOL = 1e-10

# local positions of the element corners (u0,v0), (u1,v0), (u1,v1), (u0,v1)
CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


class QuadratureRule(NamedTuple):
    nodes: np.ndarray
    weights: np.ndarray


class PanelPairClass(enum.Enum):
    SEPARATED = "separated"
    SHARED_VERTEX = "shared_vertex"
    SHARED_EDGE = "shared_edge"
    COINCIDENT = "coincident"


class PairTopology(NamedTuple):
    kind: PanelPairClass
    shared: tuple[tuple[int, int], ...]  # (corner of A, corner of B)


class SquareMap(NamedTuple):
    """Affine symmetry xi -> origin + xi[0] * axes[0] + xi[1] * axes[1] of [0, 1]^2."""

    origin: np.ndarray
    axes: np.ndarray

    def apply(self, xi: np.ndarray) -> np.ndarray:
        return self.origin + xi[:, :1] * self.axes[0] + xi[:, 1:2] * self.axes[1]


IDENTITY_MAP = SquareMap(np.zeros(2), np.eye(2))


@dataclass(frozen=True)
class QuadratureSettings:
    regular_order: int = 4
    near_order: int = 8
    near_factor: float = 1.0
    singular_order: int = 8
    rhs_order: int = 8
    field_order: int = 8

    def __post_init__(self):
        for name in ("regular_order", "near_order", "singular_order", "rhs_order", "field_order"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be at least 1")
        if self.near_factor < 0:
            raise ContractError("near_factor must be non-negative")


# ---------- Gauss rules ----------


@lru_cache(maxsize=None)
def _gauss(order: int) -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


def gauss_legendre_1d(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1], exact up to degree 2*order - 1."""
    if order < 1:
        raise ContractError(f"quadrature order must be at least 1, got {order}")
    return _gauss(int(order))


@lru_cache(maxsize=None)
def _tensor(order: int, dim: int) -> QuadratureRule:
    x, w = gauss_legendre_1d(order)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(nodes, weights)


def tensor_rule(order: int, dim: int = 2) -> QuadratureRule:
    """Tensor Gauss rule on [0, 1]^dim."""
    if order < 1:
        raise ContractError(f"quadrature order must be at least 1, got {order}")
    return _tensor(int(order), int(dim))


# ---------- singular rules ----------


def _coincident(order: int) -> QuadratureRule:
    (eta, tau, s1, s2), w = tensor_rule(order, 4).nodes.T, tensor_rule(order, 4).weights
    nodes, weights = [], []
    for swap in (False, True):
        a, b = (eta * tau, eta) if swap else (eta, eta * tau)
        jac = w * eta * (1.0 - a) * (1.0 - b)
        for sign1 in (1.0, -1.0):
            for sign2 in (1.0, -1.0):
                z1, z2 = sign1 * a, sign2 * b
                x1 = np.maximum(0.0, -z1) + (1.0 - a) * s1
                x2 = np.maximum(0.0, -z2) + (1.0 - b) * s2
                nodes.append(np.stack([x1, x2, x1 + z1, x2 + z2], axis=-1))
                weights.append(jac)
    return QuadratureRule(np.concatenate(nodes), np.concatenate(weights))


def _shared_edge(order: int) -> QuadratureRule:
    (eta, t1, t2, s), w = tensor_rule(order, 4).nodes.T, tensor_rule(order, 4).weights
    nodes, weights = [], []
    for pyramid in range(3):
        coords = [eta * t1, eta * t2]
        coords.insert(pyramid, eta)
        a, x2, y2 = coords
        jac = w * eta**2 * (1.0 - a)
        for sign in (1.0, -1.0):
            z = sign * a
            x1 = np.maximum(0.0, -z) + (1.0 - a) * s
            nodes.append(np.stack([x1, x2, x1 + z, y2], axis=-1))
            weights.append(jac)
    return QuadratureRule(np.concatenate(nodes), np.concatenate(weights))


def _shared_vertex(order: int) -> QuadratureRule:
    (eta, t1, t2, t3), w = tensor_rule(order, 4).nodes.T, tensor_rule(order, 4).weights
    nodes, weights = [], []
    for pyramid in range(4):
        coords = [eta * t1, eta * t2, eta * t3]
        coords.insert(pyramid, eta)
        nodes.append(np.stack(coords, axis=-1))
        weights.append(w * eta**3)
    return QuadratureRule(np.concatenate(nodes), np.concatenate(weights))


_SINGULAR_BUILDERS = {
    PanelPairClass.COINCIDENT: _coincident,
    PanelPairClass.SHARED_EDGE: _shared_edge,
    PanelPairClass.SHARED_VERTEX: _shared_vertex,
}


@lru_cache(maxsize=None)
def _singular(kind: PanelPairClass, order: int) -> QuadratureRule:
    rule = _SINGULAR_BUILDERS[kind](order)
    rule.nodes.setflags(write=False)
    rule.weights.setflags(write=False)
    logger.debug("Built %s rule of order %d with %d nodes", kind.value, order, len(rule.weights))
    return rule


def singular_rule(kind: PanelPairClass, order: int) -> QuadratureRule:
    """Rule on [0, 1]^4 with nodes (x1, x2, y1, y2) for a touching panel pair."""
    if kind is PanelPairClass.SEPARATED:
        raise ContractError("separated pairs use tensor Gauss rules, not singular rules")
    if order < 1:
        raise ContractError(f"quadrature order must be at least 1, got {order}")
    return _singular(kind, int(order))


# ---------- classification ----------


def classify_pair(
    corners_a: np.ndarray,
    corners_b: np.ndarray,
    same: bool = False,
    tol: float = COINCIDENCE_TOL,
) -> PairTopology:
    """Classify two panels by the world-space coincidence of their corners.

    ``corners_*`` are (4, 3) arrays ordered as ``CORNERS``.
    """
    if same:
        return PairTopology(PanelPairClass.COINCIDENT, tuple((i, i) for i in range(4)))
    dist = np.linalg.norm(corners_a[:, None, :] - corners_b[None, :, :], axis=-1)
    shared = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(dist < tol)))
    if len(shared) == 4:
        return PairTopology(PanelPairClass.COINCIDENT, shared)
    if len(shared) == 2:
        return PairTopology(PanelPairClass.SHARED_EDGE, shared)
    if len(shared) == 1:
        return PairTopology(PanelPairClass.SHARED_VERTEX, shared)
    if not shared:
        return PairTopology(PanelPairClass.SEPARATED, ())
    raise ContractError(f"panels share {len(shared)} corners")


def _inward_axis(corner: np.ndarray, axis: int) -> np.ndarray:
    e = np.zeros(2)
    e[axis] = 1.0 if corner[axis] == 0.0 else -1.0
    return e


def canonical_maps(topology: PairTopology) -> tuple[SquareMap, SquareMap]:
    """Symmetries of the local squares of A and B that realize the canonical configuration."""
    kind = topology.kind
    if kind is PanelPairClass.COINCIDENT:
        if all(i == j for i, j in topology.shared):
            return IDENTITY_MAP, IDENTITY_MAP
        raise ContractError("coincident panels with permuted corners are not supported")
    if kind is PanelPairClass.SEPARATED:
        return IDENTITY_MAP, IDENTITY_MAP

    maps = []
    for side in (0, 1):
        first = CORNERS[topology.shared[0][side]]
        if kind is PanelPairClass.SHARED_VERTEX:
            axes = np.stack([_inward_axis(first, 0), _inward_axis(first, 1)])
        else:
            second = CORNERS[topology.shared[1][side]]
            along = second - first
            if np.count_nonzero(along) != 1:
                raise ContractError("shared corners are not joined by a panel edge")
            other = 1 if along[0] != 0.0 else 0
            axes = np.stack([along, _inward_axis(first, other)])
        maps.append(SquareMap(first.copy(), axes))
    return maps[0], maps[1]


def panel_diameter(corners: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(corners[:, None, :] - corners[None, :, :], axis=-1)))


def is_near(center_a, diam_a, center_b, diam_b, factor: float):
    """Centre distance below ``factor`` times the summed diameters; broadcasts over panel arrays."""
    dist = np.linalg.norm(np.asarray(center_a, dtype=float) - np.asarray(center_b, dtype=float), axis=-1)
    return dist < factor * (np.asarray(diam_a) + np.asarray(diam_b))
