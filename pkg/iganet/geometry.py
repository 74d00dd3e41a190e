"""
Multipatch boundary representations: the exact six-patch unit sphere, the
spheroid family obtained from it by scaling along z, interface topology and
the JSON geometry format.

Sphere construction. The +z face is the inverse stereographic image (pole
(0, 0, -1)) of a rational biquadratic quadrilateral in the projection plane
whose four edges are the images of the great circles x = +-z, y = +-z.
Composing a biquadratic with the quadratic inverse projection gives rational
biquartic patches (5x5 control nets), exact on the sphere up to rounding.
The other five faces are proper rotations of it, so every face keeps the
outward orientation.

GeometryParams ordering: patch by patch, control points row-major
(index i*J + j, x, y, z interleaved), followed by that patch's weights
row-major.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

from iganet.bspline import (
    KnotVector,
    NurbsPatch,
    refine_uniform,
    surface_derivatives,
    surface_points,
)
from iganet.errors import ContractError, DomainError, StorageError, TopologyError

logger = logging.getLogger(__name__)

# edge ids: 0 -> v=0, 1 -> u=1, 2 -> v=1, 3 -> u=0; each runs with increasing t
EDGES = (0, 1, 2, 3)
COINCIDENCE_TOL = 1e-10
_EDGE_SAMPLES = np.linspace(0.0, 1.0, 7)

GeometryParams = np.ndarray


class Interface(NamedTuple):
    patch_a: int
    edge_a: int
    patch_b: int
    edge_b: int
    orientation_flip: bool


@dataclass(frozen=True, eq=False)
class MultipatchSurface:
    patches: tuple[NurbsPatch, ...]
    interfaces: tuple[Interface, ...]

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        object.__setattr__(self, "interfaces", tuple(Interface(*i) for i in self.interfaces))

    @property
    def num_patches(self) -> int:
        return len(self.patches)

    @property
    def num_elements(self) -> int:
        return sum(p.knots_u.num_elements * p.knots_v.num_elements for p in self.patches)


def edge_parameters(edge: int, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=float)
    zeros, ones = np.zeros_like(t), np.ones_like(t)
    if edge == 0:
        return t, zeros
    if edge == 1:
        return ones, t
    if edge == 2:
        return t, ones
    if edge == 3:
        return zeros, t
    raise ContractError(f"unknown edge id {edge}")


def edge_points(patch: NurbsPatch, edge: int, t: np.ndarray) -> np.ndarray:
    us, vs = edge_parameters(edge, t)
    points, _, _ = surface_derivatives(patch, us, vs)
    return points


# ---------- sphere ----------


def _bernstein_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Bernstein coefficients of the product of two tensor-product polynomials."""
    (pa, qa), (pb, qb) = (a.shape[0] - 1, a.shape[1] - 1), (b.shape[0] - 1, b.shape[1] - 1)
    out = np.zeros((pa + pb + 1, qa + qb + 1))
    for i in range(pa + 1):
        for k in range(pb + 1):
            cu = comb(pa, i) * comb(pb, k) / comb(pa + pb, i + k)
            for j in range(qa + 1):
                for l in range(qb + 1):
                    cv = comb(qa, j) * comb(qb, l) / comb(qa + qb, j + l)
                    out[i + k, j + l] += a[i, j] * b[k, l] * cu * cv
    return out


def _sphere_face() -> NurbsPatch:
    a = (np.sqrt(3.0) - 1.0) / 2.0  # projected cube corner
    c = np.cos(np.pi / 12.0)  # each edge arc spans 30 degrees around its centre
    m = -1.0 + np.sqrt(2.0) / c  # tangent intersection of the edge arcs

    s = np.array([[-a, -a, -a], [0.0, 0.0, 0.0], [a, a, a]])
    s[0, 1], s[2, 1] = -m, m
    t = s.T.copy()
    w = np.array([[1.0, c, 1.0], [c, c * c, c], [1.0, c, 1.0]])

    sh, th = s * w, t * w
    x = 2.0 * _bernstein_product(sh, w)
    y = 2.0 * _bernstein_product(th, w)
    ww = _bernstein_product(w, w)
    ss = _bernstein_product(sh, sh) + _bernstein_product(th, th)
    z = ww - ss
    weights = ww + ss

    points = np.stack([x, y, z], axis=-1) / weights[..., None]
    knots = KnotVector.uniform(4, 1)
    return NurbsPatch(knots, knots, points, weights)


_FACE_ROTATIONS = (
    np.eye(3),
    np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]),
    np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]),
    np.array([[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
    np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]]),
    np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
)


def make_unit_sphere() -> MultipatchSurface:
    face = _sphere_face()
    patches = [face.map_control_points(lambda p, r=r: p @ r.T) for r in _FACE_ROTATIONS]
    surface = MultipatchSurface(tuple(patches), tuple(build_interfaces(patches)))
    logger.debug("Built unit sphere: %d patches, %d interfaces", len(patches), len(surface.interfaces))
    return surface


def make_spheroid(r_semi: float) -> MultipatchSurface:
    """Unit sphere scaled by ``r_semi`` along z; weights are unchanged."""
    if not np.isfinite(r_semi) or r_semi <= 0.0 or r_semi > 1.0:
        raise DomainError(f"r_semi must lie in (0, 1], got {r_semi}")
    sphere = make_unit_sphere()
    scale = np.array([1.0, 1.0, r_semi])
    patches = tuple(p.map_control_points(lambda q: q * scale) for p in sphere.patches)
    return MultipatchSurface(patches, sphere.interfaces)


# ---------- topology ----------


def build_interfaces(patches: Sequence[NurbsPatch], tol: float = COINCIDENCE_TOL) -> list[Interface]:
    """Match every patch edge with exactly one other edge by pointwise coincidence."""
    samples = {
        (n, e): edge_points(patch, e, _EDGE_SAMPLES)
        for n, patch in enumerate(patches)
        for e in EDGES
    }
    keys = list(samples)
    matches: dict[tuple[int, int], list[tuple[tuple[int, int], bool]]] = {k: [] for k in keys}

    for idx, key_a in enumerate(keys):
        for key_b in keys[idx + 1 :]:
            pa, pb = samples[key_a], samples[key_b]
            if np.max(np.linalg.norm(pa - pb, axis=1)) < tol:
                flip = False
            elif np.max(np.linalg.norm(pa - pb[::-1], axis=1)) < tol:
                flip = True
            else:
                continue
            matches[key_a].append((key_b, flip))
            matches[key_b].append((key_a, flip))

    interfaces = []
    for key in keys:
        found = matches[key]
        if not found:
            raise TopologyError(f"edge {key[1]} of patch {key[0]} has no partner (gap)")
        if len(found) > 1:
            raise TopologyError(
                f"edge {key[1]} of patch {key[0]} is shared by {len(found) + 1} patches"
            )
        other, flip = found[0]
        if key < other:
            interfaces.append(Interface(key[0], key[1], other[0], other[1], flip))
    return interfaces


def interface_mismatch(surface: MultipatchSurface, samples: int = 20) -> float:
    """Largest distance between matched edge points over all interfaces."""
    t = np.linspace(0.0, 1.0, samples)
    worst = 0.0
    for itf in surface.interfaces:
        pa = edge_points(surface.patches[itf.patch_a], itf.edge_a, t)
        pb = edge_points(surface.patches[itf.patch_b], itf.edge_b, t)
        if itf.orientation_flip:
            pb = pb[::-1]
        worst = max(worst, float(np.max(np.linalg.norm(pa - pb, axis=1))))
    return worst


def refine_surface(surface: MultipatchSurface, levels: int) -> MultipatchSurface:
    if levels == 0:
        return surface
    patches = tuple(refine_uniform(p, levels) for p in surface.patches)
    return MultipatchSurface(patches, surface.interfaces)


def surface_area(surface: MultipatchSurface, order: int = 20) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes, weights = 0.5 * (nodes + 1.0), 0.5 * weights
    total = 0.0
    for patch in surface.patches:
        for bu0, bu1 in _element_bounds(patch.knots_u):
            for bv0, bv1 in _element_bounds(patch.knots_v):
                uu, vv = np.meshgrid(bu0 + (bu1 - bu0) * nodes, bv0 + (bv1 - bv0) * nodes, indexing="ij")
                _, d_u, d_v = surface_derivatives(patch, uu.ravel(), vv.ravel())
                area = np.linalg.norm(np.cross(d_u, d_v), axis=-1)
                total += (bu1 - bu0) * (bv1 - bv0) * float(np.outer(weights, weights).ravel() @ area)
    return total


def _element_bounds(kv: KnotVector):
    bp = kv.breakpoints
    return list(zip(bp[:-1], bp[1:]))


# ---------- parameters ----------


def to_params(surface: MultipatchSurface) -> GeometryParams:
    chunks = []
    for patch in surface.patches:
        chunks.append(patch.control_points.reshape(-1))
        chunks.append(patch.weights.reshape(-1))
    return np.concatenate(chunks)


def params_length(surface: MultipatchSurface) -> int:
    return sum(4 * p.weights.size for p in surface.patches)


def from_params(template: MultipatchSurface, params: GeometryParams) -> MultipatchSurface:
    params = np.asarray(params, dtype=float)
    expected = params_length(template)
    if params.shape != (expected,):
        raise ContractError(f"expected {expected} geometry parameters, got {params.shape}")
    patches = []
    offset = 0
    for patch in template.patches:
        n = patch.weights.size
        points = params[offset : offset + 3 * n].reshape(patch.control_points.shape)
        offset += 3 * n
        weights = params[offset : offset + n].reshape(patch.weights.shape)
        offset += n
        patches.append(NurbsPatch(patch.knots_u, patch.knots_v, points, weights))
    return MultipatchSurface(tuple(patches), template.interfaces)


def geometry_hash(surface: MultipatchSurface) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(to_params(surface), dtype="<f8").tobytes())
    for patch in surface.patches:
        digest.update(np.ascontiguousarray(patch.knots_u.knots, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(patch.knots_v.knots, dtype="<f8").tobytes())
    digest.update(json.dumps([list(map(int, i)) for i in surface.interfaces]).encode())
    return digest.hexdigest()


def max_radius(surface: MultipatchSurface, samples: int = 21) -> float:
    """Largest |x| over a sample grid of every patch."""
    t = np.linspace(0.0, 1.0, samples)
    uu, vv = np.meshgrid(t, t, indexing="ij")
    return max(
        float(np.max(np.linalg.norm(surface_points(p, uu.ravel(), vv.ravel()), axis=-1)))
        for p in surface.patches
    )


# ---------- JSON ----------


def to_json_dict(surface: MultipatchSurface) -> dict:
    return {
        "patches": [
            {
                "degree_u": p.knots_u.degree,
                "degree_v": p.knots_v.degree,
                "knots_u": p.knots_u.knots.tolist(),
                "knots_v": p.knots_v.knots.tolist(),
                "control_points": p.control_points.reshape(-1, 3).tolist(),
                "weights": p.weights.reshape(-1).tolist(),
            }
            for p in surface.patches
        ],
        "interfaces": [
            [i.patch_a, i.edge_a, i.patch_b, i.edge_b, bool(i.orientation_flip)]
            for i in surface.interfaces
        ],
    }


def from_json_dict(data: dict) -> MultipatchSurface:
    try:
        patches = []
        for item in data["patches"]:
            ku = KnotVector(item["knots_u"], item["degree_u"])
            kv = KnotVector(item["knots_v"], item["degree_v"])
            shape = (ku.num_basis, kv.num_basis)
            points = np.asarray(item["control_points"], dtype=float).reshape(shape + (3,))
            weights = np.asarray(item["weights"], dtype=float).reshape(shape)
            patches.append(NurbsPatch(ku, kv, points, weights))
        interfaces = [Interface(int(a), int(ea), int(b), int(eb), bool(f)) for a, ea, b, eb, f in data["interfaces"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise StorageError(f"malformed geometry JSON: {exc}") from exc
    return MultipatchSurface(tuple(patches), tuple(interfaces))


def _json_text(value: Any, depth: int = 0) -> str:
    """JSON with every finite float written to 17 significant digits."""
    if isinstance(value, dict):
        pad = "\n" + " " * (depth + 1)
        items = (f"{json.dumps(str(k))}: {_json_text(v, depth + 1)}" for k, v in value.items())
        return "{" + pad + ("," + pad).join(items) + "\n" + " " * depth + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_json_text(v, depth + 1) for v in value) + "]"
    if isinstance(value, float) and np.isfinite(value):
        return format(value, ".17g")
    return json.dumps(value)


def save_geometry(surface: MultipatchSurface, path: str | Path, metadata: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_json_dict(surface)
    if metadata:
        data["metadata"] = metadata
    path.write_text(_json_text(data) + "\n")
    logger.info("Geometry written to %s (%d patches)", path, surface.num_patches)
    return path


def load_geometry(path: str | Path) -> MultipatchSurface:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise StorageError(f"geometry file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise StorageError(f"geometry file {path} is not valid JSON: {exc}") from exc
    return from_json_dict(data)
