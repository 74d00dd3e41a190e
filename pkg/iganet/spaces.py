"""
Div-conforming spline space on a multipatch surface.

On every patch the reference field (j_u, j_v) lives in the tensor-product
spaces of bidegree (p, p-1) and (p-1, p) built on the geometry's breakpoints.
It is pushed forward with the contravariant Piola map

    phi = (t_u * j_u + t_v * j_v) / |t_u x t_v|,    div phi = (d_u j_u + d_v j_v) / |t_u x t_v|

Local numbering per patch: component u first (index i * nv_low + j), then
component v (offset n0, index i * nv + j).

Functions whose normal trace is non-zero on a patch edge are merged with
their partners across the interface; a per-(patch, local) sign keeps the
normal flux continuous.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from iganet.bspline import (
    MIN_AREA_ELEMENT,
    KnotVector,
    basis_at_span,
    basis_ders_at_span,
    find_span,
    surface_derivatives,
)
from iganet.errors import ContractError, SingularParametrizationError, TopologyError
from iganet.geometry import MultipatchSurface

logger = logging.getLogger(__name__)

# outward sense of the reference normal flux on each edge (v=0, u=1, v=1, u=0)
EDGE_SIGN = (-1, 1, 1, -1)


@dataclass(frozen=True, eq=False)
class PatchSpace:
    knots_u: KnotVector
    knots_v: KnotVector
    knots_u_low: KnotVector
    knots_v_low: KnotVector

    @classmethod
    def on_breakpoints(cls, bp_u: np.ndarray, bp_v: np.ndarray, degree: int) -> "PatchSpace":
        ku = KnotVector.from_breakpoints(bp_u, degree)
        kv = KnotVector.from_breakpoints(bp_v, degree)
        return cls(ku, kv, ku.derivative_space(), kv.derivative_space())

    @property
    def degree(self) -> int:
        return self.knots_u.degree

    @property
    def num_u_component(self) -> int:
        return self.knots_u.num_basis * self.knots_v_low.num_basis

    @property
    def num_functions(self) -> int:
        return self.num_u_component + self.knots_u_low.num_basis * self.knots_v.num_basis

    def edge_functions(self, edge: int) -> np.ndarray:
        """Local indices of the functions with normal trace on ``edge``, ordered along it."""
        nu, nv = self.knots_u.num_basis, self.knots_v.num_basis
        nu_low, nv_low = self.knots_u_low.num_basis, self.knots_v_low.num_basis
        n0 = self.num_u_component
        if edge == 3:
            return np.arange(nv_low)
        if edge == 1:
            return (nu - 1) * nv_low + np.arange(nv_low)
        if edge == 0:
            return n0 + np.arange(nu_low) * nv
        if edge == 2:
            return n0 + np.arange(nu_low) * nv + nv - 1
        raise ContractError(f"unknown edge id {edge}")

    def edge_knots(self, edge: int) -> KnotVector:
        return self.knots_v_low if edge in (1, 3) else self.knots_u_low


class Element(NamedTuple):
    index: int
    patch: int
    eu: int
    ev: int
    bounds: tuple[float, float, float, float]  # u0, u1, v0, v1
    dofs: np.ndarray
    signs: np.ndarray


class ElementValues(NamedTuple):
    """Signed local basis data at points of one element.

    ``vectors`` and ``divergence`` already carry the surface measure of the
    element's local [0, 1]^2 coordinates, so that a quadrature sum over
    local weights integrates ``phi dGamma`` and ``div phi dGamma``.
    """

    points: np.ndarray  # (m, 3)
    vectors: np.ndarray  # (m, nloc, 3)
    divergence: np.ndarray  # (m, nloc)
    measure: np.ndarray  # (m,)
    normals: np.ndarray  # (m, 3)


@dataclass(frozen=True, eq=False)
class DivConformingSpace:
    geometry: MultipatchSurface
    degree: int
    patch_spaces: tuple[PatchSpace, ...]
    dof_map: tuple[np.ndarray, ...]
    sign_map: tuple[np.ndarray, ...]
    num_dofs: int
    elements: tuple[Element, ...]

    def locate(self, patch: int, u: float, v: float) -> Element:
        ps = self.geometry.patches[patch]
        eu = _element_index(ps.knots_u, u)
        ev = _element_index(ps.knots_v, v)
        nv = ps.knots_v.num_elements
        offset = sum(p.knots_u.num_elements * p.knots_v.num_elements for p in self.geometry.patches[:patch])
        return self.elements[offset + eu * nv + ev]


def _element_index(kv: KnotVector, xi: float) -> int:
    find_span(kv, xi)  # domain check
    bp = kv.breakpoints
    return int(np.clip(np.searchsorted(bp, xi, side="right") - 1, 0, len(bp) - 2))


def _interface_links(geometry: MultipatchSurface, spaces: list[PatchSpace]) -> dict:
    links: dict[tuple[int, int], tuple[int, int, int]] = {}
    for itf in geometry.interfaces:
        sa, sb = spaces[itf.patch_a], spaces[itf.patch_b]
        fa, fb = sa.edge_functions(itf.edge_a), sb.edge_functions(itf.edge_b)
        ka, kb = sa.edge_knots(itf.edge_a).knots, sb.edge_knots(itf.edge_b).knots
        if itf.orientation_flip:
            fb, kb = fb[::-1], 1.0 - kb[::-1]
        if len(fa) != len(fb) or len(ka) != len(kb) or not np.allclose(ka, kb, atol=1e-12):
            raise TopologyError(
                f"edge spaces of interface {tuple(itf)} do not match; "
                "patches must be refined consistently"
            )
        relative = -EDGE_SIGN[itf.edge_a] * EDGE_SIGN[itf.edge_b]
        for la, lb in zip(fa.tolist(), fb.tolist()):
            for key, value in (((itf.patch_a, la), (itf.patch_b, lb, relative)),
                               ((itf.patch_b, lb), (itf.patch_a, la, relative))):
                if key in links:
                    raise TopologyError(f"local function {key} appears on two interfaces")
                links[key] = value
    return links


def _element_table(geometry, spaces, dof_map, sign_map) -> list[Element]:
    elements = []
    for n, (patch, ps) in enumerate(zip(geometry.patches, spaces)):
        p = ps.degree
        bu, bv = patch.knots_u.breakpoints, patch.knots_v.breakpoints
        nv, nv_low = ps.knots_v.num_basis, ps.knots_v_low.num_basis
        n0 = ps.num_u_component
        for eu in range(len(bu) - 1):
            su, su_low = ps.knots_u.element_span(eu), ps.knots_u_low.element_span(eu)
            for ev in range(len(bv) - 1):
                sv, sv_low = ps.knots_v.element_span(ev), ps.knots_v_low.element_span(ev)
                comp0 = ((su - p + np.arange(p + 1))[:, None] * nv_low
                         + (sv_low - (p - 1) + np.arange(p))[None, :])
                comp1 = n0 + ((su_low - (p - 1) + np.arange(p))[:, None] * nv
                              + (sv - p + np.arange(p + 1))[None, :])
                local = np.concatenate([comp0.ravel(), comp1.ravel()])
                elements.append(
                    Element(
                        index=len(elements),
                        patch=n,
                        eu=eu,
                        ev=ev,
                        bounds=(float(bu[eu]), float(bu[eu + 1]), float(bv[ev]), float(bv[ev + 1])),
                        dofs=dof_map[n][local],
                        signs=sign_map[n][local],
                    )
                )
    return elements


def build_space(geometry: MultipatchSurface, degree: int) -> DivConformingSpace:
    if degree < 1:
        raise ContractError(f"degree must be at least 1, got {degree}")

    spaces = [
        PatchSpace.on_breakpoints(p.knots_u.breakpoints, p.knots_v.breakpoints, degree)
        for p in geometry.patches
    ]
    links = _interface_links(geometry, spaces)

    dof_map = [np.full(ps.num_functions, -1, dtype=np.int64) for ps in spaces]
    sign_map = [np.zeros(ps.num_functions) for ps in spaces]
    counter = 0
    for n, ps in enumerate(spaces):
        for local in range(ps.num_functions):
            if dof_map[n][local] >= 0:
                continue
            dof_map[n][local] = counter
            sign_map[n][local] = 1.0
            partner = links.get((n, local))
            if partner is not None:
                m, other, relative = partner
                if dof_map[m][other] >= 0:
                    raise TopologyError(f"interface orientation conflict at patch {m}, function {other}")
                dof_map[m][other] = counter
                sign_map[m][other] = float(relative)
            counter += 1

    for arr in dof_map + sign_map:
        arr.setflags(write=False)
    elements = _element_table(geometry, spaces, dof_map, sign_map)
    logger.info(
        "Built div-conforming space: degree %d, %d elements, %d DOFs",
        degree, len(elements), counter,
    )
    return DivConformingSpace(
        geometry=geometry,
        degree=degree,
        patch_spaces=tuple(spaces),
        dof_map=tuple(dof_map),
        sign_map=tuple(sign_map),
        num_dofs=counter,
        elements=tuple(elements),
    )


def element_values(space: DivConformingSpace, element: Element, s: np.ndarray, t: np.ndarray) -> ElementValues:
    """Evaluate the element's signed local functions at local coordinates (s, t) in [0, 1]^2."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    patch = space.geometry.patches[element.patch]
    ps = space.patch_spaces[element.patch]
    u0, u1, v0, v1 = element.bounds
    hu, hv = u1 - u0, v1 - v0
    u, v = u0 + hu * s, v0 + hv * t
    m = len(u)

    points, d_u, d_v = surface_derivatives(
        patch, u, v,
        patch.knots_u.element_span(element.eu),
        patch.knots_v.element_span(element.ev),
    )
    cross = np.cross(d_u, d_v)
    area = np.linalg.norm(cross, axis=-1)
    if np.any(area < MIN_AREA_ELEMENT):
        raise SingularParametrizationError(
            f"degenerate Jacobian inside element {element.index} (patch {element.patch})"
        )

    bu = basis_ders_at_span(ps.knots_u, ps.knots_u.element_span(element.eu), u, 1)
    bv = basis_ders_at_span(ps.knots_v, ps.knots_v.element_span(element.ev), v, 1)
    bu_low = basis_at_span(ps.knots_u_low, ps.knots_u_low.element_span(element.eu), u)
    bv_low = basis_at_span(ps.knots_v_low, ps.knots_v_low.element_span(element.ev), v)

    ref0 = (bu[:, 0, :, None] * bv_low[:, None, :]).reshape(m, -1)
    div0 = (bu[:, 1, :, None] * bv_low[:, None, :]).reshape(m, -1)
    ref1 = (bu_low[:, :, None] * bv[:, 0, None, :]).reshape(m, -1)
    div1 = (bu_low[:, :, None] * bv[:, 1, None, :]).reshape(m, -1)

    scale = hu * hv * element.signs
    vectors = np.concatenate(
        [ref0[..., None] * d_u[:, None, :], ref1[..., None] * d_v[:, None, :]], axis=1
    ) * scale[None, :, None]
    divergence = np.concatenate([div0, div1], axis=1) * scale[None, :]
    return ElementValues(points, vectors, divergence, area * hu * hv, cross / area[:, None])


def _point_values(space: DivConformingSpace, patch: int, u: float, v: float):
    element = space.locate(patch, u, v)
    u0, u1, v0, v1 = element.bounds
    values = element_values(space, element, [(u - u0) / (u1 - u0)], [(v - v0) / (v1 - v0)])
    return element, values


def _check_dof(space: DivConformingSpace, k: int) -> None:
    if not 0 <= k < space.num_dofs:
        raise ContractError(f"DOF index {k} out of range [0, {space.num_dofs})")


def eval_basis_fn(space: DivConformingSpace, k: int, patch: int, u: float, v: float) -> np.ndarray:
    _check_dof(space, k)
    element, values = _point_values(space, patch, u, v)
    mask = element.dofs == k
    return values.vectors[0, mask].sum(axis=0) / values.measure[0]


def eval_div(space: DivConformingSpace, k: int, patch: int, u: float, v: float) -> float:
    _check_dof(space, k)
    element, values = _point_values(space, patch, u, v)
    mask = element.dofs == k
    return float(values.divergence[0, mask].sum() / values.measure[0])


def eval_field(space: DivConformingSpace, coeffs: np.ndarray, patch: int, u: float, v: float):
    """Point, value and surface divergence of sum_k coeffs[k] * phi_k at (u, v)."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (space.num_dofs,):
        raise ContractError(f"expected {space.num_dofs} coefficients, got {coeffs.shape}")
    element, values = _point_values(space, patch, u, v)
    c = coeffs[element.dofs]
    field = (c[:, None] * values.vectors[0]).sum(axis=0) / values.measure[0]
    div = (c * values.divergence[0]).sum() / values.measure[0]
    return values.points[0], field, div
