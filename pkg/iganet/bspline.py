"""
B-spline bases and NURBS surface maps.

Conventions:
- parameters live in [0, 1]; knot vectors are open (end knots repeated p+1 times);
- xi = 1 is evaluated in the last non-empty span;
- 0/0 terms of the Cox-de Boor recursion are 0.

The vectorized helpers take an explicit span so that a whole element
(including its closed boundary) can be evaluated in one call.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from iganet.errors import ContractError, DomainError, SingularParametrizationError

logger = logging.getLogger(__name__)

KNOT_TOL = 1e-14
MIN_AREA_ELEMENT = 1e-14


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class KnotVector:
    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = _frozen(self.knots)
        object.__setattr__(self, "knots", knots)
        p = int(self.degree)
        object.__setattr__(self, "degree", p)

        if p < 0:
            raise ContractError(f"degree must be non-negative, got {p}")
        if knots.ndim != 1:
            raise ContractError("knots must be a 1D sequence")
        if np.any(np.diff(knots) < 0):
            raise ContractError("knots must be non-decreasing")
        if knots[0] < -KNOT_TOL or knots[-1] > 1 + KNOT_TOL:
            raise ContractError("knots must lie in [0, 1]")
        if len(knots) - p - 1 < p + 1:
            raise ContractError(
                f"need at least {p + 1} basis functions, got {len(knots) - p - 1}"
            )
        start = np.count_nonzero(knots == knots[0])
        end = np.count_nonzero(knots == knots[-1])
        if start != p + 1 or end != p + 1:
            raise ContractError(
                f"open knot vector must repeat end knots exactly {p + 1} times"
            )

    @classmethod
    def uniform(cls, degree: int, num_elements: int) -> "KnotVector":
        inner = np.linspace(0.0, 1.0, num_elements + 1)[1:-1]
        return cls(
            np.concatenate([np.zeros(degree + 1), inner, np.ones(degree + 1)]),
            degree,
        )

    @classmethod
    def from_breakpoints(cls, breakpoints: np.ndarray, degree: int) -> "KnotVector":
        """Open knot vector of maximal smoothness on the given breakpoints."""
        bp = np.asarray(breakpoints, dtype=float)
        return cls(
            np.concatenate([np.full(degree, bp[0]), bp, np.full(degree, bp[-1])]),
            degree,
        )

    @property
    def num_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    @property
    def num_elements(self) -> int:
        return len(self.breakpoints) - 1

    def element_span(self, element: int) -> int:
        bp = self.breakpoints
        if not 0 <= element < len(bp) - 1:
            raise ContractError(f"element index {element} out of range")
        return int(np.searchsorted(self.knots, bp[element], side="right") - 1)

    def derivative_space(self) -> "KnotVector":
        """Knot vector of degree p-1 obtained by dropping both end knots once."""
        if self.degree < 1:
            raise ContractError("degree 0 has no derivative space")
        return KnotVector(self.knots[1:-1], self.degree - 1)

    def midpoints(self) -> np.ndarray:
        bp = self.breakpoints
        return 0.5 * (bp[:-1] + bp[1:])


@dataclass(frozen=True, eq=False)
class NurbsPatch:
    knots_u: KnotVector
    knots_v: KnotVector
    control_points: np.ndarray  # (I, J, 3)
    weights: np.ndarray  # (I, J)

    def __post_init__(self):
        points = _frozen(self.control_points)
        weights = _frozen(self.weights)
        object.__setattr__(self, "control_points", points)
        object.__setattr__(self, "weights", weights)

        shape = (self.knots_u.num_basis, self.knots_v.num_basis)
        if points.shape != shape + (3,):
            raise ContractError(
                f"control net shape {points.shape} does not match knots {shape}"
            )
        if weights.shape != shape:
            raise ContractError(f"weights shape {weights.shape} does not match {shape}")
        if np.any(weights <= 0):
            raise ContractError("all weights must be strictly positive")

    @property
    def degrees(self) -> tuple[int, int]:
        return self.knots_u.degree, self.knots_v.degree

    @property
    def homogeneous(self) -> np.ndarray:
        """Control net in homogeneous coordinates (w*x, w*y, w*z, w)."""
        w = self.weights[..., None]
        return np.concatenate([self.control_points * w, w], axis=-1)

    @classmethod
    def from_homogeneous(
        cls, knots_u: KnotVector, knots_v: KnotVector, pw: np.ndarray
    ) -> "NurbsPatch":
        w = pw[..., 3]
        return cls(knots_u, knots_v, pw[..., :3] / w[..., None], w)

    def map_control_points(self, fn) -> "NurbsPatch":
        return NurbsPatch(self.knots_u, self.knots_v, fn(self.control_points), self.weights)


class SurfaceJacobian(NamedTuple):
    tangent_u: np.ndarray
    tangent_v: np.ndarray
    unit_normal: np.ndarray
    area_element: float


# ---------- spans and bases ----------


def _check_domain(kv: KnotVector, xs: np.ndarray) -> None:
    if np.any(xs < kv.knots[0] - KNOT_TOL) or np.any(xs > kv.knots[-1] + KNOT_TOL):
        raise DomainError(f"parameter outside [{kv.knots[0]}, {kv.knots[-1]}]")


def find_spans(kv: KnotVector, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    _check_domain(kv, xs)
    n = kv.num_basis
    spans = np.searchsorted(kv.knots, xs, side="right") - 1
    return np.clip(spans, kv.degree, n - 1)


def find_span(kv: KnotVector, xi: float) -> int:
    """Index i with knots[i] <= xi < knots[i+1]; xi = 1 maps to the last span."""
    return int(find_spans(kv, np.atleast_1d(xi))[0])


def basis_at_span(kv: KnotVector, span, xs: np.ndarray) -> np.ndarray:
    """Non-zero basis values, shape (m, p+1), for points inside ``span``."""
    return basis_ders_at_span(kv, span, xs, 0)[:, 0, :]


def basis_ders_at_span(kv: KnotVector, span, xs: np.ndarray, order: int) -> np.ndarray:
    """Non-zero basis values and derivatives, shape (m, order+1, p+1).

    Vectorized form of the triangular-table algorithm (Piegl & Tiller A2.3).
    ``span`` may be a scalar or an array broadcastable to ``xs``.
    """
    p = kv.degree
    if order > p:
        raise ContractError(f"derivative order {order} exceeds degree {p}")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    span = np.broadcast_to(np.asarray(span, dtype=int), xs.shape)
    U = kv.knots
    m = xs.shape[0]

    ndu = np.empty((p + 1, p + 1, m))
    ndu[0, 0] = 1.0
    left = np.empty((p + 1, m))
    right = np.empty((p + 1, m))
    for j in range(1, p + 1):
        left[j] = xs - U[span + 1 - j]
        right[j] = U[span + j] - xs
        saved = np.zeros(m)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            with np.errstate(divide="ignore", invalid="ignore"):
                temp = np.where(ndu[j, r] != 0.0, ndu[r, j - 1] / ndu[j, r], 0.0)
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((order + 1, p + 1, m))
    ders[0] = ndu[:, p]
    a = np.zeros((2, p + 1, m))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, order + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d = d + a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d = d + a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    factor = p
    for k in range(1, order + 1):
        ders[k] *= factor
        factor *= p - k
    return np.moveaxis(ders, -1, 0)


def eval_basis(kv: KnotVector, xi: float) -> np.ndarray:
    """The p+1 basis functions b_{span-p..span}^p that are non-zero at xi."""
    span = find_span(kv, xi)
    return basis_at_span(kv, span, np.array([xi]))[0]


def eval_basis_derivatives(kv: KnotVector, xi: float, max_order: int) -> np.ndarray:
    """Rows k = 0..max_order hold the k-th derivatives of the non-zero functions."""
    if max_order > kv.degree:
        raise ContractError(
            f"max_order {max_order} exceeds degree {kv.degree}"
        )
    span = find_span(kv, xi)
    return basis_ders_at_span(kv, span, np.array([xi]), max_order)[0]


# ---------- surfaces ----------


def surface_derivatives(
    patch: NurbsPatch,
    us: np.ndarray,
    vs: np.ndarray,
    span_u=None,
    span_v=None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Points and first partial derivatives of the rational map, each (m, 3)."""
    us = np.atleast_1d(np.asarray(us, dtype=float))
    vs = np.atleast_1d(np.asarray(vs, dtype=float))
    ku, kv = patch.knots_u, patch.knots_v
    pu, pv = ku.degree, kv.degree
    if span_u is None:
        span_u = find_spans(ku, us)
    if span_v is None:
        span_v = find_spans(kv, vs)
    su = np.broadcast_to(np.asarray(span_u, dtype=int), us.shape)
    sv = np.broadcast_to(np.asarray(span_v, dtype=int), vs.shape)

    nu = basis_ders_at_span(ku, su, us, min(1, pu))
    nv = basis_ders_at_span(kv, sv, vs, min(1, pv))
    if pu == 0:
        nu = np.concatenate([nu, np.zeros_like(nu)], axis=1)
    if pv == 0:
        nv = np.concatenate([nv, np.zeros_like(nv)], axis=1)

    iu = su[:, None] - pu + np.arange(pu + 1)[None, :]
    iv = sv[:, None] - pv + np.arange(pv + 1)[None, :]
    pw = patch.homogeneous[iu[:, :, None], iv[:, None, :]]  # (m, pu+1, pv+1, 4)

    s = np.einsum("mi,mj,mijc->mc", nu[:, 0], nv[:, 0], pw)
    s_u = np.einsum("mi,mj,mijc->mc", nu[:, 1], nv[:, 0], pw)
    s_v = np.einsum("mi,mj,mijc->mc", nu[:, 0], nv[:, 1], pw)

    w = s[:, 3:4]
    points = s[:, :3] / w
    d_u = (s_u[:, :3] - s_u[:, 3:4] * points) / w
    d_v = (s_v[:, :3] - s_v[:, 3:4] * points) / w
    return points, d_u, d_v


def eval_surface(patch: NurbsPatch, u: float, v: float) -> np.ndarray:
    points, _, _ = surface_derivatives(patch, np.array([u]), np.array([v]))
    return points[0]


def eval_surface_jacobian(patch: NurbsPatch, u: float, v: float) -> SurfaceJacobian:
    _, d_u, d_v = surface_derivatives(patch, np.array([u]), np.array([v]))
    normal = np.cross(d_u[0], d_v[0])
    area = float(np.linalg.norm(normal))
    if area < MIN_AREA_ELEMENT:
        raise SingularParametrizationError(
            f"degenerate Jacobian at (u, v) = ({u}, {v}): area element {area:.3e}"
        )
    return SurfaceJacobian(d_u[0], d_v[0], normal / area, area)


# ---------- knot insertion ----------


def insert_knot(kv: KnotVector, pw: np.ndarray, xi: float) -> tuple[KnotVector, np.ndarray]:
    """Boehm single knot insertion along the first axis of a homogeneous net."""
    p = kv.degree
    U = kv.knots
    k = find_span(kv, xi)
    multiplicity = int(np.count_nonzero(np.abs(U - xi) < KNOT_TOL))
    if multiplicity >= p:
        raise ContractError(f"knot {xi} already has multiplicity {multiplicity}")

    n = pw.shape[0]
    out = np.empty((n + 1,) + pw.shape[1:])
    out[: k - p + 1] = pw[: k - p + 1]
    out[k - multiplicity + 1 :] = pw[k - multiplicity :]
    for i in range(k - p + 1, k - multiplicity + 1):
        alpha = (xi - U[i]) / (U[i + p] - U[i])
        out[i] = alpha * pw[i] + (1.0 - alpha) * pw[i - 1]
    knots = np.insert(U, k + 1, xi)
    return KnotVector(knots, p), out


def refine_uniform(patch: NurbsPatch, levels: int) -> NurbsPatch:
    """Halve every knot span ``levels`` times in both directions."""
    if levels < 0:
        raise ContractError("levels must be non-negative")
    ku, kv = patch.knots_u, patch.knots_v
    pw = patch.homogeneous
    for _ in range(levels):
        for xi in ku.midpoints():
            ku, pw = insert_knot(ku, pw, xi)
        pw = np.swapaxes(pw, 0, 1)
        for xi in kv.midpoints():
            kv, pw = insert_knot(kv, pw, xi)
        pw = np.swapaxes(pw, 0, 1)
    if levels:
        logger.debug(
            "Refined patch to %dx%d elements", ku.num_elements, kv.num_elements
        )
    return NurbsPatch.from_homogeneous(ku, kv, pw)


def surface_points(patch: NurbsPatch, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    points, _, _ = surface_derivatives(patch, us, vs)
    return points
