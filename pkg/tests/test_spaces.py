import numpy as np
import pytest

from iganet.bspline import KnotVector, NurbsPatch, refine_uniform, surface_derivatives
from iganet.errors import ContractError, TopologyError
from iganet.geometry import MultipatchSurface, edge_parameters, refine_surface
from iganet.quadrature import gauss_legendre_1d, tensor_rule
from iganet.spaces import build_space, element_values, eval_basis_fn, eval_div, eval_field


def edge_conormal(space, itf, t):
    """Unit vector tangent to the surface and normal to the shared edge at patch_a's edge point."""
    patch = space.geometry.patches[itf.patch_a]
    u, v = edge_parameters(itf.edge_a, np.array([t]))
    x, d_u, d_v = surface_derivatives(patch, u, v)
    tangent = d_u[0] if itf.edge_a in (0, 2) else d_v[0]
    normal = np.cross(d_u[0], d_v[0])
    conormal = np.cross(tangent, normal)
    return x[0], conormal / np.linalg.norm(conormal)


class TestBuildSpace:
    @pytest.mark.parametrize("level, dofs", [(0, 12), (1, 48), (2, 192), (3, 768)])
    def test_dof_count_degree_one(self, sphere, level, dofs) -> None:
        space = build_space(refine_surface(sphere, level), 1)
        assert space.num_dofs == dofs

    def test_dof_count_degree_two(self, sphere) -> None:
        assert build_space(sphere, 2).num_dofs == 48

    def test_every_dof_is_used(self, space48) -> None:
        used = np.unique(np.concatenate([e.dofs for e in space48.elements]))
        np.testing.assert_array_equal(used, np.arange(48))

    def test_element_table(self, space48) -> None:
        assert len(space48.elements) == 24
        for element in space48.elements:
            assert len(element.dofs) == 4
            assert set(np.abs(element.signs)) == {1.0}

    def test_degree_zero(self, sphere) -> None:
        with pytest.raises(ContractError, match="degree"):
            build_space(sphere, 0)

    def test_inconsistent_refinement(self, sphere) -> None:
        patches = (refine_uniform(sphere.patches[0], 1),) + sphere.patches[1:]
        with pytest.raises(TopologyError, match="refined consistently"):
            build_space(MultipatchSurface(patches, sphere.interfaces), 1)


class TestNormalContinuity:
    @pytest.mark.parametrize("degree, level", [(1, 1), (2, 0)])
    def test_flux_matches_across_all_interfaces(self, sphere, rng, degree, level) -> None:
        space = build_space(refine_surface(sphere, level), degree)
        coeffs = rng.standard_normal(space.num_dofs) + 1j * rng.standard_normal(space.num_dofs)
        assert len(space.geometry.interfaces) == 12
        for itf in space.geometry.interfaces:
            for t in (0.13, 0.37, 0.77):
                x, conormal = edge_conormal(space, itf, t)
                ua, va = edge_parameters(itf.edge_a, np.array([t]))
                tb = 1.0 - t if itf.orientation_flip else t
                ub, vb = edge_parameters(itf.edge_b, np.array([tb]))
                xa, fa, _ = eval_field(space, coeffs, itf.patch_a, ua[0], va[0])
                xb, fb, _ = eval_field(space, coeffs, itf.patch_b, ub[0], vb[0])
                np.testing.assert_allclose(xa, xb, atol=1e-10)
                assert abs(fa @ conormal - fb @ conormal) < 1e-10 * (1.0 + abs(fa @ conormal))

    def test_basis_functions_are_tangent(self, space48) -> None:
        for k in (0, 7, 31, 47):
            element = next(e for e in space48.elements if k in e.dofs)
            u0, u1, v0, v1 = element.bounds
            u, v = 0.3 * u0 + 0.7 * u1, 0.6 * v0 + 0.4 * v1
            value = eval_basis_fn(space48, k, element.patch, u, v)
            x, _, _ = eval_field(space48, np.eye(48)[k], element.patch, u, v)
            assert abs(value @ x) < 1e-12


class TestDivergence:
    @pytest.mark.parametrize("degree, level", [(1, 1), (2, 1)])
    def test_total_divergence_vanishes_on_closed_surface(self, sphere, degree, level) -> None:
        space = build_space(refine_surface(sphere, level), degree)
        rule = tensor_rule(degree + 1)
        totals = np.zeros(space.num_dofs)
        for element in space.elements:
            values = element_values(space, element, rule.nodes[:, 0], rule.nodes[:, 1])
            np.add.at(totals, element.dofs, rule.weights @ values.divergence)
        np.testing.assert_allclose(totals, 0.0, atol=1e-12)


def flat_square():
    knots = KnotVector.uniform(1, 1)
    points = np.array([[[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]])
    return MultipatchSurface((NurbsPatch(knots, knots, points, np.ones((2, 2))),), ())


def reference_components(space, k, patch, u, v):
    """Recover (j_u, j_v) from phi_k = (x_u j_u + x_v j_v) / |x_u x x_v| by least squares."""
    _, d_u, d_v = surface_derivatives(space.geometry.patches[patch], np.array([u]), np.array([v]))
    area = np.linalg.norm(np.cross(d_u[0], d_v[0]))
    frame = np.stack([d_u[0], d_v[0]], axis=1)
    coords, *_ = np.linalg.lstsq(frame, eval_basis_fn(space, k, patch, u, v), rcond=None)
    return area * coords, area


class TestFlatPatch:
    def test_constant_reference_field_is_divergence_free(self) -> None:
        space = build_space(flat_square(), 1)
        coeffs = np.zeros(space.num_dofs)
        for k in range(space.num_dofs):
            value = eval_basis_fn(space, k, 0, 0.5, 0.5)
            if abs(value[0]) > 1e-12:
                coeffs[k] = np.sign(value[0])
        for u, v in ((0.2, 0.3), (0.5, 0.5), (0.9, 0.1)):
            _, field, div = eval_field(space, coeffs, 0, u, v)
            np.testing.assert_allclose(field, [1.0, 0.0, 0.0], atol=1e-14)
            assert abs(div) < 1e-14

    def test_edge_functions_carry_unit_flux(self) -> None:
        space = build_space(flat_square(), 1)
        rule = gauss_legendre_1d(4)
        edges = (
            (lambda t: (t, 0.0), np.array([0.0, -1.0, 0.0])),
            (lambda t: (1.0, t), np.array([1.0, 0.0, 0.0])),
            (lambda t: (t, 1.0), np.array([0.0, 1.0, 0.0])),
            (lambda t: (0.0, t), np.array([-1.0, 0.0, 0.0])),
        )
        assert space.num_dofs == 4
        for k in range(space.num_dofs):
            fluxes = [
                sum(w * eval_basis_fn(space, k, 0, *point(t)) @ normal for t, w in zip(rule.nodes, rule.weights))
                for point, normal in edges
            ]
            np.testing.assert_allclose(sorted(np.abs(fluxes)), [0.0, 0.0, 0.0, 1.0], atol=1e-13)


class TestEvalDiv:
    @pytest.mark.parametrize("k", [0, 5, 23, 40])
    def test_matches_finite_differences(self, space48, k) -> None:
        element = next(e for e in space48.elements if k in e.dofs)
        u0, u1, v0, v1 = element.bounds
        u, v = 0.3 * u0 + 0.7 * u1, 0.6 * v0 + 0.4 * v1
        h = 1e-5
        (ju_plus, _), _ = reference_components(space48, k, element.patch, u + h, v)
        (ju_minus, _), _ = reference_components(space48, k, element.patch, u - h, v)
        (_, jv_plus), _ = reference_components(space48, k, element.patch, u, v + h)
        (_, jv_minus), _ = reference_components(space48, k, element.patch, u, v - h)
        _, area = reference_components(space48, k, element.patch, u, v)
        expected = ((ju_plus - ju_minus) + (jv_plus - jv_minus)) / (2 * h) / area
        div = eval_div(space48, k, element.patch, u, v)
        assert abs(div - expected) <= 1e-5 * max(abs(expected), 1.0)

    def test_vanishes_outside_support(self, space48) -> None:
        for k in (3, 17, 44):
            for element in space48.elements:
                if k in element.dofs:
                    continue
                u0, u1, v0, v1 = element.bounds
                u, v = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
                np.testing.assert_array_equal(eval_basis_fn(space48, k, element.patch, u, v), np.zeros(3))
                assert eval_div(space48, k, element.patch, u, v) == 0.0


class TestErrors:
    def test_dof_out_of_range(self, space48) -> None:
        with pytest.raises(ContractError, match="out of range"):
            eval_basis_fn(space48, 48, 0, 0.5, 0.5)

    def test_coefficient_length(self, space48) -> None:
        with pytest.raises(ContractError, match="coefficients"):
            eval_field(space48, np.zeros(47), 0, 0.5, 0.5)
