import numpy as np
import pytest

from iganet.analytic import (
    ExcitationDipole,
    dipole_field,
    evaluation_frame,
    export_evaluation_csv,
    fibonacci_sphere,
    max_pointwise_error,
    sample_eval_points,
)
from iganet.errors import ContractError, DomainError, SingularityError
from iganet.reports import read_csv, read_provenance


def laplacian(fn, x, h=1e-3):
    out = -6.0 * fn(x)
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        out = out + fn(x + step) + fn(x - step)
    return out / h**2


class TestDipoleField:
    def test_helmholtz_residual(self, excitation) -> None:
        k = excitation.kappa
        for x in ([1.0, 0.5, -0.3], [-0.8, 1.4, 0.9], [0.0, 0.0, 1.5]):
            x = np.asarray(x)
            field = dipole_field(x, excitation)
            residual = laplacian(lambda y: dipole_field(y, excitation), x) + k**2 * field
            assert np.linalg.norm(residual) <= 1e-4 * k**2 * np.linalg.norm(field)

    def test_divergence_free(self, excitation) -> None:
        h = 1e-5
        x = np.array([0.9, -0.4, 0.7])
        div = sum(
            (dipole_field(x + h * e, excitation)[i] - dipole_field(x - h * e, excitation)[i]) / (2 * h)
            for i, e in enumerate(np.eye(3))
        )
        assert abs(div) < 1e-6 * np.linalg.norm(dipole_field(x, excitation))

    def test_static_limit_along_axis(self) -> None:
        dipole = ExcitationDipole([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], 1e-6)
        expected = [0.0, 0.0, 2.0 / 8.0 / (4.0 * np.pi)]
        np.testing.assert_allclose(dipole_field([0.0, 0.0, 2.0], dipole), expected, atol=1e-9)

    def test_prefactor_follows_permittivity(self, excitation) -> None:
        assert excitation.prefactor == pytest.approx(1.0 / (4.0 * np.pi))
        x = np.array([1.2, -0.7, 0.4])
        denser = ExcitationDipole(excitation.position, excitation.moment, excitation.kappa, permittivity=2.5)
        np.testing.assert_allclose(dipole_field(x, denser), dipole_field(x, excitation) / 2.5, rtol=1e-14)

    def test_invalid_permittivity(self) -> None:
        with pytest.raises(DomainError, match="permittivity"):
            ExcitationDipole([0, 0, 0], [0, 0, 1], 1.0, permittivity=0.0)

    def test_batch_matches_single(self, excitation) -> None:
        points = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
        batch = dipole_field(points, excitation)
        assert batch.shape == (2, 3)
        np.testing.assert_allclose(batch[1], dipole_field(points[1], excitation))

    def test_at_source(self, excitation) -> None:
        with pytest.raises(SingularityError):
            dipole_field(excitation.position, excitation)

    @pytest.mark.parametrize("kappa", [0.0, -1.0])
    def test_invalid_kappa(self, kappa) -> None:
        with pytest.raises(DomainError, match="kappa"):
            ExcitationDipole([0, 0, 0], [0, 0, 1], kappa)

    def test_invalid_vectors(self) -> None:
        with pytest.raises(ContractError):
            ExcitationDipole([0, 0], [0, 0, 1], 1.0)


class TestEvalPoints:
    def test_on_sphere_of_radius(self, sphere) -> None:
        points = sample_eval_points(sphere, 200, seed=0).points
        assert points.shape == (200, 3)
        np.testing.assert_allclose(np.linalg.norm(points, axis=1), 2.0)

    def test_seeded(self, sphere) -> None:
        a = sample_eval_points(sphere, 50, seed=3).points
        b = sample_eval_points(sphere, 50, seed=3).points
        c = sample_eval_points(sphere, 50, seed=4).points
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, c)

    def test_fibonacci_points_are_spread(self) -> None:
        points = fibonacci_sphere(100)
        np.testing.assert_allclose(points.mean(axis=0), 0.0, atol=5e-2)
        dist = np.linalg.norm(points[:, None] - points[None], axis=-1) + 10 * np.eye(100)
        assert dist.min() > 0.15

    def test_radius_bound(self, sphere) -> None:
        with pytest.raises(DomainError, match="radius"):
            sample_eval_points(sphere, 10, seed=0, radius=3.5)

    def test_radius_must_enclose(self, sphere) -> None:
        with pytest.raises(DomainError, match="enclose"):
            sample_eval_points(sphere, 10, seed=0, radius=0.9)

    def test_count(self, sphere) -> None:
        with pytest.raises(ContractError):
            sample_eval_points(sphere, 0, seed=0)


class TestErrors:
    def test_max_pointwise_error(self) -> None:
        ref = np.zeros((3, 3), dtype=complex)
        computed = ref.copy()
        computed[1] = [3.0, 4.0j, 0.0]
        assert max_pointwise_error(ref, computed) == pytest.approx(5.0)

    def test_empty(self) -> None:
        assert max_pointwise_error(np.zeros((0, 3)), np.zeros((0, 3))) == 0.0

    def test_shape_mismatch(self) -> None:
        with pytest.raises(ContractError, match="shape"):
            max_pointwise_error(np.zeros((2, 3)), np.zeros((3, 3)))

    def test_evaluation_csv(self, tmp_path, excitation) -> None:
        points = fibonacci_sphere(5) * 2.0
        ref = dipole_field(points, excitation)
        computed = ref * 1.01
        provenance = {"config_hash": "abc", "config": {"physics": {"kappa": 2.0}}}
        path = export_evaluation_csv(tmp_path / "eval.csv", points, ref, computed, provenance)

        frame = read_csv(path)
        assert list(frame.columns) == list(evaluation_frame(points, ref, computed).columns)
        assert frame.columns[0] == "x" and frame.columns[-1] == "error"
        np.testing.assert_allclose(frame["ref_x_re"], ref[:, 0].real, rtol=1e-15)
        np.testing.assert_allclose(frame["error"], 0.01 * np.linalg.norm(ref, axis=1), rtol=1e-10)
        assert read_provenance(path) == provenance
