import numpy as np
import pytest

from iganet.errors import ContractError, ConvergenceError, SingularMatrixError
from iganet.linalg import gmres, lu_solve, relative_residual, solve


def well_conditioned(n, rng):
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 4.0 * np.sqrt(n) * np.eye(n) + noise


class TestLuSolve:
    def test_random_system(self, rng) -> None:
        a = well_conditioned(20, rng)
        x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        np.testing.assert_allclose(lu_solve(a, a @ x), x, rtol=1e-12)

    def test_singular(self) -> None:
        with pytest.raises(SingularMatrixError, match="singular"):
            lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))

    def test_zero_matrix(self) -> None:
        with pytest.raises(SingularMatrixError):
            lu_solve(np.zeros((3, 3)), np.ones(3))

    def test_shapes(self) -> None:
        with pytest.raises(ContractError, match="square"):
            lu_solve(np.zeros((2, 3)), np.ones(2))
        with pytest.raises(ContractError, match="rhs length"):
            lu_solve(np.eye(3), np.ones(2))


class TestGmres:
    def test_matches_direct_solve(self, rng) -> None:
        a = well_conditioned(30, rng)
        b = rng.standard_normal(30) + 1j * rng.standard_normal(30)
        result = gmres(a, b, tol=1e-12)
        assert result.residual <= 1e-12
        assert result.history[0] == pytest.approx(1.0)
        assert len(result.history) == result.iterations + 1
        np.testing.assert_allclose(result.x, lu_solve(a, b), rtol=1e-9)

    def test_restarted(self, rng) -> None:
        a = well_conditioned(40, rng)
        b = rng.standard_normal(40) + 0j
        result = gmres(a, b, tol=1e-10, restart=5, max_iter=400)
        assert relative_residual(a, result.x, b) <= 1e-10

    def test_residual_history_non_increasing(self, rng) -> None:
        a = well_conditioned(40, rng)
        b = rng.standard_normal(40) + 1j * rng.standard_normal(40)
        result = gmres(a, b, tol=1e-10, restart=6, max_iter=400)
        assert np.all(np.diff(result.history) <= 1e-12)

    def test_identity_converges_in_one_step(self) -> None:
        b = np.array([1.0, 2.0j, -3.0])
        result = gmres(np.eye(3), b)
        assert result.iterations == 1
        np.testing.assert_allclose(result.x, b)

    def test_zero_rhs(self) -> None:
        result = gmres(np.eye(4), np.zeros(4))
        assert result.iterations == 0
        np.testing.assert_array_equal(result.x, 0.0)

    def test_not_converged(self, rng) -> None:
        a = rng.standard_normal((30, 30)) + 1j * rng.standard_normal((30, 30))
        b = np.ones(30, dtype=complex)
        with pytest.raises(ConvergenceError) as info:
            gmres(a, b, tol=1e-12, restart=3, max_iter=6)
        assert info.value.iterations == 6
        assert info.value.best_x.shape == (30,)
        assert info.value.residual <= 1.0

    def test_invalid_tol(self) -> None:
        with pytest.raises(ContractError, match="tol"):
            gmres(np.eye(2), np.ones(2), tol=0.0)


class TestSolve:
    def test_lu_and_gmres_agree_on_efie(self, system48) -> None:
        direct = solve(system48.matrix, -system48.rhs, "lu")
        iterative = solve(system48.matrix, -system48.rhs, "gmres", tol=1e-12, restart=60, max_iter=500)
        assert iterative.method == "gmres" and iterative.iterations > 0
        assert np.linalg.norm(iterative.x - direct.x) <= 1e-8 * np.linalg.norm(direct.x)

    def test_unknown_method(self) -> None:
        with pytest.raises(ContractError, match="unknown solver"):
            solve(np.eye(2), np.ones(2), "cg")
