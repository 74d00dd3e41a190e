"""Dense complex solvers for V j = -f: pivoted LU and restarted GMRES."""
from __future__ import annotations

import logging
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as scla

from iganet.errors import ContractError, ConvergenceError, SingularMatrixError

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-14
RESIDUAL_WARN = 1e-12
METHODS = ("lu", "gmres")


class GmresResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float
    history: list[float]


class SolveResult(NamedTuple):
    x: np.ndarray
    method: str
    iterations: int
    residual: float


def _check_system(matrix: np.ndarray, rhs: np.ndarray) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ContractError(f"matrix must be square, got {matrix.shape}")
    if rhs.shape != (matrix.shape[0],):
        raise ContractError(f"rhs length {rhs.shape} does not match matrix {matrix.shape}")


def relative_residual(matrix: np.ndarray, x: np.ndarray, rhs: np.ndarray) -> float:
    norm = np.linalg.norm(rhs)
    res = np.linalg.norm(matrix @ x - rhs)
    return float(res / norm) if norm > 0 else float(res)


def lu_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    _check_system(matrix, rhs)

    lu, piv = scla.lu_factor(matrix)
    pivots = np.abs(np.diag(lu))
    scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    if scale == 0.0 or np.min(pivots) < PIVOT_TOL * scale:
        raise SingularMatrixError(
            f"numerically singular matrix: smallest pivot {np.min(pivots):.3e}, "
            f"max entry {scale:.3e}"
        )
    x = scla.lu_solve((lu, piv), rhs)
    residual = relative_residual(matrix, x, rhs)
    if residual > RESIDUAL_WARN:
        logger.warning("LU solve relative residual %.3e exceeds %.0e", residual, RESIDUAL_WARN)
    logger.debug("LU solve of size %d, relative residual %.3e", len(rhs), residual)
    return x


def _givens(a: complex, b: complex) -> tuple[float, complex, complex]:
    """Real c, complex s and r with [[c, s], [-conj(s), c]] @ [a, b] = [r, 0]."""
    t = np.hypot(abs(a), abs(b))
    if t == 0.0:
        return 1.0, 0.0, 0.0
    if a == 0:
        return 0.0, 1.0, b
    phase = a / abs(a)
    return abs(a) / t, phase * np.conj(b) / t, phase * t


def gmres(
    matrix: np.ndarray,
    rhs: np.ndarray,
    tol: float = 1e-10,
    restart: int = 50,
    max_iter: int = 1000,
    x0: Optional[np.ndarray] = None,
) -> GmresResult:
    """Restarted GMRES with modified Gram-Schmidt Arnoldi and complex Givens rotations.

    ``max_iter`` counts inner iterations over all cycles; ``history`` holds
    the relative residual after every inner iteration.
    """
    if tol <= 0:
        raise ContractError(f"tol must be positive, got {tol}")
    if restart < 1 or max_iter < 0:
        raise ContractError("restart must be positive and max_iter non-negative")
    matrix = np.asarray(matrix, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    _check_system(matrix, rhs)

    n = len(rhs)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        return GmresResult(np.zeros(n, dtype=complex), 0, 0.0, [0.0])

    r = rhs - matrix @ x
    beta = np.linalg.norm(r)
    history = [float(beta / b_norm)]
    best_x, best_res = x.copy(), history[0]
    iterations = 0
    m = min(restart, n)

    while history[-1] > tol and iterations < max_iter:
        basis = np.zeros((m + 1, n), dtype=complex)
        hess = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        basis[0] = r / beta
        g[0] = beta

        k = 0
        for k in range(m):
            w = matrix @ basis[k]
            for i in range(k + 1):
                hess[i, k] = np.vdot(basis[i], w)
                w = w - hess[i, k] * basis[i]
            hess[k + 1, k] = np.linalg.norm(w)

            for i in range(k):
                upper = cs[i] * hess[i, k] + sn[i] * hess[i + 1, k]
                hess[i + 1, k] = -np.conj(sn[i]) * hess[i, k] + cs[i] * hess[i + 1, k]
                hess[i, k] = upper
            sub = hess[k + 1, k]
            cs[k], sn[k], hess[k, k] = _givens(hess[k, k], sub)
            hess[k + 1, k] = 0.0
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]

            iterations += 1
            history.append(float(abs(g[k + 1]) / b_norm))
            if history[-1] <= tol or iterations >= max_iter or abs(sub) < 1e-300:
                break
            basis[k + 1] = w / sub

        y = scla.solve_triangular(hess[: k + 1, : k + 1], g[: k + 1])
        x = x + basis[: k + 1].T @ y
        r = rhs - matrix @ x
        beta = np.linalg.norm(r)
        true_res = float(beta / b_norm)
        history[-1] = true_res
        if true_res < best_res:
            best_x, best_res = x.copy(), true_res
        logger.debug("GMRES cycle ended after %d iterations, residual %.3e", iterations, true_res)
        if beta == 0.0:
            break

    if history[-1] > tol:
        raise ConvergenceError(
            f"GMRES did not reach tol {tol:.1e} in {iterations} iterations "
            f"(residual {best_res:.3e})",
            best_x=best_x,
            residual=best_res,
            iterations=iterations,
        )
    logger.info("GMRES converged in %d iterations, residual %.3e", iterations, history[-1])
    return GmresResult(x, iterations, history[-1], history)


def solve(
    matrix: np.ndarray,
    rhs: np.ndarray,
    method: str = "lu",
    tol: float = 1e-10,
    restart: int = 50,
    max_iter: int = 1000,
) -> SolveResult:
    if method == "lu":
        x = lu_solve(matrix, rhs)
        return SolveResult(x, "lu", 0, relative_residual(np.asarray(matrix), x, np.asarray(rhs)))
    if method == "gmres":
        result = gmres(matrix, rhs, tol=tol, restart=restart, max_iter=max_iter)
        return SolveResult(result.x, "gmres", result.iterations, result.residual)
    raise ContractError(f"unknown solver {method!r}; expected one of {METHODS}")
