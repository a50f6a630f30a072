"""
Точное исключение внешних весов.

Прямая задача (масштаб 1/λ):
    L̂(u) = (1/(2λN)) ‖Φu/M − Y‖² + (1/M) Σ f(u_i)
Двойственная:
    D(α) = −(1/M) Σ f*(h_i) + (1/N) αᵀY − (λ/(2N)) ‖α‖²,  h = Φᵀα/N
Соглашение о знаке: λα = Y − Φu/M.
"""
from typing import Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, pinv, solve

from config.logging import get_logger
from config.settings import (
    NEWTON_HESSIAN_CAP,
    NEWTON_LINE_SEARCH_SLACK,
    NEWTON_MAX_HALVINGS,
    NEWTON_MAX_ITERATIONS,
    NEWTON_TOLERANCE,
    ZERO_LIMIT_FEASIBILITY_TOL,
)
from models.features import FeatureMatrix
from models.training_models import OuterSolution, Regularizer, RegularizerKind
from utils.errors import ConvergenceError, InfeasibleError, InvalidInputError, SolverError

logger = get_logger("outer_solver")

MatrixLike = Union[FeatureMatrix, np.ndarray]


def _entries(phi: MatrixLike) -> np.ndarray:
    if isinstance(phi, FeatureMatrix):
        return phi.entries
    entries = np.atleast_2d(np.asarray(phi, dtype=float))
    if not np.all(np.isfinite(entries)):
        raise InvalidInputError("Feature matrix must be finite")
    return entries


def _targets(entries: np.ndarray, ys) -> np.ndarray:
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if ys.shape[0] != entries.shape[0]:
        raise InvalidInputError(
            f"Targets have {ys.shape[0]} rows, feature matrix has {entries.shape[0]}"
        )
    return ys


def _check_lambda(lam: float) -> float:
    if not lam > 0:
        raise InvalidInputError(f"lambda must be positive, got {lam}")
    return float(lam)


def primal_value(phi: MatrixLike, ys, lam: float, reg: Regularizer, u) -> float:
    """Значение прямой задачи при заданных внешних весах"""
    entries = _entries(phi)
    ys = _targets(entries, ys)
    lam = _check_lambda(lam)
    n_samples, width = entries.shape
    residual = entries @ np.asarray(u, dtype=float) / width - ys
    return float(residual @ residual / (2.0 * lam * n_samples) + np.mean(reg.value(u)))


def dual_value(phi: MatrixLike, ys, lam: float, reg: Regularizer, alpha) -> float:
    """Двойственная целевая функция в точке α"""
    entries = _entries(phi)
    ys = _targets(entries, ys)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    n_samples = entries.shape[0]
    h = entries.T @ alpha / n_samples
    return float(
        -np.mean(reg.conjugate(h))
        + alpha @ ys / n_samples
        - lam * (alpha @ alpha) / (2.0 * n_samples)
    )


def dual_variable(sol: OuterSolution, lam: float) -> np.ndarray:
    """α = (Y − F)/λ = −r/λ"""
    return -sol.residual / _check_lambda(lam)


def _solution(entries: np.ndarray, ys: np.ndarray, lam: float,
              reg: Regularizer, u: np.ndarray, iterations: int = 0) -> OuterSolution:
    n_samples, width = entries.shape
    residual = entries @ u / width - ys
    alpha = -residual / lam
    return OuterSolution(
        u=u,
        residual=residual,
        alpha=alpha,
        primal_value=float(residual @ residual / (2.0 * lam * n_samples) + np.mean(reg.value(u))),
        dual_value=dual_value(entries, ys, lam, reg, alpha),
        iterations=iterations,
    )


def solve_quadratic(phi: MatrixLike, ys, lam: float, reg: Regularizer) -> OuterSolution:
    """Нормальные уравнения M×M для квадратичных регуляризаторов"""
    entries = _entries(phi)
    ys = _targets(entries, ys)
    lam = _check_lambda(lam)
    if not reg.is_quadratic:
        raise InvalidInputError(f"{reg.label} is not a quadratic regularizer")
    n_samples, width = entries.shape

    shift = 2.0 * lam if reg.kind == RegularizerKind.QUAD else lam
    target = ys
    if reg.kind == RegularizerKind.QUAD_UNBIASED:
        target = ys - entries.sum(axis=1) / width

    system = entries.T @ entries / (n_samples * width)
    system[np.diag_indices_from(system)] += shift
    try:
        factor = cho_factor(system, lower=True, check_finite=True)
        v = cho_solve(factor, entries.T @ target / n_samples)
    except (LinAlgError, ValueError) as e:
        raise SolverError(f"Normal equations are not numerically SPD: {e}") from e

    u = 1.0 + v if reg.kind == RegularizerKind.QUAD_UNBIASED else v
    return _solution(entries, ys, lam, reg, u)


def kernel_value(phi: MatrixLike, ys, lam: float) -> float:
    """(1/N) Yᵀ (K̂ + 2λI)⁻¹ Y, совпадает с прямым значением для f(t) = t²"""
    entries = _entries(phi)
    ys = _targets(entries, ys)
    lam = _check_lambda(lam)
    n_samples, width = entries.shape
    system = entries @ entries.T / (width * n_samples)
    system = 0.5 * (system + system.T)
    system[np.diag_indices_from(system)] += 2.0 * lam
    try:
        factor = cho_factor(system, lower=True)
    except LinAlgError as e:
        raise SolverError(f"Kernel system is not numerically SPD: {e}") from e
    return float(ys @ cho_solve(factor, ys) / n_samples)


def solve_power_r(phi: MatrixLike, ys, lam: float, r: float,
                  tol: float = NEWTON_TOLERANCE,
                  max_iterations: int = NEWTON_MAX_ITERATIONS) -> OuterSolution:
    """
    Демпфированный метод Ньютона для двойственной задачи с f(t) = |t|^r/(r−1).

    Гессиан −(λ/N)(I + c·B Bᵀ), B = Φ·diag(√(f*''(h))), c = 1/(λMN);
    направление находится через тождество Вудбери с системой M×M.
    """
    entries = _entries(phi)
    ys = _targets(entries, ys)
    lam = _check_lambda(lam)
    reg = Regularizer(kind=RegularizerKind.POWER_R, r=r)
    n_samples, width = entries.shape
    c = 1.0 / (lam * width * n_samples)

    alpha = np.zeros(n_samples)
    current = dual_value(entries, ys, lam, reg, alpha)
    grad_norm = np.inf
    iteration = 0
    for iteration in range(max_iterations + 1):
        h = entries.T @ alpha / n_samples
        u = reg.conjugate_derivative(h)
        grad = (ys - entries @ u / width - lam * alpha) / n_samples
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= tol:
            break
        if iteration == max_iterations:
            raise ConvergenceError(grad_norm, iteration)

        curvature = np.minimum(reg.conjugate_second_derivative(h), NEWTON_HESSIAN_CAP)
        b = entries * np.sqrt(curvature)[None, :]
        small = np.eye(width) + c * (b.T @ b)
        w = solve(small, b.T @ grad, assume_a='pos')
        direction = (n_samples / lam) * (grad - c * (b @ w))

        step = 1.0
        for _ in range(NEWTON_MAX_HALVINGS):
            candidate = alpha + step * direction
            value = dual_value(entries, ys, lam, reg, candidate)
            if value >= current - NEWTON_LINE_SEARCH_SLACK * (1.0 + abs(current)):
                alpha, current = candidate, value
                break
            step *= 0.5
        else:
            raise ConvergenceError(grad_norm, iteration, "Newton line search failed")

    logger.debug(f"power_r dual solve converged in {iteration} iterations (grad {grad_norm:.2e})")
    u = reg.conjugate_derivative(entries.T @ alpha / n_samples)
    return _solution(entries, ys, lam, reg, u, iterations=iteration)


def solve_outer(phi: MatrixLike, ys, lam: float, reg: Regularizer) -> OuterSolution:
    """Выбор решателя по типу регуляризатора"""
    if reg.is_quadratic:
        return solve_quadratic(phi, ys, lam, reg)
    return solve_power_r(phi, ys, lam, reg.r)


def reduced_risk_zero_limit(phi: MatrixLike, ys, reg: Regularizer,
                            tol: float = ZERO_LIMIT_FEASIBILITY_TOL) -> float:
    """min (1/M) Σ f(u_i) при Φu/M = Y через псевдообратную"""
    entries = _entries(phi)
    ys = _targets(entries, ys)
    if not reg.is_quadratic:
        raise InvalidInputError("Zero-lambda reference is implemented for quadratic regularizers")
    width = entries.shape[1]
    operator = entries / width
    target = ys
    if reg.kind == RegularizerKind.QUAD_UNBIASED:
        target = ys - operator @ np.ones(width)
    v = pinv(operator) @ target
    infeasibility = float(np.linalg.norm(operator @ v - target))
    if infeasibility > tol * (1.0 + float(np.linalg.norm(ys))):
        raise InfeasibleError(infeasibility)
    u = 1.0 + v if reg.kind == RegularizerKind.QUAD_UNBIASED else v
    return float(np.mean(reg.value(u)))
