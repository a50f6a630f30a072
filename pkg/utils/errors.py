"""
Иерархия исключений. Каждое исключение хранит значения,
нужные для диагностики, в виде атрибутов.
"""
from typing import Optional


class VarProError(Exception):
    """Базовое исключение проекта"""


class InvalidInputError(VarProError, ValueError):
    """Некорректные входные данные (NaN, λ ≤ 0, неверные формы)"""


class DomainMismatchError(VarProError, ValueError):
    """Объекты на разных областях или сетках"""

    def __init__(self, left, right):
        self.left = left
        self.right = right
        super().__init__(f"Domain mismatch: {left} vs {right}")


class SolverError(VarProError, RuntimeError):
    """Сбой линейного или нелинейного решателя"""


class ConvergenceError(SolverError):
    """Метод Ньютона не сошелся"""

    def __init__(self, grad_norm: float, iterations: int, message: str = ""):
        self.grad_norm = grad_norm
        self.iterations = iterations
        super().__init__(
            message or f"No convergence after {iterations} iterations, "
                       f"gradient norm {grad_norm:.3e}"
        )


class InfeasibleError(VarProError):
    """Y вне образа Φ/M"""

    def __init__(self, residual_norm: float):
        self.residual_norm = residual_norm
        super().__init__(f"Targets outside feature range, residual {residual_norm:.3e}")


class DegenerateStateError(VarProError, ValueError):
    """Неположительная плотность там, где нужна строгая положительность"""

    def __init__(self, min_value: float, where: str = ""):
        self.min_value = min_value
        super().__init__(
            f"Non-positive density{(' in ' + where) if where else ''}: min {min_value:.3e}"
        )


class StepSizeUnderflowError(SolverError):
    """Интегратор не смог продвинуться по времени"""

    def __init__(self, t: float, min_density: float, mass: float,
                 message: Optional[str] = None):
        self.t = t
        self.min_density = min_density
        self.mass = mass
        super().__init__(
            f"Integrator failed at t={t:.6g} (min density {min_density:.3e}, "
            f"mass {mass:.12f}): {message or 'step size underflow'}"
        )


class UnequalMassError(VarProError, ValueError):
    """Разная полная масса у сравниваемых мер"""

    def __init__(self, mass_a: float, mass_b: float):
        self.mass_a = mass_a
        self.mass_b = mass_b
        super().__init__(f"Unequal total mass: {mass_a!r} vs {mass_b!r}")
