"""Time integrators: fixed-step RK4 and trapezoidal, adaptive Rodas4."""
from .config import METHODS, SolverConfig, SolverStats
from .explicit import integrate_rk4, step_rk4
from .jacobian import jacobian_fd, jacobian_richardson
from .linalg import LU, lu_solve
from .newton import NewtonResult, newton_solve
from .problem import OdeProblem
from .rosenbrock import RodasStep, integrate_adaptive, rodas_attempt, step_adaptive
from .stepcontrol import pi_step_control
from .trapezoidal import NewtonConfig, TrapezoidalStepper, step_trapezoidal

__all__ = [
    "METHODS", "SolverConfig", "SolverStats", "integrate_rk4", "step_rk4", "jacobian_fd",
    "jacobian_richardson", "LU", "lu_solve", "NewtonResult", "newton_solve", "OdeProblem", "RodasStep",
    "integrate_adaptive", "rodas_attempt", "step_adaptive", "pi_step_control", "NewtonConfig",
    "TrapezoidalStepper", "step_trapezoidal",
]
