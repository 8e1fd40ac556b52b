"""PI step-size controller."""
from __future__ import annotations

SAFETY = 0.9
K_I = 0.3
K_P = 0.4
SHRINK_MAX = 0.2
GROW_MAX = 5.0


def pi_step_control(err: float, err_prev: float, dt: float, order: int) -> float:
    """Next step size from the current and previous scaled error norms.

    ``dt * clamp(0.9 err^{-k_I/(q+1)} (err_prev/err)^{k_P/(q+1)}, 0.2, 5)``
    where ``q`` is the order of the error estimate.
    """
    if err <= 0.0:
        return dt * GROW_MAX
    fac = SAFETY * err ** (-K_I / (order + 1)) * (err_prev / err) ** (K_P / (order + 1))
    return dt * min(GROW_MAX, max(SHRINK_MAX, fac))
