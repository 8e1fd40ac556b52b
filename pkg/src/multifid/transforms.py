"""Reference-frame transformations and phasor extraction.

Park convention: q lags d, scale ``c`` (default 2/3) on the whole matrix::

    T_p(θ) = [[ cos θ,  cos(θ-2π/3),  cos(θ+2π/3)],
              [-sin θ, -sin(θ-2π/3), -sin(θ+2π/3)],
              [ 1,      1,            1          ]]

so that ``abc = Re{(d + jq) e^{jθ}}`` for a balanced set.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, MeasurementError

PARK_SCALE = 2.0 / 3.0
_SHIFT = 2.0 * np.pi / 3.0


def park_matrix(theta: float, c: float = PARK_SCALE) -> np.ndarray:
    """Return ``c * T_p(theta)``."""
    ang = np.array([theta, theta - _SHIFT, theta + _SHIFT])
    return c * np.vstack([np.cos(ang), -np.sin(ang), np.ones(3)])


def inverse_park_matrix(theta: float, c: float = PARK_SCALE) -> np.ndarray:
    """Return ``(c * T_p(theta))^{-1}`` in closed form.

    ``T_p T_p^T = diag(3/2, 3/2, 3)``, hence the inverse is
    ``T_p^T diag(2/3, 2/3, 1/3) / c``.
    """
    ang = np.array([theta, theta - _SHIFT, theta + _SHIFT])
    tp_t = np.column_stack([np.cos(ang), -np.sin(ang), np.ones(3)])
    return tp_t * (np.array([2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]) / c)


def park(x, theta, c: float = PARK_SCALE) -> np.ndarray:
    """abc -> (d, q, 0).

    Parameters
    ----------
    x : array_like, shape (..., 3)
        Phase values; leading dimensions broadcast against ``theta``.
    theta : float or array_like
        Frame angle in radians.
    c : float
        Scale applied to the whole transform.

    Returns
    -------
    ndarray, shape (..., 3)
    """
    x = np.asarray(x, dtype=float)
    th = np.asarray(theta, dtype=float)[..., None]
    ang = th + np.array([0.0, -_SHIFT, _SHIFT])
    d = c * np.sum(x * np.cos(ang), axis=-1)
    q = -c * np.sum(x * np.sin(ang), axis=-1)
    z = c * np.sum(x, axis=-1)
    return np.stack(np.broadcast_arrays(d, q, z), axis=-1)


def inverse_park(dq0, theta, c: float = PARK_SCALE) -> np.ndarray:
    """(d, q, 0) -> abc; exact inverse of :func:`park`."""
    dq0 = np.asarray(dq0, dtype=float)
    th = np.asarray(theta, dtype=float)[..., None]
    ang = th + np.array([0.0, -_SHIFT, _SHIFT])
    d, q, z = dq0[..., 0:1], dq0[..., 1:2], dq0[..., 2:3]
    return (2.0 / (3.0 * c)) * (d * np.cos(ang) - q * np.sin(ang)) + z / (3.0 * c)


def frame_rotate(s, delta_theta):
    """Express a dq quantity in a frame advanced by ``delta_theta``.

    Returns ``(d cos Δθ + q sin Δθ, -d sin Δθ + q cos Δθ)``, i.e. the
    complex product ``s e^{-jΔθ}``. Accepts a pair, an array of shape
    (..., 2) or a complex number (returned as complex).
    """
    if isinstance(s, complex):
        return s * complex(np.cos(delta_theta), -np.sin(delta_theta))
    s = np.asarray(s, dtype=float)
    cs, sn = np.cos(delta_theta), np.sin(delta_theta)
    d, q = s[..., 0], s[..., 1]
    return np.stack([d * cs + q * sn, -d * sn + q * cs], axis=-1)


def space_vector(amplitudes, phases) -> tuple[complex, complex]:
    """Positive and negative frequency envelopes of a three-phase set.

    For ``s_k cos(θ_k)``::

        s+ = s_a e^{jθ_a} + s_b e^{j(θ_b + 2π/3)} + s_c e^{j(θ_c - 2π/3)}
        s- = s_a e^{-jθ_a} + s_b e^{-j(θ_b - 2π/3)} + s_c e^{-j(θ_c + 2π/3)}
    """
    a = np.asarray(amplitudes, dtype=float)
    th = np.asarray(phases, dtype=float)
    rot = np.array([0.0, _SHIFT, -_SHIFT])
    s_plus = np.sum(a * np.exp(1j * (th + rot)))
    s_minus = np.sum(a * np.exp(-1j * (th - rot)))
    return complex(s_plus), complex(s_minus)


def dynamic_phasor(t, s, k: int, rho: float, min_samples: int = 64) -> complex:
    """Sliding-window Fourier coefficient over one period ending at ``t[-1]``.

    ``<s>_k = (1/T) ∫_{t-T}^{t} s(τ) e^{-jkρτ} dτ`` with trapezoid quadrature.

    Parameters
    ----------
    t : array_like
        Uniform sample times covering exactly one period ``T = 2π/ρ``
        (endpoints included).
    s : array_like
        Samples (real or complex) at ``t``.
    k : int
        Harmonic index.
    rho : float
        Base angular frequency in rad/s.
    min_samples : int
        Minimum number of intervals per period.
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s)
    if t.ndim != 1 or t.shape != s.shape:
        raise ConfigError("t and s must be 1-D arrays of equal length")
    if rho <= 0:
        raise ConfigError("rho must be positive")
    period = 2.0 * np.pi / rho
    span = t[-1] - t[0]
    if abs(span - period) > 1e-9 * period:
        raise ConfigError(f"window length {span!r} differs from period {period!r}")
    if len(t) - 1 < min_samples:
        raise ConfigError(f"need at least {min_samples} samples per period, got {len(t) - 1}")
    steps = np.diff(t)
    if np.max(np.abs(steps - steps.mean())) > 1e-9 * period:
        raise ConfigError("samples must be uniformly spaced")
    g = s * np.exp(-1j * k * rho * t)
    return complex(np.trapezoid(g, t) / period)


def sliding_phasor(t, s, k: int, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Apply :func:`dynamic_phasor` at every sample with a full window behind it.

    Returns the window end times and the phasor trajectory.
    """
    t = np.asarray(t, dtype=float)
    dt = t[1] - t[0]
    m = int(round(2.0 * np.pi / rho / dt))
    if abs(m * dt - 2.0 * np.pi / rho) > 1e-9 * 2.0 * np.pi / rho:
        raise ConfigError("sample spacing does not divide the period")
    out = np.empty(len(t) - m, dtype=complex)
    for n in range(m, len(t)):
        out[n - m] = dynamic_phasor(t[n - m : n + 1], s[n - m : n + 1], k, rho)
    return t[m:], out


def bus_frequency(v, v_dot, omega_b: float) -> float:
    """Frequency deviation of a dq voltage in per unit.

    ``(v_d v̇_q - v_q v̇_d) / (v_d² + v_q²) / Ω_b``.
    """
    vd, vq = float(v[0]), float(v[1])
    mag2 = vd * vd + vq * vq
    if mag2 <= 1e-12:
        raise MeasurementError("bus frequency undefined: |v| <= 1e-6")
    return (vd * float(v_dot[1]) - vq * float(v_dot[0])) / mag2 / omega_b
