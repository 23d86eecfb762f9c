# impulse.py
"""
Gaussian pseudo-impulse design.

The body displacement x(t) = A exp(-2 pi^2 s^2 (t - t0)^2) has the spectrum
x^(f) = A / (s sqrt(2 pi)) exp(-f^2 / (2 s^2)). Its width s is chosen so the
spectrum has decayed by the ratio r at the highest frequency the free-surface
grid resolves with alpha points per wavelength, and t0 so that x(0) = epsilon.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from errors import ParameterError

logger = logging.getLogger(__name__)

GRAVITY = 9.81
MODES = (1, 3, 5)


def dispersion_frequency(k, h: float) -> np.ndarray:
    """Linear dispersion relation omega(k) = sqrt(g k tanh(k h))."""
    k = np.asarray(k, dtype=float)
    return np.sqrt(GRAVITY * k * np.tanh(k * h))


def wave_number(omega: float, h: float) -> float:
    """Inverse of the dispersion relation for a single frequency."""
    if omega <= 0:
        return 0.0
    deep = omega ** 2 / GRAVITY
    upper = max(deep, omega / np.sqrt(GRAVITY * h)) * 2 + 1.0
    return float(brentq(lambda k: dispersion_frequency(k, h) - omega, 1e-12, upper, xtol=1e-14))


@dataclass(frozen=True)
class PseudoImpulse:
    mode: int
    alpha: float
    r: float
    epsilon: float
    s: float
    t0: float
    f_r: float
    omega_r: float
    k_r: float
    L_r: float
    dx_max: float
    depth: float
    amplitude: float = 1.0

    def displacement(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.amplitude * np.exp(-2 * np.pi ** 2 * self.s ** 2 * (t - self.t0) ** 2)

    def velocity(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return -4 * np.pi ** 2 * self.s ** 2 * (t - self.t0) * self.displacement(t)

    def acceleration(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        c = 4 * np.pi ** 2 * self.s ** 2
        return (c * c * (t - self.t0) ** 2 - c) * self.displacement(t)

    @property
    def omega_peak(self) -> float:
        """Angular frequency at the peak of the body-velocity spectrum."""
        return 2 * np.pi * self.s

    def spectrum(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return self.amplitude / (self.s * np.sqrt(2 * np.pi)) * np.exp(-f ** 2 / (2 * self.s ** 2))


def width_for_ratio(f_r: float, r: float) -> float:
    return float(np.sqrt(-f_r ** 2 / (2 * np.log(r))))


def peak_time(s: float, epsilon: float) -> float:
    return float(np.sqrt(np.log(epsilon) / (-2 * np.pi ** 2 * s ** 2)))


def design_pseudo_impulse(dx_max: float, h: float, mode: int, alpha: float = 3.0, r: float = 1e-4,
                          epsilon: float = 1e-8, s: Optional[float] = None, t0: Optional[float] = None,
                          amplitude: float = 1.0) -> PseudoImpulse:
    """
    dx_max is the largest free-surface node spacing. `s` and `t0` override the
    designed width and peak time; a t0 earlier than the epsilon-limited value
    is accepted with a warning.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode}")
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if not 0 < r < 1:
        raise ParameterError(f"decay ratio r must lie in (0, 1), got {r}")
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if dx_max <= 0 or h <= 0:
        raise ParameterError("grid spacing and depth must be positive")

    L_r = alpha * dx_max
    k_r = 2 * np.pi / L_r
    omega_r = float(dispersion_frequency(k_r, h))
    f_r = omega_r / (2 * np.pi)

    if s is None:
        s = width_for_ratio(f_r, r)
    elif s <= 0:
        raise ParameterError(f"impulse width s must be positive, got {s}")
    t0_limit = peak_time(s, epsilon)
    if t0 is None:
        t0 = t0_limit
    elif t0 < t0_limit:
        logger.warning("t0=%.4g s is earlier than %.4g s; x(0) exceeds epsilon=%.1e", t0, t0_limit, epsilon)

    impulse = PseudoImpulse(mode=mode, alpha=float(alpha), r=float(r), epsilon=float(epsilon),
                            s=float(s), t0=float(t0), f_r=float(f_r), omega_r=omega_r,
                            k_r=float(k_r), L_r=float(L_r), dx_max=float(dx_max), depth=float(h),
                            amplitude=float(amplitude))
    logger.info("Pseudo-impulse k=%d: L_r=%.4g m, omega_r=%.4g rad/s, s=%.4g 1/s, t0=%.4g s",
                mode, L_r, omega_r, s, t0)
    return impulse


def impulse_signals(p: PseudoImpulse, t) -> Tuple[np.ndarray, np.ndarray]:
    return p.displacement(t), p.velocity(t)


def impulse_spectrum(p: PseudoImpulse, f) -> np.ndarray:
    return p.spectrum(f)
