# hydro.py
"""
Radiation forces and frequency-dependent hydrodynamic coefficients.

With the transform F^(w) = sum F(t) exp(-i w t) dt, a force F = -a x'' - b x'
transforms to F^ = (w^2 a - i w b) x^, so a = Re(F^/x^) / w^2 and
b = -Im(F^/x^) / w.
"""
import logging
from dataclasses import dataclass, field
from math import factorial
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from assembly import DiscreteLaplacian, body_normal_load, impose_dirichlet
from errors import ParameterError, SeriesTooShortError
from mesh import BoundaryTag

logger = logging.getLogger(__name__)

RHO = 1000.0
DEFAULT_PAD_FACTOR = 8
DIVISION_GUARD = 1e3 * np.finfo(float).eps
NOISY_FRACTION = 0.9


# --- Records ---

@dataclass
class RadiationRecord:
    """
    Time series of one radiation run on the uniform grid t_i = i dt.
    phi_body: (n_t, n_body) potentials at the body dofs; body_loads[j]: (n_body,)
    integrals of n_j times each body basis function, so that the force is
    F_j = -rho * sum_i dphi_i/dt * body_loads[j][i].
    """
    dt: float
    times: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    phi_body: np.ndarray
    body_loads: Dict[int, np.ndarray]
    mode: int
    symmetric_half: bool = True
    monitor_x: np.ndarray = field(default_factory=lambda: np.empty(0))
    eta_monitors: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    metadata: Dict[str, Union[float, int, str]] = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


@dataclass(frozen=True)
class HydroCoefficients:
    omega: np.ndarray
    a: np.ndarray
    b: np.ndarray
    omega_r: Optional[float] = None
    noisy: Optional[np.ndarray] = None
    ratio: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.omega)


@dataclass(frozen=True)
class CylinderBody:
    radius: float


@dataclass(frozen=True)
class BoxBody:
    half_length: float
    draft: float


# --- Finite differences ---

def fd_weights(offsets: Sequence[float], derivative: int = 1) -> np.ndarray:
    """Stencil weights (unit spacing) by the method of undetermined coefficients."""
    offsets = np.asarray(offsets, dtype=float)
    n = len(offsets)
    if derivative >= n:
        raise ParameterError(f"{n} points cannot approximate derivative order {derivative}")
    vander = np.vander(offsets, n, increasing=True).T          # row m holds offsets**m
    rhs = np.zeros(n)
    rhs[derivative] = factorial(derivative)
    return np.linalg.solve(vander, rhs)


def fd_time_derivative(series: np.ndarray, dt: float, order: int = 4) -> np.ndarray:
    """
    First time derivative along axis 0: centered stencil inside, one-sided
    stencils of the same order at both ends.
    """
    series = np.asarray(series, dtype=float)
    if order % 2 or order < 2:
        raise ParameterError(f"order must be even and >= 2, got {order}")
    width = order + 1
    n = series.shape[0]
    if n <= width:
        raise SeriesTooShortError(f"series of length {n} is too short for a {width}-point stencil")

    half = order // 2
    out = np.empty_like(series)
    centered = fd_weights(np.arange(-half, half + 1))
    out[half:n - half] = sum(w * series[half + o:n - half + o] for w, o in zip(centered, range(-half, half + 1)))
    for i in range(half):
        lead = np.arange(-i, width - i)
        out[i] = np.tensordot(fd_weights(lead), series[i + lead], axes=(0, 0))
        trail = -lead[::-1]
        j = n - 1 - i
        out[j] = np.tensordot(fd_weights(trail), series[j + trail], axes=(0, 0))
    return out / dt


# --- Forces ---

def _parity(mode: int) -> int:
    # heave is symmetric about the symmetry plane, surge and pitch are not
    return 0 if mode == 3 else 1


def mirror_factor(j: int, k: int) -> float:
    return 2.0 if _parity(j) == _parity(k) else 0.0


def body_force(record: RadiationRecord, j: int, rho: float = RHO, mirror: bool = True,
               order: int = 4) -> np.ndarray:
    """
    F_jk(t) from the body potentials through the linearized Bernoulli pressure.
    mirror=True returns the force on the full body when the run used half the
    domain; mirror=False the integral over the computed half.
    """
    if j not in record.body_loads:
        raise ParameterError(f"no body load recorded for direction {j}")
    dphi = fd_time_derivative(record.phi_body, record.dt, order=order)
    force = -rho * dphi @ record.body_loads[j]
    if mirror and record.symmetric_half:
        force = mirror_factor(j, record.mode) * force
    return force


def check_force_decay(force: np.ndarray, tolerance: float = 1e-3, label: str = "F") -> bool:
    peak = float(np.max(np.abs(force))) if force.size else 0.0
    if peak == 0:
        return True
    ratio = abs(force[-1]) / peak
    if ratio > tolerance:
        logger.warning("%s has not decayed at t_end: |F(t_end)|/peak = %.2e > %.1e", label, ratio, tolerance)
        return False
    return True


def cross_coupling(record: RadiationRecord, rho: float = RHO) -> Dict[int, float]:
    """
    max |F_jk| / max |F_kk| for every recorded direction j of the other parity.
    On a half domain the mirror factor zeroes these terms; a full-domain run
    integrates them over the whole body, where they vanish up to round-off.
    """
    k = record.mode
    if k not in record.body_loads:
        return {}
    peak = float(np.max(np.abs(body_force(record, k, rho=rho))))
    out = {}
    for j in sorted(record.body_loads):
        if _parity(j) == _parity(k):
            continue
        cross = float(np.max(np.abs(body_force(record, j, rho=rho))))
        out[j] = cross / peak if peak > 0 else 0.0
    if out and not record.symmetric_half:
        logger.info("Cross-parity coupling of mode %d: %s", k,
                    ", ".join(f"F_{j}{k}/F_{k}{k} = {v:.2e}" for j, v in out.items()))
    return out


# --- Coefficients ---

def next_pow2(n: int) -> int:
    return 1 << int(np.ceil(np.log2(max(int(n), 1))))


def added_mass_damping(force: np.ndarray, x: np.ndarray, dt: float,
                       pad_factor: float = DEFAULT_PAD_FACTOR,
                       omega_cutoff: Optional[float] = None) -> HydroCoefficients:
    """
    Zero-pads both series to a power-of-two length of at least pad_factor
    times the record, transforms them and divides. The zero frequency, bins
    where |x^| is below the division guard and bins above omega_cutoff are
    dropped; bins above 0.9 omega_cutoff are flagged as noisy.
    """
    force = np.asarray(force, dtype=float)
    x = np.asarray(x, dtype=float)
    if force.shape != x.shape:
        raise ParameterError(f"force {force.shape} and displacement {x.shape} lie on different grids")
    if pad_factor < 1:
        raise ParameterError(f"pad_factor must be >= 1, got {pad_factor}")
    n_pad = next_pow2(int(np.ceil(pad_factor * len(x))))

    F_hat = np.fft.rfft(force, n_pad) * dt
    x_hat = np.fft.rfft(x, n_pad) * dt
    omega = 2 * np.pi * np.fft.rfftfreq(n_pad, dt)

    keep = (omega > 0) & (np.abs(x_hat) > DIVISION_GUARD * np.abs(x_hat).max())
    if omega_cutoff is not None:
        keep &= omega <= omega_cutoff
    dropped = int(((omega > 0) & ~keep & (omega <= (omega_cutoff or np.inf))).sum())
    if dropped:
        logger.warning("Excluded %d frequencies where the displacement spectrum vanishes", dropped)

    omega = omega[keep]
    ratio = F_hat[keep] / x_hat[keep]
    a = ratio.real / omega ** 2
    b = -ratio.imag / omega
    noisy = omega > NOISY_FRACTION * omega_cutoff if omega_cutoff else np.zeros(len(omega), dtype=bool)
    return HydroCoefficients(omega=omega, a=a, b=b, omega_r=omega_cutoff, noisy=noisy, ratio=ratio)


def normalize(coeffs: HydroCoefficients, body: Union[CylinderBody, BoxBody],
              rho: float = RHO) -> Tuple[np.ndarray, np.ndarray]:
    """Dimensionless (mu, nu); nu is NaN at omega = 0."""
    if isinstance(body, CylinderBody):
        scale = 0.5 * np.pi * rho * body.radius ** 2
    elif isinstance(body, BoxBody):
        scale = 2 * rho * body.half_length * body.draft
    else:
        raise ParameterError(f"no normalization for body {body!r}")
    omega = np.asarray(coeffs.omega, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = np.where(omega > 0, coeffs.b / (scale * np.where(omega > 0, omega, 1.0)), np.nan)
    return coeffs.a / scale, nu


def infinite_frequency_added_mass(system: DiscreteLaplacian, j: int, k: int, rho: float = RHO, mirror: bool = True) -> float:
    """
    Rigid-lid limit: phi = 0 on the free surface (and on the symmetry plane
    for antisymmetric k), d phi/dn = n_k on the body; a_jk = rho * int phi n_j.
    """
    dofmap = system.dofmap
    nodes = dofmap.fs_dofs
    if _parity(k) == 1:
        nodes = np.union1d(nodes, dofmap.dofs_with_tag(BoundaryTag.Symmetry))
    dirichlet = impose_dirichlet(system, nodes, 0.0)
    phi = dirichlet.solve(b=body_normal_load(system, k))
    value = rho * float(phi @ body_normal_load(system, j))
    symmetric_half = system.mesh.faces_with_tag(BoundaryTag.Symmetry).size > 0
    if mirror and symmetric_half:
        value *= mirror_factor(j, k)
    logger.info("Infinite-frequency added mass a_%d%d = %.6g", j, k, value)
    return value


def coefficients_frame(coeffs: Dict[Tuple[int, int], HydroCoefficients],
                       body: Optional[Union[CylinderBody, BoxBody]] = None,
                       rho: float = RHO) -> pd.DataFrame:
    """One row per frequency, columns a/b (and mu/nu with a body) per (j, k) pair."""
    if not coeffs:
        return pd.DataFrame()
    first = next(iter(coeffs.values()))
    frame = pd.DataFrame({"omega [rad/s]": first.omega})
    for (j, k), c in sorted(coeffs.items()):
        if len(c.omega) != len(first.omega) or not np.allclose(c.omega, first.omega):
            raise ParameterError("coefficient pairs must share one frequency grid")
        frame[f"a_{j}{k} [kg/m]"] = c.a
        frame[f"b_{j}{k} [kg/(m s)]"] = c.b
        if body is not None:
            mu, nu = normalize(c, body, rho)
            frame[f"mu_{j}{k} [-]"] = mu
            frame[f"nu_{j}{k} [-]"] = nu
    frame["noisy [-]"] = first.noisy.astype(int) if first.noisy is not None else 0
    return frame
