# analysis.py
"""
Numerical studies on top of the solver: manufactured-solution convergence,
eigenvalues of the semi-discrete free-surface operator, solve-time scaling,
and the alpha/beta sweeps that expose spurious free-surface oscillations.
"""
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg
from joblib import Parallel, delayed

import linsolve
from assembly import (DiscreteLaplacian, assemble_neumann_flux, assemble_volume_source, build_laplacian,
                      impose_dirichlet)
from errors import DivergenceError, EigenBudgetError, InstabilityError, ParameterError
from geometry import curve_body_elements
from hydro import DEFAULT_PAD_FACTOR, HydroCoefficients, RadiationRecord, next_pow2
from impulse import GRAVITY, design_pseudo_impulse
from mesh import BoundaryTag, Mesh
from radiation import FreeSurfaceOperator, RadiationSettings, fs_spacing, run_radiation
from refelem import build_reference_element

logger = logging.getLogger(__name__)

ROUND_OFF_FLOOR = 1e-11
MAX_EIGEN_DIM = 4000
STABILITY_TOLERANCE = 1e-8
# lowest order entering the p-decay fit
P_DECAY_MIN_ORDER = 2
# eigenvalues this close to zero (relative to max |lambda|) belong to the constant-potential null pair
ZERO_MODE_FRACTION = 1e-6
SPURIOUS_BASELINE_ALPHA = 5.0
SPURIOUS_THRESHOLD_FACTOR = 1.2
SPURIOUS_RELATIVE_LEVEL = 1e-3


# --- Least-squares fits ---

def fit_rate(h: Sequence[float], err: Sequence[float]) -> float:
    """Slope of log(err) against log(h)."""
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def fit_geometric_decay(orders: Sequence[int], err: Sequence[float]) -> float:
    """Error reduction factor per unit polynomial order."""
    return float(np.exp(np.polyfit(np.asarray(orders, dtype=float), np.log(err), 1)[0]))


def fit_exponent(n: Sequence[float], t: Sequence[float]) -> float:
    """p in t ~ c n^p."""
    return fit_rate(n, t)


def max_edge_length(mesh: Mesh) -> float:
    p = mesh.vertices[mesh.triangles]
    edges = p - np.roll(p, -1, axis=1)
    return float(np.linalg.norm(edges, axis=2).max())


# --- Manufactured solutions ---

@dataclass(frozen=True)
class ManufacturedSolution:
    """phi with its gradient and the source f = -Laplacian(phi)."""
    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]
    source: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def flux(self, x, z, nx, nz) -> np.ndarray:
        gx, gz = self.gradient(x, z)
        return gx * nx + gz * nz


def default_manufactured_solution(L: float, h: float) -> ManufacturedSolution:
    k = np.pi / L

    def value(x, z):
        return np.cos(k * x) * np.cosh(k * (z + h)) + np.sin(2 * x) * np.cos(3 * z)

    def gradient(x, z):
        gx = -k * np.sin(k * x) * np.cosh(k * (z + h)) + 2 * np.cos(2 * x) * np.cos(3 * z)
        gz = k * np.cos(k * x) * np.sinh(k * (z + h)) - 3 * np.sin(2 * x) * np.sin(3 * z)
        return gx, gz

    def source(x, z):
        return 13 * np.sin(2 * x) * np.cos(3 * z)

    name = f"cos(pi x/{L:g}) cosh(pi (z+{h:g})/{L:g}) + sin(2x) cos(3z)"
    return ManufacturedSolution(name=name, value=value, gradient=gradient, source=source)


def linear_solution() -> ManufacturedSolution:
    return ManufacturedSolution(
        name="x",
        value=lambda x, z: np.asarray(x, dtype=float) + 0 * z,
        gradient=lambda x, z: (np.ones_like(x), np.zeros_like(z)),
        source=lambda x, z: np.zeros_like(x),
    )


def solve_manufactured(mesh: Mesh, order: int, solution: ManufacturedSolution, body=None,
                       quadrature: str = "auto") -> Tuple[float, int]:
    """
    Poisson solve with the exact trace on the free surface and exact Neumann
    data on every other boundary. Returns (max nodal error, N_dof).
    """
    ref = build_reference_element(order)
    if body is not None and mesh.faces_with_tag(BoundaryTag.Body).size:
        mesh = curve_body_elements(mesh, ref, body)
    system = build_laplacian(mesh, ref, quadrature=quadrature)
    b = assemble_volume_source(system, solution.source)
    for tag in (BoundaryTag.Bed, BoundaryTag.FarField, BoundaryTag.Body, BoundaryTag.Symmetry):
        if mesh.faces_with_tag(tag).size:
            b = assemble_neumann_flux(system, tag, solution.flux, b)
    fs = system.dofmap.fs_dofs
    x, z = system.dofmap.coords[:, 0], system.dofmap.coords[:, 1]
    dirichlet = impose_dirichlet(system, fs, solution.value(x[fs], z[fs]))
    phi = dirichlet.solve(b=b)
    return float(np.max(np.abs(phi - solution.value(x, z)))), system.n_dof


@dataclass
class ConvergenceReport:
    cases: pd.DataFrame
    h_rates: Dict[int, float]
    p_decay: Dict[str, float]
    solution: str
    flagged: List[str] = field(default_factory=list)

    def rate_table(self) -> pd.DataFrame:
        rows = [{"kind": "h", "key": str(P), "value": r} for P, r in sorted(self.h_rates.items())]
        rows += [{"kind": "P", "key": m, "value": d} for m, d in self.p_decay.items()]
        return pd.DataFrame(rows, columns=["kind", "key", "value"])


def _pre_floor(errors: np.ndarray) -> np.ndarray:
    """Mask of the entries before the error first reaches the round-off floor."""
    hit = np.flatnonzero(errors <= ROUND_OFF_FLOOR)
    keep = np.ones(len(errors), dtype=bool)
    if hit.size:
        keep[hit[0] + 1:] = False
    return keep


def mms_convergence(meshes: Sequence[Mesh], orders: Sequence[int],
                    solution: Optional[ManufacturedSolution] = None, body=None,
                    quadrature: str = "auto", n_jobs: int = 1) -> ConvergenceReport:
    """
    Errors for every (mesh, P) pair, h-rates per P over the mesh family and a
    geometric decay factor per mesh over P >= 2 (entries below the round-off
    floor are left out of both fits).
    """
    if not meshes or not orders:
        raise ParameterError("mms_convergence needs at least one mesh and one order")
    if solution is None:
        solution = default_manufactured_solution(meshes[0].length, meshes[0].depth)
    cases = [(i, mesh, int(P)) for i, mesh in enumerate(meshes) for P in orders]
    results = Parallel(n_jobs=n_jobs)(
        delayed(solve_manufactured)(mesh, P, solution, body, quadrature) for _, mesh, P in cases)

    rows = []
    for (i, mesh, P), (error, n_dof) in zip(cases, results):
        rows.append({"mesh": f"{i}:{mesh.name}", "n_elm": mesh.n_elements, "h_max": max_edge_length(mesh),
                     "P": P, "n_dof": n_dof, "error": error})
        logger.info("MMS %s P=%d: N_dof=%d, error=%.3e", mesh.name, P, n_dof, error)
    frame = pd.DataFrame(rows)

    flagged: List[str] = []
    p_decay: Dict[str, float] = {}
    for name, group in frame.groupby("mesh", sort=False):
        errors = group["error"].to_numpy()
        keep = _pre_floor(errors)
        rising = np.flatnonzero(np.diff(errors[keep]) > 0)
        if rising.size:
            msg = f"{name}: error rises from P={group['P'].iloc[rising[0]]} before the round-off floor"
            logger.warning(msg)
            flagged.append(msg)
        fit = keep & (group["P"].to_numpy() >= P_DECAY_MIN_ORDER)
        if fit.sum() >= 2:
            p_decay[name] = fit_geometric_decay(group["P"].to_numpy()[fit], errors[fit])

    h_rates: Dict[int, float] = {}
    if len(meshes) >= 2:
        for P, group in frame.groupby("P"):
            good = group["error"] > ROUND_OFF_FLOOR
            if good.sum() >= 2:
                h_rates[int(P)] = fit_rate(group["h_max"][good], group["error"][good])
    return ConvergenceReport(cases=frame, h_rates=h_rates, p_decay=p_decay, solution=solution.name,
                             flagged=flagged)


# --- Stability ---

@dataclass
class StabilityReport:
    eigenvalues: np.ndarray
    max_real: float
    max_abs: float
    tolerance: float
    n_fs: int
    n_zero: int = 0

    @property
    def stable(self) -> bool:
        return self.max_real <= self.tolerance * self.max_abs

    def frequencies(self, count: Optional[int] = None) -> np.ndarray:
        """Distinct positive imaginary parts in ascending order."""
        im = np.sort(self.eigenvalues.imag[self.eigenvalues.imag > 1e-6 * self.max_abs])
        return im[:count] if count else im

    def to_frame(self) -> pd.DataFrame:
        order = np.lexsort((self.eigenvalues.real, np.abs(self.eigenvalues.imag)))
        ev = self.eigenvalues[order]
        return pd.DataFrame({"re [1/s]": ev.real, "im [1/s]": ev.imag})


def free_surface_jacobian(operator: FreeSurfaceOperator) -> np.ndarray:
    """
    The linear map (eta, phi_fs) -> (d eta/dt, d phi_fs/dt) with the body at
    rest, evaluated on every unit basis state.
    """
    m = operator.n_fs
    unit = np.eye(m)
    zero = np.zeros((m, m))
    eta_from_eta, phi_from_eta, _ = operator.rates(unit, zero)
    eta_from_phi, phi_from_phi, _ = operator.rates(zero, unit)
    return np.block([[eta_from_eta, eta_from_phi], [phi_from_eta, phi_from_phi]])


def stability_eigenvalues(system: DiscreteLaplacian, mode: int = 3, dtn_recovery: str = "weak",
                          max_dim: int = MAX_EIGEN_DIM,
                          tolerance: float = STABILITY_TOLERANCE) -> StabilityReport:
    """
    Dense spectrum of the free-surface Jacobian. The defective zero pair of a
    domain without Dirichlet data splits into +-sqrt(round-off) and is counted
    in n_zero instead of max_real.
    """
    m = len(system.dofmap.fs_dofs)
    if 2 * m > max_dim:
        raise EigenBudgetError(f"operator dimension {2 * m} exceeds the dense eigenvalue budget {max_dim}; "
                               "use a coarser mesh or lower order")
    operator = FreeSurfaceOperator(system, mode, dtn_recovery)
    eigenvalues = scipy.linalg.eigvals(free_surface_jacobian(operator))
    max_abs = float(np.abs(eigenvalues).max())
    zero = np.abs(eigenvalues) < ZERO_MODE_FRACTION * max_abs
    rest = eigenvalues[~zero]
    max_real = float(rest.real.max()) if rest.size else 0.0
    report = StabilityReport(eigenvalues=eigenvalues, max_real=max_real, max_abs=max_abs, tolerance=tolerance,
                             n_fs=m, n_zero=int(zero.sum()))
    logger.info("Stability %s P=%d: 2m=%d, max Re=%.3e, max |lambda|=%.3e, %d zero modes (%s)", system.mesh.name,
                system.ref.order, 2 * m, report.max_real, report.max_abs, report.n_zero,
                "stable" if report.stable else "unstable")
    return report


# --- Scaling ---

@dataclass
class ScalingReport:
    cases: pd.DataFrame
    exponent: float


def _median_solve_seconds(fact: linsolve.Factorization, rhs: np.ndarray, repeats: int,
                          min_batch_seconds: float) -> Tuple[float, int]:
    start = time.perf_counter()
    fact.lu.solve(rhs[fact.q])
    single = time.perf_counter() - start
    batch = max(1, int(np.ceil(min_batch_seconds / max(single, 1e-9))))
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(batch):
            fact.lu.solve(rhs[fact.q])
        samples.append((time.perf_counter() - start) / batch)
    return float(np.median(samples)), batch


def scaling_benchmark(meshes: Sequence[Mesh], orders: Sequence[int], repeats: int = 10,
                      min_batch_seconds: float = 2e-3, seed: int = 0) -> ScalingReport:
    """
    Median per-solve time of the factored free-surface Dirichlet system for
    every (mesh, P). Solves faster than min_batch_seconds are timed in batches.
    """
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    rng = np.random.default_rng(seed)
    rows = []
    for mesh in meshes:
        for P in orders:
            system = build_laplacian(mesh, build_reference_element(int(P)))
            dirichlet = impose_dirichlet(system, system.dofmap.fs_dofs, 0.0)
            fact = dirichlet.factorization
            stats = linsolve.band_stats(dirichlet.A, fact.q)
            rhs = rng.standard_normal(system.n_dof)
            seconds, batch = _median_solve_seconds(fact, rhs, repeats, min_batch_seconds)
            rows.append({"mesh": mesh.name, "P": int(P), "n_dof": system.n_dof, "nnz": stats.nnz,
                         "bandwidth": stats.bandwidth_after, "fill_in": fact.fill_in,
                         "solve_seconds": seconds, "batch": batch})
            logger.info("Scaling %s P=%d: N_dof=%d, %.3e s per solve", mesh.name, P, system.n_dof, seconds)
    frame = pd.DataFrame(rows).sort_values("n_dof", kind="stable").reset_index(drop=True)
    exponent = fit_exponent(frame["n_dof"], frame["solve_seconds"]) if len(frame) >= 2 else float("nan")
    logger.info("Solve time exponent p = %.4f", exponent)
    return ScalingReport(cases=frame, exponent=exponent)


# --- Spectra and spurious oscillations ---

def spectrum(series: np.ndarray, dt: float, pad_factor: float = DEFAULT_PAD_FACTOR) -> Tuple[np.ndarray, np.ndarray]:
    """(omega, |X(omega)|) of the zero-padded series."""
    series = np.asarray(series, dtype=float)
    n_pad = next_pow2(int(np.ceil(pad_factor * len(series))))
    amplitude = np.abs(np.fft.rfft(series, n_pad)) * dt
    return 2 * np.pi * np.fft.rfftfreq(n_pad, dt), amplitude


@dataclass(frozen=True)
class SpuriousPeak:
    present: bool
    omega: float
    amplitude: float
    energy: float


def detect_spurious_peak(omega: np.ndarray, amplitude: np.ndarray, omega_threshold: float,
                         relative_level: float = SPURIOUS_RELATIVE_LEVEL) -> SpuriousPeak:
    """
    Largest spectral magnitude above omega_threshold, refined by a parabola
    through the peak bin and its neighbours. The peak counts as present when it
    is an interior local maximum above relative_level times the spectrum maximum.
    """
    band = np.flatnonzero(omega > omega_threshold)
    if band.size < 3:
        return SpuriousPeak(False, float("nan"), 0.0, 0.0)
    d_omega = omega[1] - omega[0]
    energy = float(np.sum(amplitude[band] ** 2) * d_omega)
    i = band[np.argmax(amplitude[band])]
    if i == band[0] or i == len(omega) - 1:
        return SpuriousPeak(False, float(omega[i]), float(amplitude[i]), energy)
    y0, y1, y2 = amplitude[i - 1], amplitude[i], amplitude[i + 1]
    denom = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
    peak_omega = float(omega[i] + shift * d_omega)
    peak_amp = float(y1 - 0.25 * (y0 - y2) * shift)
    present = peak_amp > relative_level * float(amplitude.max())
    return SpuriousPeak(present, peak_omega, peak_amp, energy)


@dataclass
class StudyCase:
    label: str
    value: float
    stable: bool
    peak: Optional[SpuriousPeak] = None
    omega: np.ndarray = field(default_factory=lambda: np.empty(0))
    amplitude: np.ndarray = field(default_factory=lambda: np.empty(0))
    record: Optional[RadiationRecord] = None
    message: str = ""

    def nondimensional_peak(self, radius: float) -> float:
        if self.peak is None or not self.peak.present:
            return float("nan")
        return self.peak.omega * np.sqrt(radius / GRAVITY)


def _run_case(label: str, value: float, system: DiscreteLaplacian, settings: RadiationSettings,
              omega_threshold: float, pad_factor: float) -> StudyCase:
    try:
        record = run_radiation(system, settings)
    except (InstabilityError, DivergenceError) as exc:
        logger.error("%s=%g aborted: %s", label, value, exc)
        return StudyCase(label=label, value=value, stable=False, message=str(exc))
    omega, amplitude = spectrum(record.eta_monitors[:, 0], record.dt, pad_factor)
    peak = detect_spurious_peak(omega, amplitude, omega_threshold)
    logger.info("%s=%g: spurious peak %s at omega=%.4g rad/s", label, value,
                "present" if peak.present else "absent", peak.omega)
    return StudyCase(label=label, value=value, stable=True, peak=peak, omega=omega,
                     amplitude=amplitude, record=record)


def spurious_threshold(system: DiscreteLaplacian, mode: int) -> float:
    """1.2 times the design cutoff of the alpha = 5 impulse on this mesh."""
    baseline = design_pseudo_impulse(float(fs_spacing(system).max()), system.mesh.depth, mode,
                                     alpha=SPURIOUS_BASELINE_ALPHA)
    return SPURIOUS_THRESHOLD_FACTOR * baseline.omega_r


def _require_monitor(settings: RadiationSettings) -> None:
    if not settings.monitors:
        raise ParameterError("spurious-oscillation studies need a free-surface monitor point")


def spurious_alpha_study(system: DiscreteLaplacian, settings: RadiationSettings, alphas: Sequence[float],
                         pad_factor: float = DEFAULT_PAD_FACTOR, n_jobs: int = 1) -> List[StudyCase]:
    """The same mesh excited by impulses of varying alpha, all peaking at a common t0."""
    _require_monitor(settings)
    dx_max, h = float(fs_spacing(system).max()), system.mesh.depth
    t0 = settings.t0 or max(design_pseudo_impulse(dx_max, h, settings.mode, alpha=a, r=settings.r,
                                                  epsilon=settings.epsilon).t0 for a in alphas)
    threshold = spurious_threshold(system, settings.mode)
    logger.info("Alpha study over %s with common t0=%.4g s", list(alphas), t0)
    return Parallel(n_jobs=n_jobs)(
        delayed(_run_case)("alpha", float(a), system, replace(settings, alpha=float(a), t0=t0, s=None),
                           threshold, pad_factor)
        for a in alphas)


def spurious_beta_study(systems: Dict[int, DiscreteLaplacian], settings: RadiationSettings, s: float = 1.0,
                        pad_factor: float = DEFAULT_PAD_FACTOR, n_jobs: int = 1) -> List[StudyCase]:
    """One run per body resolution beta with the impulse width s held fixed."""
    _require_monitor(settings)
    return Parallel(n_jobs=n_jobs)(
        delayed(_run_case)("beta", float(beta), system, replace(settings, s=s),
                           spurious_threshold(system, settings.mode), pad_factor)
        for beta, system in sorted(systems.items()))


def study_frame(cases: Sequence[StudyCase], radius: Optional[float] = None) -> pd.DataFrame:
    rows = []
    for c in cases:
        row = {c.label: c.value, "stable": int(c.stable),
               "peak_present": int(bool(c.peak and c.peak.present)),
               "peak_omega [rad/s]": c.peak.omega if c.peak else float("nan"),
               "peak_amplitude [m s]": c.peak.amplitude if c.peak else float("nan"),
               "peak_energy [m^2 s]": c.peak.energy if c.peak else float("nan")}
        if radius is not None:
            row["peak_omega_nd [-]"] = c.nondimensional_peak(radius)
        rows.append(row)
    return pd.DataFrame(rows)


def coefficient_agreement(first: HydroCoefficients, second: HydroCoefficients) -> Dict[str, float]:
    """
    RMS difference of a and b on the common resolved band, relative to the
    peak magnitude of the first curve; second is interpolated onto first's grid.
    """
    top = min(first.omega_r or np.inf, second.omega_r or np.inf)
    top = min(top, first.omega.max(), second.omega.max())
    bottom = max(first.omega.min(), second.omega.min())
    mask = (first.omega >= bottom) & (first.omega <= top)
    if first.noisy is not None:
        mask &= ~first.noisy
    if mask.sum() < 2:
        raise ParameterError("coefficient curves share fewer than two resolved frequencies")
    omega = first.omega[mask]
    out = {}
    for name in ("a", "b"):
        ref_values = getattr(first, name)[mask]
        other = np.interp(omega, second.omega, getattr(second, name))
        out[name] = float(np.sqrt(np.mean((ref_values - other) ** 2)) / np.max(np.abs(ref_values)))
    return out
