# radiation.py
"""
Pseudo-impulsive radiation run: method-of-lines integration of the linear
free-surface conditions

    d eta / dt = d phi / dz,    d phi / dt = -g eta      on z = 0,

where every right-hand side evaluation solves the Laplace problem with the
free-surface potential as Dirichlet data and the body velocity as Neumann
data. Outgoing waves are absorbed by a relaxation zone at the far end of the
free surface and/or a Sommerfeld flux on the vertical far-field boundary.
"""
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from assembly import (DiscreteLaplacian, DirichletSystem, body_normal_load, boundary_mass,
                      face_mass_operator, impose_dirichlet)
from errors import DivergenceError, InstabilityError, ParameterError
from geometry import locate_points, point_operators
from hydro import RadiationRecord, body_force, check_force_decay
from impulse import (GRAVITY, MODES, PseudoImpulse, design_pseudo_impulse, dispersion_frequency, impulse_signals,
                     wave_number)
from mesh import BoundaryTag
from refelem import vandermonde_1d

logger = logging.getLogger(__name__)

DTN_RECOVERY = ("average", "weak")
T_END_FACTOR = 3.0
# largest share of the free surface the sponge may cover, measured from the far end
MAX_ZONE_FRACTION = 0.75


# --- Free-surface grid ---

def fs_spacing(system: DiscreteLaplacian) -> np.ndarray:
    """Distances between consecutive free-surface nodes, intra-element spacing included."""
    x = system.dofmap.coords[system.dofmap.fs_dofs, 0]
    # a full domain's free surface is split by the body around x = 0
    across_body = (x[:-1] < 0) & (x[1:] > 0)
    return np.diff(x)[~across_body]


def cfl_timestep(system: DiscreteLaplacian, courant: float, h: float) -> float:
    """dt = Cr dx_min / sqrt(g h)."""
    if courant <= 0:
        raise ParameterError(f"Courant number must be positive, got {courant}")
    if not 0.5 <= courant <= 1.0:
        logger.warning("Courant number %.3g lies outside [0.5, 1]", courant)
    dx_min = float(fs_spacing(system).min())
    return courant * dx_min / np.sqrt(GRAVITY * h)


def standing_wave_frequency(n: int, L: float, h: float) -> float:
    """Frequency of the n-th standing wave in a closed basin of length L."""
    return float(dispersion_frequency(n * np.pi / L, h))


def interpolation_operator(system: DiscreteLaplacian, x: Sequence[float]) -> np.ndarray:
    """
    Dense (n_points, n_fs) matrix evaluating free-surface trace values, ordered
    as dofmap.fs_dofs, at the positions x by face-local polynomial interpolation.
    """
    mesh, ref, dofmap = system.mesh, system.ref, system.dofmap
    rows = mesh.faces_with_tag(BoundaryTag.FreeSurface)
    face_dofs = dofmap.face_dofs[rows]
    x_face = dofmap.coords[face_dofs, 0]                     # (n_faces, P+1)
    left, right = x_face.min(axis=1), x_face.max(axis=1)
    position = np.full(dofmap.n_dof, -1)
    position[dofmap.fs_dofs] = np.arange(len(dofmap.fs_dofs))
    v1d_inv = np.linalg.inv(vandermonde_1d(ref.order, ref.face_params))

    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((len(x), len(dofmap.fs_dofs)))
    for n, xi in enumerate(x):
        hits = np.flatnonzero((left - 1e-12 <= xi) & (xi <= right + 1e-12))
        if hits.size == 0:
            raise ParameterError(f"x = {xi:.6g} is not on the free surface")
        f = hits[0]
        # straight face: the edge parameter is affine in x
        t = -1 + 2 * (xi - x_face[f, 0]) / (x_face[f, -1] - x_face[f, 0])
        weights = (vandermonde_1d(ref.order, np.array([t])) @ v1d_inv)[0]
        np.add.at(out[n], position[face_dofs[f]], weights)
    return out


def interp_fs(system: DiscreteLaplacian, values: np.ndarray, x: Sequence[float]) -> np.ndarray:
    return interpolation_operator(system, x) @ values


# --- Operator ---

class FreeSurfaceOperator:
    """
    Laplace solve with the free-surface potential imposed, and recovery of
    w = d phi/dz on the free-surface nodes. One factorization serves every solve.

    dtn_recovery "weak" (the default) recovers w from the Galerkin residual,
    M_fs w = (A phi - b) on the free-surface rows, and conserves the discrete
    energy. "average" differentiates the solution element-locally and averages
    at shared nodes; its operator is non-normal and can carry growing modes.
    """

    def __init__(self, system: DiscreteLaplacian, mode: int, dtn_recovery: str = "weak",
                 sommerfeld: bool = False, sommerfeld_dx: Optional[float] = None):
        if mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {mode}")
        if dtn_recovery not in DTN_RECOVERY:
            raise ParameterError(f"dtn_recovery must be one of {DTN_RECOVERY}, got '{dtn_recovery}'")
        self.system = system
        self.mode = mode
        self.dtn_recovery = dtn_recovery
        if dtn_recovery == "average":
            logger.warning("Nodal-average DtN recovery is not energy-conserving; long runs may grow")
        dofmap = system.dofmap
        self.fs_dofs = dofmap.fs_dofs
        self.fs_x = dofmap.coords[self.fs_dofs, 0]
        self.body_dofs = dofmap.body_dofs

        nodes = self.fs_dofs
        sym = dofmap.dofs_with_tag(BoundaryTag.Symmetry)
        if mode in (1, 5) and sym.size:
            nodes = np.union1d(nodes, sym)
        self.dirichlet: DirichletSystem = impose_dirichlet(system, nodes, 0.0)
        # free-surface values go to these slots of the sorted Dirichlet set
        self._fs_slots = np.searchsorted(self.dirichlet.nodes, self.fs_dofs)
        self.body_load = body_normal_load(system, mode) if self.body_dofs.size else np.zeros(system.n_dof)

        self.fs_mass = boundary_mass(system, BoundaryTag.FreeSurface, self.fs_dofs).tocsc()
        self._fs_mass_lu = splu(self.fs_mass) if dtn_recovery == "weak" else None
        self._fs_rows = system.A.tocsr()[self.fs_dofs]
        self.Gz = self._vertical_derivative_matrix() if dtn_recovery == "average" else None

        self.sommerfeld = False
        self.sommerfeld_dofs = np.empty(0, dtype=int)
        if sommerfeld:
            self._setup_sommerfeld(sommerfeld_dx)

    def _vertical_derivative_matrix(self) -> sp.csr_matrix:
        sys, ref, f = self.system, self.system.ref, self.system.factors
        dofs = sys.dofmap.element_dofs
        position = np.full(sys.n_dof, -1)
        position[self.fs_dofs] = np.arange(len(self.fs_dofs))
        elems, local = np.nonzero(position[dofs] >= 0)
        rows = position[dofs[elems, local]]
        # z-derivative rows of every element touching a free-surface node
        values = f.rz[elems, local][:, None] * ref.Dr[local] + f.sz[elems, local][:, None] * ref.Ds[local]
        G = sp.coo_matrix((values.ravel(), (np.repeat(rows, ref.n_ep), dofs[elems].ravel())),
                          shape=(len(self.fs_dofs), sys.n_dof)).tocsr()
        counts = np.bincount(rows, minlength=len(self.fs_dofs))
        return (sp.diags(1.0 / counts) @ G).tocsr()

    def _setup_sommerfeld(self, dx: Optional[float]) -> None:
        sys, mesh = self.system, self.system.mesh
        if dx is None or dx <= 0:
            raise ParameterError("Sommerfeld sampling needs a positive upstream distance")
        rows = mesh.faces_with_tag(BoundaryTag.FarField)
        tol = 1e-9 * max(mesh.length, 1.0)
        face_x = sys.factors.face_x[rows]
        # walls at x = L, and at x = -L when the mesh covers both sides of the body
        walls = [(mesh.length, 1.0)]
        if abs(mesh.vertices[:, 0].min() + mesh.length) < tol:
            walls.append((-mesh.length, -1.0))
        on_wall = np.zeros(len(rows), dtype=bool)
        for x_wall, _ in walls:
            on_wall |= np.all(np.abs(face_x - x_wall) < tol, axis=1)
        if not on_wall.any():
            logger.warning("No vertical far-field boundary at x = L; Sommerfeld flux disabled")
            return
        if not on_wall.all():
            logger.warning("%d far-field faces are not at x = L and get no Sommerfeld flux",
                           int((~on_wall).sum()))
        rows = rows[on_wall]
        dofs = np.unique(sys.dofmap.face_dofs[rows])
        x_dofs = sys.dofmap.coords[dofs, 0]
        side = np.where(x_dofs > 0, 1.0, -1.0)
        points = np.column_stack([x_dofs - side * dx, sys.dofmap.coords[dofs, 1]])
        elements, coords = locate_points(mesh, sys.factors, sys.ref, points)
        _, ddx, _ = point_operators(sys.ref, sys.factors, elements, coords)
        # V_s is the outward normal velocity: u on the right wall, -u on the left
        self.sampler = sp.csr_matrix(
            ((side[:, None] * ddx).ravel(), (np.repeat(np.arange(len(dofs)), sys.ref.n_ep),
                                             sys.dofmap.element_dofs[elements].ravel())),
            shape=(len(dofs), sys.n_dof))
        self.sommerfeld_load = face_mass_operator(sys, rows).tocsc()[:, dofs].tocsr()
        self.sommerfeld_dofs = dofs
        self.sommerfeld_dx = dx
        self.sommerfeld = True
        logger.info("Sommerfeld flux on %d far-field nodes on %d wall(s) sampled %.4g m upstream",
                    len(dofs), len(walls), dx)

    @property
    def n_fs(self) -> int:
        return len(self.fs_dofs)

    def load(self, xdot: float = 0.0, v_s: Optional[np.ndarray] = None) -> np.ndarray:
        """Neumann load: body velocity times the body normal load, plus the Sommerfeld flux."""
        b = float(xdot) * self.body_load
        if self.sommerfeld and v_s is not None:
            b = b + self.sommerfeld_load @ v_s
        return b

    def solve_potential(self, phi_fs: np.ndarray, xdot: float = 0.0,
                        v_s: Optional[np.ndarray] = None) -> np.ndarray:
        """Volume potential; phi_fs may hold several columns sharing one load."""
        phi_fs = np.asarray(phi_fs, dtype=float)
        values = np.zeros((len(self.dirichlet.nodes),) + phi_fs.shape[1:])
        values[self._fs_slots] = phi_fs
        return self.dirichlet.solve(values, self.load(xdot, v_s))

    def vertical_velocity(self, phi: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
        if self.dtn_recovery == "average":
            return self.Gz @ phi
        residual = self._fs_rows @ phi
        if b is not None:
            b_fs = b[self.fs_dofs]
            residual = residual - (b_fs if residual.ndim == 1 else b_fs[:, None])
        return self._fs_mass_lu.solve(np.ascontiguousarray(residual))

    def sample_velocity(self, phi: np.ndarray) -> Optional[np.ndarray]:
        """Horizontal velocity on the sampling line x = L - dx."""
        return self.sampler @ phi if self.sommerfeld else None

    def rates(self, eta: np.ndarray, phi_fs: np.ndarray, xdot: float = 0.0,
              v_s: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(d eta/dt, d phi_fs/dt, volume potential); eta and phi_fs may hold columns."""
        phi = self.solve_potential(phi_fs, xdot, v_s)
        b = self.load(xdot, v_s) if self.dtn_recovery == "weak" else None
        return self.vertical_velocity(phi, b), -GRAVITY * np.asarray(eta, dtype=float), phi


# --- State and stepping ---

@dataclass
class SimulationState:
    t: float
    eta: np.ndarray
    phi_fs: np.ndarray

    @classmethod
    def at_rest(cls, n_fs: int) -> "SimulationState":
        return cls(t=0.0, eta=np.zeros(n_fs), phi_fs=np.zeros(n_fs))


RatesFunction = Callable[[float, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def erk4_step(state: SimulationState, rates: RatesFunction, dt: float, step: int = 0,
              first_stage: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> SimulationState:
    """Classical four-stage Runge-Kutta update; first_stage reuses an evaluation at state.t."""
    t, eta, phi = state.t, state.eta, state.phi_fs
    k1 = first_stage if first_stage is not None else rates(t, eta, phi)
    k2 = rates(t + dt / 2, eta + dt / 2 * k1[0], phi + dt / 2 * k1[1])
    k3 = rates(t + dt / 2, eta + dt / 2 * k2[0], phi + dt / 2 * k2[1])
    k4 = rates(t + dt, eta + dt * k3[0], phi + dt * k3[1])
    eta_new = eta + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    phi_new = phi + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.all(np.isfinite(eta_new)) and np.all(np.isfinite(phi_new))):
        raise DivergenceError("non-finite free-surface state", step=step)
    return SimulationState(t=t + dt, eta=eta_new, phi_fs=phi_new)


# --- Absorption ---

@dataclass(frozen=True)
class RelaxationZone:
    """
    Sponge over [start, end] at the far end of the free surface. Each step
    multiplies eta and phi by exp(-strength c(x) dt), with the ramp
    c = xi^3 on the normalized zone coordinate. A mirrored zone acts on |x|,
    covering both ends of a full-domain free surface.
    """
    start: float
    end: float
    strength: float = 1.0
    mirrored: bool = False

    @property
    def length(self) -> float:
        return self.end - self.start

    def ramp(self, x: np.ndarray) -> np.ndarray:
        """c = xi^3 on the normalized zone coordinate, 0 before the zone."""
        x = np.asarray(x, dtype=float)
        if self.mirrored:
            x = np.abs(x)
        xi = np.clip((x - self.start) / self.length, 0.0, 1.0)
        return xi ** 3

    def factor(self, x: np.ndarray, dt: float) -> np.ndarray:
        return np.exp(-self.strength * dt * self.ramp(x))


def relaxation_defaults(impulse: PseudoImpulse, h: float) -> Tuple[float, float]:
    """
    (length, strength) of the sponge: at least one wavelength at the peak of the
    body-velocity spectrum, and a damping rate equal to that peak frequency.
    """
    omega_peak = impulse.omega_peak
    wavelength = 2 * np.pi / wave_number(omega_peak, h)
    return max(2 * impulse.L_r, 2 * h, wavelength), omega_peak


def make_relaxation_zone(fs_x: np.ndarray, length: float, strength: float = 1.0) -> RelaxationZone:
    if length <= 0:
        raise ParameterError(f"relaxation zone length must be positive, got {length}")
    if strength <= 0:
        raise ParameterError(f"relaxation strength must be positive, got {strength}")
    fs_x = np.asarray(fs_x, dtype=float)
    mirrored = bool(fs_x.min() < 0 < fs_x.max())
    if mirrored:
        fs_x = np.abs(fs_x)
    x_start, x_end = float(np.min(fs_x)), float(np.max(fs_x))
    available = MAX_ZONE_FRACTION * (x_end - x_start)
    if length > available:
        logger.warning("Relaxation zone of %.4g m clamped to %.0f%% of the free surface (%.4g m)",
                       length, 100 * MAX_ZONE_FRACTION, available)
        length = available
    return RelaxationZone(start=x_end - length, end=x_end, strength=float(strength), mirrored=mirrored)


def apply_relaxation_zone(state: SimulationState, fs_x: np.ndarray, zone: RelaxationZone,
                          dt: float) -> SimulationState:
    damping = zone.factor(fs_x, dt)
    return SimulationState(t=state.t, eta=state.eta * damping, phi_fs=state.phi_fs * damping)


@dataclass
class SommerfeldHistory:
    """Horizontal velocity sampled upstream of the far field at the previous step."""
    values: Optional[np.ndarray] = None
    time: Optional[float] = None

    def push(self, values: Optional[np.ndarray], t: float) -> None:
        self.values, self.time = values, t


def sommerfeld_flux(history: SommerfeldHistory, n_nodes: int) -> np.ndarray:
    """V_s(z, t_i) = u(L - dx, z, t_i - dt); zero before any sample exists."""
    if history.values is None:
        return np.zeros(n_nodes)
    return history.values


def sommerfeld_distance(dt: float, h: float) -> float:
    return dt * np.sqrt(GRAVITY * h)


def free_surface_energy(operator: FreeSurfaceOperator, eta: np.ndarray, phi_fs: np.ndarray) -> float:
    """E = 1/2 int (g eta^2 + phi w) dx over the free surface, body at rest."""
    phi = operator.solve_potential(phi_fs)
    w = operator.vertical_velocity(phi, operator.load() if operator.dtn_recovery == "weak" else None)
    M = operator.fs_mass
    return 0.5 * float(GRAVITY * eta @ (M @ eta) + phi_fs @ (M @ w))


# --- Stepper ---

@dataclass
class Evaluation:
    """Rates and volume potential at the start of a step, with the Sommerfeld flux they used."""
    eta_dot: np.ndarray
    phi_dot: np.ndarray
    phi: np.ndarray
    v_s: Optional[np.ndarray]


class FreeSurfaceStepper:
    """
    Advances (eta, phi_fs) by ERK4 steps of fixed dt. The Sommerfeld flux is
    frozen over a step at the value sampled one step earlier, and the sponge
    is applied after each full step.
    """

    def __init__(self, operator: FreeSurfaceOperator, dt: float, zone: Optional[RelaxationZone] = None,
                 velocity: Optional[Callable[[float], float]] = None):
        self.operator = operator
        self.dt = dt
        self.zone = zone
        self.velocity = velocity or (lambda t: 0.0)
        self.history = SommerfeldHistory()

    def evaluate(self, state: SimulationState) -> Evaluation:
        op = self.operator
        v_s = sommerfeld_flux(self.history, len(op.sommerfeld_dofs)) if op.sommerfeld else None
        eta_dot, phi_dot, phi = op.rates(state.eta, state.phi_fs, self.velocity(state.t), v_s)
        return Evaluation(eta_dot, phi_dot, phi, v_s)

    def advance(self, state: SimulationState, evaluation: Optional[Evaluation] = None,
                step: int = 0) -> SimulationState:
        op = self.operator
        evaluation = evaluation or self.evaluate(state)
        self.history.push(op.sample_velocity(evaluation.phi), state.t)
        v_s = evaluation.v_s

        def rates(t, eta, phi_fs):
            eta_rate, phi_rate, _ = op.rates(eta, phi_fs, self.velocity(t), v_s)
            return eta_rate, phi_rate

        state = erk4_step(state, rates, self.dt, step=step, first_stage=(evaluation.eta_dot, evaluation.phi_dot))
        if self.zone is not None:
            state = apply_relaxation_zone(state, op.fs_x, self.zone, self.dt)
        return state


class ForceDecayMonitor:
    """Running |dq/dt| of the body force potential q = phi_body . load against its peak."""

    def __init__(self, load: np.ndarray, dt: float):
        self.load = load
        self.dt = dt
        self._q: deque = deque(maxlen=3)
        self.peak = 0.0

    def push(self, phi_body: np.ndarray) -> None:
        self._q.append(float(phi_body @ self.load))
        if len(self._q) >= 3:
            self.peak = max(self.peak, abs(self._q[-1] - self._q[-3]) / (2 * self.dt))

    def ratio(self) -> float:
        if len(self._q) < 3 or self.peak == 0:
            return 0.0
        q2, q1, q0 = self._q
        return abs(3 * q0 - 4 * q1 + q2) / (2 * self.dt) / self.peak


# --- Run ---

@dataclass
class RadiationSettings:
    courant: float = 0.5
    mode: int = 3
    alpha: float = 3.0
    r: float = 1e-4
    epsilon: float = 1e-8
    s: Optional[float] = None
    t0: Optional[float] = None
    amplitude: float = 1.0
    t_end: Optional[float] = None
    extend_to_decay: bool = True
    max_t_end_factor: float = 10.0
    relaxation: bool = True
    relaxation_length: Optional[float] = None
    relaxation_strength: Optional[float] = None
    sommerfeld: bool = True
    dtn_recovery: str = "weak"
    monitors: List[float] = field(default_factory=list)
    progress_every: int = 500
    instability_factor: float = 1e3
    decay_tolerance: float = 1e-3


def run_radiation(system: DiscreteLaplacian, settings: RadiationSettings) -> RadiationRecord:
    """
    Time-steps the free surface from rest to t_end >= 3 t0 under the designed
    pseudo-impulse, recording body potentials and monitor elevations at every
    step. With extend_to_decay the run continues past t_end until the force
    has decayed below decay_tolerance of its peak, up to max_t_end_factor t0.
    """
    mesh = system.mesh
    h = mesh.depth
    clock = time.perf_counter()
    impulse = design_pseudo_impulse(float(fs_spacing(system).max()), h, settings.mode,
                                    alpha=settings.alpha, r=settings.r, epsilon=settings.epsilon,
                                    s=settings.s, t0=settings.t0, amplitude=settings.amplitude)
    dt = cfl_timestep(system, settings.courant, h)

    t_min = T_END_FACTOR * impulse.t0
    t_end = t_min if settings.t_end is None else settings.t_end
    if t_end < t_min:
        logger.warning("t_end=%.4g s raised to 3 t0 = %.4g s", t_end, t_min)
        t_end = t_min
    n_steps = int(np.ceil(t_end / dt - 1e-9))

    operator = FreeSurfaceOperator(system, settings.mode, settings.dtn_recovery,
                                   sommerfeld=settings.sommerfeld, sommerfeld_dx=sommerfeld_distance(dt, h))
    zone = None
    if settings.relaxation:
        length, strength = relaxation_defaults(impulse, h)
        zone = make_relaxation_zone(operator.fs_x, settings.relaxation_length or length,
                                    settings.relaxation_strength or strength)
    monitor_x = np.asarray(settings.monitors, dtype=float)
    monitor_op = interpolation_operator(system, monitor_x) if monitor_x.size else np.zeros((0, operator.n_fs))

    n_max = n_steps
    monitor = None
    if settings.extend_to_decay and operator.body_dofs.size:
        n_max = max(n_steps, int(np.ceil(settings.max_t_end_factor * impulse.t0 / dt - 1e-9)))
        monitor = ForceDecayMonitor(body_normal_load(system, settings.mode)[operator.body_dofs], dt)
    logger.info("Radiation run k=%d: dt=%.4g s, %d steps to t_end=%.4g s (at most %d), N_dof=%d, FS nodes=%d",
                settings.mode, dt, n_steps, n_steps * dt, n_max, system.n_dof, operator.n_fs)

    stepper = FreeSurfaceStepper(operator, dt, zone, velocity=lambda t: float(impulse.velocity(t)))
    state = SimulationState.at_rest(operator.n_fs)
    limit = settings.instability_factor * abs(settings.amplitude)
    phi_body: List[np.ndarray] = []
    eta_monitors: List[np.ndarray] = []

    i = 0
    while True:
        evaluation = stepper.evaluate(state)
        phi_body.append(evaluation.phi[operator.body_dofs])
        eta_monitors.append(monitor_op @ state.eta)
        if monitor is not None:
            monitor.push(phi_body[-1])
        if i >= n_steps:
            # keep a margin below the tolerance for the one-sided derivative at the end
            if monitor is None or i >= n_max or monitor.ratio() < 0.5 * settings.decay_tolerance:
                break
            if i == n_steps:
                logger.info("Force not yet decayed at t=%.4g s; continuing up to %.4g s", i * dt, n_max * dt)

        state = stepper.advance(state, evaluation, step=i + 1)
        i += 1
        state.t = i * dt
        peak = float(np.max(np.abs(state.eta)))
        if peak > limit:
            logger.error("Free surface grew to %.3e (limit %.3e) at step %d; run the stability "
                         "eigenvalue analysis on this mesh and order", peak, limit, i)
            raise InstabilityError(f"free-surface elevation {peak:.3e} exceeds {limit:.3e}", step=i)
        if settings.progress_every and i % settings.progress_every == 0:
            logger.info("step %d, t=%.4g s, max|eta|=%.3e", i, state.t, peak)

    n_steps = i
    times = dt * np.arange(n_steps + 1)
    x, xdot = impulse_signals(impulse, times)
    elapsed = time.perf_counter() - clock
    loads = {j: body_normal_load(system, j)[operator.body_dofs] for j in MODES} if operator.body_dofs.size else {}
    record = RadiationRecord(
        dt=dt, times=times, x=x, xdot=xdot,
        phi_body=np.array(phi_body).reshape(n_steps + 1, len(operator.body_dofs)), body_loads=loads, mode=settings.mode,
        symmetric_half=mesh.faces_with_tag(BoundaryTag.Symmetry).size > 0,
        monitor_x=monitor_x, eta_monitors=np.array(eta_monitors).reshape(n_steps + 1, len(monitor_x)),
        metadata={"t0": impulse.t0, "s": impulse.s, "omega_r": impulse.omega_r, "f_r": impulse.f_r,
                  "L_r": impulse.L_r, "alpha": impulse.alpha, "n_steps": n_steps, "t_end": float(times[-1]),
                  "dt": dt, "n_dof": system.n_dof, "n_fs": operator.n_fs, "depth": h,
                  "relaxation_length": zone.length if zone else 0.0,
                  "relaxation_strength": zone.strength if zone else 0.0,
                  "sommerfeld": int(operator.sommerfeld), "run_seconds": elapsed,
                  "factor_seconds": operator.dirichlet.factorization.factor_seconds,
                  "solve_count": operator.dirichlet.factorization.solve_count,
                  "mean_solve_seconds": operator.dirichlet.factorization.mean_solve_seconds},
    )
    if loads and n_steps > 5:
        check_force_decay(body_force(record, settings.mode), settings.decay_tolerance,
                          label=f"F_{settings.mode}{settings.mode}")
    logger.info("Radiation run finished in %.2f s", elapsed)
    return record
