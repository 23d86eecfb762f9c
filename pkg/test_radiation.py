from types import SimpleNamespace
from typing import Optional

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import erf

from analysis import coefficient_agreement
from errors import DivergenceError, ParameterError
from hydro import (CylinderBody, added_mass_damping, body_force, check_force_decay, cross_coupling,
                   infinite_frequency_added_mass, normalize)
from impulse import GRAVITY, design_pseudo_impulse, dispersion_frequency, wave_number
from mesh_manager import BasinMeshManager, CylinderMeshManager
from radiation import (ForceDecayMonitor, FreeSurfaceOperator, FreeSurfaceStepper, RadiationSettings,
                       SimulationState, apply_relaxation_zone, cfl_timestep, erk4_step, free_surface_energy,
                       interp_fs, interpolation_operator, make_relaxation_zone, relaxation_defaults, run_radiation,
                       sommerfeld_distance, standing_wave_frequency)


# ============================================================
# Helpers
# ============================================================

def _basin(order: int):
    manager = BasinMeshManager(L=2.0, h=1.0, nx=8, nz=4, order=order)
    manager.load_and_prepare()
    return manager.get_system()


def _cosine_dtn_error(system, recovery: str) -> float:
    """Max error of w for phi = cos(pi x) against pi tanh(pi h) cos(pi x)."""
    operator = FreeSurfaceOperator(system, mode=3, dtn_recovery=recovery)
    w, _, _ = operator.rates(np.zeros(operator.n_fs), np.cos(np.pi * operator.fs_x))
    exact = np.pi * np.tanh(np.pi) * np.cos(np.pi * operator.fs_x)
    return float(np.max(np.abs(w - exact)))


def _decay(dt: float) -> float:
    def rates(t, eta, phi):
        return -eta, np.zeros_like(phi)

    state = SimulationState(t=0.0, eta=np.ones(1), phi_fs=np.zeros(1))
    for i in range(int(round(1.0 / dt))):
        state = erk4_step(state, rates, dt, step=i + 1)
    return abs(state.eta[0] - np.exp(-1.0))


def _tank_gauge(L: float, h: float, nx: int, nz: int, eta0, phi0, t_end: float, gauge: float,
                zone_length: Optional[float] = None, strength: float = 1.0, sommerfeld: bool = False) -> np.ndarray:
    """Free evolution of (eta0, phi0) in a basin of length L; elevation at the gauge every step."""
    manager = BasinMeshManager(L=L, h=h, nx=nx, nz=nz, order=4)
    manager.load_and_prepare()
    system = manager.get_system()
    dt = cfl_timestep(system, 0.5, h)
    operator = FreeSurfaceOperator(system, mode=3, sommerfeld=sommerfeld, sommerfeld_dx=sommerfeld_distance(dt, h))
    zone = make_relaxation_zone(operator.fs_x, zone_length, strength) if zone_length else None
    stepper = FreeSurfaceStepper(operator, dt, zone)
    at_gauge = interpolation_operator(system, [gauge])[0]
    state = SimulationState(t=0.0, eta=eta0(operator.fs_x), phi_fs=phi0(operator.fs_x))
    series = [at_gauge @ state.eta]
    for i in range(int(round(t_end / dt))):
        state = stepper.advance(state, step=i + 1)
        series.append(at_gauge @ state.eta)
    return np.array(series)


def _reflection(short: np.ndarray, long: np.ndarray) -> float:
    return float(np.max(np.abs(short - long)) / np.max(np.abs(long)))


# ============================================================
# Dirichlet-to-Neumann operator
# ============================================================

def test_zero_rates_at_rest(cylinder_system):
    operator = FreeSurfaceOperator(cylinder_system, mode=3)
    evaluation = FreeSurfaceStepper(operator, 0.1).evaluate(SimulationState.at_rest(operator.n_fs))
    assert not evaluation.eta_dot.any()
    assert not evaluation.phi_dot.any()
    assert not evaluation.phi.any()


@pytest.mark.parametrize("recovery", ["average", "weak"])
def test_cosine_mode_vertical_velocity(basin_system, recovery):
    assert _cosine_dtn_error(basin_system, recovery) < 0.02 * np.pi * np.tanh(np.pi)


def test_vertical_velocity_converges_with_order():
    assert _cosine_dtn_error(_basin(6), "average") < _cosine_dtn_error(_basin(3), "average") / 5


def test_unknown_recovery(basin_system):
    with pytest.raises(ParameterError):
        FreeSurfaceOperator(basin_system, mode=3, dtn_recovery="spline")
    with pytest.raises(ParameterError):
        FreeSurfaceOperator(basin_system, mode=2)


def test_average_recovery_warns(basin_system, caplog):
    FreeSurfaceOperator(basin_system, mode=3, dtn_recovery="average")
    assert "not energy-conserving" in caplog.text
    assert FreeSurfaceOperator(basin_system, mode=3).dtn_recovery == "weak"


def test_energy_drift_over_one_period(basin_system):
    operator = FreeSurfaceOperator(basin_system, mode=3)
    state = SimulationState(t=0.0, eta=np.zeros(operator.n_fs), phi_fs=np.cos(np.pi * operator.fs_x))
    dt = cfl_timestep(basin_system, 0.5, 1.0)
    stepper = FreeSurfaceStepper(operator, dt)
    start = free_surface_energy(operator, state.eta, state.phi_fs)
    period = 2 * np.pi / standing_wave_frequency(2, 2.0, 1.0)
    for i in range(int(np.ceil(period / dt))):
        state = stepper.advance(state, step=i + 1)
    assert start > 0
    assert abs(free_surface_energy(operator, state.eta, state.phi_fs) - start) < 1e-6 * start
    assert np.abs(state.eta).max() > 0


def test_sommerfeld_nodes_on_right_wall_only(basin_system, caplog):
    operator = FreeSurfaceOperator(basin_system, mode=3, sommerfeld=True, sommerfeld_dx=0.05)
    assert operator.sommerfeld
    assert_allclose(basin_system.dofmap.coords[operator.sommerfeld_dofs, 0], 2.0, atol=1e-12)
    assert len(operator.sommerfeld_dofs) == 4 * basin_system.ref.order + 1
    assert "not at x = L" in caplog.text
    with pytest.raises(ParameterError):
        FreeSurfaceOperator(basin_system, mode=3, sommerfeld=True, sommerfeld_dx=None)


# ============================================================
# Time stepping
# ============================================================

def test_erk4_is_fourth_order():
    ratio = _decay(0.1) / _decay(0.05)
    assert 13 < ratio < 19


def test_erk4_flags_non_finite_state():
    def rates(t, eta, phi):
        return np.full_like(eta, np.inf), phi

    with pytest.raises(DivergenceError) as info:
        erk4_step(SimulationState.at_rest(3), rates, 0.1, step=7)
    assert info.value.step == 7


def test_stepper_matches_plain_erk4(basin_system):
    operator = FreeSurfaceOperator(basin_system, mode=3)
    x = operator.fs_x
    state = SimulationState(t=0.0, eta=0.01 * np.sin(np.pi * x), phi_fs=np.cos(np.pi * x))
    dt = cfl_timestep(basin_system, 0.5, 1.0)

    def rates(t, eta, phi):
        eta_dot, phi_dot, _ = operator.rates(eta, phi)
        return eta_dot, phi_dot

    expected = erk4_step(state, rates, dt)
    stepped = FreeSurfaceStepper(operator, dt).advance(state)
    assert_allclose(stepped.eta, expected.eta, rtol=1e-12, atol=1e-14)
    assert_allclose(stepped.phi_fs, expected.phi_fs, rtol=1e-12, atol=1e-14)

    zone = make_relaxation_zone(x, 0.5, strength=3.0)
    damped = FreeSurfaceStepper(operator, dt, zone).advance(state)
    assert_allclose(damped.eta, expected.eta * zone.factor(x, dt), rtol=1e-12, atol=1e-14)
    assert stepped.t == pytest.approx(dt)


def test_cfl_timestep():
    x = np.linspace(0.0, 1.0, 11)
    system = SimpleNamespace(dofmap=SimpleNamespace(coords=np.column_stack([x, np.zeros_like(x)]),
                                                    fs_dofs=np.arange(11)))
    dt = cfl_timestep(system, 1.0, 6.283)
    assert dt == pytest.approx(0.1 / np.sqrt(GRAVITY * 6.283))
    assert dt == pytest.approx(0.01274, rel=1e-3)
    with pytest.raises(ParameterError):
        cfl_timestep(system, 0.0, 1.0)


def test_standing_wave_frequency():
    k = np.pi / 2.0
    assert standing_wave_frequency(1, 2.0, 1.0) == pytest.approx(np.sqrt(GRAVITY * k * np.tanh(k)))


def test_free_surface_interpolation(basin_system):
    fs_x = basin_system.dofmap.coords[basin_system.dofmap.fs_dofs, 0]
    x = np.array([0.0, 0.3, 1.37, 2.0])
    assert_allclose(interp_fs(basin_system, np.cos(np.pi * fs_x), x), np.cos(np.pi * x), atol=1e-4)
    with pytest.raises(ParameterError):
        interp_fs(basin_system, fs_x, [2.5])


def test_force_decay_monitor():
    monitor = ForceDecayMonitor(np.array([1.0]), dt=0.1)
    assert monitor.ratio() == 0.0
    t = 0.1 * np.arange(200)
    for value in np.exp(-(t - 2.0) ** 2):
        monitor.push(np.array([value]))
    assert monitor.peak == pytest.approx(np.sqrt(2 / np.e), rel=2e-2)
    assert monitor.ratio() < 1e-12


# ============================================================
# Relaxation zone
# ============================================================

def test_relaxation_ramp():
    zone = make_relaxation_zone(np.linspace(0.0, 10.0, 101), 3.0)
    assert (zone.start, zone.end) == (7.0, 10.0)
    assert not zone.mirrored
    assert_allclose(zone.ramp(np.array([6.0, 7.0, 8.5, 10.0])), [0.0, 0.0, 0.125, 1.0])


def test_relaxation_zone_clamped_near_the_body(caplog):
    zone = make_relaxation_zone(np.linspace(0.0, 10.0, 101), 9.0)
    assert zone.length == pytest.approx(7.5)
    assert "clamped" in caplog.text
    with pytest.raises(ParameterError):
        make_relaxation_zone(np.linspace(0.0, 10.0, 101), 0.0)
    with pytest.raises(ParameterError):
        make_relaxation_zone(np.linspace(0.0, 10.0, 101), 2.0, strength=0.0)


def test_relaxation_damps_far_end_per_step():
    x = np.linspace(0.0, 10.0, 11)
    state = SimulationState(t=1.0, eta=np.ones(11), phi_fs=2 * np.ones(11))
    zone = make_relaxation_zone(x, 4.0, strength=2.0)
    damped = apply_relaxation_zone(state, x, zone, dt=0.5)
    assert_allclose(damped.eta[:7], 1.0)
    assert damped.eta[-1] == pytest.approx(np.exp(-1.0))
    assert damped.phi_fs[-1] == pytest.approx(2 * np.exp(-1.0))
    assert np.all(np.diff(damped.eta) <= 0)
    assert damped.t == 1.0
    # two half steps damp exactly as one full step
    twice = apply_relaxation_zone(apply_relaxation_zone(state, x, zone, 0.25), x, zone, 0.25)
    assert_allclose(twice.eta, damped.eta, rtol=1e-14)


def test_mirrored_zone_covers_both_ends():
    x = np.concatenate([-np.linspace(10.0, 1.0, 10), np.linspace(1.0, 10.0, 10)])
    zone = make_relaxation_zone(x, 3.0)
    assert zone.mirrored
    assert (zone.start, zone.end) == (7.0, 10.0)
    assert_allclose(zone.ramp(np.array([-8.5, 8.5, -5.0])), [0.125, 0.125, 0.0])


def test_relaxation_defaults_follow_velocity_spectrum():
    impulse = design_pseudo_impulse(0.1, 1.0, 3)
    length, strength = relaxation_defaults(impulse, 1.0)
    assert strength == pytest.approx(2 * np.pi * impulse.s)
    assert length >= 2 * np.pi / wave_number(strength, 1.0)
    assert length >= 2 * impulse.L_r


@pytest.mark.slow
def test_relaxation_zone_reflects_under_two_percent():
    a, x0, k = 0.01, 3.0, 2 * np.pi
    omega = float(dispersion_frequency(k, 1.0))

    def eta0(x):
        return a * np.exp(-(x - x0) ** 2) * np.cos(k * (x - x0))

    def phi0(x):
        return GRAVITY * a / omega * np.exp(-(x - x0) ** 2) * np.sin(k * (x - x0))

    # two wavelengths of sponge against a tank long enough to keep its wall reflection away
    short = _tank_gauge(8.0, 1.0, 32, 4, eta0, phi0, 18.0, x0, zone_length=2.0, strength=0.5 * omega)
    long = _tank_gauge(20.0, 1.0, 80, 4, eta0, phi0, 18.0, x0)
    assert _reflection(short, long) < 0.02


@pytest.mark.slow
def test_sommerfeld_absorbs_long_waves():
    a, x0, width, h = 0.01, 10.0, 4.0, 0.5
    c = np.sqrt(GRAVITY * h)

    def eta0(x):
        return a * np.exp(-((x - x0) / width) ** 2)

    def phi0(x):
        # right-going shallow-water hump: phi_x = g eta / c
        return GRAVITY / c * a * width * np.sqrt(np.pi) / 2 * (1 + erf((x - x0) / width))

    short = _tank_gauge(24.0, h, 24, 2, eta0, phi0, 16.0, 14.0, sommerfeld=True)
    long = _tank_gauge(40.0, h, 40, 2, eta0, phi0, 16.0, 14.0)
    assert _reflection(short, long) < 0.03


# ============================================================
# Short radiation run
# ============================================================

_SETTINGS = dict(mode=3, monitors=[2.0], progress_every=0, extend_to_decay=False)


@pytest.fixture(scope="module")
def small_cylinder():
    manager = CylinderMeshManager(R=0.5, h=1.0, L=3.0, beta=3, order=2, grading=1.2)
    manager.load_and_prepare()
    return manager.get_system()


@pytest.fixture(scope="module")
def full_cylinder():
    manager = CylinderMeshManager(R=0.5, h=1.0, L=3.0, beta=3, order=2, grading=1.2, full_domain=True)
    manager.load_and_prepare()
    return manager.get_system()


@pytest.fixture(scope="module")
def heave_record(small_cylinder):
    return run_radiation(small_cylinder, RadiationSettings(**_SETTINGS))


@pytest.fixture(scope="module")
def full_heave_record(full_cylinder):
    return run_radiation(full_cylinder, RadiationSettings(**_SETTINGS))


def test_run_records_metadata(heave_record):
    meta = heave_record.metadata
    for key in ("t0", "s", "omega_r", "f_r", "L_r", "alpha", "n_steps", "t_end", "dt", "n_dof", "n_fs", "depth",
                "relaxation_length", "relaxation_strength", "sommerfeld", "run_seconds", "factor_seconds",
                "solve_count", "mean_solve_seconds"):
        assert key in meta
    assert meta["t_end"] >= 3 * meta["t0"]
    assert meta["sommerfeld"] == 1
    assert meta["relaxation_strength"] == pytest.approx(2 * np.pi * meta["s"])
    assert meta["solve_count"] == 4 * meta["n_steps"] + 1
    assert heave_record.phi_body.shape == (meta["n_steps"] + 1, heave_record.phi_body.shape[1])
    assert heave_record.eta_monitors.shape == (meta["n_steps"] + 1, 1)
    assert heave_record.x[0] <= 1e-8 * (1 + 1e-9)


def test_run_forces(heave_record):
    assert set(heave_record.body_loads) == {1, 3, 5}
    assert not body_force(heave_record, 1).any()
    heave = body_force(heave_record, 3)
    assert np.all(np.isfinite(heave))
    assert np.abs(heave).max() > 0


def test_run_is_linear_in_amplitude(small_cylinder, heave_record):
    doubled = run_radiation(small_cylinder, RadiationSettings(amplitude=2.0, **_SETTINGS))
    scale = np.abs(heave_record.phi_body).max()
    assert np.abs(doubled.phi_body - 2 * heave_record.phi_body).max() < 1e-10 * scale


def test_zero_amplitude_stays_at_rest(small_cylinder):
    record = run_radiation(small_cylinder, RadiationSettings(amplitude=0.0, **_SETTINGS))
    assert not record.phi_body.any()
    assert not record.eta_monitors.any()
    assert not body_force(record, 3).any()


def test_courant_one_agrees_with_half(small_cylinder):
    # the lagged Sommerfeld flux is first order in dt; leave it out to compare the integrator alone
    runs = [run_radiation(small_cylinder, RadiationSettings(courant=cr, sommerfeld=False, **_SETTINGS))
            for cr in (0.5, 1.0)]
    assert runs[1].dt == pytest.approx(2 * runs[0].dt)
    fine, rough = body_force(runs[0], 3), body_force(runs[1], 3)
    n = min(len(rough), (len(fine) + 1) // 2)
    assert np.abs(rough[:n] - fine[:2 * n:2]).max() < 1e-4 * np.abs(fine).max()


def test_run_extends_until_force_decays(small_cylinder, heave_record):
    settings = dict(_SETTINGS, extend_to_decay=True, max_t_end_factor=4.0)
    record = run_radiation(small_cylinder, RadiationSettings(**settings))
    meta = record.metadata
    assert meta["n_steps"] >= heave_record.metadata["n_steps"]
    assert meta["t_end"] <= 4.0 * meta["t0"] + meta["dt"]
    assert_allclose(record.phi_body[:len(heave_record.phi_body)], heave_record.phi_body, rtol=1e-12, atol=1e-14)


# ============================================================
# Full domain
# ============================================================

def test_sommerfeld_on_both_walls_of_full_domain(full_cylinder, caplog):
    operator = FreeSurfaceOperator(full_cylinder, mode=3, sommerfeld=True, sommerfeld_dx=0.05)
    x = full_cylinder.dofmap.coords[operator.sommerfeld_dofs, 0]
    assert_allclose(np.abs(x), 3.0, atol=1e-12)
    assert (x < 0).any() and (x > 0).any()
    assert "not at x = L" not in caplog.text
    # phi = x has u = 1: outward velocity +1 on the right wall and -1 on the left
    sampled = operator.sample_velocity(full_cylinder.dofmap.coords[:, 0])
    assert_allclose(sampled, np.sign(x), atol=1e-9)


def test_full_domain_heave_has_no_cross_coupling(full_heave_record, heave_record):
    assert not full_heave_record.symmetric_half
    assert cross_coupling(heave_record) == {1: 0.0, 5: 0.0}
    coupling = cross_coupling(full_heave_record)
    assert set(coupling) == {1, 5}
    assert max(coupling.values()) < 1e-8


def test_full_domain_heave_matches_mirrored_half(full_heave_record, heave_record):
    assert full_heave_record.dt == pytest.approx(heave_record.dt, rel=1e-12)
    assert full_heave_record.metadata["n_steps"] == heave_record.metadata["n_steps"]
    half, full = body_force(heave_record, 3), body_force(full_heave_record, 3)
    assert np.abs(full - half).max() < 1e-6 * np.abs(half).max()


# ============================================================
# Benchmark cylinder
# ============================================================

def _benchmark(beta: int, **settings):
    manager = CylinderMeshManager(R=0.5, h=3.0, L=12.0, beta=beta, order=3, grading=1.05)
    manager.load_and_prepare()
    system = manager.get_system()
    record = run_radiation(system, RadiationSettings(mode=3, progress_every=0, **settings))
    force = body_force(record, 3)
    coeffs = added_mass_damping(force, record.x, record.dt, omega_cutoff=record.metadata["omega_r"])
    return system, record, force, coeffs


@pytest.mark.slow
def test_benchmark_heave_force_decays():
    _, record, force, coeffs = _benchmark(5)
    assert check_force_decay(force, 1e-3)
    assert abs(force[-1]) <= 1e-3 * np.abs(force).max()
    _, nu = normalize(coeffs, CylinderBody(radius=0.5))
    assert np.all(np.isfinite(coeffs.a))
    assert np.median(nu[~coeffs.noisy]) > 0
    assert coeffs.b[~coeffs.noisy].min() >= -1e-3 * np.abs(coeffs.b).max()


@pytest.mark.slow
def test_coefficients_converge_with_body_resolution():
    _, _, _, coarse = _benchmark(5)
    _, _, _, fine = _benchmark(8)
    agreement = coefficient_agreement(fine, coarse)
    assert agreement["a"] < 0.01
    assert agreement["b"] < 0.01


@pytest.mark.slow
def test_added_mass_approaches_rigid_lid_limit():
    system, _, _, coeffs = _benchmark(5, alpha=1.0)
    a_inf = infinite_frequency_added_mass(system, 3, 3)
    top = coeffs.a[~coeffs.noisy][-1]
    assert top == pytest.approx(a_inf, rel=0.05)
