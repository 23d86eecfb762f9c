import numpy as np
import pytest
from numpy.testing import assert_allclose

from analysis import (coefficient_agreement, default_manufactured_solution, detect_spurious_peak,
                      fit_exponent, fit_geometric_decay, fit_rate, linear_solution, max_edge_length,
                      mms_convergence, scaling_benchmark, solve_manufactured, spectrum, spurious_alpha_study,
                      stability_eigenvalues)
from errors import EigenBudgetError, ParameterError
from geometry import CircleArc
from hydro import HydroCoefficients
from mesh import generate_basin_domain, generate_cylinder_domain
from radiation import RadiationSettings, standing_wave_frequency


# ============================================================
# Helpers
# ============================================================

def _cylinder(beta: int):
    return generate_cylinder_domain(R=1.0, h=2.5, L=3.0, beta=beta)


def _coefficients(a: float, b: float) -> HydroCoefficients:
    omega = np.linspace(0.1, 5.0, 50)
    return HydroCoefficients(omega=omega, a=np.full(50, a), b=np.full(50, b), omega_r=5.0,
                             noisy=np.zeros(50, dtype=bool))


# ============================================================
# Fits
# ============================================================

def test_fits_recover_exact_laws():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    assert fit_rate(h, 2.0 * h ** 3) == pytest.approx(3.0)
    orders = np.arange(1, 6)
    assert fit_geometric_decay(orders, 0.1 ** orders) == pytest.approx(0.1)
    n = np.array([100, 1000, 10000])
    assert fit_exponent(n, 1e-6 * n ** 1.2) == pytest.approx(1.2)


def test_max_edge_length_of_basin():
    assert max_edge_length(generate_basin_domain(L=2.0, h=1.0, nx=8, nz=4)) == pytest.approx(np.hypot(0.25, 0.25))


# ============================================================
# Manufactured solutions
# ============================================================

def test_linear_field_reproduced_on_straight_mesh():
    error, n_dof = solve_manufactured(generate_basin_domain(L=2.0, h=1.0, nx=4, nz=2), 3, linear_solution())
    assert error < 1e-10
    assert n_dof > 0


def test_linear_field_reproduced_on_curved_mesh():
    error, _ = solve_manufactured(_cylinder(4), 4, linear_solution(), body=CircleArc(1.0))
    assert error < 1e-7


def test_default_solution_converges_with_order():
    solution = default_manufactured_solution(3.0, 2.5)
    coarse, _ = solve_manufactured(_cylinder(4), 2, solution, body=CircleArc(1.0))
    fine, _ = solve_manufactured(_cylinder(4), 5, solution, body=CircleArc(1.0))
    assert fine < coarse / 10


def test_default_solution_is_harmonic_plus_source():
    solution = default_manufactured_solution(3.0, 2.5)
    x, z, d = np.array([0.7, 2.1]), np.array([-0.4, -1.9]), 1e-4
    laplacian = (solution.value(x + d, z) + solution.value(x - d, z) + solution.value(x, z + d)
                 + solution.value(x, z - d) - 4 * solution.value(x, z)) / d ** 2
    assert_allclose(-laplacian, solution.source(x, z), rtol=1e-5)


def test_mms_convergence_report():
    report = mms_convergence([_cylinder(b) for b in (4, 8, 16)], [1, 2], body=CircleArc(1.0))
    assert list(report.cases.columns) == ["mesh", "n_elm", "h_max", "P", "n_dof", "error"]
    assert len(report.cases) == 6
    assert report.h_rates[1] > 1.0
    for _, group in report.cases.groupby("P"):
        assert np.all(np.diff(group["error"].to_numpy()) < 0)
    table = report.rate_table()
    assert list(table.columns) == ["kind", "key", "value"]
    assert set(table["kind"]) == {"h", "P"}
    assert not report.flagged


def test_p_decay_leaves_out_first_order():
    report = mms_convergence([_cylinder(4)], [1, 2, 3], body=CircleArc(1.0))
    cases = report.cases
    (name, decay), = report.p_decay.items()
    later = cases[cases["P"] >= 2]
    assert decay == pytest.approx(fit_geometric_decay(later["P"], later["error"]))
    assert decay != pytest.approx(fit_geometric_decay(cases["P"], cases["error"]))


def test_mms_needs_input():
    with pytest.raises(ParameterError):
        mms_convergence([], [1])


# ============================================================
# Stability
# ============================================================

def test_basin_operator_is_neutrally_stable(basin_system):
    report = stability_eigenvalues(basin_system)
    assert report.tolerance == 1e-8
    assert report.stable
    assert report.max_real < 1e-8 * report.max_abs
    assert report.n_fs == len(basin_system.dofmap.fs_dofs)
    # constant potential: one defective zero pair
    assert report.n_zero == 2
    expected = [standing_wave_frequency(n, 2.0, 1.0) for n in range(1, 6)]
    assert_allclose(report.frequencies(5), expected, rtol=1e-2)
    assert list(report.to_frame().columns) == ["re [1/s]", "im [1/s]"]


def test_nodal_average_recovery_has_growing_modes(basin_system):
    report = stability_eigenvalues(basin_system, dtn_recovery="average")
    assert not report.stable
    assert report.max_real > 1e-4 * report.max_abs


def test_eigenvalue_budget(basin_system):
    with pytest.raises(EigenBudgetError):
        stability_eigenvalues(basin_system, max_dim=10)


# ============================================================
# Scaling
# ============================================================

def test_scaling_benchmark_table():
    meshes = [generate_basin_domain(L=2.0, h=1.0, nx=n, nz=n // 2) for n in (4, 8)]
    report = scaling_benchmark(meshes, [1, 2], repeats=2, min_batch_seconds=1e-4)
    assert len(report.cases) == 4
    assert report.cases["n_dof"].is_monotonic_increasing
    assert (report.cases["solve_seconds"] > 0).all()
    assert np.isfinite(report.exponent)
    with pytest.raises(ParameterError):
        scaling_benchmark(meshes, [1], repeats=0)


# ============================================================
# Spectra
# ============================================================

def test_spectrum_peaks_at_carrier():
    dt = 0.05
    t = dt * np.arange(400)
    omega, amplitude = spectrum(np.cos(3.0 * t) * np.exp(-((t - 10.0) / 2.0) ** 2), dt)
    assert abs(omega[np.argmax(amplitude)] - 3.0) < 2 * (omega[1] - omega[0])


def test_spurious_bump_detected():
    omega = np.linspace(0.0, 50.0, 501)
    smooth = np.exp(-omega)
    bumped = smooth + 1e-2 * np.exp(-(omega - 30.0) ** 2)
    peak = detect_spurious_peak(omega, bumped, omega_threshold=20.0)
    assert peak.present
    assert peak.omega == pytest.approx(30.0, abs=0.05)
    assert peak.energy > 0
    assert not detect_spurious_peak(omega, smooth, omega_threshold=20.0).present


def test_spurious_study_needs_monitor(basin_system):
    with pytest.raises(ParameterError):
        spurious_alpha_study(basin_system, RadiationSettings(), alphas=[3.0, 5.0])


# ============================================================
# Coefficient comparison
# ============================================================

def test_coefficient_agreement():
    base = _coefficients(2.0, 3.0)
    assert coefficient_agreement(base, base) == {"a": 0.0, "b": 0.0}
    off = coefficient_agreement(base, _coefficients(2.02, 3.03))
    assert off["a"] == pytest.approx(0.01)
    assert off["b"] == pytest.approx(0.01)
