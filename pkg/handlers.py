# handlers.py
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

import analysis
from errors import DivergenceError, InstabilityError, ParameterError
from geometry import CircleArc
from hydro import (BoxBody, CylinderBody, HydroCoefficients, RadiationRecord, added_mass_damping, body_force,
                   coefficients_frame, cross_coupling, infinite_frequency_added_mass)
from impulse import MODES
from mesh_io import export_mesh
from mesh_manager import BaseMeshManager, mesh_family, mesh_manager_from_config
from radiation import RadiationSettings, run_radiation, standing_wave_frequency
from schemas import RunConfig, RunSummary
from table_utils import get_shaped_table, write_table

"""
Command handlers.
Each handler takes a validated RunConfig and an output directory, runs the
numerical core, writes its tables there and returns the RunSummary that the
entry point stores as run.json. Wall-clock timings only go to the summary.
"""

logger = logging.getLogger(__name__)

SUMMARY_FILE = "run.json"
BASIN_MODES_CHECKED = 5


# --- Shared helpers ---

def prepare_mesh(config: RunConfig, **overrides) -> BaseMeshManager:
    manager = mesh_manager_from_config(config.geometry, config.discretization, **overrides)
    manager.load_and_prepare()
    return manager


def body_for(config: RunConfig) -> Optional[Union[CylinderBody, BoxBody]]:
    geometry = config.geometry
    if geometry.kind == "cylinder":
        return CylinderBody(radius=geometry.R)
    if geometry.kind == "box":
        return BoxBody(half_length=geometry.a, draft=geometry.d)
    if geometry.kind == "import" and geometry.body_radius:
        return CylinderBody(radius=geometry.body_radius)
    return None


def body_radius(config: RunConfig) -> Optional[float]:
    body = body_for(config)
    return body.radius if isinstance(body, CylinderBody) else None


def radiation_settings(config: RunConfig, waterline: Optional[float]) -> RadiationSettings:
    impulse, absorption, output = config.impulse, config.absorption, config.output
    monitors = list(output.monitors) or ([waterline] if waterline is not None else [])
    return RadiationSettings(
        courant=config.discretization.Cr, mode=impulse.mode, alpha=impulse.alpha, r=impulse.r,
        epsilon=impulse.epsilon, s=impulse.s, t0=impulse.t0, amplitude=impulse.amplitude,
        t_end=impulse.t_end, extend_to_decay=impulse.extend_to_decay, max_t_end_factor=impulse.max_t_end_factor,
        relaxation=absorption.relaxation, relaxation_length=absorption.relaxation_length,
        relaxation_strength=absorption.relaxation_strength, sommerfeld=absorption.sommerfeld,
        dtn_recovery=config.discretization.dtn_recovery,
        monitors=monitors, progress_every=output.progress_every)


def _displacement_unit(mode: int) -> str:
    return "rad" if mode == 5 else "m"


def _force_unit(direction: int) -> str:
    return "N" if direction == 5 else "N/m"


def write_summary(summary: RunSummary, out_dir: Path) -> Path:
    path = Path(out_dir) / SUMMARY_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def record_forces(record: RadiationRecord, rho: float) -> Dict[int, np.ndarray]:
    """Full-body forces F_jk for every direction j the record carries loads for."""
    return {j: body_force(record, j, rho=rho) for j in MODES if j in record.body_loads}


def record_coefficients(record: RadiationRecord, forces: Dict[int, np.ndarray], directions: List[int],
                        pad_factor: float) -> Dict[tuple, HydroCoefficients]:
    k = record.mode
    return {(j, k): added_mass_damping(forces[j], record.x, record.dt, pad_factor=pad_factor,
                                       omega_cutoff=record.metadata["omega_r"])
            for j in directions if j in forces}


def signals_frame(record: RadiationRecord, forces: Dict[int, np.ndarray]) -> pd.DataFrame:
    k = record.mode
    frame = pd.DataFrame({"t [s]": record.times,
                          f"x_{k} [{_displacement_unit(k)}]": record.x,
                          f"xdot_{k} [{_displacement_unit(k)}/s]": record.xdot})
    for j, force in forces.items():
        frame[f"F_{j}{k} [{_force_unit(j)}]"] = force
    for x, eta in zip(record.monitor_x, record.eta_monitors.T):
        frame[f"eta(x={x:g}) [m]"] = eta
    return frame


# --- Commands ---

def handle_radiate(config: RunConfig, out_dir: Path) -> RunSummary:
    manager = prepare_mesh(config)
    mesh, system = manager.get_mesh(), manager.get_system()
    k = config.impulse.mode
    summary = RunSummary(command="radiate", mesh=mesh.name, n_elements=mesh.n_elements, n_dof=system.n_dof,
                         order=config.discretization.P, timings=dict(system.stats))
    settings = radiation_settings(config, manager.waterline)
    try:
        record = run_radiation(system, settings)
    except (InstabilityError, DivergenceError) as exc:
        summary.status, summary.message = "aborted", str(exc)
        write_summary(summary, out_dir)
        raise

    meta = record.metadata
    summary.dt, summary.t_end, summary.n_steps, summary.omega_r = meta["dt"], meta["t_end"], meta["n_steps"], meta["omega_r"]
    summary.timings.update(run_seconds=meta["run_seconds"], factor_seconds=meta["factor_seconds"],
                           mean_solve_seconds=meta["mean_solve_seconds"])
    table_meta = {"mesh": mesh.name, "P": config.discretization.P, "mode": k, "dt": meta["dt"],
                  "alpha": meta["alpha"], "s": meta["s"], "t0": meta["t0"], "omega_r": meta["omega_r"]}

    forces = record_forces(record, config.output.rho)
    signals = get_shaped_table(signals_frame(record, forces), include_columns=config.output.signal_columns)
    summary.outputs.append(str(write_table(signals, Path(out_dir) / "signals.csv", table_meta)))

    if not forces:
        logger.warning("Mesh '%s' has no body; no forces or coefficients computed", mesh.name)
    else:
        coeffs = record_coefficients(record, forces, config.output.directions or [k], config.output.pad_factor)
        frame = coefficients_frame(coeffs, body_for(config), rho=config.output.rho)
        summary.outputs.append(str(write_table(frame, Path(out_dir) / "coefficients.csv", table_meta)))
        diagonal = coeffs.get((k, k))
        if diagonal is not None and len(diagonal):
            b_peak = float(np.max(np.abs(diagonal.b)))
            summary.results["b_min_over_peak"] = float(diagonal.b.min() / b_peak) if b_peak > 0 else 0.0
        summary.results["a_inf"] = infinite_frequency_added_mass(system, k, k, rho=config.output.rho)
        peak = float(np.max(np.abs(forces[k])))
        summary.results["force_end_over_peak"] = float(abs(forces[k][-1]) / peak) if peak > 0 else 0.0
        summary.results["cross_coupling"] = {str(j): v for j, v in cross_coupling(record, config.output.rho).items()}
    write_summary(summary, out_dir)
    return summary


def handle_mms(config: RunConfig, out_dir: Path) -> RunSummary:
    study = config.study
    meshes = mesh_family(config.geometry, config.discretization, study.levels)
    radius = body_radius(config)
    body = CircleArc(radius) if study.curved and radius else None
    report = analysis.mms_convergence(meshes, study.orders, body=body,
                                      quadrature=config.discretization.quadrature, n_jobs=study.n_jobs)
    cases = report.cases.rename(columns={"h_max": "h_max [m]", "n_dof": "N_dof [-]", "error": "error_inf [m^2/s]",
                                         "n_elm": "N_elm [-]", "P": "P [-]", "mesh": "mesh [-]"})
    meta = {"solution": report.solution, "curved": int(body is not None)}
    summary = RunSummary(command="mms", mesh=meshes[0].name, n_elements=meshes[0].n_elements,
                         order=max(study.orders))
    summary.outputs.append(str(write_table(cases, Path(out_dir) / "convergence.csv", meta)))
    summary.outputs.append(str(write_table(report.rate_table(), Path(out_dir) / "rates.csv", meta)))
    summary.results = {"h_rates": {str(P): r for P, r in report.h_rates.items()},
                       "p_decay": report.p_decay, "flagged": report.flagged, "solution": report.solution}
    write_summary(summary, out_dir)
    return summary


def handle_stability(config: RunConfig, out_dir: Path) -> RunSummary:
    study, k = config.study, config.impulse.mode
    eigen_tables, rows = [], []
    summary = RunSummary(command="stability", order=max(study.orders))
    for P in study.orders:
        manager = prepare_mesh(config, order=P)
        system = manager.get_system()
        report = analysis.stability_eigenvalues(system, mode=k, dtn_recovery=config.discretization.dtn_recovery,
                                                max_dim=study.max_eigen_dim, tolerance=study.stability_tolerance)
        table = report.to_frame()
        table.insert(0, "P [-]", P)
        eigen_tables.append(table)
        row = {"P [-]": P, "N_fs [-]": report.n_fs, "max_re [1/s]": report.max_real,
               "max_abs [1/s]": report.max_abs, "zero_modes [-]": report.n_zero,
               "stable [-]": int(report.stable)}
        if config.geometry.kind == "basin":
            found = report.frequencies(BASIN_MODES_CHECKED)
            exact = [standing_wave_frequency(n, config.geometry.L, config.geometry.h)
                     for n in range(1, len(found) + 1)]
            row["max_freq_error [-]"] = float(np.max(np.abs(found - exact) / exact)) if len(found) else float("nan")
        rows.append(row)
        summary.mesh, summary.n_elements, summary.n_dof = system.mesh.name, system.mesh.n_elements, system.n_dof
    meta = {"mesh": summary.mesh, "mode": k, "dtn_recovery": config.discretization.dtn_recovery}
    summary.outputs.append(str(write_table(pd.concat(eigen_tables, ignore_index=True),
                                           Path(out_dir) / "eigenvalues.csv", meta)))
    stability = pd.DataFrame(rows)
    summary.outputs.append(str(write_table(stability, Path(out_dir) / "stability.csv", meta)))
    summary.results = {"unstable_orders": [int(r["P [-]"]) for r in rows if not r["stable [-]"]]}
    write_summary(summary, out_dir)
    return summary


def handle_scaling(config: RunConfig, out_dir: Path) -> RunSummary:
    study = config.study
    meshes = mesh_family(config.geometry, config.discretization, study.levels)
    report = analysis.scaling_benchmark(meshes, study.orders, repeats=study.repeats, seed=study.seed)
    table = report.cases.rename(columns={"n_dof": "N_dof [-]", "solve_seconds": "solve [s]", "P": "P [-]",
                                         "nnz": "nnz [-]", "bandwidth": "bandwidth [-]", "fill_in": "fill_in [-]",
                                         "batch": "batch [-]", "mesh": "mesh [-]"})
    summary = RunSummary(command="scaling", mesh=meshes[-1].name, n_elements=meshes[-1].n_elements,
                         order=max(study.orders), n_dof=int(report.cases["n_dof"].max()))
    summary.outputs.append(str(write_table(table, Path(out_dir) / "scaling.csv", {"repeats": study.repeats})))
    summary.results = {"exponent": report.exponent}
    write_summary(summary, out_dir)
    return summary


def handle_spurious(config: RunConfig, out_dir: Path) -> RunSummary:
    study, k = config.study, config.impulse.mode
    summary = RunSummary(command="spurious", order=config.discretization.P)
    if study.spurious == "alpha":
        manager = prepare_mesh(config)
        system = manager.get_system()
        settings = radiation_settings(config, manager.waterline)
        cases = analysis.spurious_alpha_study(system, settings, study.alphas,
                                              pad_factor=config.output.pad_factor, n_jobs=study.n_jobs)
        summary.mesh, summary.n_elements, summary.n_dof = system.mesh.name, system.mesh.n_elements, system.n_dof
    else:
        if config.geometry.kind != "cylinder":
            raise ParameterError("the beta study varies the cylinder body resolution; use a cylinder geometry")
        managers = {beta: prepare_mesh(config, beta=beta) for beta in study.levels}
        settings = radiation_settings(config, config.geometry.R)
        cases = analysis.spurious_beta_study({b: m.get_system() for b, m in managers.items()}, settings,
                                             s=study.spurious_s, pad_factor=config.output.pad_factor,
                                             n_jobs=study.n_jobs)

    radius = body_radius(config)
    table = analysis.study_frame(cases, radius=radius)
    meta = {"study": study.spurious, "mode": k, "P": config.discretization.P}
    summary.outputs.append(str(write_table(table, Path(out_dir) / "study.csv", meta)))

    spectra = [pd.DataFrame({c.label: c.value, "omega [rad/s]": c.omega, "amplitude [m s]": c.amplitude})
               for c in cases if c.stable]
    if spectra:
        summary.outputs.append(str(write_table(pd.concat(spectra, ignore_index=True),
                                               Path(out_dir) / "spectra.csv", meta)))

    coeffs = {}
    for c in cases:
        if c.stable and c.record is not None and c.record.body_loads:
            forces = {k: body_force(c.record, k, rho=config.output.rho)}
            coeffs[c.value] = record_coefficients(c.record, forces, [k], config.output.pad_factor)[(k, k)]
    reference = coeffs.get(3.0) if study.spurious == "alpha" else None
    if reference is not None:
        summary.results["coefficient_rms_vs_alpha3"] = {
            str(value): analysis.coefficient_agreement(reference, c) for value, c in coeffs.items() if value != 3.0}
    summary.results["unstable"] = [c.value for c in cases if not c.stable]
    write_summary(summary, out_dir)
    return summary


def handle_meshgen(config: RunConfig, out_dir: Path) -> RunSummary:
    manager = prepare_mesh(config, order=1)
    mesh = manager.get_mesh()
    path = export_mesh(mesh, Path(out_dir) / "mesh.msh")
    summary = RunSummary(command="meshgen", mesh=mesh.name, n_elements=mesh.n_elements, order=1,
                         outputs=[str(path)])
    write_summary(summary, out_dir)
    return summary


HANDLERS = {
    "radiate": handle_radiate,
    "mms": handle_mms,
    "stability": handle_stability,
    "scaling": handle_scaling,
    "spurious": handle_spurious,
    "meshgen": handle_meshgen,
}
