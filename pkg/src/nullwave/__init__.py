"""Simulator and diagnostics for one-dimensional quasilinear wave systems with null structure."""
from .weights import WeightSet, phi, psi, psi_prime, q_table, q_weight
from .grid import FieldState, Grid, make_initial_data, norm27
from .systems import NonlinearSystem, catalog, check_null, get_system, polynomial_system
from .solver import RunResult, StepControl, assemble_rhs, run, step
from .diagnostics import DiagConfig, EnergyReport, build_stack, energy_report, scattering_metric

__version__ = "0.1.0"

__all__ = [
    "WeightSet", "phi", "psi", "psi_prime", "q_table", "q_weight",
    "FieldState", "Grid", "make_initial_data", "norm27",
    "NonlinearSystem", "catalog", "check_null", "get_system", "polynomial_system",
    "RunResult", "StepControl", "assemble_rhs", "run", "step",
    "DiagConfig", "EnergyReport", "build_stack", "energy_report", "scattering_metric",
]
