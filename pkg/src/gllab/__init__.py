"""Numerical laboratory for the reduced Ginzburg-Landau model in a constant
magnetic field: ground-state energies on link grids, the lowest Landau band,
Abrikosov energies and their thermodynamic limits."""
from .energy import EnergyBreakdown, eval_energy, eval_gradient, eval_residual
from .grid import (BC, GaugeLinks, GridSpec, OrderParameter, QuantizationError,
                   build_gauge_links, wrap_quasi_periodic)
from .landau import AbrikosovResult, LandauBand, lowest_band, minimize_abrikosov
from .minimize import (MinimizeResult, continuum_extrapolate, minimize_dirichlet_2d,
                       minimize_dirichlet_3d, minimize_periodic_2d)
from .thermo import (ThermoSeries, TrialConfigReport, bulk_trial_energy, estimate_e2_gl,
                     estimate_e2_lattice, estimate_g, property_suite)

__version__ = "0.1.0"
