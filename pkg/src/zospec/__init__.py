"""Discretized zero-order pseudodifferential and Schrodinger operators and their
eigenvalue accumulation near essential-spectrum tips."""

from .asymptotics import (
    CoefficientReport,
    DirectionFunction,
    closed_form_coefficient,
    geometry_constants,
    phase_volume_mc,
    predicted_counting,
    slice_volume,
)
from .npelast import lame_to_kappa, np_eigenvectors, np_essential_spectrum, np_predicted_order, np_principal_symbol
from .quantize import Grid, HermitianOperator, SchrodingerSpec, assemble_operator, assemble_schrodinger, make_grid
from .spectra import CountingFunction, FitResult, counting, eigenvalues, fit_power_law, sturm_count_1d
from .symbolcore import (
    Contour,
    PolyhomSymbol,
    SymbolComponent,
    convert_quantization,
    eigen_branches,
    essential_spectrum,
    resolvent_correction,
    riesz_projector,
    subprincipal_symbol,
)

__version__ = "0.1.0"
