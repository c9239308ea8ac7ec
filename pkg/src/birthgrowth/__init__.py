"""Simulation and numerical validation of birth-and-growth germ-grain processes."""

from .causal_cone import (
    CausalCone,
    cone_contains,
    cone_measure,
    cone_measure_rate,
    evaluate_batch,
    extended_surface_density,
    kernel,
    section_mass,
)
from .errors import BirthGrowthError, ConfigError, DomainError, UnsupportedAnalyticError
from .estimators import (
    CaptureTimeSample,
    DensityEstimate,
    atom_test,
    estimate_Sex,
    estimate_SV,
    estimate_Vex,
    estimate_VV,
    sample_capture_time,
)
from .grid import Box, Grid, ScalarField
from .growth import ArrivalField, GrowthField, dilate, grain_capture_time, grain_indicator, radius
from .nucleation import MarkedPoint, NucleationModel, marginal_cumulative_intensity, sample
from .simulate import Ensemble, Realization, minkowski_surface_mass, realize, union_capture_time, union_indicator

__version__ = "0.1.0"
