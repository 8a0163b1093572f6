"""Numerical laboratory for the non-Hermitian interaction picture.

Kets evolve under a non-Hermitian generator ``G(t)`` while observables
follow the Coriolis term ``Sigma(t)``.  The physical inner product carries a
time-dependent metric ``Theta(t)``.  The package integrates these flows,
reconstructs the metric from a propagated biorthonormal basis and checks
every identity that ties the pieces together.
"""

from .errors import (
    BasisDegenerated,
    ConfigError,
    ConvergenceFailure,
    DefectiveMatrix,
    DegenerateSpectrum,
    DimensionMismatch,
    InsufficientSamples,
    MetricDegenerated,
    NipError,
    NonFiniteState,
    NonHermitianInput,
    NotPositiveDefinite,
    NotUnitary,
    RankDeficient,
    SingularMatrix,
)
from .evolution import (
    DensityMatrix,
    expectation,
    nip_pipeline,
    propagate_basis,
    propagate_bra,
    propagate_density,
    propagate_ket,
    propagate_observable,
)
from .klein_gordon import (
    FvState,
    KreinStructure,
    LatticeModel,
    build_fv_bra_generator,
    build_fv_generator,
    build_lattice_d,
    kg_generator,
    kg_residual,
    kg_scenario,
    krein_product,
    plane_wave_mode,
    stationary_kg_metric,
)
from .metric import (
    MetricDecomposition,
    check_quasi_hermiticity,
    coriolis_from_dyson,
    dyson_factorize,
    hamiltonian_from_spectral,
    metric_flow_residual_g,
    metric_flow_residual_sigma,
    metric_from_basis,
    solve_metric_ode,
)
from .operator_core import (
    DEFAULT_TOL,
    BiorthogonalBasis,
    BiorthogonalEig,
    HermitianEig,
    Tolerances,
    biorthogonal_eig,
    hermitian_eig,
    inverse,
    positive_sqrt,
)
from .oracle import (
    TextbookSnapshot,
    cross_picture_check,
    cross_picture_trajectory,
    lift_operator,
    lift_state,
    textbook_expectation,
)
from .timeline import GeneratorFunction, TimeGrid, Trajectory

__version__ = "0.1.0"

__all__ = [
    "BasisDegenerated",
    "biorthogonal_eig",
    "BiorthogonalBasis",
    "BiorthogonalEig",
    "build_fv_bra_generator",
    "build_fv_generator",
    "build_lattice_d",
    "check_quasi_hermiticity",
    "ConfigError",
    "ConvergenceFailure",
    "coriolis_from_dyson",
    "cross_picture_check",
    "cross_picture_trajectory",
    "DEFAULT_TOL",
    "DefectiveMatrix",
    "DegenerateSpectrum",
    "DensityMatrix",
    "DimensionMismatch",
    "dyson_factorize",
    "expectation",
    "FvState",
    "GeneratorFunction",
    "hamiltonian_from_spectral",
    "hermitian_eig",
    "HermitianEig",
    "InsufficientSamples",
    "inverse",
    "kg_generator",
    "kg_residual",
    "kg_scenario",
    "krein_product",
    "KreinStructure",
    "LatticeModel",
    "lift_operator",
    "lift_state",
    "metric_flow_residual_g",
    "metric_flow_residual_sigma",
    "metric_from_basis",
    "MetricDecomposition",
    "MetricDegenerated",
    "nip_pipeline",
    "NipError",
    "NonFiniteState",
    "NonHermitianInput",
    "NotPositiveDefinite",
    "NotUnitary",
    "plane_wave_mode",
    "positive_sqrt",
    "propagate_basis",
    "propagate_bra",
    "propagate_density",
    "propagate_ket",
    "propagate_observable",
    "RankDeficient",
    "SingularMatrix",
    "solve_metric_ode",
    "stationary_kg_metric",
    "textbook_expectation",
    "TextbookSnapshot",
    "TimeGrid",
    "Tolerances",
    "Trajectory",
]
