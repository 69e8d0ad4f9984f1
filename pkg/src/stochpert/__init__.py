"""Perturbation-series solver for the heat equation with a log-Gaussian diffusivity."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    EigenSolveError,
    NumericalError,
    ProbeSearchError,
    RootFindingError,
)
from .kl import (
    CovarianceKernel,
    EigenPair,
    Grid,
    KLBasis,
    analytic_modes,
    basis_diagnostics,
    find_roots,
    kernel_eval,
    kl_partial_sum,
    nystrom_eigenpairs,
    nystrom_spectrum,
)
from .heat import ProblemSpec, compute_norms, solve_heat, solve_variable, time_derivative
from .hierarchy import (
    PolyField,
    SeriesSolution,
    assemble_rhs,
    evaluate_series,
    poly_mul,
    solve_hierarchy,
    solve_order,
    y_as_poly,
)
from .moments import (
    MonomialCoeffs,
    construct_probe,
    gram_determinant,
    gram_matrix,
    monomial_moment,
    probe_dominates,
    single_moment,
    uniqueness_residual,
)
from .validation import (
    SweepConfig,
    estimate_functional,
    mc_reference,
    series_moments,
    sigma_convergence,
)
