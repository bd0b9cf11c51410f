"""Squared Dirichlet eigenfunctions from eigenvalue data.

The package computes e_k(x0)^2 for one-dimensional Dirichlet Schrodinger
operators using only the operator's spectrum and the spectrum of the same
operator with an extra zero condition at x0, and cross-checks the recovery
through independent Green's-function, trace-identity, and spectral-shift
machinery.  The finite-dimensional squared-component identity for Hermitian
matrices lives in matrix_identity as the discrete counterpart.
"""

from .errors import (
    BracketingError,
    ConfigError,
    GuardError,
    IncompatibleTracesError,
    JacobiConvergenceError,
    NonHermitianError,
    OverflowIntegrationError,
    PoleProximityError,
    S2MError,
    WindowMismatchError,
)
from .green_trace import (
    GreenEvaluation,
    KreinCheck,
    StepFunction,
    TraceIdentityResult,
    green_diag,
    green_offdiag,
    green_residue,
    krein_check,
    krein_resolvent_residual,
    run_verification_suite,
    spectral_shift_function,
    ssf_resolvent_integral,
    trace_identity_residual,
)
from .matrix_identity import (
    IdentityCell,
    IdentityReport,
    SymmetricMatrix,
    component_squared_from_spectra,
    hermitian_eigensolve,
    identity_report,
    principal_minor,
    random_hermitian,
    resolvent_diag_ratio_check,
)
from .reconstruction import (
    CLimitResult,
    CRatioResult,
    PairedLabels,
    ReconstructionResult,
    SpectraPair,
    build_pair,
    c_via_limit,
    c_via_ratio,
    esq_thm21,
    esq_thm24,
    free_pair,
    pair_split_labels,
    reconstruct_profile,
    sin_product_identity,
    spectral_shift_guard,
    write_reconstruction_csv,
)
from .sl_engine import (
    ConstantPotential,
    DirichletProblem,
    Eigenfunction,
    PiecewiseLinearPotential,
    PolynomialPotential,
    Spectrum,
    SplitSpectrum,
    TrigSumPotential,
    ZeroPotential,
    dirichlet_eigenvalues,
    eigenfunction_direct,
    eigenfunction_squared_at,
    free_spectra,
    problem_from_json,
    split_eigenvalues,
)

__version__ = "0.1.0"

__all__ = [
    "BracketingError",
    "CLimitResult",
    "CRatioResult",
    "ConfigError",
    "ConstantPotential",
    "DirichletProblem",
    "Eigenfunction",
    "GreenEvaluation",
    "GuardError",
    "IdentityCell",
    "IdentityReport",
    "IncompatibleTracesError",
    "JacobiConvergenceError",
    "KreinCheck",
    "NonHermitianError",
    "OverflowIntegrationError",
    "PairedLabels",
    "PiecewiseLinearPotential",
    "PoleProximityError",
    "PolynomialPotential",
    "ReconstructionResult",
    "S2MError",
    "SpectraPair",
    "Spectrum",
    "SplitSpectrum",
    "StepFunction",
    "SymmetricMatrix",
    "TraceIdentityResult",
    "TrigSumPotential",
    "WindowMismatchError",
    "ZeroPotential",
    "build_pair",
    "c_via_limit",
    "c_via_ratio",
    "component_squared_from_spectra",
    "dirichlet_eigenvalues",
    "eigenfunction_direct",
    "eigenfunction_squared_at",
    "esq_thm21",
    "esq_thm24",
    "free_pair",
    "free_spectra",
    "green_diag",
    "green_offdiag",
    "green_residue",
    "hermitian_eigensolve",
    "identity_report",
    "krein_check",
    "krein_resolvent_residual",
    "pair_split_labels",
    "principal_minor",
    "problem_from_json",
    "random_hermitian",
    "reconstruct_profile",
    "resolvent_diag_ratio_check",
    "run_verification_suite",
    "sin_product_identity",
    "spectral_shift_function",
    "spectral_shift_guard",
    "split_eigenvalues",
    "ssf_resolvent_integral",
    "trace_identity_residual",
    "write_reconstruction_csv",
]
