"""Matrix Ornstein-Uhlenbeck processes coupled with their leading-minor
spectra: exact samplers, spectral SDE integrators, closed-form densities and
the verification experiments tying them together."""

from .algebra import (
    AlgebraElement,
    SelfAdjointMatrix,
    algebra_mul,
    conjugate,
    eigenvalues,
    embed_quaternion_matrix,
    haar_unitary,
    pfaffian,
    quaternion_determinant,
    sample_gaussian_ensemble,
)
from .densities import (
    Constants,
    constants,
    hciz,
    integrate_invariant_lambda,
    integrate_invariant_pair,
    integrate_transition_lambda,
    invariant_density_lambda,
    invariant_density_pair,
    invariant_pair_null_residual,
    transition_density_lambda,
    transition_density_pair_closed_n2,
    transition_density_pair_mc,
)
from .errors import (
    DegenerateSpectrumError,
    EigenvaluePairingError,
    InfeasibleGaugeError,
    InterlacingError,
    InvalidInputError,
    MinorDysonError,
    NumericalFailureError,
    StepFailureError,
)
from .matrix_process import (
    MatrixPathConfig,
    apply_dyson_generator,
    generator_eigenrelation,
    ou_endpoints,
    ou_path,
    ou_step_exact,
)
from .minor_geometry import (
    BorderedForm,
    InterlacedPair,
    bordered_form,
    identity_suite,
    interlace_check,
    jacobian_check,
    pair_from_matrix,
    r_from_spectra,
    reconstruct,
)
from .report import ExperimentReport, Statistic, TestOutcome
from .spectral_sde import (
    CoupledState,
    coupled_paths,
    coupled_step,
    dyson_paths,
    dyson_step,
    empirical_covariation,
    quadratic_variation_analytic,
)
from .verification import (
    AngleGauge,
    TripleSpectra,
    nonmarkov_witness,
    path_equivalence_experiment,
    reconstruct_triple_n3,
    stationarity_experiment,
    triple_from_matrix,
)

__version__ = "0.1.0"
