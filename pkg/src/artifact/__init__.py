"""Nuclear-norm penalized matrix completion under non-uniform sampling."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .diagnostics import (
    DiagnosticsReport,
    IncoherenceCertificate,
    ProjectorPair,
    certify_incoherence,
    check_assumption_incoherence,
    cone_membership,
    diagnose,
    kappa1,
    kappa_r_heuristic,
    mu_c0_search,
    noise_error_bound,
    mu_cap,
    rho_search,
    sampling_error_bound,
    stochastic_errors,
    oracle_error_bound,
)
from .estimator import (
    FitResult,
    RegularizationSpec,
    SampleSizeWarning,
    SolverConfig,
    calibrate_lambda_constant,
    closed_form_uniform,
    empirical_moment,
    fit,
    lambda_formula,
    objective,
    resolve_lambda,
)
from .experiments import SweepResult, TrialParams, TrialRecord, oracle_event_frequency, run_trial, slope_fit, sweep
from .lowerbound import PackingError, PackingSet, build_packing, check_packing_conditions, kl_gaussian
from .model import (
    Dataset,
    Dimensions,
    GroundTruth,
    NoiseModel,
    SamplingDistribution,
    ValidationError,
    generate_dataset,
    parse_distribution,
    random_ground_truth,
    uniform_distribution,
)
