"""Weighted-space solver and stability workbench for generalized fractional
Cauchy problems with reparametrised kernels."""

from .cli import ProblemFile, load_problem, problem_from_dict
from .errors import (
    CertificationError,
    ContractError,
    ConvergenceError,
    DomainError,
    EstimationError,
    EvaluationError,
    FracstabError,
    NonConvergenceError,
    ParseError,
    RangeError,
    SchemaError,
)
from .fraccalc import (
    FracIntegralOperator,
    OperatorCheckReport,
    OperatorCheckRow,
    frac_integral,
    hilfer_derivative,
    run_operator_checks,
)
from .psi_space import (
    FracOrder,
    GridFunction,
    Mesh,
    PsiMap,
    build_mesh,
    psi_eval,
    weighted_norm,
)
from .rhs_expr import (
    evaluate,
    free_variables,
    parse_expression,
    to_source,
)
from .solver import (
    CauchyProblem,
    ContractionFactors,
    LipschitzEstimate,
    Solution,
    UniquenessCertificate,
    certify_unique,
    contraction_factor,
    default_grading,
    estimate_lipschitz,
    picard_solve,
)
from .specfun import (
    DEFAULT_ML_POLICY,
    MlEvalPolicy,
    erf_fn,
    gamma_fn,
    mittag_leffler,
)
from .stability import (
    PerturbationReport,
    PerturbationSpec,
    StabilityCertificate,
    TrialResult,
    estimate_lambda_phi,
    perturb_and_check,
    report_to_csv,
    uh_constant,
    uhr_constant,
)

__version__ = "0.1.0"
