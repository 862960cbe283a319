"""Model averaging over nested minimum-norm least-squares candidates.

The library splits into: exact fitting of nested candidate models
(``models``, ``linalg``), closed-form limiting risk of weighted averages
(``risk_theory``), data-driven weight criteria and their quadratic programs
(``criteria``, ``qp``), experiment harnesses with replayable randomness
(``experiments``), bundled example data (``datasets``), and a command-line
front end (``cli``).
"""

from .criteria import (
    QuadraticProgram,
    SingularLooError,
    default_sigma_model,
    info_criterion_weights,
    jma_program,
    lama_criterion_value,
    lama_program,
    mma_program,
    sigma_hat,
    xi,
)
from .linalg import min_norm_ls, projection
from .models import (
    Dataset,
    ModelFits,
    NestedCandidateSet,
    build_nested,
    default_model_counts,
    fit_all,
    load_csv,
    order_by_cp,
)
from .qp import SolveReport, simplex_project, solve_simplex_qp
from .risk_theory import (
    PowerLawProfile,
    RiskMatrices,
    RiskSurface,
    TheoreticalRiskModel,
    asymptotic_risk,
    delta_v_limit,
    phi,
    risk_surface,
    single_model_risk,
    theorem1_matrices,
    theorem2_matrices,
    variance_penalized_weights,
)
from .experiments import (
    SimulationConfig,
    WeightChoice,
    compute_weights,
    evaluate_real,
    generate_data,
    relative_losses,
    rng_for,
    run_simulation,
    validate_rmt,
    validate_theorem1,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ModelFits",
    "NestedCandidateSet",
    "PowerLawProfile",
    "QuadraticProgram",
    "RiskMatrices",
    "RiskSurface",
    "SimulationConfig",
    "SingularLooError",
    "SolveReport",
    "TheoreticalRiskModel",
    "WeightChoice",
    "asymptotic_risk",
    "build_nested",
    "compute_weights",
    "default_model_counts",
    "default_sigma_model",
    "delta_v_limit",
    "evaluate_real",
    "fit_all",
    "generate_data",
    "info_criterion_weights",
    "jma_program",
    "lama_criterion_value",
    "lama_program",
    "load_csv",
    "min_norm_ls",
    "mma_program",
    "order_by_cp",
    "phi",
    "projection",
    "relative_losses",
    "risk_surface",
    "rng_for",
    "run_simulation",
    "sigma_hat",
    "simplex_project",
    "single_model_risk",
    "solve_simplex_qp",
    "theorem1_matrices",
    "theorem2_matrices",
    "validate_rmt",
    "validate_theorem1",
    "variance_penalized_weights",
    "xi",
    "__version__",
]
