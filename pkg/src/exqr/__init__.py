"""Quantile regression at extreme and intermediate quantile levels."""

from .errors import (
    ConfigError,
    CrossingViolationError,
    DegenerateBasisError,
    DesignError,
    DomainError,
    ExqrError,
    GeneratorError,
    InfeasibleConstraintsError,
    MomentError,
    SpacingDegenerateError,
    TruncationError,
    UnboundedError,
    UnboundedFrontierError,
    UnsupportedModelError,
)
from .extreme_limit import (
    LimitDistribution,
    LimitSample,
    PoissonRealization,
    draw_limit,
    gradient_condition,
    limit_objective,
    sample_limit_distribution,
    sample_points,
    solve_limit,
)
from .harness import (
    CovariateModel,
    ExperimentConfig,
    GeneratorSpec,
    central_approx,
    generate,
    run_qq_experiment,
)
from .intermediate import cross_cov_factor, feasible_scaling, intermediate_ci, omega0, variance_factor
from .qr_core import (
    Dataset,
    QuantileFit,
    QuantileProcess,
    check_loss,
    fit,
    fit_process,
    frontier_fit,
    optimality_certificate,
)
from .tail_index import (
    estimate_tail,
    heterogeneity_estimate,
    pickands_variance,
    pickands_xi,
    spacing_ratio,
    spacing_ratio_limit,
)
from .tails import (
    HeterogeneityProfile,
    TailModel,
    TailType,
    eta,
    k_function,
    make_model,
    normalization_constants,
)

__version__ = "0.1.0"
