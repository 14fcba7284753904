"""Estimation and boundary-valid inference for the variance of conditional
average treatment effects in randomized experiments, plus sharp bounds on the
welfare gains of treatment targeting."""

__version__ = "0.1.0"

from .data import Dataset, FoldPlan, make_folds, validate_dataset
from .gchisq import (
    EmpiricalProcessParams,
    QuadFormCoeffs,
    critical_values,
    gchisq_cdf,
    gchisq_quantile,
    reduce_params,
)
from .inference import (
    ConfidenceInterval,
    GridConfig,
    crump_statistic,
    degenerate_aware_ci,
    homogeneity_test,
    local_power,
    multifold_ci,
    single_fold_ci,
    sqrt_ci,
)
from .multistep import (
    FoldEstimate,
    build_regressors,
    clustered_omega,
    ensemble_vcate,
    fold_estimate,
    influence_identity_check,
    sandwich_omega,
    wls_theta,
)
from .nuisance import LassoFit, NuisanceModel, fit_lasso_cv, fit_nuisance
from .simulation import (
    ExperimentCell,
    ExperimentReport,
    SimulationDesign,
    gen_dataset,
    oracle_nuisance,
    run_experiment,
    true_vcate,
)
from .twostep import (
    InfluenceEval,
    efficient_influence,
    oracle_variance_bound,
    twostep_estimate,
    twostep_naive_ci,
)
from .welfare import (
    WelfareBound,
    adversarial_design,
    transform_bound,
    welfare_bound_general,
    welfare_bound_simple,
)
