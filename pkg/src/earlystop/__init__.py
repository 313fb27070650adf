"""Early-stopped SGD, decentralized SGD and SVRG with their stopping-time bounds."""

from ._random import derive_seed, make_stream
from ._validation import BoundConditionError
from .dsgd import (
    ConnectivityMatrix,
    diffusion_coefficient,
    dispersion_quantities,
    dsgd_step_size,
    ifo_bound_dsgd,
    make_topology,
    run_dsgd,
    tau_bound_dsgd,
)
from .estimators import DecentralizedSGD, EarlyStoppingSGD, EarlyStoppingSVRG
from .generalization import (
    TestDistribution,
    generalization_bound_continuous,
    generalization_bound_discrete,
    mc_generalization_gap,
)
from .harness import (
    ExperimentConfig,
    TrialSummary,
    estimate_expected_tau,
    optional_stopping_selftest,
    report,
)
from .measures import (
    Coupling,
    EmpiricalMeasure,
    discrete_support_bound,
    optimal_coupling,
    sample_empirical,
    third_moment,
    wasserstein,
)
from .problems import FiniteSumObjective, LossFunction, make_problem, quadratic_problem, tanh_composite_problem
from .records import BoundReport, RunRecord
from .sgd import (
    SgdConfig,
    SyntheticDriftBias,
    ZeroBias,
    ifo_bound_sgd,
    post_stationarity_bound,
    run_sgd,
    step_size_cor32,
    tau_bound_cor32,
    tau_bound_prop31,
)
from .svrg import (
    GammaCertificate,
    SvrgConfig,
    gamma_from_recursion,
    gamma_lower_bound_check,
    ifo_bound_svrg,
    run_svrg,
    svrg_hyperparams,
    tau_bound_svrg,
)

__version__ = "0.1.0"
