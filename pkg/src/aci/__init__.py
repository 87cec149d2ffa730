"""Active learning of direct and spillover effect curves under network interference."""

from ._kernels import backend
from .active import RunConfig, RunTrace, distribute_evenly, run_aci, run_rta
from .assignment import GAConfig, TargetWindow, fitness, in_window_set, optimize_assignment
from .effects import EffectCurve, effect_curves, mean_potential_outcome, select_target
from .gp import (
    GPFitConfig,
    GPModel,
    KernelParams,
    TrainingSet,
    fit_hyperparameters,
    kernel_eval,
    kernel_matrix,
    lml_gradient,
    log_marginal_likelihood,
    posterior,
)
from .network import (
    Network,
    Observation,
    aggregate_neighbor_covariates,
    build_network,
    integrate,
    neighbor_exposure,
)
from .simulation import (
    OutcomeModelParams,
    SimPopulation,
    eise,
    generate_population,
    simulation_oracle,
    true_effect_curves,
    true_outcome,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend",
    "RunConfig",
    "RunTrace",
    "distribute_evenly",
    "run_aci",
    "run_rta",
    "GAConfig",
    "TargetWindow",
    "fitness",
    "in_window_set",
    "optimize_assignment",
    "EffectCurve",
    "effect_curves",
    "mean_potential_outcome",
    "select_target",
    "GPFitConfig",
    "GPModel",
    "KernelParams",
    "TrainingSet",
    "fit_hyperparameters",
    "kernel_eval",
    "kernel_matrix",
    "lml_gradient",
    "log_marginal_likelihood",
    "posterior",
    "Network",
    "Observation",
    "aggregate_neighbor_covariates",
    "build_network",
    "integrate",
    "neighbor_exposure",
    "OutcomeModelParams",
    "SimPopulation",
    "eise",
    "generate_population",
    "simulation_oracle",
    "true_effect_curves",
    "true_outcome",
]
