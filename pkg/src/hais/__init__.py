"""Partition functions and log likelihoods of continuous energy models by
Hamiltonian annealed importance sampling."""

__version__ = "0.1.0"

from .anneal import (
    ESTIMATORS,
    HaisConfig,
    LogZEstimate,
    Schedule,
    convergence_sweep,
    intermediate_energy,
    log_mean_exp,
    reference_for,
    run_chain,
)
from .errors import ContractViolation, DegenerateDataError, InputError, ModelFileError, NonFiniteDynamics
from .kernel import KernelConfig, PhasePoint, accept_reject, hais_transition, leapfrog, refresh_momentum
from .likelihood import LikelihoodReport, analysis_log_likelihood, generative_log_likelihood
from .models import (
    BilinearGenerative,
    CoordinateBound,
    EnergyModel,
    GaussianReference,
    LinearGenerative,
    McRbm,
    PoeModel,
    analytic_log_z,
    posterior_model,
)

__all__ = [
    "ESTIMATORS",
    "HaisConfig",
    "LogZEstimate",
    "Schedule",
    "convergence_sweep",
    "intermediate_energy",
    "log_mean_exp",
    "reference_for",
    "run_chain",
    "ContractViolation",
    "DegenerateDataError",
    "InputError",
    "ModelFileError",
    "NonFiniteDynamics",
    "KernelConfig",
    "PhasePoint",
    "accept_reject",
    "hais_transition",
    "leapfrog",
    "refresh_momentum",
    "LikelihoodReport",
    "analysis_log_likelihood",
    "generative_log_likelihood",
    "BilinearGenerative",
    "CoordinateBound",
    "EnergyModel",
    "GaussianReference",
    "LinearGenerative",
    "McRbm",
    "PoeModel",
    "analytic_log_z",
    "posterior_model",
]
