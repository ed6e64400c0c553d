"""Steerable multi-objective Bayesian optimization with an advisor in the loop."""

from .acquisition import (
    AcquisitionOptions,
    Candidate,
    CandidateBatch,
    default_reference_point,
    generate_batch,
    hypervolume_2d,
    nehvi_mc,
)
from .advisor import (
    AdvisorDecision,
    AdvisorEndpointConfig,
    AdvisorPolicy,
    build_prompt,
    select_llm,
    select_scripted,
)
from .domain import (
    AxisSpec,
    DimensionError,
    Fidelity,
    Observation,
    ObjectiveSpace,
    ParameterSpace,
    RangeError,
    dominates,
    pareto_front,
)
from .session import Mode, SessionConfig, SessionState, Status, create_session, load, persist
from .surrogate import GaussianProcessModel, KernelHyperparameters, fit, predict, sample_posterior
from .testbed import (
    EvaluationSimulator,
    QuadraticObjective,
    SyntheticApp,
    app_by_id,
    builtin_apps,
    evaluate_true,
    load_apps,
    simulate_evaluation,
)

__version__ = "0.1.0"
