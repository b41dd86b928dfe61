"""CALM: cluster-aligned learning from demonstration.

Demonstrations are clustered into mean trajectories under dynamic time
warping; at run time a hidden-Markov alignment tracks where the agent
sits along each cluster, and a gradient controller reproduces the best
matching motion, recovering from perturbations and switching clusters
when the evidence does.
"""

from .alignment import (
    KERNEL_FAMILIES,
    AlignmentState,
    TransitionKernel,
    emission,
    forward_update,
    init_alignment,
    log_marginal,
    posterior,
    predict_next,
    rbf,
    transition_matrix,
    transition_row,
)
from .clustering import (
    ClusterModel,
    FitConfig,
    barycenter_update,
    estimate_emission_cov,
    fit,
)
from .controller import (
    ControllerConfig,
    ControllerState,
    attractor,
    g_gradient,
    g_value,
    select_cluster,
    step,
    velocity_gain,
)
from .datasets import DATASET_KINDS, OVERLAP_CROSSING, generate_dataset
from .errors import (
    CalmError,
    DegeneratePointError,
    InvalidArgumentError,
    SchemaError,
)
from .io import load_dataset, load_model, save_dataset, save_model
from .sim import (
    HeadingCheck,
    PerturbationEvent,
    RolloutResult,
    evaluate,
    load_perturbation_script,
    overlap_heading_check,
    rollout,
    rollout_to_csv,
    save_perturbation_script,
)
from .trajectory import (
    Dataset,
    MeanTrajectory,
    Trajectory,
    dtw_path,
    dtwd,
    estimate_speeds,
    resample_uniform,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentState",
    "CalmError",
    "ClusterModel",
    "ControllerConfig",
    "ControllerState",
    "DATASET_KINDS",
    "Dataset",
    "DegeneratePointError",
    "FitConfig",
    "HeadingCheck",
    "InvalidArgumentError",
    "KERNEL_FAMILIES",
    "MeanTrajectory",
    "OVERLAP_CROSSING",
    "PerturbationEvent",
    "RolloutResult",
    "SchemaError",
    "Trajectory",
    "TransitionKernel",
    "attractor",
    "barycenter_update",
    "dtw_path",
    "dtwd",
    "emission",
    "estimate_emission_cov",
    "estimate_speeds",
    "evaluate",
    "fit",
    "forward_update",
    "g_gradient",
    "g_value",
    "generate_dataset",
    "init_alignment",
    "load_dataset",
    "load_model",
    "load_perturbation_script",
    "log_marginal",
    "overlap_heading_check",
    "posterior",
    "predict_next",
    "rbf",
    "resample_uniform",
    "rollout",
    "rollout_to_csv",
    "save_dataset",
    "save_model",
    "save_perturbation_script",
    "select_cluster",
    "step",
    "transition_matrix",
    "transition_row",
    "velocity_gain",
]
