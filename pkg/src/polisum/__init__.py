"""polisum: budgeted policy summarization under IRL and IL user models."""

__version__ = "0.1.0"

from .core import (
    DemonstrationSet,
    Policy,
    Summary,
    TabularMDP,
    Trajectory,
    unseen_states,
)
from .il import GrfClassifier, KernelSpec, al_extract
from .irl import MaxEntConfig, MaxEntIrl, maxent_reconstruct, scot_extract
from .solvers import fitted_q_iteration, value_iteration

__all__ = [
    "DemonstrationSet",
    "GrfClassifier",
    "KernelSpec",
    "MaxEntConfig",
    "MaxEntIrl",
    "Policy",
    "Summary",
    "TabularMDP",
    "Trajectory",
    "al_extract",
    "fitted_q_iteration",
    "maxent_reconstruct",
    "scot_extract",
    "unseen_states",
    "value_iteration",
]
