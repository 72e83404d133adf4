"""Progressive ensemble activations for ReLU deployments.

Train with an ensemble of ReLU and a smooth activation whose mixing
coefficient anneals from 0 to 1 over three phases, then export a
network containing ReLU activations only.
"""

__version__ = "0.1.0"

from .activations import ActivationKind
from .ensemble import EnsembleActivation, collapse_to_relu
from .models import ActivationSlot, ModelSpec, build, swap_activation
from .schedule import PhaseSchedule, alpha_at
from .tensor import Tensor
from .training import LRSchedule, MetricsRecord, TrainConfig, evaluate, train

__all__ = [
    "ActivationKind",
    "ActivationSlot",
    "EnsembleActivation",
    "LRSchedule",
    "MetricsRecord",
    "ModelSpec",
    "PhaseSchedule",
    "Tensor",
    "TrainConfig",
    "alpha_at",
    "build",
    "collapse_to_relu",
    "evaluate",
    "swap_activation",
    "train",
    "__version__",
]
