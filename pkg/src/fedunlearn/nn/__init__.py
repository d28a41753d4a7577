"""From-scratch neural network core: architectures, forward/backward,
SGD with momentum, clipping, l2 projection, and checkpoint files."""

from .arch import (
    ArchitectureError,
    ArchSpec,
    Conv2D,
    Dense,
    MaxPool,
    arch_from_dict,
    arch_to_dict,
    feature_shapes,
    init_weights,
    mlp,
    paper_cnn,
    param_count,
    param_layout,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .network import (
    ModelParams,
    NumericalError,
    ShapeMismatchError,
    evaluate_accuracy,
    forward,
    loss_and_grad,
    predict_classes,
)
from .ops import OptimizerState, clip_grad, project_l2, project_model, sgd_step

__all__ = [
    "ArchSpec",
    "ArchitectureError",
    "CheckpointError",
    "Conv2D",
    "Dense",
    "MaxPool",
    "ModelParams",
    "NumericalError",
    "OptimizerState",
    "ShapeMismatchError",
    "arch_from_dict",
    "arch_to_dict",
    "clip_grad",
    "evaluate_accuracy",
    "feature_shapes",
    "forward",
    "init_weights",
    "load_checkpoint",
    "loss_and_grad",
    "mlp",
    "paper_cnn",
    "param_count",
    "param_layout",
    "predict_classes",
    "project_l2",
    "project_model",
    "save_checkpoint",
    "sgd_step",
]
