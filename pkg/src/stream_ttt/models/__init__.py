"""Model families, inner objectives and joint training."""

from .checkpoint import build_model, load_checkpoint, save_checkpoint
from .masking import MaskedView, mask_frame, random_masks, view_from_mask
from .neural import (NeuralModel, NeuralModelSpec, neural_forward, neural_losses_and_grads)
from .objectives import (OBJECTIVES, InnerOptions, SelfTrainConfig, batch_inner_objective,
                         inner_objective_grad)
from .quadratic import (FrameEval, QuadModelSpec, QuadraticModel, quad_main_grad,
                        quad_main_loss, quad_ssl_grad, ssl_noise)
from .state import ModelState
from .training import TrainConfig, TrainingDivergedError, joint_objective, joint_train

__all__ = [
    "FrameEval", "InnerOptions", "MaskedView", "ModelState", "NeuralModel", "NeuralModelSpec",
    "OBJECTIVES", "QuadModelSpec", "QuadraticModel", "SelfTrainConfig", "TrainConfig",
    "TrainingDivergedError", "batch_inner_objective", "build_model", "inner_objective_grad",
    "joint_objective", "joint_train", "load_checkpoint", "mask_frame", "neural_forward",
    "neural_losses_and_grads", "quad_main_grad", "quad_main_loss", "quad_ssl_grad",
    "random_masks", "save_checkpoint", "ssl_noise", "view_from_mask",
]
