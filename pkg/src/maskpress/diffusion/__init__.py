"""Denoising mask predictor: model, reveal process, loss, training, inference."""

from maskpress.diffusion.gradcheck import finite_difference, grad_check
from maskpress.diffusion.inference import (
    InferenceConfig,
    InferenceTrace,
    StepTrace,
    compression_ratio,
    infer_mask,
    single_step_prune_set,
)
from maskpress.diffusion.loss import (
    LossBreakdown,
    REMOVE_THRESHOLD,
    TrainConfig,
    compute_loss,
    loss_terms,
)
from maskpress.diffusion.model import MaskModel, ModelArch, model_forward
from maskpress.diffusion.process import ForwardSample, forward_process
from maskpress.diffusion.training import (
    EpochStats,
    TrainMetrics,
    mask_prediction_scores,
    predict_retention,
    train,
)

__all__ = [
    "EpochStats",
    "ForwardSample",
    "InferenceConfig",
    "InferenceTrace",
    "LossBreakdown",
    "MaskModel",
    "ModelArch",
    "REMOVE_THRESHOLD",
    "StepTrace",
    "TrainConfig",
    "TrainMetrics",
    "compression_ratio",
    "compute_loss",
    "finite_difference",
    "forward_process",
    "grad_check",
    "infer_mask",
    "loss_terms",
    "mask_prediction_scores",
    "model_forward",
    "predict_retention",
    "single_step_prune_set",
    "train",
]
