"""Toy end-to-end detector: model, matching, losses, scenes, training, evaluation."""

from .boxes import giou, giou_tensor, pairwise_iou_giou
from .config import DetectorConfig, LossWeights, load_config
from .evaluate import Detections, EvalResult, evaluate, evaluate_detections, predict
from .losses import focal_loss, set_loss, sigmoid_focal_loss
from .matching import assignment_cost, hungarian_match
from .model import AnchorDetector, DecoderLayer, DetectionSet, EncoderLayer
from .scenes import Scene, generate_scenes, load_scenes, rasterize, save_scenes
from .train import (
    AdamW,
    TrainingDiverged,
    TrainResult,
    checkpoint_to_bytes,
    model_from_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "AdamW", "AnchorDetector", "DecoderLayer", "DetectionSet", "Detections", "DetectorConfig",
    "EncoderLayer", "EvalResult", "LossWeights", "Scene", "TrainResult", "TrainingDiverged",
    "assignment_cost", "checkpoint_to_bytes", "evaluate", "evaluate_detections", "focal_loss",
    "generate_scenes", "giou", "giou_tensor", "hungarian_match", "load_config", "load_scenes",
    "model_from_checkpoint", "pairwise_iou_giou", "predict", "rasterize", "save_checkpoint",
    "save_scenes", "set_loss", "sigmoid_focal_loss", "train",
]
