"""Transparent/reflective object segmentation with boundary and reflection cues."""

from .backbone import (BackboneConfig, PyramidEncoder, SpatialReductionAttention,
                       StageConfig, make_backbone_config)
from .boundary import BoundaryEnhancer, gradient_combine, sobel_gradients
from .config import ExperimentConfig, resolve_config
from .data import (ClassTable, SampleRecord, SynthParams, augment,
                   generate_synthetic, load_dataset)
from .decoder import FeatureFusionDecoder, SegmentationHead
from .losses import (LossBreakdown, LossWeights, boundary_loss, dice_loss,
                     reflection_loss, semantic_loss, total_loss)
from .metrics import (EvalReport, ber, binary_iou, mae, multiclass_miou,
                      pixel_accuracy, weighted_fbeta)
from .model import GlassSegmenter, SemanticPrediction, build_model
from .reflection import ReflectionEnhancer, extract_reflective_pseudo_gt
from .train import Trainer, evaluate_model, load_model, predict_image

__all__ = [
    "BackboneConfig", "PyramidEncoder", "SpatialReductionAttention", "StageConfig",
    "make_backbone_config", "BoundaryEnhancer", "gradient_combine", "sobel_gradients",
    "ExperimentConfig", "resolve_config", "ClassTable", "SampleRecord", "SynthParams",
    "augment", "generate_synthetic", "load_dataset", "FeatureFusionDecoder",
    "SegmentationHead", "LossBreakdown", "LossWeights", "boundary_loss", "dice_loss",
    "reflection_loss", "semantic_loss", "total_loss", "EvalReport", "ber", "binary_iou",
    "mae", "multiclass_miou", "pixel_accuracy", "weighted_fbeta", "GlassSegmenter",
    "SemanticPrediction", "build_model", "ReflectionEnhancer",
    "extract_reflective_pseudo_gt", "Trainer", "evaluate_model", "load_model",
    "predict_image",
]

__version__ = "0.1.0"
