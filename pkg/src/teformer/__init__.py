"""Texture-aware, edge-guided semantic segmentation with a verification-first harness."""

from .ablation import AblationReport, run_ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .complexity import count_params, count_params_flops
from .config import (
    DataConfig,
    ModelConfig,
    RunConfig,
    TrainConfig,
    paper_scale,
    parse_config,
    tiny_model,
)
from .core import Align, DynamicUpsampler, FeatureMap
from .data import Palette, Sample, augment, gen_synthetic, load_tiles
from .decoder import DecoderBundle, TriBranchDecoder
from .encoder import Encoder, PyramidFeatures
from .errors import ConfigurationError, TrainingDiverged
from .estimator import TEFormerSegmenter
from .fusion import EdgeGatedFusion, SegmentationHead, SegmentationOutput
from .metrics import MetricsReport, compute_metrics, confusion_matrix
from .model import TEFormer, build_model
from .train import cross_entropy_loss, evaluate, train_loop

__version__ = "0.1.0"

__all__ = [
    "AblationReport",
    "Align",
    "ConfigurationError",
    "DataConfig",
    "DecoderBundle",
    "DynamicUpsampler",
    "EdgeGatedFusion",
    "Encoder",
    "FeatureMap",
    "MetricsReport",
    "ModelConfig",
    "Palette",
    "PyramidFeatures",
    "RunConfig",
    "Sample",
    "SegmentationHead",
    "SegmentationOutput",
    "TEFormer",
    "TEFormerSegmenter",
    "TrainConfig",
    "TrainingDiverged",
    "TriBranchDecoder",
    "augment",
    "build_model",
    "compute_metrics",
    "confusion_matrix",
    "count_params",
    "count_params_flops",
    "cross_entropy_loss",
    "evaluate",
    "gen_synthetic",
    "load_checkpoint",
    "load_tiles",
    "paper_scale",
    "parse_config",
    "run_ablation",
    "save_checkpoint",
    "tiny_model",
    "train_loop",
]
