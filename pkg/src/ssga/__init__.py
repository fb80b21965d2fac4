"""Stepwise global-local aggregation for online video object detection.

A minimal query-based detector whose per-frame predictions refine stage by
stage against cached features of previous frames, with a cosine-similarity
early exit and a reconfigurable streaming runtime.
"""

from .aggregation import AggregationBlock, roi_extract
from .attention import MultiHeadCrossAttention
from .boxes import box_cxcywh_to_xyxy, box_iou, box_xyxy_to_cxcywh, generalized_box_iou
from .checkpoint import load_checkpoint, save_checkpoint, weight_checksum
from .config import NEVER_STOP, SSGAConfig, TrainConfig, read_config_file, write_config_file
from .detector import Detection, FeatureMap, Frame, GroundTruth, SingleFrameDetector
from .evaluation import (
    EvalResult,
    SweepSpec,
    compute_ap,
    evaluate_dataset,
    stage_statistics,
    sweep,
)
from .matching import detection_loss, hungarian_match, matching_cost
from .refinement import (
    RefinementTrace,
    SSGADetector,
    StageState,
    order_neighbors,
    should_stop,
    training_loss_all_stages,
)
from .runtime import MemoryBank, MemoryEntry, StreamResult, reconfigure, stream_step
from .synthetic import (
    BenchmarkSpec,
    ObjectSpec,
    SceneSpec,
    VideoClip,
    degrade_frame,
    generate_benchmark,
    generate_clip,
    read_dataset,
    write_dataset,
)
from .training import train_model

__all__ = [
    "AggregationBlock",
    "BenchmarkSpec",
    "Detection",
    "EvalResult",
    "FeatureMap",
    "Frame",
    "GroundTruth",
    "MemoryBank",
    "MemoryEntry",
    "MultiHeadCrossAttention",
    "NEVER_STOP",
    "ObjectSpec",
    "RefinementTrace",
    "SSGAConfig",
    "SSGADetector",
    "SceneSpec",
    "SingleFrameDetector",
    "StageState",
    "StreamResult",
    "SweepSpec",
    "TrainConfig",
    "VideoClip",
    "box_cxcywh_to_xyxy",
    "box_iou",
    "box_xyxy_to_cxcywh",
    "compute_ap",
    "degrade_frame",
    "detection_loss",
    "evaluate_dataset",
    "generalized_box_iou",
    "generate_benchmark",
    "generate_clip",
    "hungarian_match",
    "load_checkpoint",
    "matching_cost",
    "order_neighbors",
    "read_config_file",
    "read_dataset",
    "reconfigure",
    "roi_extract",
    "save_checkpoint",
    "should_stop",
    "stage_statistics",
    "stream_step",
    "sweep",
    "train_model",
    "training_loss_all_stages",
    "weight_checksum",
    "write_config_file",
    "write_dataset",
]
