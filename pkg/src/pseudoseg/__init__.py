"""Pseudo-label generation and evaluation for weakly supervised segmentation.

Turns per-image classifier scores, grounded box detections, and in-box
mask proposals into class-index label rasters, and measures their
quality against ground truth.  Backends are pluggable: a seeded oracle
synthesizes model outputs from ground truth with configurable noise, a
file backend replays interchange JSON produced by real models.
"""

from .backends import (
    ClassPrediction,
    Detection,
    FileBackend,
    MaskCandidate,
    NOISE_PRESETS,
    OracleBackend,
    OracleNoise,
    noise_preset,
)
from .dataio import (
    ClassEntry,
    ClassTable,
    DatasetIndex,
    ImageRecord,
    Instance,
    InterchangeRecord,
    ProducerInfo,
    RecordDetection,
    canonical_json,
    export_pseudo_labels,
    load_dataset,
    load_pseudo_labels,
    read_interchange,
    write_interchange,
)
from .errors import HashMismatchError, SchemaVersionError, ValidationError
from .maskgeom import (
    BitMask,
    Box,
    LabelRaster,
    RleMask,
    box_iou,
    clip_mask,
    containment,
    coverage,
    mask_iou,
    rle_decode,
    rle_encode,
    tight_box,
    union_masks,
)
from .metrics import (
    AblationRow,
    ConfusionAccumulator,
    EvalReport,
    ablation_report,
    ap_classification,
    ap_detection,
    miou,
)
from .pipeline import (
    GROUND_TRUTH,
    PREDICTED,
    CandidateDecision,
    Pipeline,
    PipelineConfig,
    SelectionTrace,
    compose,
    generate_dataset,
    nms_per_class,
    select_in_box,
    select_labels,
)
from .synth import make_synthetic_dataset

__version__ = "0.1.0"

__all__ = [
    "AblationRow",
    "BitMask",
    "Box",
    "CandidateDecision",
    "ClassEntry",
    "ClassPrediction",
    "ClassTable",
    "ConfusionAccumulator",
    "DatasetIndex",
    "Detection",
    "EvalReport",
    "FileBackend",
    "GROUND_TRUTH",
    "HashMismatchError",
    "ImageRecord",
    "Instance",
    "InterchangeRecord",
    "LabelRaster",
    "MaskCandidate",
    "NOISE_PRESETS",
    "OracleBackend",
    "OracleNoise",
    "PREDICTED",
    "Pipeline",
    "PipelineConfig",
    "ProducerInfo",
    "RecordDetection",
    "RleMask",
    "SchemaVersionError",
    "SelectionTrace",
    "ValidationError",
    "ablation_report",
    "ap_classification",
    "ap_detection",
    "box_iou",
    "canonical_json",
    "clip_mask",
    "compose",
    "containment",
    "coverage",
    "export_pseudo_labels",
    "generate_dataset",
    "load_dataset",
    "load_pseudo_labels",
    "make_synthetic_dataset",
    "mask_iou",
    "miou",
    "nms_per_class",
    "noise_preset",
    "read_interchange",
    "rle_decode",
    "rle_encode",
    "select_in_box",
    "select_labels",
    "tight_box",
    "union_masks",
    "write_interchange",
]
