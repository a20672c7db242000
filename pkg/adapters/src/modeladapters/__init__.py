"""Model adapters: run classifier/detector/segmenter models and emit
interchange records for the pseudo-label engine."""
from .classtable import ClassEntry, ClassTable
from .config import AdapterConfig
from .emit import emit_records, list_images
from .errors import AdapterError, CategoryMismatchError, ModelLoadError
from .finetune import build_classifier_net, finetune_classifier, load_training_set
from .interchange import (
    build_record,
    canonical_json,
    content_hash,
    rle_counts,
    write_record,
)
from .models import RealModels, StubModels, build_models

__version__ = "0.1.0"

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "CategoryMismatchError",
    "ClassEntry",
    "ClassTable",
    "ModelLoadError",
    "RealModels",
    "StubModels",
    "build_classifier_net",
    "build_models",
    "build_record",
    "canonical_json",
    "content_hash",
    "emit_records",
    "finetune_classifier",
    "list_images",
    "load_training_set",
    "rle_counts",
    "write_record",
]
