"""Knowledge-based trust: joint inference of triple truth, extraction
correctness, and source/extractor quality from noisy extractions."""

from .model import (DataItem, ExtractionRecord, ExtractorKey, FusionConfig,
                    ObservationStore, Posteriors, QualityParams, SourceKey,
                    clamp, ingest_records)
from .multi_layer import MultiLayerResult, multilayer_em
from .single_layer import PairSource, SingleLayerResult, single_layer_em

__all__ = [
    "DataItem", "ExtractionRecord", "ExtractorKey", "FusionConfig",
    "ObservationStore", "Posteriors", "QualityParams", "SourceKey",
    "clamp", "ingest_records",
    "MultiLayerResult", "multilayer_em",
    "PairSource", "SingleLayerResult", "single_layer_em",
]
