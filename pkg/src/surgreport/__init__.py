"""surgreport: surgical video annotations to captions, detections, and reports.

The library turns triplet-annotated surgical videos and externally produced
per-frame detection logits into deterministic frame/clip captions,
calibrated multi-label detections, text and detection metrics, and
structured surgical reports.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .calibration import (
    CalibrationResult,
    ReliabilityBins,
    ece,
    fit_temperature,
    nll,
    reliability_bins,
)
from .captions import (
    ClipCaption,
    FrameCaption,
    PhaseSegment,
    parse_clip_caption,
    render_clip_text,
    synthesize_clip_caption,
    synthesize_frame_caption,
)
from .dataset import (
    DatasetSplit,
    FrameAnnotation,
    Triplet,
    VideoRecord,
    load_annotations,
    parse_annotations,
    phase_duration_table,
    serialize_annotations,
    split_dataset,
)
from .detection import (
    ClassWeights,
    DetectionSet,
    LogitsRecord,
    PatchSequence,
    class_weights,
    patch_count,
    patchify,
    probabilities_from_logits,
    threshold_detect,
    truth_bits,
    unpatchify,
    weighted_bce,
)
from .embeddings import EmbeddedText, EmbeddingTable, deterministic_token_embeddings
from .errors import (
    AnnotationError,
    ConfigError,
    EndpointError,
    GrammarError,
    MissingCredentialError,
    SurgReportError,
    TransportError,
)
from .metrics import (
    AveragePrecision,
    BertScore,
    ClassificationMetrics,
    MetricReport,
    average_precision,
    bertscore,
    bleu,
    classification_metrics,
    rouge,
    tokenize,
)
from .report import (
    EndpointConfig,
    MergedTimeline,
    PromptRequest,
    SurgicalReport,
    llm_generate,
    merge_timeline,
    offline_report,
    render_prompt,
)
from .vocab import Vocabulary, default_vocabulary, load_vocabulary
from .windowing import ClipWindow, window_starts, window_video

__all__ = [
    "__version__",
    "AnnotationError",
    "AveragePrecision",
    "BertScore",
    "CalibrationResult",
    "ClassificationMetrics",
    "ClassWeights",
    "ClipCaption",
    "ClipWindow",
    "ConfigError",
    "DatasetSplit",
    "DetectionSet",
    "EmbeddedText",
    "EmbeddingTable",
    "EndpointConfig",
    "EndpointError",
    "FrameAnnotation",
    "FrameCaption",
    "GrammarError",
    "LogitsRecord",
    "MergedTimeline",
    "MetricReport",
    "MissingCredentialError",
    "PatchSequence",
    "PhaseSegment",
    "PromptRequest",
    "SurgReportError",
    "SurgicalReport",
    "TransportError",
    "Triplet",
    "VideoRecord",
    "Vocabulary",
    "average_precision",
    "bertscore",
    "bleu",
    "class_weights",
    "classification_metrics",
    "default_vocabulary",
    "deterministic_token_embeddings",
    "ece",
    "fit_temperature",
    "llm_generate",
    "load_annotations",
    "load_vocabulary",
    "merge_timeline",
    "nll",
    "offline_report",
    "parse_annotations",
    "parse_clip_caption",
    "patch_count",
    "patchify",
    "phase_duration_table",
    "probabilities_from_logits",
    "reliability_bins",
    "render_clip_text",
    "render_prompt",
    "rouge",
    "serialize_annotations",
    "split_dataset",
    "synthesize_clip_caption",
    "synthesize_frame_caption",
    "threshold_detect",
    "tokenize",
    "truth_bits",
    "unpatchify",
    "weighted_bce",
    "window_starts",
    "window_video",
]
