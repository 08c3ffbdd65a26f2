"""Scoring and analysis toolkit for voice type classification.

Decodes per-frame multi-label scores (KCHI, OCH, MAL, FEM) into segments,
computes interval-exact detection and identification metrics, tunes
thresholds and runs per-child, corpus and agreement analyses.
"""

__version__ = "0.1.0"

from .core import (
    LABELS,
    Annotation,
    Entry,
    FrameGrid,
    Region,
    Timeline,
    TimeSpan,
    VoiceType,
    crop,
    decompose,
    support,
)
from .decode import DecodeConfig, binarize, labelize
from .metrics import (
    PRF,
    DetectionCounts,
    MetricComponents,
    detection_counts,
    identification_components,
    log_loss,
    macro_average,
    prf,
    rates,
)

__all__ = [
    "LABELS",
    "PRF",
    "Annotation",
    "DecodeConfig",
    "DetectionCounts",
    "Entry",
    "FrameGrid",
    "MetricComponents",
    "Region",
    "TimeSpan",
    "Timeline",
    "VoiceType",
    "binarize",
    "crop",
    "decompose",
    "detection_counts",
    "identification_components",
    "labelize",
    "log_loss",
    "macro_average",
    "prf",
    "rates",
    "support",
]
