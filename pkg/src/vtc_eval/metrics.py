"""Interval-exact detection and identification metrics, and frame log-loss."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import (
    K,
    LABELS,
    NS_PER_SECOND,
    Annotation,
    EvalMap,
    Timeline,
    TimeSpan,
    VoiceType,
    region_durations,
)
from .errors import InputError, NoReferenceSpeechError, UnknownRecordingError
from .formats import LabelMatrix, ScoreMatrix

LOG_LOSS_EPS = 1e-7

_POP = tuple(bin(m).count("1") for m in range(1 << K))


@dataclass(frozen=True)
class MetricComponents:
    """Identification error components, in integer nanoseconds.

    ``correct + miss + confusion == total_reference`` holds exactly.
    """

    correct: int = 0
    miss: int = 0
    false_alarm: int = 0
    confusion: int = 0
    total_reference: int = 0

    def __add__(self, other: "MetricComponents") -> "MetricComponents":
        if not isinstance(other, MetricComponents):
            return NotImplemented
        return MetricComponents(
            *(getattr(self, f.name) + getattr(other, f.name) for f in fields(self))
        )

    def __radd__(self, other):
        if other == 0:
            return self
        return NotImplemented

    def seconds(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) / NS_PER_SECOND for f in fields(self)}

    def scaled(self, factor: int) -> "MetricComponents":
        return MetricComponents(*(getattr(self, f.name) * factor for f in fields(self)))


@dataclass(frozen=True)
class DetectionCounts:
    """Per-class durations (ns) of reference, hypothesis and their overlap."""

    intersection: int = 0
    reference: int = 0
    hypothesis: int = 0

    def __add__(self, other: "DetectionCounts") -> "DetectionCounts":
        if not isinstance(other, DetectionCounts):
            return NotImplemented
        return DetectionCounts(
            self.intersection + other.intersection,
            self.reference + other.reference,
            self.hypothesis + other.hypothesis,
        )


class PRF(NamedTuple):
    precision: float
    recall: float
    f_score: float


class Rates(NamedTuple):
    ier: float
    pct_correct: float
    pct_miss: float
    pct_fa: float
    pct_confusion: float


def _state_weights(r: int, h: int) -> tuple[int, int, int, int, int]:
    only_r = _POP[r & ~h]
    only_h = _POP[h & ~r]
    return (
        _POP[r & h],
        max(0, only_r - only_h),
        max(0, only_h - only_r),
        min(only_r, only_h),
        _POP[r],
    )


# (correct, miss, false_alarm, confusion, total) multiplicities per state
STATE_WEIGHTS = {
    (r, h): _state_weights(r, h) for r in range(1 << K) for h in range(1 << K)
}


def components_from_states(states: Mapping[tuple[int, int], int]) -> MetricComponents:
    """Fold ``(ref_mask, hyp_mask) -> duration`` into identification components."""
    acc = [0, 0, 0, 0, 0]
    for key, d in states.items():
        w = STATE_WEIGHTS[key]
        for i in range(5):
            acc[i] += d * w[i]
    return MetricComponents(*acc)


def detection_from_states(
    states: Mapping[tuple[int, int], int]
) -> tuple[DetectionCounts, ...]:
    out = []
    for j in range(K):
        bit = 1 << j
        inter = ref = hyp = 0
        for (r, h), d in states.items():
            if r & bit:
                ref += d
                if h & bit:
                    inter += d
            if h & bit:
                hyp += d
        out.append(DetectionCounts(inter, ref, hyp))
    return tuple(out)


def _regions(eval_map: EvalMap, recording_id: str) -> Timeline:
    try:
        return eval_map[recording_id]
    except KeyError:
        raise UnknownRecordingError([recording_id]) from None


def _check_pair(ref: Annotation, hyp: Annotation) -> None:
    if ref.recording_id != hyp.recording_id:
        raise InputError(
            f"recording id mismatch: {ref.recording_id!r} vs {hyp.recording_id!r}"
        )


def detection_counts(
    ref: Annotation, hyp: Annotation, eval_map: EvalMap, label: VoiceType
) -> DetectionCounts:
    _check_pair(ref, hyp)
    states = region_durations(ref, hyp, _regions(eval_map, ref.recording_id))
    return detection_from_states(states)[label.index]


def prf(counts: DetectionCounts) -> PRF:
    """Precision, recall and F; empty/empty scores (1, 1, 1)."""
    i, r, h = counts.intersection, counts.reference, counts.hypothesis
    if r == 0 and h == 0:
        return PRF(1.0, 1.0, 1.0)
    precision = i / h if h else 0.0
    recall = i / r if r else 0.0
    f = 2 * i / (r + h) if i else 0.0
    return PRF(precision, recall, f)


def f_fraction(counts: DetectionCounts) -> Fraction:
    """Exact F-score, used where ties must be decided exactly."""
    i, r, h = counts.intersection, counts.reference, counts.hypothesis
    if r == 0 and h == 0:
        return Fraction(1)
    return Fraction(2 * i, r + h)


def identification_components(
    ref: Annotation, hyp: Annotation, eval_map: EvalMap
) -> MetricComponents:
    _check_pair(ref, hyp)
    states = region_durations(ref, hyp, _regions(eval_map, ref.recording_id))
    return components_from_states(states)


def rates(components: MetricComponents) -> Rates:
    total = components.total_reference
    if total <= 0:
        raise NoReferenceSpeechError()
    errors = components.miss + components.false_alarm + components.confusion
    return Rates(
        errors / total,
        100.0 * components.correct / total,
        100.0 * components.miss / total,
        100.0 * components.false_alarm / total,
        100.0 * components.confusion / total,
    )


def macro_average(per_class_f: Sequence[float]) -> float:
    """Unweighted mean of the four per-class F-scores."""
    values = [float(v) for v in per_class_f]
    if len(values) != K:
        raise InputError(f"expected {K} per-class values, got {len(values)}")
    return math.fsum(values) / K


def log_loss(labels: LabelMatrix, scores: ScoreMatrix) -> float:
    """Mean over frames of the summed per-class binary cross-entropy."""
    if labels.grid != scores.grid:
        raise InputError(f"geometry mismatch: {labels.grid} vs {scores.grid}")
    if labels.n_frames == 0:
        raise InputError("log-loss over zero frames")
    y = labels.labels.astype(np.float64)
    p = np.clip(scores.scores.astype(np.float64), LOG_LOSS_EPS, 1.0 - LOG_LOSS_EPS)
    per_frame = -(y * np.log(p) + (1.0 - y) * np.log1p(-p)).sum(axis=1)
    return float(per_frame.mean())


def collar_eval_map(
    eval_map: EvalMap, references: Mapping[str, Annotation], collar: float
) -> dict[str, Timeline]:
    """Remove ``±collar`` seconds around every reference boundary."""
    if collar < 0:
        raise InputError("collar must be non-negative")
    half = round(collar * NS_PER_SECOND)
    out = {}
    for rid, regions in eval_map.items():
        ref = references.get(rid)
        if half == 0 or ref is None or not ref.entries:
            out[rid] = regions.support()
            continue
        points = {p for e in ref.entries for p in (e.span.onset_ns, e.span.offset_ns)}
        holes = Timeline(tuple(TimeSpan(max(0, p - half), p + half) for p in points if p + half > 0))
        out[rid] = regions.difference(holes)
    return out


class RecordingScore(NamedTuple):
    """Everything one recording contributes to a pooled report."""

    recording_id: str
    components: MetricComponents
    detection: tuple[DetectionCounts, ...]
    evaluated: int  # ns of evaluated audio


def score_recording(ref: Annotation, hyp: Annotation, regions: Timeline) -> RecordingScore:
    _check_pair(ref, hyp)
    regions = regions.support()
    states = region_durations(ref, hyp, regions)
    return RecordingScore(
        ref.recording_id,
        components_from_states(states),
        detection_from_states(states),
        regions.duration_ns,
    )


def pool(scores: Iterable[RecordingScore]) -> tuple[MetricComponents, tuple[DetectionCounts, ...]]:
    components = MetricComponents()
    detection = [DetectionCounts()] * K
    for s in scores:
        components = components + s.components
        detection = [a + b for a, b in zip(detection, s.detection)]
    return components, tuple(detection)


def per_class_prf(detection: Sequence[DetectionCounts]) -> dict[VoiceType, PRF]:
    return {label: prf(c) for label, c in zip(LABELS, detection)}

