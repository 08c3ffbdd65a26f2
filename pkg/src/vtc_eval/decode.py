"""Per-class thresholding of frame scores into segments."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .core import K, LABELS, Annotation, Entry, FrameGrid, TimeSpan, VoiceType, to_ns
from .errors import InputError
from .formats import LabelMatrix, ScoreMatrix

DEFAULT_THRESHOLD = 0.5


def _per_class(value, name: str) -> tuple[float, ...]:
    if isinstance(value, Mapping):
        missing = [l.value for l in LABELS if l not in value and l.value not in value]
        if missing:
            raise InputError(f"{name}: missing class(es) {', '.join(missing)}")
        return tuple(float(value.get(l, value.get(l.value))) for l in LABELS)
    if isinstance(value, (int, float)):
        return (float(value),) * K
    values = tuple(float(v) for v in value)
    if len(values) != K:
        raise InputError(f"{name}: expected {K} values, got {len(values)}")
    return values


@dataclass(frozen=True)
class DecodeConfig:
    """Decoding parameters.

    ``thresholds`` open a segment, ``offset_thresholds`` keep it open
    (hysteresis); ``None`` offsets mean "same as onset". Both accept a scalar,
    a 4-sequence in label order, or a label-keyed mapping.
    """

    thresholds: tuple[float, ...] = (DEFAULT_THRESHOLD,) * K
    offset_thresholds: tuple[float, ...] | None = None
    min_duration_on: float = 0.0
    min_duration_off: float = 0.0

    def __post_init__(self):
        onset = _per_class(self.thresholds, "thresholds")
        offset = (
            onset
            if self.offset_thresholds is None
            else _per_class(self.offset_thresholds, "offset_thresholds")
        )
        for label, on, off in zip(LABELS, onset, offset):
            if not (0.0 <= off <= on <= 1.0):
                raise InputError(
                    f"{label}: need 0 <= offset threshold ({off}) <= "
                    f"onset threshold ({on}) <= 1"
                )
        if self.min_duration_on < 0 or self.min_duration_off < 0:
            raise InputError("minimum durations must be non-negative")
        object.__setattr__(self, "thresholds", onset)
        object.__setattr__(self, "offset_thresholds", offset)

    def onset(self, label: VoiceType) -> float:
        return self.thresholds[label.index]

    def offset(self, label: VoiceType) -> float:
        return self.offset_thresholds[label.index]

    def with_threshold(self, label: VoiceType, threshold: float) -> "DecodeConfig":
        """Replace one class's onset threshold, keeping offset <= onset."""
        on = list(self.thresholds)
        off = list(self.offset_thresholds)
        hysteresis = off[label.index] != on[label.index]
        on[label.index] = threshold
        off[label.index] = min(off[label.index], threshold) if hysteresis else threshold
        return replace(self, thresholds=tuple(on), offset_thresholds=tuple(off))


def _runs(active: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start and (exclusive) end indices of runs of True."""
    padded = np.concatenate(([False], active, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return edges[0::2], edges[1::2]


def class_segments(
    column: np.ndarray, onset: float, offset: float
) -> tuple[np.ndarray, np.ndarray]:
    """Frame-index segments ``[start, end)`` for one class with hysteresis.

    A segment opens on the first frame scoring >= ``onset`` and stays open
    while scores are >= ``offset``. Thresholds are compared in float32, the
    storage type of the scores.
    """
    on = np.float32(onset)
    off = np.float32(offset)
    if on == off:
        return _runs(column >= on)
    starts, ends = _runs(column >= off)
    triggers = np.flatnonzero(column >= on)
    if triggers.size == 0:
        return starts[:0], ends[:0]
    first = np.searchsorted(triggers, starts)
    ok = first < triggers.size
    first_trigger = np.where(ok, triggers[np.minimum(first, triggers.size - 1)], -1)
    keep = ok & (first_trigger < ends)
    return first_trigger[keep], ends[keep]


def smooth(
    starts: list[int], ends: list[int], edges_ns: np.ndarray,
    min_duration_on: float, min_duration_off: float,
) -> list[tuple[int, int]]:
    """Fill gaps shorter than ``min_duration_off``, then drop segments shorter
    than ``min_duration_on``. Works on frame indices, measures in ns."""
    min_off = to_ns(min_duration_off)
    min_on = to_ns(min_duration_on)
    merged: list[list[int]] = []
    for a, b in zip(starts, ends):
        if merged and edges_ns[a] - edges_ns[merged[-1][1]] < min_off:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    return [
        (a, b) for a, b in merged if edges_ns[b] - edges_ns[a] >= min_on
    ]


def decode_class(
    scores: ScoreMatrix, label: VoiceType, config: DecodeConfig, edges: np.ndarray | None = None
) -> list[Entry]:
    if edges is None:
        edges = scores.grid.boundaries_ns()
    starts, ends = class_segments(
        scores.scores[:, label.index], config.onset(label), config.offset(label)
    )
    segments = smooth(
        starts.tolist(), ends.tolist(), edges,
        config.min_duration_on, config.min_duration_off,
    )
    return [Entry(TimeSpan(int(edges[a]), int(edges[b])), label) for a, b in segments]


def binarize(scores: ScoreMatrix, config: DecodeConfig | None = None) -> Annotation:
    """Decode each class independently; outputs for different classes may overlap."""
    config = config or DecodeConfig()
    edges = scores.grid.boundaries_ns()
    entries = []
    for label in LABELS:
        entries.extend(decode_class(scores, label, config, edges))
    return Annotation(scores.recording_id, tuple(entries))


def _frame_mask(annotation: Annotation, grid: FrameGrid) -> np.ndarray:
    mids = grid.midpoints_ns()
    labels = np.zeros((grid.count, K), dtype=np.uint8)
    for entry in annotation.entries:
        lo = np.searchsorted(mids, entry.span.onset_ns, side="left")
        hi = np.searchsorted(mids, entry.span.offset_ns, side="left")
        labels[lo:hi, entry.label.index] = 1
    return labels


def labelize(reference: Annotation, geometry: ScoreMatrix | FrameGrid) -> LabelMatrix:
    """Frame targets: 1 where the frame midpoint falls inside an entry of that class."""
    grid = geometry.grid if isinstance(geometry, ScoreMatrix) else geometry
    return LabelMatrix(
        reference.recording_id, _frame_mask(reference, grid), grid.step, grid.start
    )
