"""Interval algebra over half-open time spans.

All times are stored as integer nanoseconds so that boundary sorting and
partition identities are exact; the ``onset``/``offset``/``duration``
properties give decimal seconds back for I/O.
"""

from __future__ import annotations

import bisect
import enum
import math
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from operator import itemgetter
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np

from .errors import InputError, UnknownRecordingError

NS_PER_SECOND = 1_000_000_000


def to_ns(seconds) -> int:
    """Convert seconds (float, int, Decimal or numeric string) to integer ns."""
    if isinstance(seconds, int):
        return seconds * NS_PER_SECOND
    if isinstance(seconds, str):
        try:
            value = Decimal(seconds.strip())
        except InvalidOperation:
            raise ValueError(f"not a number: {seconds!r}") from None
        if not value.is_finite():
            raise ValueError(f"not a finite number: {seconds!r}")
        return int((value * NS_PER_SECOND).to_integral_value(ROUND_HALF_EVEN))
    if isinstance(seconds, Decimal):
        return int((seconds * NS_PER_SECOND).to_integral_value(ROUND_HALF_EVEN))
    seconds = float(seconds)
    if not math.isfinite(seconds):
        raise ValueError(f"not a finite number: {seconds!r}")
    return int(round(seconds * NS_PER_SECOND))


def to_seconds(ns: int) -> float:
    return ns / NS_PER_SECOND


class VoiceType(str, enum.Enum):
    KCHI = "KCHI"
    OCH = "OCH"
    MAL = "MAL"
    FEM = "FEM"

    def __str__(self):
        return self.value

    @property
    def index(self) -> int:
        return _LABEL_INDEX[self]


LABELS: tuple[VoiceType, ...] = tuple(VoiceType)
_LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}
K = len(LABELS)


def as_voice_type(label) -> VoiceType:
    try:
        return VoiceType(str(label))
    except ValueError:
        raise InputError(f"unknown voice type {label!r}") from None


@dataclass(frozen=True, order=True, slots=True)
class TimeSpan:
    """Half-open interval ``[onset, offset)`` in integer nanoseconds."""

    onset_ns: int
    offset_ns: int

    def __post_init__(self):
        if self.offset_ns <= self.onset_ns:
            raise InputError(
                f"empty or inverted span [{self.onset_ns}, {self.offset_ns}) ns"
            )

    @classmethod
    def from_seconds(cls, onset, offset) -> "TimeSpan":
        return cls(to_ns(onset), to_ns(offset))

    @property
    def onset(self) -> float:
        return self.onset_ns / NS_PER_SECOND

    @property
    def offset(self) -> float:
        return self.offset_ns / NS_PER_SECOND

    @property
    def duration_ns(self) -> int:
        return self.offset_ns - self.onset_ns

    def duration(self) -> float:
        return self.duration_ns / NS_PER_SECOND

    def intersection(self, other: "TimeSpan") -> "TimeSpan | None":
        lo = max(self.onset_ns, other.onset_ns)
        hi = min(self.offset_ns, other.offset_ns)
        return TimeSpan(lo, hi) if hi > lo else None

    def __contains__(self, t_ns: int) -> bool:
        return self.onset_ns <= t_ns < self.offset_ns


def _support_pairs(pairs: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    merged: list[list[int]] = []
    for lo, hi in sorted(pairs):
        if merged and lo <= merged[-1][1]:
            if hi > merged[-1][1]:
                merged[-1][1] = hi
        else:
            merged.append([lo, hi])
    return [(lo, hi) for lo, hi in merged]


@dataclass(frozen=True)
class Timeline:
    """An ordered sequence of spans; not necessarily normalized."""

    spans: tuple[TimeSpan, ...] = ()

    @classmethod
    def from_seconds(cls, pairs: Iterable[tuple[float, float]]) -> "Timeline":
        return cls(tuple(TimeSpan.from_seconds(a, b) for a, b in pairs))

    @classmethod
    def _from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "Timeline":
        return cls(tuple(TimeSpan(a, b) for a, b in pairs))

    def __iter__(self) -> Iterator[TimeSpan]:
        return iter(self.spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __bool__(self) -> bool:
        return bool(self.spans)

    def pairs(self) -> list[tuple[int, int]]:
        return [(s.onset_ns, s.offset_ns) for s in self.spans]

    def to_seconds(self) -> list[tuple[float, float]]:
        return [(s.onset, s.offset) for s in self.spans]

    def support(self) -> "Timeline":
        return Timeline._from_pairs(_support_pairs(self.pairs()))

    def is_normalized(self) -> bool:
        return all(a.offset_ns < b.onset_ns for a, b in zip(self.spans, self.spans[1:]))

    @property
    def duration_ns(self) -> int:
        """Sum of span durations (overlaps counted twice unless normalized)."""
        return sum(s.duration_ns for s in self.spans)

    def duration(self) -> float:
        return self.duration_ns / NS_PER_SECOND

    def extent(self) -> TimeSpan | None:
        if not self.spans:
            return None
        return TimeSpan(
            min(s.onset_ns for s in self.spans), max(s.offset_ns for s in self.spans)
        )

    def union(self, other: "Timeline") -> "Timeline":
        return Timeline(self.spans + other.spans).support()

    def intersection(self, other: "Timeline") -> "Timeline":
        """Intersection of the two supports."""
        a = _support_pairs(self.pairs())
        b = _support_pairs(other.pairs())
        out = []
        i = j = 0
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if hi > lo:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return Timeline._from_pairs(out)

    def difference(self, other: "Timeline") -> "Timeline":
        """Points of ``self`` not covered by ``other`` (normalized)."""
        holes = _support_pairs(other.pairs())
        out = []
        j = 0
        for lo, hi in _support_pairs(self.pairs()):
            while j < len(holes) and holes[j][1] <= lo:
                j += 1
            k = j
            cur = lo
            while k < len(holes) and holes[k][0] < hi:
                if holes[k][0] > cur:
                    out.append((cur, holes[k][0]))
                cur = max(cur, holes[k][1])
                k += 1
            if cur < hi:
                out.append((cur, hi))
        return Timeline._from_pairs(out)


def support(timeline: Timeline) -> Timeline:
    """Sorted, disjoint, non-touching cover of the same points."""
    return timeline.support()


class Entry(NamedTuple):
    span: TimeSpan
    label: VoiceType


@dataclass(frozen=True)
class Annotation:
    """Multiset of labelled spans for one recording. Entries may overlap."""

    recording_id: str
    entries: tuple[Entry, ...] = ()

    @classmethod
    def from_tuples(cls, recording_id: str, items: Iterable[tuple]) -> "Annotation":
        """Build from ``(onset_s, offset_s, label)`` triples."""
        return cls(
            recording_id,
            tuple(
                Entry(TimeSpan.from_seconds(on, off), as_voice_type(label))
                for on, off, label in items
            ),
        )

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def timeline(self, label: VoiceType | None = None) -> Timeline:
        """Raw (non-normalized) timeline of entries, optionally for one label."""
        return Timeline(
            tuple(e.span for e in self.entries if label is None or e.label == label)
        )

    def raw_duration_ns(self, label: VoiceType | None = None) -> int:
        return sum(
            e.span.duration_ns for e in self.entries if label is None or e.label == label
        )

    def merged_duration_ns(self, label: VoiceType) -> int:
        return self.timeline(label).support().duration_ns

    def to_tuples(self) -> list[tuple[float, float, str]]:
        return [(e.span.onset, e.span.offset, e.label.value) for e in self.entries]

    def sorted(self) -> "Annotation":
        return Annotation(
            self.recording_id,
            tuple(sorted(self.entries, key=lambda e: (e.span, e.label.value))),
        )


EvalMap = Mapping[str, Timeline]


def normalize_eval_map(eval_map: Mapping[str, Timeline]) -> dict[str, Timeline]:
    return {rid: tl.support() for rid, tl in eval_map.items()}


def _eval_timeline(eval_map: EvalMap, recording_id: str) -> Timeline:
    try:
        return eval_map[recording_id]
    except KeyError:
        raise UnknownRecordingError([recording_id]) from None


def crop(annotation: Annotation, eval_map: EvalMap) -> Annotation:
    """Clip every entry to the evaluated regions of its recording."""
    regions = _eval_timeline(eval_map, annotation.recording_id).support().pairs()
    starts = [lo for lo, _ in regions]
    out = []
    for entry in annotation.entries:
        on, off = entry.span.onset_ns, entry.span.offset_ns
        k = max(0, bisect.bisect_right(starts, on) - 1)
        while k < len(regions) and regions[k][0] < off:
            lo, hi = max(on, regions[k][0]), min(off, regions[k][1])
            if hi > lo:
                out.append(Entry(TimeSpan(lo, hi), entry.label))
            k += 1
    return Annotation(annotation.recording_id, tuple(out))


class Region(NamedTuple):
    span: TimeSpan
    ref_labels: frozenset
    hyp_labels: frozenset


def _mask_to_set(mask: int) -> frozenset:
    return _MASK_SETS[mask]


_MASK_SETS = tuple(
    frozenset(label for i, label in enumerate(LABELS) if m >> i & 1) for m in range(1 << K)
)


def homogeneous_regions(
    ref: Annotation, hyp: Annotation, regions: Timeline
) -> list[tuple[int, int, int, int]]:
    """Sweep the boundaries of ``ref``, ``hyp`` and ``regions``.

    Returns maximal ``(start_ns, end_ns, ref_mask, hyp_mask)`` tuples covering
    ``support(regions)`` exactly; bit ``i`` of a mask is set when label
    ``LABELS[i]`` is active. Same-label overlaps count once.
    """
    events: list[tuple[int, int, int]] = []
    append = events.append
    for entry in ref.entries:
        idx = _LABEL_INDEX[entry.label]
        append((entry.span.onset_ns, idx, 1))
        append((entry.span.offset_ns, idx, -1))
    for entry in hyp.entries:
        idx = K + _LABEL_INDEX[entry.label]
        append((entry.span.onset_ns, idx, 1))
        append((entry.span.offset_ns, idx, -1))
    for span in regions.spans:
        append((span.onset_ns, 2 * K, 1))
        append((span.offset_ns, 2 * K, -1))
    events.sort(key=itemgetter(0))

    counts = [0] * (2 * K + 1)
    out: list[tuple[int, int, int, int]] = []
    mask = 0  # ref bits 0..K-1, hyp bits K..2K-1
    prev_t = None
    n = len(events)
    i = 0
    low = (1 << K) - 1
    while i < n:
        t = events[i][0]
        if prev_t is not None and t > prev_t and counts[2 * K] > 0:
            r, h = mask & low, mask >> K
            if out and out[-1][1] == prev_t and out[-1][2] == r and out[-1][3] == h:
                out[-1] = (out[-1][0], t, r, h)
            else:
                out.append((prev_t, t, r, h))
        while i < n and events[i][0] == t:
            _, idx, delta = events[i]
            c = counts[idx] + delta
            counts[idx] = c
            if idx < 2 * K:
                if c > 0:
                    mask |= 1 << idx
                else:
                    mask &= ~(1 << idx)
            i += 1
        prev_t = t
    return out


def decompose(ref: Annotation, hyp: Annotation, eval_map: EvalMap) -> list[Region]:
    """Partition the evaluated regions into homogeneous label-set regions."""
    if ref.recording_id != hyp.recording_id:
        raise InputError(
            f"recording id mismatch: {ref.recording_id!r} vs {hyp.recording_id!r}"
        )
    regions = _eval_timeline(eval_map, ref.recording_id)
    return [
        Region(TimeSpan(a, b), _mask_to_set(r), _mask_to_set(h))
        for a, b, r, h in homogeneous_regions(ref, hyp, regions)
    ]


def region_durations(
    ref: Annotation, hyp: Annotation, regions: Timeline
) -> Counter:
    """Total ns spent in each ``(ref_mask, hyp_mask)`` state."""
    acc: Counter = Counter()
    for a, b, r, h in homogeneous_regions(ref, hyp, regions):
        acc[r, h] += b - a
    return acc


@dataclass(frozen=True)
class FrameGrid:
    """Uniform frames: frame ``i`` covers ``[start + i*step, start + (i+1)*step)``."""

    step: float
    start: float = 0.0
    count: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise InputError(f"frame step must be positive, got {self.step}")
        if self.count < 0:
            raise InputError(f"frame count must be non-negative, got {self.count}")

    def boundaries_ns(self) -> np.ndarray:
        """``count + 1`` frame edges in ns."""
        idx = np.arange(self.count + 1, dtype=np.float64)
        return np.rint((self.start + idx * self.step) * NS_PER_SECOND).astype(np.int64)

    def midpoints_ns(self) -> np.ndarray:
        idx = np.arange(self.count, dtype=np.float64) + 0.5
        return np.rint((self.start + idx * self.step) * NS_PER_SECOND).astype(np.int64)

    @property
    def step_ns(self) -> int:
        return to_ns(self.step)

    @property
    def end(self) -> float:
        return self.start + self.count * self.step
