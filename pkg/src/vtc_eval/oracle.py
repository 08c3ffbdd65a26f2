"""Brute-force frame-sampling counterpart of the interval-exact metrics.

Nothing here shares code with :mod:`vtc_eval.core` sweeps: annotations are
sampled at frame midpoints and every metric is recounted frame by frame.
It is slow on purpose and only used to cross-check.

Random cases come from a SplitMix64 generator so that other implementations
can regenerate identical fixtures::

    state = (state + 0x9E3779B97F4A7C15) mod 2**64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
    return z ^ (z >> 31)

Uniform variates are ``(next() >> 11) * 2**-53``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    K,
    LABELS,
    NS_PER_SECOND,
    Annotation,
    Entry,
    FrameGrid,
    Timeline,
    TimeSpan,
    to_ns,
)
from .errors import InputError
from .formats import LabelMatrix
from .metrics import DetectionCounts, MetricComponents

__all__ = [
    "FrameGrid",
    "RandomCaseConfig",
    "SplitMix64",
    "frame_metrics",
    "random_case",
    "sample_labels",
]

_MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * MIX2) & _MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform on [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def exponential(self, mean: float) -> float:
        return -mean * math.log1p(-self.uniform())

    def randrange(self, n: int) -> int:
        return int(self.uniform() * n)


def derive_seed(seed: int, index: int) -> int:
    """Independent seed for the ``index``-th case of a seeded batch."""
    rng = SplitMix64(seed ^ ((index * GOLDEN_GAMMA) & _MASK64))
    return rng.next_u64()


def _label_column(annotation: Annotation, j: int, mids: np.ndarray) -> np.ndarray:
    col = np.zeros(mids.shape[0], dtype=bool)
    for entry in annotation.entries:
        if entry.label is LABELS[j]:
            col |= (mids >= entry.span.onset_ns) & (mids < entry.span.offset_ns)
    return col


def _midpoints(grid: FrameGrid) -> np.ndarray:
    centers = grid.start + (np.arange(grid.count, dtype=np.float64) + 0.5) * grid.step
    return np.rint(centers * NS_PER_SECOND).astype(np.int64)


def sample_labels(annotation: Annotation, grid: FrameGrid) -> LabelMatrix:
    """Frame ``i`` is active for class ``j`` iff its midpoint lies in an entry."""
    mids = _midpoints(grid)
    labels = np.zeros((grid.count, K), dtype=np.uint8)
    for j in range(K):
        labels[:, j] = _label_column(annotation, j, mids)
    return LabelMatrix(annotation.recording_id, labels, grid.step, grid.start)


def sample_timeline(timeline: Timeline, grid: FrameGrid) -> np.ndarray:
    mids = _midpoints(grid)
    active = np.zeros(grid.count, dtype=bool)
    for span in timeline:
        active |= (mids >= span.onset_ns) & (mids < span.offset_ns)
    return active


def frame_metrics(
    ref_labels: LabelMatrix,
    hyp_labels: LabelMatrix,
    evaluated: np.ndarray | None = None,
) -> tuple[MetricComponents, tuple[DetectionCounts, ...]]:
    """Recount identification components and detection counts per frame.

    Each frame weighs ``step`` (in ns). ``evaluated`` optionally masks out
    frames outside the evaluation map.
    """
    if ref_labels.grid != hyp_labels.grid:
        raise InputError(f"grid mismatch: {ref_labels.grid} vs {hyp_labels.grid}")
    step_ns = ref_labels.grid.step_ns
    r = ref_labels.labels.astype(bool)
    h = hyp_labels.labels.astype(bool)
    if evaluated is not None:
        r = r[evaluated]
        h = h[evaluated]
    n_r = r.sum(axis=1)
    n_h = h.sum(axis=1)
    n_both = (r & h).sum(axis=1)
    only_r = n_r - n_both
    only_h = n_h - n_both
    components = MetricComponents(
        correct=int(n_both.sum()) * step_ns,
        miss=int(np.maximum(0, only_r - only_h).sum()) * step_ns,
        false_alarm=int(np.maximum(0, only_h - only_r).sum()) * step_ns,
        confusion=int(np.minimum(only_r, only_h).sum()) * step_ns,
        total_reference=int(n_r.sum()) * step_ns,
    )
    detection = tuple(
        DetectionCounts(
            int((r[:, j] & h[:, j]).sum()) * step_ns,
            int(r[:, j].sum()) * step_ns,
            int(h[:, j].sum()) * step_ns,
        )
        for j in range(K)
    )
    return components, detection


def oracle_metrics(
    ref: Annotation, hyp: Annotation, regions: Timeline, step: float
) -> tuple[MetricComponents, tuple[DetectionCounts, ...]]:
    """Sample everything on a grid covering ``regions`` and recount."""
    extent = regions.extent()
    if extent is None:
        return MetricComponents(), (DetectionCounts(),) * K
    start = extent.onset_ns / NS_PER_SECOND
    count = math.ceil((extent.offset_ns - extent.onset_ns) / NS_PER_SECOND / step)
    grid = FrameGrid(step, start, count)
    return frame_metrics(
        sample_labels(ref, grid), sample_labels(hyp, grid), sample_timeline(regions, grid)
    )


def distinct_boundaries(ref: Annotation, hyp: Annotation, regions: Timeline) -> int:
    points = set()
    for ann in (ref, hyp):
        for e in ann.entries:
            points.add(e.span.onset_ns)
            points.add(e.span.offset_ns)
    for span in regions:
        points.add(span.onset_ns)
        points.add(span.offset_ns)
    return len(points)


@dataclass(frozen=True)
class RandomCaseConfig:
    """Generator settings.

    ``rate`` is the number of reference segments per second per class,
    ``mean_length`` the mean segment length (exponential), ``overlap_prob``
    the chance that a segment starts inside the previous one of its class.
    The hypothesis perturbs the reference: boundary ``jitter`` (seconds),
    dropped segments (``miss_prob``), label swaps (``swap_prob``) and extra
    segments at ``false_alarm_ratio * rate``.
    """

    duration: float = 60.0
    rate: float = 0.05
    mean_length: float = 2.0
    overlap_prob: float = 0.2
    jitter: float = 0.3
    miss_prob: float = 0.1
    swap_prob: float = 0.15
    false_alarm_ratio: float = 0.3
    recording_id: str = "case"

    def __post_init__(self):
        if self.duration <= 0:
            raise InputError("duration must be positive")
        if self.rate < 0 or self.mean_length <= 0:
            raise InputError("rate must be >= 0 and mean_length > 0")


MIN_SEGMENT_NS = 1_000_000


def _segment_stream(rng: SplitMix64, cfg: RandomCaseConfig, rate: float, overlap: float):
    """Onset/offset pairs (ns) of one class over ``[0, duration)``."""
    end_ns = to_ns(cfg.duration)
    if rate <= 0:
        return []
    out = []
    t = rng.exponential(1.0 / rate)
    while t < cfg.duration:
        length = max(rng.exponential(cfg.mean_length), 0.01)
        on, off = to_ns(t), min(to_ns(t + length), end_ns)
        if off - on >= MIN_SEGMENT_NS:
            out.append((on, off))
        if rng.uniform() < overlap:
            t = t + rng.uniform() * length
        else:
            t = t + length + rng.exponential(1.0 / rate)
    return out


def random_case(seed: int, config: RandomCaseConfig | None = None):
    """Deterministic ``(ref, hyp, eval_map)`` triple for ``seed``."""
    cfg = config or RandomCaseConfig()
    rng = SplitMix64(seed)
    rid = cfg.recording_id
    end_ns = to_ns(cfg.duration)
    ref_entries = []
    for label in LABELS:
        for on, off in _segment_stream(rng, cfg, cfg.rate, cfg.overlap_prob):
            ref_entries.append(Entry(TimeSpan(on, off), label))

    hyp_entries = []
    jitter_ns = to_ns(cfg.jitter)
    for entry in ref_entries:
        if rng.uniform() < cfg.miss_prob:
            continue
        label = entry.label
        if rng.uniform() < cfg.swap_prob:
            label = LABELS[(label.index + 1 + rng.randrange(K - 1)) % K]
        on = entry.span.onset_ns + round((2 * rng.uniform() - 1) * jitter_ns)
        off = entry.span.offset_ns + round((2 * rng.uniform() - 1) * jitter_ns)
        on, off = max(0, on), min(end_ns, off)
        if off - on >= MIN_SEGMENT_NS:
            hyp_entries.append(Entry(TimeSpan(on, off), label))
    for label in LABELS:
        for on, off in _segment_stream(rng, cfg, cfg.rate * cfg.false_alarm_ratio, 0.0):
            hyp_entries.append(Entry(TimeSpan(on, off), label))

    eval_map = {rid: Timeline((TimeSpan(0, end_ns),))}
    return Annotation(rid, tuple(ref_entries)), Annotation(rid, tuple(hyp_entries)), eval_map


def f_score_fixture(
    targets, length: float = 100.0, recording_id: str = "fixture"
) -> tuple[Annotation, Annotation, dict[str, Timeline]]:
    """Reference/hypothesis pair whose per-class F-scores equal ``targets``.

    Each class gets a reference segment ``[0, length)`` and a hypothesis of the
    same length shifted by ``(1 - F) * length``, so ``F = 2I / (R + H)``.
    Targets are fractions in (0, 1].
    """
    targets = list(targets)
    if len(targets) != K:
        raise InputError(f"expected {K} targets")
    ref, hyp = [], []
    length_ns = to_ns(length)
    for label, f in zip(LABELS, targets):
        if not 0 < f <= 1:
            raise InputError("target F must be in (0, 1]")
        shift = round((1 - f) * length_ns)
        ref.append(Entry(TimeSpan(0, length_ns), label))
        hyp.append(Entry(TimeSpan(shift, shift + length_ns), label))
    eval_map = {recording_id: Timeline((TimeSpan(0, 2 * length_ns),))}
    return Annotation(recording_id, tuple(ref)), Annotation(recording_id, tuple(hyp)), eval_map
