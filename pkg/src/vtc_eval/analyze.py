"""Threshold tuning, per-child stratification, dataset statistics, agreement."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .core import LABELS, Annotation, EvalMap, VoiceType, region_durations
from .decode import DecodeConfig, decode_class
from .errors import InputError, UnknownRecordingError
from .formats import MetadataTable, ScoreMatrix
from .metrics import (
    DetectionCounts,
    MetricComponents,
    RecordingScore,
    detection_from_states,
    f_fraction,
    macro_average,
    per_class_prf,
    pool,
    prf,
    rates,
    score_recording,
)
from .stats import OlsFit, ols_fit

logger = logging.getLogger(__name__)


# -- threshold tuning ---------------------------------------------------------


@dataclass(frozen=True)
class ClassTuning:
    best_threshold: float
    best_f: float
    curve: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class TuneResult:
    classes: dict[VoiceType, ClassTuning]

    def __getitem__(self, label: VoiceType) -> ClassTuning:
        return self.classes[label]

    def to_config(self, base: DecodeConfig | None = None) -> DecodeConfig:
        config = base or DecodeConfig()
        for label, tuning in self.classes.items():
            config = config.with_threshold(label, tuning.best_threshold)
        return config


def threshold_grid(grid_step: float = 0.01) -> list[float]:
    n = round(1.0 / grid_step)
    if n <= 0 or not math.isclose(n * grid_step, 1.0, rel_tol=1e-9):
        raise InputError("grid_step must divide 1")
    return [k / n for k in range(n + 1)]


def _empty(rid: str) -> Annotation:
    return Annotation(rid)


def tune_thresholds(
    scores: Sequence[ScoreMatrix],
    references: Mapping[str, Annotation],
    eval_map: EvalMap,
    grid_step: float = 0.01,
    base: DecodeConfig | None = None,
) -> TuneResult:
    """Per-class threshold maximizing pooled F on a development set.

    Ties go to the lowest threshold (favours recall).
    """
    if not scores:
        raise InputError("empty development set")
    missing = [s.recording_id for s in scores if s.recording_id not in eval_map]
    if missing:
        raise UnknownRecordingError(missing)
    base = base or DecodeConfig()
    grid = threshold_grid(grid_step)
    result = {}
    for label in LABELS:
        prepared = []
        for matrix in scores:
            rid = matrix.recording_id
            ref = references.get(rid) or _empty(rid)
            ref = Annotation(rid, tuple(e for e in ref.entries if e.label is label))
            prepared.append((matrix, matrix.grid.boundaries_ns(), ref))
        curve = []
        best = None
        for threshold in grid:
            config = base.with_threshold(label, threshold)
            pooled = DetectionCounts()
            for matrix, edges, ref in prepared:
                rid = matrix.recording_id
                hyp = Annotation(rid, tuple(decode_class(matrix, label, config, edges)))
                states = region_durations(ref, hyp, eval_map[rid].support())
                pooled = pooled + detection_from_states(states)[label.index]
            f = f_fraction(pooled)
            curve.append((threshold, float(f)))
            if best is None or f > best[1]:
                best = (threshold, f)
        result[label] = ClassTuning(best[0], float(best[1]), tuple(curve))
    return TuneResult(result)


# -- per-child stratification -------------------------------------------------


@dataclass(frozen=True)
class ChildPoint:
    child_id: str
    snr: float
    c50: float
    pct_miss: float
    pct_fa: float
    pct_confusion: float
    pct_correct: float
    n_files: int
    components: MetricComponents


METRIC_FIELDS = ("pct_miss", "pct_fa", "pct_confusion", "pct_correct")
COVARIATES = ("snr", "c50")


def per_child_metrics(
    runs: Mapping[str, MetricComponents],
    metadata: MetadataTable,
    durations: Mapping[str, int] | None = None,
) -> list[ChildPoint]:
    """Pool components per child, then rate them (duration-weighted).

    Child-level SNR and C50 are means of the file values weighted by
    ``durations`` (ns of evaluated audio per file); without it, by reference
    speech duration.
    """
    if len(metadata) == 0:
        raise InputError("no metadata")
    missing = [rid for rid in runs if rid not in metadata]
    if missing:
        raise InputError("recordings without metadata: " + ", ".join(sorted(missing)))
    groups: dict[str, list[str]] = {}
    for rid in sorted(runs):
        groups.setdefault(metadata[rid].child_id, []).append(rid)
    points = []
    for child in sorted(groups):
        files = groups[child]
        merged = sum((runs[f] for f in files), MetricComponents())
        if merged.total_reference == 0:
            logger.warning("child %s has no reference speech; excluded", child)
            continue
        weights = [
            (durations[f] if durations is not None else runs[f].total_reference)
            for f in files
        ]
        total_w = sum(weights)
        if total_w == 0:
            weights, total_w = [1] * len(files), len(files)
        snr = math.fsum(w * metadata[f].snr for w, f in zip(weights, files)) / total_w
        c50 = math.fsum(w * metadata[f].c50 for w, f in zip(weights, files)) / total_w
        r = rates(merged)
        points.append(
            ChildPoint(child, snr, c50, r.pct_miss, r.pct_fa, r.pct_confusion,
                       r.pct_correct, len(files), merged)
        )
    return points


@dataclass(frozen=True)
class StratFit:
    covariate: str
    metric: str
    fit: OlsFit | None
    note: str = ""


def stratify(points: Sequence[ChildPoint]) -> list[StratFit]:
    """OLS fit of every error percentage against SNR and C50."""
    fits = []
    for covariate in COVARIATES:
        for metric in METRIC_FIELDS:
            pairs = [(getattr(p, covariate), getattr(p, metric)) for p in points]
            try:
                fit = ols_fit(pairs)
            except InputError as exc:
                fits.append(StratFit(covariate, metric, None, str(exc)))
                continue
            note = "" if fit.has_band else "n = 2: confidence band omitted"
            fits.append(StratFit(covariate, metric, fit, note))
    return fits


# -- dataset statistics -------------------------------------------------------

OVERLAP_MODES = ("raw-sum", "merged")


@dataclass(frozen=True)
class StatsRow:
    corpus: str
    total_duration: int | None  # ns, None when no evaluation map was given
    per_class: dict[VoiceType, int]  # ns

    def speech_share(self) -> dict[VoiceType, float]:
        """Percentage of each class in the summed class durations."""
        total = sum(self.per_class.values())
        return {
            label: (100.0 * d / total if total else 0.0)
            for label, d in self.per_class.items()
        }


@dataclass(frozen=True)
class StatsTable:
    overlap_mode: str
    rows: tuple[StatsRow, ...]
    total: StatsRow


def _class_duration(annotations: Iterable[Annotation], label: VoiceType, mode: str) -> int:
    if mode == "raw-sum":
        return sum(a.raw_duration_ns(label) for a in annotations)
    return sum(a.merged_duration_ns(label) for a in annotations)


def dataset_stats(
    corpora: Mapping[str, Sequence[Annotation]],
    overlap_mode: str = "raw-sum",
    total_durations: Mapping[str, int] | None = None,
) -> StatsTable:
    """Cumulated per-class durations per corpus plus a totals row.

    ``raw-sum`` adds entry durations (overlapping same-class entries count
    twice); ``merged`` measures the per-recording support of each class.
    """
    if overlap_mode not in OVERLAP_MODES:
        raise InputError(f"overlap mode must be one of {', '.join(OVERLAP_MODES)}")
    if not corpora:
        raise InputError("no corpora")
    rows = []
    for corpus, members in corpora.items():
        members = list(members)
        per_class = {
            label: _class_duration(members, label, overlap_mode) for label in LABELS
        }
        total = None if total_durations is None else total_durations.get(corpus)
        rows.append(StatsRow(corpus, total, per_class))
    totals = {label: sum(r.per_class[label] for r in rows) for label in LABELS}
    known = [r.total_duration for r in rows]
    grand = None if any(t is None for t in known) else sum(known)
    return StatsTable(overlap_mode, tuple(rows), StatsRow("total", grand, totals))


# -- inter-annotator agreement ------------------------------------------------


@dataclass(frozen=True)
class AgreementRow:
    """Per-class F (%) of annotator B scored against annotator A."""

    f_scores: dict[VoiceType, float]
    macro: float
    per_file_macro: float
    recordings: tuple[str, ...]


def score_corpus(
    refs: Mapping[str, Annotation],
    hyps: Mapping[str, Annotation],
    eval_map: EvalMap,
    ids: Iterable[str],
) -> list[RecordingScore]:
    out = []
    for rid in ids:
        out.append(
            score_recording(refs.get(rid) or _empty(rid), hyps.get(rid) or _empty(rid),
                            eval_map[rid])
        )
    return out


def agreement(
    annotator_a: Mapping[str, Annotation],
    annotator_b: Mapping[str, Annotation],
    eval_map: EvalMap,
) -> AgreementRow:
    shared = sorted(set(annotator_a) & set(annotator_b))
    if not shared:
        raise InputError("annotators share no recordings")
    dropped = sorted(set(annotator_a) ^ set(annotator_b))
    if dropped:
        logger.warning("ignoring recordings annotated by only one annotator: %s",
                       ", ".join(dropped))
    unknown = [rid for rid in shared if rid not in eval_map]
    if unknown:
        raise UnknownRecordingError(unknown)
    scores = score_corpus(annotator_a, annotator_b, eval_map, shared)
    _, detection = pool(scores)
    f = {label: 100.0 * p.f_score for label, p in per_class_prf(detection).items()}
    per_file = [
        macro_average([100.0 * prf(c).f_score for c in s.detection]) for s in scores
    ]
    return AgreementRow(
        f, macro_average([f[l] for l in LABELS]),
        math.fsum(per_file) / len(per_file), tuple(shared),
    )
