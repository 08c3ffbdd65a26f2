"""Readers and writers for RTTM, UEM, score matrices and metadata tables."""

from __future__ import annotations

import csv
import io
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping

import numpy as np

from .core import (
    K,
    LABELS,
    Annotation,
    Entry,
    FrameGrid,
    Timeline,
    TimeSpan,
    VoiceType,
    to_ns,
)
from .errors import InputError, ParseError

logger = logging.getLogger(__name__)

DEFAULT_FRAME_STEP = 0.010
SCORE_HEADER = ("time",) + tuple(label.value for label in LABELS)
METADATA_HEADER = ("file_id", "child_id", "snr", "c50")

BINARY_MAGIC = b"VTCS"
BINARY_VERSION = 1
_BINARY_HEADER = struct.Struct("<4sIIQdd")

IGNORE = "IGNORE"


def _text(stream) -> IO[str]:
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _lines(stream) -> Iterator[tuple[int, str]]:
    """Yield ``(line_number, stripped_line)`` skipping blanks and comments."""
    for lineno, raw in enumerate(_text(stream), start=1):
        line = raw.strip()
        if not line or line[0] in ";#":
            continue
        yield lineno, line


def _seconds(token: str, what: str, lineno: int, source) -> int:
    try:
        return to_ns(token)
    except ValueError:
        raise ParseError(f"non-numeric {what} {token!r}", lineno, source) from None


# -- label maps ---------------------------------------------------------------


def parse_label_map(stream, source=None) -> dict[str, VoiceType | None]:
    """Read ``from,to`` rows; ``to`` is a voice type or ``IGNORE`` (-> None)."""
    mapping: dict[str, VoiceType | None] = {}
    for lineno, line in _lines(stream):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2:
            raise ParseError("expected 'from,to'", lineno, source)
        src, dst = parts
        if (src, dst) == ("from", "to"):
            continue
        if dst == IGNORE:
            mapping[src] = None
        elif dst in VoiceType.__members__:
            mapping[src] = VoiceType(dst)
        else:
            raise ParseError(f"invalid target label {dst!r}", lineno, source)
    return mapping


# -- RTTM ---------------------------------------------------------------------


def parse_rttm(
    stream, label_map: Mapping[str, VoiceType | None] | None = None, source=None
) -> dict[str, Annotation]:
    """Parse SPEAKER records into one :class:`Annotation` per file id.

    Labels outside the four voice types are rejected unless ``label_map``
    maps them (to a voice type, or to ``None`` to drop the record).
    """
    entries: dict[str, list[Entry]] = {}
    for lineno, line in _lines(stream):
        fields = line.split()
        if len(fields) != 10:
            raise ParseError(
                f"expected 10 fields, found {len(fields)}", lineno, source
            )
        if fields[0] != "SPEAKER":
            logger.debug("skipping %s record at line %d", fields[0], lineno)
            continue
        file_id = fields[1]
        onset = _seconds(fields[3], "onset", lineno, source)
        duration = _seconds(fields[4], "duration", lineno, source)
        if onset < 0:
            raise ParseError("negative onset", lineno, source)
        if duration <= 0:
            raise ParseError("duration ≤ 0", lineno, source)
        name = fields[7]
        if label_map is not None and name in label_map:
            label = label_map[name]
            if label is None:
                continue
        elif name in VoiceType.__members__:
            label = VoiceType(name)
        else:
            raise ParseError(f"unknown label {name!r}", lineno, source)
        entries.setdefault(file_id, []).append(
            Entry(TimeSpan(onset, onset + duration), label)
        )
    return {fid: Annotation(fid, tuple(es)) for fid, es in entries.items()}


def _ms(ns: int) -> int:
    """Round ns to ms, half to even."""
    q, r = divmod(ns, 1_000_000)
    if r > 500_000 or (r == 500_000 and q % 2 == 1):
        q += 1
    return q


def _fmt_ms(ms: int) -> str:
    sign = "-" if ms < 0 else ""
    q, r = divmod(abs(ms), 1000)
    return f"{sign}{q}.{r:03d}"


def format_rttm_line(recording_id: str, span: TimeSpan, label: VoiceType) -> str:
    on = _ms(span.onset_ns)
    dur = max(1, _ms(span.offset_ns) - on)
    return (
        f"SPEAKER {recording_id} 1 {_fmt_ms(on)} {_fmt_ms(dur)} "
        f"<NA> <NA> {label.value} <NA> <NA>"
    )


def write_rttm(annotations: Mapping[str, Annotation] | Iterable[Annotation]) -> str:
    """Serialize annotations, sorted by (recording id, onset, label)."""
    if isinstance(annotations, Mapping):
        annotations = annotations.values()
    records = []
    for ann in annotations:
        for e in ann.entries:
            records.append((ann.recording_id, e.span.onset_ns, e.label.value,
                            e.span.offset_ns, e))
    records.sort(key=lambda r: r[:4])
    return "".join(
        format_rttm_line(rid, e.span, e.label) + "\n" for rid, _, _, _, e in records
    )


# -- UEM ----------------------------------------------------------------------


def parse_uem(stream, source=None) -> dict[str, Timeline]:
    """Parse ``file_id channel onset offset`` lines into normalized timelines."""
    spans: dict[str, list[TimeSpan]] = {}
    for lineno, line in _lines(stream):
        fields = line.split()
        if len(fields) != 4:
            raise ParseError(f"expected 4 fields, found {len(fields)}", lineno, source)
        onset = _seconds(fields[2], "onset", lineno, source)
        offset = _seconds(fields[3], "offset", lineno, source)
        if onset < 0:
            raise ParseError("negative onset", lineno, source)
        if offset <= onset:
            raise ParseError("offset ≤ onset", lineno, source)
        spans.setdefault(fields[0], []).append(TimeSpan(onset, offset))
    return {fid: Timeline(tuple(s)).support() for fid, s in spans.items()}


def write_uem(eval_map: Mapping[str, Timeline]) -> str:
    lines = []
    for rid in sorted(eval_map):
        for span in eval_map[rid].support():
            lines.append(
                f"{rid} 1 {_fmt_ms(_ms(span.onset_ns))} {_fmt_ms(_ms(span.offset_ns))}\n"
            )
    return "".join(lines)


# -- score and label matrices -------------------------------------------------


def _check_matrix(values: np.ndarray, what: str) -> None:
    if values.ndim != 2 or values.shape[1] != K:
        raise InputError(f"{what} must have shape (N, {K}), got {values.shape}")


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Per-frame class scores in [0, 1], stored as float32 (N x 4)."""

    recording_id: str
    scores: np.ndarray
    frame_step: float = DEFAULT_FRAME_STEP
    start_time: float = 0.0

    def __post_init__(self):
        scores = np.array(self.scores, dtype=np.float32, order="C")
        if scores.ndim == 1 and scores.size == 0:
            scores = scores.reshape(0, K)
        _check_matrix(scores, "scores")
        if scores.size and not (np.all(scores >= 0) and np.all(scores <= 1)):
            raise InputError("score out of range [0, 1] (or NaN)")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        FrameGrid(self.frame_step, self.start_time, 0)

    @property
    def n_frames(self) -> int:
        return self.scores.shape[0]

    @property
    def grid(self) -> FrameGrid:
        return FrameGrid(self.frame_step, self.start_time, self.n_frames)

    def frame_times(self) -> np.ndarray:
        return self.start_time + np.arange(self.n_frames) * self.frame_step

    def __eq__(self, other):
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (
            self.recording_id == other.recording_id
            and self.frame_step == other.frame_step
            and self.start_time == other.start_time
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(frozen=True, eq=False)
class LabelMatrix:
    """Per-frame binary targets (N x 4), same geometry as a ScoreMatrix."""

    recording_id: str
    labels: np.ndarray
    frame_step: float = DEFAULT_FRAME_STEP
    start_time: float = 0.0

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim == 1 and labels.size == 0:
            labels = labels.reshape(0, K)
        _check_matrix(labels, "labels")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise InputError("labels must be 0 or 1")
        labels = np.array(labels, dtype=np.uint8, order="C")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def zeros(cls, recording_id: str, grid: FrameGrid) -> "LabelMatrix":
        return cls(recording_id, np.zeros((grid.count, K), np.uint8), grid.step, grid.start)

    @property
    def n_frames(self) -> int:
        return self.labels.shape[0]

    @property
    def grid(self) -> FrameGrid:
        return FrameGrid(self.frame_step, self.start_time, self.n_frames)

    def as_scores(self) -> ScoreMatrix:
        return ScoreMatrix(
            self.recording_id, self.labels.astype(np.float32), self.frame_step, self.start_time
        )

    def __eq__(self, other):
        if not isinstance(other, LabelMatrix):
            return NotImplemented
        return (
            self.recording_id == other.recording_id
            and self.grid == other.grid
            and np.array_equal(self.labels, other.labels)
        )


STEP_TOLERANCE = 1e-6


def parse_scores(
    stream, recording_id: str = "", default_step: float = DEFAULT_FRAME_STEP, source=None
) -> ScoreMatrix:
    """Read a ``time,KCHI,OCH,MAL,FEM`` CSV; the frame step is inferred."""
    reader = csv.reader(_text(stream))
    header = None
    times: list[float] = []
    rows: list[list[float]] = []
    for lineno, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip():
            continue
        cells = [c.strip() for c in row]
        if header is None:
            if tuple(cells) != SCORE_HEADER:
                missing = [c for c in SCORE_HEADER if c not in cells]
                detail = f"missing column(s) {', '.join(missing)}" if missing else (
                    f"header must be {','.join(SCORE_HEADER)}")
                raise ParseError(detail, lineno, source)
            header = cells
            continue
        if len(cells) != len(SCORE_HEADER):
            raise ParseError(
                f"missing column: expected {len(SCORE_HEADER)} values, found {len(cells)}",
                lineno, source,
            )
        try:
            values = [float(c) for c in cells]
        except ValueError:
            raise ParseError("non-numeric value", lineno, source) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite value", lineno, source)
        t, scores = values[0], values[1:]
        if any(s < 0 or s > 1 for s in scores):
            raise ParseError("score out of range", lineno, source)
        if times and t <= times[-1]:
            raise ParseError("times must be strictly increasing", lineno, source)
        if len(times) >= 2:
            step = times[1] - times[0]
            expected = times[0] + len(times) * step
            if abs(t - expected) > STEP_TOLERANCE:
                raise ParseError("non-constant frame step", lineno, source)
        times.append(t)
        rows.append(scores)
    if header is None:
        raise ParseError("missing header", None, source)
    if len(times) >= 2:
        step = times[1] - times[0]
    else:
        step = default_step
        logger.warning(
            "%s: fewer than two frames, using default step %.3f s",
            source or recording_id or "scores", default_step,
        )
    start = times[0] if times else 0.0
    matrix = np.array(rows, dtype=np.float32).reshape(len(rows), K)
    return ScoreMatrix(recording_id, matrix, step, start)


def write_scores(matrix: ScoreMatrix) -> str:
    """CSV serialization; scores use 9 significant digits (float32-exact)."""
    out = [",".join(SCORE_HEADER)]
    times = matrix.frame_times()
    for t, row in zip(times, matrix.scores):
        out.append(f"{t:.9f}," + ",".join(f"{float(v):.9g}" for v in row))
    return "\n".join(out) + "\n"


def write_scores_binary(matrix: ScoreMatrix) -> bytes:
    header = _BINARY_HEADER.pack(
        BINARY_MAGIC, BINARY_VERSION, K, matrix.n_frames,
        float(matrix.frame_step), float(matrix.start_time),
    )
    return header + matrix.scores.astype("<f4", copy=False).tobytes(order="C")


def parse_scores_binary(data: bytes, recording_id: str = "", source=None) -> ScoreMatrix:
    """Read the little-endian ``VTCS`` layout (header then row-major float32)."""
    if len(data) < _BINARY_HEADER.size:
        raise ParseError("truncated header", None, source)
    magic, version, k, n, step, start = _BINARY_HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise ParseError(f"bad magic {magic!r}", None, source)
    if version != BINARY_VERSION:
        raise ParseError(f"unsupported version {version}", None, source)
    if k != K:
        raise ParseError(f"expected {K} classes, found {k}", None, source)
    expected = _BINARY_HEADER.size + 4 * K * n
    if len(data) != expected:
        raise ParseError(f"expected {expected} bytes, found {len(data)}", None, source)
    scores = np.frombuffer(data, dtype="<f4", offset=_BINARY_HEADER.size).reshape(n, K)
    if n and not (np.all(scores >= 0) and np.all(scores <= 1)):
        raise ParseError("score out of range", None, source)
    return ScoreMatrix(recording_id, scores.astype(np.float32), step, start)


def load_scores(path: str | Path, default_step: float = DEFAULT_FRAME_STEP) -> ScoreMatrix:
    """Load a ``.csv`` or ``.vtcs`` score file; the recording id is the file stem."""
    path = Path(path)
    if path.suffix == ".vtcs":
        return parse_scores_binary(path.read_bytes(), path.stem, source=path)
    with open(path, encoding="utf-8", newline="") as f:
        return parse_scores(f, path.stem, default_step, source=path)


# -- metadata -----------------------------------------------------------------


@dataclass(frozen=True)
class MetadataRow:
    file_id: str
    child_id: str
    snr: float
    c50: float


@dataclass
class MetadataTable:
    rows: dict[str, MetadataRow] = field(default_factory=dict)

    def __getitem__(self, file_id: str) -> MetadataRow:
        return self.rows[file_id]

    def __contains__(self, file_id) -> bool:
        return file_id in self.rows

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows.values())


def parse_metadata(stream, source=None) -> MetadataTable:
    """Read a ``file_id,child_id,snr,c50`` CSV (extra columns are ignored)."""
    reader = csv.reader(_text(stream))
    table = MetadataTable()
    columns = None
    for lineno, row in enumerate(reader, start=1):
        cells = [c.strip() for c in row]
        if not cells or not "".join(cells):
            continue
        if columns is None:
            if cells[0].startswith("#"):
                continue
            missing = [c for c in METADATA_HEADER if c not in cells]
            if missing:
                raise ParseError(f"missing column(s) {', '.join(missing)}", lineno, source)
            columns = [cells.index(c) for c in METADATA_HEADER]
            continue
        if len(cells) < len(METADATA_HEADER):
            raise ParseError("missing column", lineno, source)
        file_id, child_id, snr, c50 = (cells[i] for i in columns)
        try:
            snr_v, c50_v = float(snr), float(c50)
        except ValueError:
            raise ParseError("non-numeric snr/c50", lineno, source) from None
        if file_id in table.rows:
            raise ParseError(f"duplicate file_id {file_id!r}", lineno, source)
        table.rows[file_id] = MetadataRow(file_id, child_id, snr_v, c50_v)
    return table


# -- path helpers -------------------------------------------------------------


def read_rttm(path, label_map=None) -> dict[str, Annotation]:
    with open(path, encoding="utf-8") as f:
        return parse_rttm(f, label_map, source=path)


def read_uem(path) -> dict[str, Timeline]:
    with open(path, encoding="utf-8") as f:
        return parse_uem(f, source=path)


def read_metadata(path) -> MetadataTable:
    with open(path, encoding="utf-8", newline="") as f:
        return parse_metadata(f, source=path)


def read_label_map(path) -> dict[str, VoiceType | None]:
    with open(path, encoding="utf-8") as f:
        return parse_label_map(f, source=path)

