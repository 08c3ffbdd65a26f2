import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vtc_eval.core import LABELS, Annotation, Entry, FrameGrid, Timeline, TimeSpan, VoiceType
from vtc_eval.decode import labelize
from vtc_eval.errors import InputError, NoReferenceSpeechError
from vtc_eval.formats import LabelMatrix, ScoreMatrix
from vtc_eval.metrics import (
    DetectionCounts,
    MetricComponents,
    collar_eval_map,
    detection_counts,
    identification_components,
    log_loss,
    macro_average,
    prf,
    rates,
    score_recording,
)
from vtc_eval.oracle import frame_metrics, sample_labels

from conftest import annotations, timelines

S = 1_000_000_000
KCHI, OCH, MAL, FEM = VoiceType


def ann(*items, rid="f"):
    return Annotation.from_tuples(rid, items)


def em(*pairs, rid="f"):
    return {rid: Timeline.from_seconds(pairs)}


class TestDetection:
    def test_hand_intersection(self):
        c = detection_counts(ann((0, 10, "KCHI")), ann((5, 15, "KCHI")), em((0, 20)), KCHI)
        assert c == DetectionCounts(5 * S, 10 * S, 10 * S)

    def test_identity(self):
        a = ann((0, 3, "OCH"), (5, 9, "OCH"))
        c = detection_counts(a, a, em((0, 20)), OCH)
        assert c.intersection == c.reference == c.hypothesis == 7 * S

    def test_empty_hyp(self):
        c = detection_counts(ann((0, 4, "MAL")), ann(), em((0, 20)), MAL)
        assert c == DetectionCounts(0, 4 * S, 0)

    def test_restricted_to_eval_map(self):
        c = detection_counts(ann((0, 10, "FEM")), ann((0, 10, "FEM")), em((2, 5)), FEM)
        assert c == DetectionCounts(3 * S, 3 * S, 3 * S)

    def test_union_not_double_weight(self):
        c = detection_counts(ann((0, 10, "FEM"), (5, 15, "FEM")), ann(), em((0, 20)), FEM)
        assert c.reference == 15 * S


class TestPrf:
    def test_half(self):
        assert prf(DetectionCounts(5, 10, 10)) == (0.5, 0.5, 0.5)

    def test_both_empty(self):
        assert prf(DetectionCounts(0, 0, 0)) == (1.0, 1.0, 1.0)

    def test_identity(self):
        assert prf(DetectionCounts(10, 10, 10)) == (1.0, 1.0, 1.0)

    def test_empty_hyp(self):
        assert prf(DetectionCounts(0, 10, 0)) == (0.0, 0.0, 0.0)

    def test_empty_ref(self):
        assert prf(DetectionCounts(0, 0, 10)) == (0.0, 0.0, 0.0)

    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_harmonic_mean(self, i, r, h):
        i = min(i, r, h)
        p, rc, f = prf(DetectionCounts(i, r, h))
        if p + rc > 0:
            assert f == pytest.approx(2 * p * rc / (p + rc), rel=1e-12)
        assert 0 <= f <= 1


class TestIdentification:
    def test_confusion(self):
        c = identification_components(ann((0, 10, "KCHI")), ann((0, 10, "FEM")), em((0, 10)))
        assert c == MetricComponents(0, 0, 0, 10 * S, 10 * S)

    def test_identity(self):
        a = ann((0, 3, "KCHI"), (1, 4, "FEM"))
        c = identification_components(a, a, em((0, 10)))
        assert c == MetricComponents(correct=6 * S, total_reference=6 * S)

    def test_overlapped_reference(self):
        c = identification_components(
            ann((0, 10, "KCHI"), (0, 10, "FEM")), ann((0, 10, "KCHI")), em((0, 10))
        )
        assert c == MetricComponents(10 * S, 10 * S, 0, 0, 20 * S)

    @given(annotations(), annotations(), timelines())
    def test_decomposition_identity(self, ref, hyp, regions):
        c = identification_components(ref, hyp, {"rec": regions})
        assert c.correct + c.miss + c.confusion == c.total_reference
        assert min(c.correct, c.miss, c.false_alarm, c.confusion) >= 0

    @given(annotations(), annotations(), timelines())
    def test_symmetry(self, ref, hyp, regions):
        a = identification_components(ref, hyp, {"rec": regions})
        b = identification_components(hyp, ref, {"rec": regions})
        assert (a.miss, a.false_alarm) == (b.false_alarm, b.miss)
        assert (a.correct, a.confusion) == (b.correct, b.confusion)

    @given(annotations(), annotations(), timelines(), st.integers(1, 19_999))
    def test_merge_law(self, ref, hyp, regions, cut_ms):
        cut = cut_ms * 1_000_000
        left = regions.intersection(Timeline((TimeSpan(0, cut),)))
        right = regions.intersection(Timeline((TimeSpan(cut, 20_000 * 1_000_000),)))
        whole = identification_components(ref, hyp, {"rec": regions})
        parts = [identification_components(ref, hyp, {"rec": p}) for p in (left, right)]
        assert whole == parts[0] + parts[1] == parts[1] + parts[0]
        assert sum(parts, MetricComponents()) == whole

    @given(annotations(), annotations(), st.data())
    def test_split_invariance(self, ref, hyp, data):
        regions = Timeline.from_seconds([(0, 20)])
        entries = list(hyp.entries)
        if not entries:
            return
        k = data.draw(st.integers(0, len(entries) - 1))
        e = entries[k]
        if e.span.duration_ns < 2:
            return
        mid = data.draw(st.integers(e.span.onset_ns + 1, e.span.offset_ns - 1))
        entries[k:k + 1] = [Entry(TimeSpan(e.span.onset_ns, mid), e.label),
                            Entry(TimeSpan(mid, e.span.offset_ns), e.label)]
        split = Annotation(hyp.recording_id, tuple(entries))
        a = score_recording(ref, hyp, regions)
        b = score_recording(ref, split, regions)
        assert a.detection == b.detection
        assert a.components == b.components


def step_aligned(draw, n_frames):
    items = draw(st.lists(
        st.tuples(st.integers(0, n_frames - 1), st.integers(1, 40), st.sampled_from(LABELS)),
        max_size=12,
    ))
    grid = FrameGrid(0.01, 0.0, n_frames)
    edges = grid.boundaries_ns()
    return Annotation("rec", tuple(
        Entry(TimeSpan(int(edges[a]), int(edges[min(a + n, n_frames)])), l) for a, n, l in items
    ))


class TestOracleEquivalence:
    @given(st.data())
    def test_step_aligned_exact(self, data):
        n = 200
        ref = step_aligned(data.draw, n)
        hyp = step_aligned(data.draw, n)
        grid = FrameGrid(0.01, 0.0, n)
        regions = Timeline((TimeSpan(0, int(grid.boundaries_ns()[-1])),))
        exact = score_recording(ref, hyp, regions)
        comps, det = frame_metrics(sample_labels(ref, grid), sample_labels(hyp, grid))
        assert exact.components == comps
        assert exact.detection == det

    def test_identical_matrices(self):
        y = LabelMatrix("r", np.eye(4, dtype=np.uint8).repeat(3, axis=0))
        comps, _ = frame_metrics(y, y)
        assert rates(comps).ier == 0

    def test_complementary(self):
        y = np.zeros((10, 4), np.uint8)
        y[:5, 0] = 1
        z = np.zeros((10, 4), np.uint8)
        z[5:, 0] = 1
        comps, _ = frame_metrics(LabelMatrix("r", y), LabelMatrix("r", z))
        assert comps.correct == 0

    def test_grid_mismatch(self):
        with pytest.raises(InputError):
            frame_metrics(LabelMatrix("r", np.zeros((3, 4))), LabelMatrix("r", np.zeros((4, 4))))


class TestRates:
    def test_perfect(self):
        r = rates(MetricComponents(10, 0, 0, 0, 10))
        assert r.ier == 0 and r.pct_correct == 100

    def test_confusion(self):
        r = rates(MetricComponents(0, 0, 0, 10, 10))
        assert r.ier == 1.0 and r.pct_confusion == 100

    def test_no_reference(self):
        with pytest.raises(NoReferenceSpeechError, match="no reference speech"):
            rates(MetricComponents())

    def test_percentages(self):
        r = rates(MetricComponents(correct=6, miss=3, false_alarm=2, confusion=1,
                                   total_reference=10))
        assert r == pytest.approx((0.6, 60, 30, 20, 10))


class TestMacroAverage:
    @pytest.mark.parametrize("values, expected", [
        ((79.7, 60.4, 67.6, 71.5), 69.8),
        ((68.2, 30.5, 41.2, 63.7), 50.9),
        ((68.4, 20.6, 56.7, 68.9), 53.65),
    ])
    def test_table_rows(self, values, expected):
        assert macro_average(values) == pytest.approx(expected, abs=1e-9)

    def test_needs_four(self):
        with pytest.raises(InputError):
            macro_average([1, 2, 3])


class TestLogLoss:
    def test_half(self):
        y = LabelMatrix("r", [[1, 0, 0, 0]])
        p = ScoreMatrix("r", [[0.5] * 4])
        assert log_loss(y, p) == pytest.approx(4 * math.log(2), abs=1e-9)

    def test_saturated(self):
        y = LabelMatrix("r", [[1, 0, 1, 0], [0, 0, 0, 1]])
        loss = log_loss(y, y.as_scores())
        assert loss == pytest.approx(-4 * math.log(1 - 1e-7), rel=1e-6)
        assert loss <= 5e-7

    def test_mean_invariance(self):
        y1 = LabelMatrix("r", [[1, 0, 1, 0]])
        p1 = ScoreMatrix("r", [[0.7, 0.2, 0.4, 0.9]])
        y2 = LabelMatrix("r", [[1, 0, 1, 0]] * 2)
        p2 = ScoreMatrix("r", [[0.7, 0.2, 0.4, 0.9]] * 2)
        assert log_loss(y1, p1) == pytest.approx(log_loss(y2, p2), rel=1e-12)

    def test_geometry_mismatch(self):
        with pytest.raises(InputError):
            log_loss(LabelMatrix("r", [[1, 0, 0, 0]]), ScoreMatrix("r", [[0.5] * 4], 0.02))

    def test_with_labelize(self):
        a = Annotation.from_tuples("r", [(0, 0.05, "KCHI")])
        y = labelize(a, FrameGrid(0.01, 0, 10))
        p = ScoreMatrix("r", np.full((10, 4), 0.5))
        assert log_loss(y, p) == pytest.approx(4 * math.log(2), abs=1e-9)


class TestCollar:
    def test_excises_boundaries(self):
        refs = {"f": ann((2, 5, "KCHI"))}
        out = collar_eval_map(em((0, 10)), refs, 0.25)
        assert out["f"].to_seconds() == [(0, 1.75), (2.25, 4.75), (5.25, 10)]

    def test_zero_collar_is_identity(self):
        refs = {"f": ann((2, 5, "KCHI"))}
        assert collar_eval_map(em((0, 10)), refs, 0.0) == em((0, 10))
