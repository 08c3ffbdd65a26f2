import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vtc_eval.analyze import (
    ChildPoint,
    agreement,
    dataset_stats,
    per_child_metrics,
    stratify,
    threshold_grid,
    tune_thresholds,
)
from vtc_eval.core import LABELS, Annotation, FrameGrid, Timeline, VoiceType
from vtc_eval.decode import binarize, labelize
from vtc_eval.errors import InputError, UnknownRecordingError
from vtc_eval.formats import MetadataRow, MetadataTable, ScoreMatrix
from vtc_eval.metrics import MetricComponents
from vtc_eval.oracle import RandomCaseConfig, random_case
from vtc_eval.stats import ols_fit, t_quantile

S = 1_000_000_000
KCHI, OCH, MAL, FEM = VoiceType


# -- tuning -------------------------------------------------------------------


def test_threshold_grid():
    g = threshold_grid(0.01)
    assert len(g) == 101 and g[0] == 0.0 and g[-1] == 1.0 and g[50] == 0.5
    with pytest.raises(InputError):
        threshold_grid(0.3)


def test_perfect_model_reaches_one():
    scores, refs, regions = [], {}, {}
    grid = FrameGrid(0.01, 0.0, 3000)
    for seed in (1, 2):
        ref, _, m = random_case(seed, RandomCaseConfig(duration=30, rate=0.2,
                                                        recording_id=f"r{seed}"))
        s = labelize(ref, grid).as_scores()
        # frame-aligned reference, so that F = 1 is attainable
        refs[ref.recording_id] = binarize(s)
        scores.append(s)
        regions.update(m)
    result = tune_thresholds(scores, refs, regions, grid_step=0.05)
    for label in LABELS:
        assert result[label].best_f == 1.0


def test_constant_scores_tie_to_lowest():
    rid = "c"
    scores = ScoreMatrix(rid, np.full((1000, 4), 0.3))
    ref = Annotation.from_tuples(rid, [(0, 10, "KCHI"), (0, 10, "FEM")])
    regions = {rid: Timeline.from_seconds([(0, 10)])}
    result = tune_thresholds([scores], {rid: ref}, regions, grid_step=0.1)
    for label in (KCHI, FEM):
        t = result[label]
        assert t.best_threshold == 0.0
        assert t.best_f == 1.0
        fs = [f for _, f in t.curve]
        assert fs[:4] == [1.0] * 4 and fs[4:] == [0.0] * 7


def test_tuning_errors():
    with pytest.raises(InputError):
        tune_thresholds([], {}, {})
    with pytest.raises(UnknownRecordingError):
        tune_thresholds([ScoreMatrix("x", np.zeros((3, 4)))], {}, {})


def test_to_config():
    rid = "c"
    scores = ScoreMatrix(rid, np.full((100, 4), 0.3))
    ref = Annotation.from_tuples(rid, [(0, 1, "KCHI")])
    result = tune_thresholds([scores], {rid: ref}, {rid: Timeline.from_seconds([(0, 1)])},
                             grid_step=0.1)
    cfg = result.to_config()
    assert cfg.onset(KCHI) == 0.0


# -- per-child ------------------------------------------------------------------


def meta(*rows):
    return MetadataTable({r[0]: MetadataRow(*r) for r in rows})


def comps(correct, miss, fa, conf):
    return MetricComponents(correct, miss, fa, conf, correct + miss + conf)


def test_single_file_child():
    pts = per_child_metrics({"f1": comps(6, 3, 2, 1)}, meta(("f1", "c1", 10.0, 5.0)))
    assert len(pts) == 1
    p = pts[0]
    assert (p.pct_correct, p.pct_miss, p.pct_fa, p.pct_confusion) == pytest.approx(
        (60, 30, 20, 10))
    assert (p.snr, p.c50, p.n_files) == (10.0, 5.0, 1)


def test_merge_is_duration_weighted():
    runs = {"a": comps(10, 0, 0, 0), "b": comps(0, 30, 0, 0)}
    pts = per_child_metrics(runs, meta(("a", "c", 0.0, 0.0), ("b", "c", 4.0, 8.0)))
    assert pts[0].pct_miss == pytest.approx(75.0)
    assert pts[0].snr == pytest.approx(3.0)


def test_explicit_durations_weight():
    runs = {"a": comps(10, 0, 0, 0), "b": comps(0, 10, 0, 0)}
    pts = per_child_metrics(runs, meta(("a", "c", 0.0, 0.0), ("b", "c", 4.0, 8.0)),
                            durations={"a": 1, "b": 1})
    assert pts[0].pct_miss == pytest.approx(50.0)
    assert pts[0].snr == pytest.approx(2.0)


def test_zero_reference_child_excluded(caplog):
    runs = {"a": MetricComponents(false_alarm=5), "b": comps(1, 1, 0, 0)}
    pts = per_child_metrics(runs, meta(("a", "c1", 0, 0), ("b", "c2", 0, 0)))
    assert [p.child_id for p in pts] == ["c2"]
    assert "no reference speech" in caplog.text


def test_missing_metadata():
    with pytest.raises(InputError, match="no metadata"):
        per_child_metrics({"a": comps(1, 0, 0, 0)}, MetadataTable())
    with pytest.raises(InputError, match="b"):
        per_child_metrics({"a": comps(1, 0, 0, 0), "b": comps(1, 0, 0, 0)},
                          meta(("a", "c", 0, 0)))


@given(st.integers(1, 1000))
def test_scale_invariance(k):
    runs = {"a": comps(3, 5, 2, 1), "b": comps(7, 1, 0, 4)}
    m = meta(("a", "c", 1.0, 2.0), ("b", "c", 3.0, 4.0))
    base = per_child_metrics(runs, m)[0]
    scaled = per_child_metrics({r: c.scaled(k) for r, c in runs.items()}, m)[0]
    for f in ("pct_miss", "pct_fa", "pct_confusion", "pct_correct", "snr", "c50"):
        assert getattr(scaled, f) == pytest.approx(getattr(base, f), rel=1e-12)


def test_stratify_shapes():
    pts = [ChildPoint(str(i), float(i), float(2 * i), i, 2 * i, 0, 50, 1, MetricComponents())
           for i in range(5)]
    fits = stratify(pts)
    assert len(fits) == 8
    miss_snr = next(f for f in fits if f.covariate == "snr" and f.metric == "pct_miss")
    assert miss_snr.fit.slope == pytest.approx(1.0)


def test_stratify_degenerate():
    pts = [ChildPoint("a", 1.0, 1.0, 1, 1, 1, 1, 1, MetricComponents())] * 3
    assert all(f.fit is None and "identical" in f.note for f in stratify(pts))


# -- OLS ------------------------------------------------------------------------


@given(st.floats(-100, 100), st.floats(-100, 100),
       st.lists(st.floats(-50, 50), min_size=3, max_size=30, unique=True))
def test_exact_line(a, b, xs):
    if max(xs) - min(xs) < 1e-3:
        return
    fit = ols_fit([(x, a + b * x) for x in xs])
    assert fit.slope == pytest.approx(b, abs=1e-9 * max(1, abs(b)) * 100)
    assert fit.intercept == pytest.approx(a, abs=1e-9 * max(1, abs(a), abs(b)) * 1000)


def test_exact_line_tight():
    fit = ols_fit([(x, 2.5 - 0.75 * x) for x in range(10)])
    assert abs(fit.slope + 0.75) < 1e-9 and abs(fit.intercept - 2.5) < 1e-9
    assert fit.residual_std == pytest.approx(0.0, abs=1e-9)


def test_hand_fit():
    fit = ols_fit([(0, 0), (1, 1), (2, 0)])
    assert fit.slope == pytest.approx(0.0, abs=1e-15)
    assert fit.intercept == pytest.approx(1 / 3)


@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3,
                max_size=40))
def test_residual_orthogonality(points):
    xs = [p[0] for p in points]
    if max(xs) - min(xs) < 1e-3:
        return
    fit = ols_fit(points)
    res = [y - fit.predict(x) for x, y in points]
    y_norm = math.sqrt(math.fsum(y * y for _, y in points)) + 1.0
    x_norm = math.sqrt(math.fsum(x * x for x in xs))
    assert abs(math.fsum(res)) <= 1e-9 * math.sqrt(len(res)) * y_norm
    assert abs(math.fsum(r * x for r, x in zip(res, xs))) <= 1e-9 * x_norm * y_norm


def test_two_points_no_band(caplog):
    fit = ols_fit([(0, 1), (1, 3)])
    assert fit.slope == 2 and fit.intercept == 1
    assert not fit.has_band and fit.ci_band(0.5) is None
    assert "band" in caplog.text


def test_errors():
    with pytest.raises(InputError):
        ols_fit([(1, 1)])
    with pytest.raises(InputError, match="identical"):
        ols_fit([(1, 1), (1, 2), (1, 3)])


def test_band_contains_fit_and_widens():
    fit = ols_fit([(0, 0.1), (1, 0.9), (2, 2.2), (3, 2.8), (4, 4.1)])
    lo_c, hi_c = fit.ci_band(fit.x_mean)
    lo_e, hi_e = fit.ci_band(10.0)
    assert lo_c < fit.predict(fit.x_mean) < hi_c
    assert hi_e - lo_e > hi_c - lo_c


@pytest.mark.parametrize("dof, tabulated", [
    (1, 12.706205), (3, 3.182446), (10, 2.228139), (30, 2.042272), (100, 1.983972),
])
def test_t_quantile_table(dof, tabulated):
    assert t_quantile(0.975, dof) == pytest.approx(tabulated, rel=1e-6)


def test_t_quantile_against_scipy():
    stats = pytest.importorskip("scipy.stats")
    for dof in (1, 2, 3, 5, 7, 20, 57, 300):
        for p in (0.6, 0.9, 0.975, 0.995, 0.05):
            assert t_quantile(p, dof) == pytest.approx(stats.t.ppf(p, dof), rel=1e-9)


# -- dataset statistics ---------------------------------------------------------


def test_stats_modes():
    a = Annotation.from_tuples("r", [(0, 10, "FEM"), (5, 15, "FEM"), (0, 2, "KCHI")])
    raw = dataset_stats({"c": [a]})
    merged = dataset_stats({"c": [a]}, overlap_mode="merged")
    assert raw.rows[0].per_class[FEM] == 20 * S
    assert merged.rows[0].per_class[FEM] == 15 * S
    assert raw.total.per_class[KCHI] == 2 * S
    assert raw.total.total_duration is None
    with pytest.raises(InputError):
        dataset_stats({"c": [a]}, overlap_mode="other")


def test_stats_totals_and_share():
    a = Annotation.from_tuples("r1", [(0, 3, "KCHI"), (3, 4, "MAL")])
    b = Annotation.from_tuples("r2", [(0, 1, "KCHI")])
    t = dataset_stats({"x": [a], "y": [b]}, total_durations={"x": 10 * S, "y": 5 * S})
    assert t.total.per_class[KCHI] == 4 * S
    assert t.total.total_duration == 15 * S
    share = t.total.speech_share()
    assert share[KCHI] == pytest.approx(80.0) and share[MAL] == pytest.approx(20.0)


@given(st.integers(1, 9999))
def test_stats_split_invariance(cut_ms):
    a = Annotation.from_tuples("r", [(0, 10, "OCH")])
    cut = cut_ms / 1000
    b = Annotation.from_tuples("r", [(0, cut, "OCH"), (cut, 10, "OCH")])
    for mode in ("raw-sum", "merged"):
        assert (dataset_stats({"c": [a]}, mode).total.per_class
                == dataset_stats({"c": [b]}, mode).total.per_class)


# -- agreement ------------------------------------------------------------------


def test_agreement_self():
    ref, _, regions = random_case(4)
    row = agreement({"case": ref}, {"case": ref}, regions)
    assert all(f == 100.0 for f in row.f_scores.values())
    assert row.macro == 100.0 and row.per_file_macro == 100.0


def test_agreement_disjoint():
    a = Annotation.from_tuples("r", [(0, 1, l.value) for l in LABELS])
    b = Annotation.from_tuples("r", [(2, 3, l.value) for l in LABELS])
    row = agreement({"r": a}, {"r": b}, {"r": Timeline.from_seconds([(0, 5)])})
    assert row.macro == 0.0


def test_agreement_human2_row():
    from vtc_eval.oracle import f_score_fixture
    ref, hyp, regions = f_score_fixture([0.797, 0.604, 0.676, 0.715])
    row = agreement({"fixture": ref}, {"fixture": hyp}, regions)
    assert [row.f_scores[l] for l in LABELS] == pytest.approx([79.7, 60.4, 67.6, 71.5],
                                                             abs=1e-9)
    assert abs(row.macro - 69.8) < 0.05


def test_agreement_errors(caplog):
    a = Annotation.from_tuples("r", [(0, 1, "KCHI")])
    with pytest.raises(InputError):
        agreement({"r": a}, {"s": a}, {})
    with pytest.raises(UnknownRecordingError):
        agreement({"r": a}, {"r": a}, {})
    regions = {"r": Timeline.from_seconds([(0, 2)])}
    agreement({"r": a, "x": a}, {"r": a}, regions)
    assert "x" in caplog.text
