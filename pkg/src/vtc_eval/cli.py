"""Command-line front end.

Exit codes: 0 success, 2 input error (bad or inconsistent files), 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analyze import (
    METRIC_FIELDS,
    OVERLAP_MODES,
    agreement,
    dataset_stats,
    per_child_metrics,
    stratify,
    tune_thresholds,
)
from .core import LABELS, Annotation, NS_PER_SECOND
from .decode import DecodeConfig, binarize
from .errors import InputError, InvariantError, UnknownRecordingError
from .formats import load_scores, read_label_map, read_metadata, read_rttm, read_uem, write_rttm
from .metrics import (
    collar_eval_map,
    macro_average,
    per_class_prf,
    pool,
    prf,
    rates,
    score_recording,
)
from .oracle import RandomCaseConfig, derive_seed, distinct_boundaries, oracle_metrics, random_case
from .report import Report, percent, ratio, seconds, table_csv, Table

logger = logging.getLogger("vtc_eval")

JOBS_ENV = "VTC_EVAL_JOBS"
SCORE_SUFFIXES = (".csv", ".vtcs")


# -- helpers ------------------------------------------------------------------


def _default_jobs() -> int:
    value = os.environ.get(JOBS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def parallel_map(fn, items, jobs: int):
    """Ordered map, in-process for one job, over a process pool otherwise."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool_:
        return list(pool_.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _label_map(args):
    return read_label_map(args.label_map) if getattr(args, "label_map", None) else None


def _score_files(directory: str) -> list[Path]:
    path = Path(directory)
    if not path.is_dir():
        raise InputError(f"not a directory: {directory}")
    files = sorted(p for p in path.iterdir() if p.suffix in SCORE_SUFFIXES and p.is_file())
    if not files:
        raise InputError(f"no input: no score files in {directory}")
    stems = [p.stem for p in files]
    dupes = sorted({s for s in stems if stems.count(s) > 1})
    if dupes:
        raise InputError("recording ids with several score files: " + ", ".join(dupes))
    return files


def _decode_config(args) -> DecodeConfig:
    onset = tuple(getattr(args, f"threshold_{l.value.lower()}") for l in LABELS)
    offsets = tuple(getattr(args, f"offset_threshold_{l.value.lower()}") for l in LABELS)
    offset = tuple(off if off is not None else on for on, off in zip(onset, offsets))
    return DecodeConfig(onset, offset, args.min_on, args.min_off)


def _check_known(eval_map, *annotation_sets) -> None:
    unknown = set()
    for annotation_set in annotation_sets:
        unknown.update(rid for rid in annotation_set if rid not in eval_map)
    if unknown:
        raise UnknownRecordingError(unknown)


def _score_item(item):
    ref, hyp, regions = item
    return score_recording(ref, hyp, regions)


def _score_all(refs, hyps, eval_map, jobs):
    ids = sorted(eval_map)
    items = [
        (refs.get(rid) or Annotation(rid), hyps.get(rid) or Annotation(rid), eval_map[rid])
        for rid in ids
    ]
    return parallel_map(_score_item, items, jobs)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _check_components(scores) -> None:
    for s in scores:
        c = s.components
        if c.correct + c.miss + c.confusion != c.total_reference:
            raise InvariantError(f"{s.recording_id}: components do not add up: {c}")


# -- subcommands --------------------------------------------------------------


def _decode_one(item):
    path, config, default_step = item
    return binarize(load_scores(path, default_step), config)


def cmd_decode(args) -> int:
    config = _decode_config(args)
    files = _score_files(args.scores)
    annotations = parallel_map(
        _decode_one, [(p, config, args.default_step) for p in files], args.jobs
    )
    _emit(write_rttm(annotations), args.out)
    return 0


def _components_table(report: Report, components) -> None:
    t = report.table("components", ("component", "seconds", "percent"))
    total = components.total_reference
    for name in ("correct", "miss", "false_alarm", "confusion", "total_reference"):
        value = getattr(components, name)
        t.add(name, seconds(value), percent(100.0 * value / total) if total else None)


def cmd_eval(args) -> int:
    label_map = _label_map(args)
    refs = read_rttm(args.ref, label_map)
    hyps = read_rttm(args.hyp, label_map)
    eval_map = read_uem(args.uem)
    _check_known(eval_map, refs, hyps)
    if args.collar:
        eval_map = collar_eval_map(eval_map, refs, args.collar)
    scores = _score_all(refs, hyps, eval_map, args.jobs)
    _check_components(scores)
    components, detection = pool(scores)
    r = rates(components)
    per_class = per_class_prf(detection)
    macro = macro_average([100.0 * per_class[l].f_score for l in LABELS])

    report = Report()
    t = report.table("detection", ("class", "precision", "recall", "f_score"))
    for label in LABELS:
        p = per_class[label]
        t.add(label.value, ratio(p.precision), ratio(p.recall), ratio(p.f_score))
    s = report.table("summary", ("metric", "value"))
    s.add("ier", ratio(r.ier))
    s.add("pct_correct", percent(r.pct_correct))
    s.add("pct_miss", percent(r.pct_miss))
    s.add("pct_fa", percent(r.pct_fa))
    s.add("pct_confusion", percent(r.pct_confusion))
    s.add("macro_f", percent(macro))
    s.add("evaluated_seconds", seconds(sum(x.evaluated for x in scores)))
    s.add("recordings", len(scores))
    _components_table(report, components)

    if args.per_file:
        pf = report.table(
            "per_file",
            ("recording_id", "ier", "pct_correct", "pct_miss", "pct_fa", "pct_confusion")
            + tuple(f"f_{l.value}" for l in LABELS) + ("macro_f",),
        )
        macros = []
        for x in scores:
            fs = [100.0 * prf(c).f_score for c in x.detection]
            m = macro_average(fs)
            macros.append(m)
            if x.components.total_reference:
                rr = rates(x.components)
                head = (ratio(rr.ier), percent(rr.pct_correct), percent(rr.pct_miss),
                        percent(rr.pct_fa), percent(rr.pct_confusion))
            else:
                head = (None,) * 5
            pf.add(x.recording_id, *head, *(percent(f) for f in fs), percent(m))
        s.add("per_file_macro_f", percent(math.fsum(macros) / len(macros)))
    _emit(report.render(args.format), args.out)
    return 0


def cmd_tune(args) -> int:
    label_map = _label_map(args)
    files = _score_files(args.scores)
    matrices = [load_scores(p, args.default_step) for p in files]
    refs = read_rttm(args.ref, label_map)
    eval_map = read_uem(args.uem)
    _check_known(eval_map, refs)
    base = DecodeConfig(min_duration_on=args.min_on, min_duration_off=args.min_off)
    result = tune_thresholds(matrices, refs, eval_map, args.grid_step, base)
    report = Report()
    best = report.table("best", ("class", "best_threshold", "best_f"))
    curve = report.table("curve", ("class", "threshold", "f_score"))
    for label in LABELS:
        tuning = result[label]
        best.add(label.value, ratio(tuning.best_threshold), ratio(tuning.best_f))
        for threshold, f in tuning.curve:
            curve.add(label.value, ratio(threshold), ratio(f))
    _emit(report.render(args.format), args.out)
    return 0


def cmd_agree(args) -> int:
    label_map = _label_map(args)
    a = read_rttm(args.a, label_map)
    b = read_rttm(args.b, label_map)
    eval_map = read_uem(args.uem)
    row = agreement(a, b, eval_map)
    report = Report()
    t = report.table("agreement", tuple(l.value for l in LABELS) + ("macro", "per_file_macro"))
    t.add(*(percent(row.f_scores[l]) for l in LABELS), percent(row.macro),
          percent(row.per_file_macro))
    _emit(report.render(args.format), args.out)
    return 0


def _named_paths(values, flag) -> dict[str, str]:
    out = {}
    for value in values or ():
        name, sep, path = value.partition("=")
        if not sep or not name or not path:
            raise InputError(f"{flag} expects NAME=PATH, got {value!r}")
        if name in out:
            raise InputError(f"{flag}: duplicate name {name!r}")
        out[name] = path
    return out


def cmd_stats(args) -> int:
    label_map = _label_map(args)
    corpora_paths = _named_paths(args.corpus, "--corpus")
    uem_paths = _named_paths(args.uem, "--uem")
    extra = sorted(set(uem_paths) - set(corpora_paths))
    if extra:
        raise InputError("--uem given for unknown corpus: " + ", ".join(extra))
    corpora = {
        name: list(read_rttm(path, label_map).values()) for name, path in corpora_paths.items()
    }
    totals = None
    if uem_paths:
        missing = sorted(set(corpora_paths) - set(uem_paths))
        if missing:
            raise InputError("--uem missing for corpus: " + ", ".join(missing))
        totals = {
            name: sum(tl.duration_ns for tl in read_uem(path).values())
            for name, path in uem_paths.items()
        }
    modes = OVERLAP_MODES if args.overlap_mode == "both" else (args.overlap_mode,)
    report = Report()
    labels = tuple(l.value for l in LABELS)
    t = report.table("durations", ("overlap_mode", "corpus", "total_duration") + labels)
    share = report.table("speech_share", ("overlap_mode", "corpus") + labels)
    for mode in modes:
        table = dataset_stats(corpora, mode, totals)
        for row in table.rows + (table.total,):
            t.add(mode, row.corpus, seconds(row.total_duration),
                  *(seconds(row.per_class[l]) for l in LABELS))
            sh = row.speech_share()
            share.add(mode, row.corpus, *(percent(sh[l]) for l in LABELS))
    _emit(report.render(args.format), args.out)
    return 0


def cmd_stratify(args) -> int:
    label_map = _label_map(args)
    refs = read_rttm(args.ref, label_map)
    hyps = read_rttm(args.hyp, label_map)
    eval_map = read_uem(args.uem)
    metadata = read_metadata(args.metadata)
    if len(metadata) == 0:
        raise InputError("no metadata")
    _check_known(eval_map, refs, hyps)
    scores = _score_all(refs, hyps, eval_map, args.jobs)
    runs = {s.recording_id: s.components for s in scores}
    durations = {s.recording_id: s.evaluated for s in scores}
    points = per_child_metrics(runs, metadata, durations)
    if not points:
        raise InputError("no child with reference speech")
    fits = stratify(points)

    report = Report()
    pt = report.table("points", ("child_id", "snr", "c50") + METRIC_FIELDS + ("n_files",))
    for p in points:
        pt.add(p.child_id, ratio(p.snr), ratio(p.c50),
               *(percent(getattr(p, m)) for m in METRIC_FIELDS), p.n_files)
    ft = report.table(
        "fits",
        ("covariate", "metric", "n", "slope", "intercept", "residual_std",
         "slope_se", "intercept_se", "t_crit", "note"),
    )
    bands = []
    for sf in fits:
        fit = sf.fit
        if fit is None:
            ft.add(sf.covariate, sf.metric, len(points), None, None, None, None, None, None, sf.note)
            continue
        ft.add(sf.covariate, sf.metric, fit.n, ratio(fit.slope), ratio(fit.intercept),
               ratio(fit.residual_std), ratio(fit.slope_se), ratio(fit.intercept_se),
               ratio(fit.t_crit), sf.note)
        xs = [getattr(p, sf.covariate) for p in points]
        lo, hi = min(xs), max(xs)
        n = args.band_points
        grid = [lo + (hi - lo) * i / (n - 1) for i in range(n)]
        band = Table(f"band_{sf.metric}_{sf.covariate}", ("x", "y_fit", "ci_low", "ci_high"))
        for x, y, cl, ch in fit.band_table(grid):
            band.add(ratio(x), ratio(y), ratio(cl), ratio(ch))
        bands.append(band)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "points.csv").write_text(table_csv(pt), encoding="utf-8")
        for band in bands:
            (out_dir / f"{band.name}.csv").write_text(table_csv(band), encoding="utf-8")
    _emit(report.render(args.format), args.out)
    return 0


def _oracle_case(item):
    seed, index, config, step = item
    ref, hyp, eval_map = random_case(derive_seed(seed, index), config)
    regions = eval_map[config.recording_id]
    exact = score_recording(ref, hyp, regions)
    components, detection = oracle_metrics(ref, hyp, regions, step)
    deviations = [
        abs(getattr(exact.components, f) - getattr(components, f))
        for f in ("correct", "miss", "false_alarm", "confusion", "total_reference")
    ]
    for a, b in zip(exact.detection, detection):
        deviations += [abs(a.intersection - b.intersection), abs(a.reference - b.reference),
                       abs(a.hypothesis - b.hypothesis)]
    bound = distinct_boundaries(ref, hyp, regions) * round(step * NS_PER_SECOND)
    return max(deviations), bound


def cmd_oracle_check(args) -> int:
    if args.cases <= 0:
        raise InputError("--cases must be positive")
    config = RandomCaseConfig(duration=args.duration, rate=args.rate)
    results = parallel_map(
        _oracle_case, [(args.seed, i, config, args.step) for i in range(args.cases)], args.jobs
    )
    worst = max(dev for dev, _ in results)
    worst_ratio = max(dev / bound if bound else (0.0 if dev == 0 else math.inf)
                      for dev, bound in results)
    ok = worst_ratio <= 1.0
    report = Report()
    t = report.table("oracle_check", ("metric", "value"))
    t.add("cases", args.cases)
    t.add("seed", args.seed)
    t.add("step_seconds", seconds(round(args.step * NS_PER_SECOND)))
    t.add("max_deviation_seconds", seconds(worst))
    t.add("max_deviation_over_bound", ratio(worst_ratio))
    t.add("within_bound", "yes" if ok else "no")
    _emit(report.render(args.format), args.out)
    return 0 if ok else 3


# -- parser -------------------------------------------------------------------


def _add_output(p, formats=True):
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    if formats:
        p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_jobs(p):
    p.add_argument(
        "--jobs", type=int, default=_default_jobs(),
        help=f"worker processes (default: ${JOBS_ENV} or 1)",
    )


def _add_decode_flags(p, thresholds=True):
    if thresholds:
        for label in LABELS:
            name = label.value.lower()
            p.add_argument(f"--threshold-{name}", type=float, default=0.5, metavar="F",
                           help=f"{label.value} onset threshold (default 0.5)")
            p.add_argument(f"--offset-threshold-{name}", type=float, default=None,
                           metavar="F", help=f"{label.value} offset threshold (default: onset)")
    p.add_argument("--min-on", type=float, default=0.0, metavar="S",
                   help="drop segments shorter than S seconds")
    p.add_argument("--min-off", type=float, default=0.0, metavar="S",
                   help="fill gaps shorter than S seconds")
    p.add_argument("--default-step", type=float, default=0.01, metavar="S",
                   help="frame step for score files with a single frame")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vtc-eval", description="Voice type classification scoring and analysis."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="threshold score files into an RTTM")
    p.add_argument("--scores", required=True, help="directory of .csv/.vtcs score files")
    _add_decode_flags(p)
    _add_output(p, formats=False)
    _add_jobs(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="detection and identification metrics")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--uem", required=True)
    p.add_argument("--per-file", action="store_true", help="add per-recording results")
    p.add_argument("--collar", type=float, default=0.0, metavar="S",
                   help="excise ±S seconds around reference boundaries")
    p.add_argument("--label-map")
    _add_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="per-class threshold sweep on a development set")
    p.add_argument("--scores", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--uem", required=True)
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--label-map")
    _add_decode_flags(p, thresholds=False)
    _add_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("agree", help="inter-annotator agreement (B scored against A)")
    p.add_argument("--a", required=True, help="annotator A RTTM (reference)")
    p.add_argument("--b", required=True, help="annotator B RTTM")
    p.add_argument("--uem", required=True)
    p.add_argument("--label-map")
    _add_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("stats", help="cumulated utterance duration per corpus")
    p.add_argument("--corpus", action="append", required=True, metavar="NAME=RTTM")
    p.add_argument("--uem", action="append", metavar="NAME=UEM",
                   help="evaluation map giving the corpus total duration")
    p.add_argument("--overlap-mode", choices=OVERLAP_MODES + ("both",), default="both",
                   help="how overlapping same-class entries count (default: report both)")
    p.add_argument("--label-map")
    _add_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("stratify", help="per-child error rates against SNR and C50")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--uem", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--out-dir", help="write points.csv and band_*.csv here")
    p.add_argument("--band-points", type=int, default=50)
    p.add_argument("--label-map")
    _add_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_stratify)

    p = sub.add_parser("oracle-check", help="compare exact metrics to frame sampling")
    p.add_argument("--cases", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--duration", type=float, default=120.0)
    p.add_argument("--rate", type=float, default=0.1)
    _add_output(p)
    _add_jobs(p)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    if getattr(args, "band_points", 2) < 2:
        parser.error("--band-points must be at least 2")
    try:
        return args.func(args)
    except InvariantError as exc:
        print(f"vtc-eval: internal error: {exc}", file=sys.stderr)
        return 3
    except (InputError, OSError, UnicodeDecodeError) as exc:
        print(f"vtc-eval: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
