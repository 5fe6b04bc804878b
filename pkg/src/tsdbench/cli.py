"""Command-line pipeline: synth -> evaluate -> spectrum -> correlate -> report.

Exit codes: 0 ok, 1 unexpected error, 2 bad arguments, 3 I/O failure,
4 missing or malformed predictions, 5 spectrum shape mismatch,
6 correlation grid mismatch, 7 missing upstream outputs for ``report``.
"""

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .annotations import (
    enumerate_eval_cells,
    parse_annotations,
    parse_detections,
    read_split,
    split_dataset,
    write_split,
)
from .challenges import (
    ChallengeSpec,
    ChallengeType,
    challenge_sort_key,
    read_manifest,
    synth_composed,
    synth_grid,
)
from .config import ConfigError, RunConfig, parse_floats, parse_levels, read_config
from .exceptions import AnnotationFormatError, FrameIOError, GridError
from .imaging import load_sequence
from .metrics import (
    METRICS,
    REFERENCE,
    ConfusionCounts,
    MetricsRecord,
    aggregate_by_level,
    aggregate_by_type,
    compute_metrics,
    degradation_table,
    match_detections,
    read_metrics_csv,
    write_degradation_csv,
    write_levels_csv,
    write_metrics_csv,
    write_types_csv,
)
from .spectral import floor_value, read_stats_csv, spectrum_pipeline, write_spectrum_outputs
from .stats import correlate_performance, write_correlation_csv, write_summary_csv

log = logging.getLogger("tsdbench")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
EXIT_PREDICTIONS, EXIT_SHAPE, EXIT_GRID, EXIT_UPSTREAM = 4, 5, 6, 7


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _usage(message):
    return CliError(EXIT_USAGE, message)


# -- helpers ---------------------------------------------------------------


def _require(cfg, *keys):
    for key in keys:
        if not getattr(cfg, key):
            raise _usage(f"--{key.replace('_', '-')} is required")


def _parse_types(text):
    if text.strip().lower() == "all":
        return list(ChallengeType)
    try:
        return [ChallengeType.parse(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise _usage(f"--types: {exc}") from None


def _parse_compose(text):
    specs = []
    for part in text.split(","):
        name, sep, level = part.strip().partition(":")
        if not sep:
            raise _usage(f"--compose entries look like type:level, got {part!r}")
        try:
            specs.append(ChallengeSpec(ChallengeType.parse(name), int(level)))
        except (ValueError, TypeError) as exc:
            raise _usage(f"--compose: {exc}") from None
    if not specs:
        raise _usage("--compose is empty")
    return specs


def _load_refs(directory, frame_rate):
    directory = Path(directory)
    if not directory.is_dir():
        raise CliError(EXIT_IO, f"{directory}: reference directory not found")
    refs = {}
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        refs[sub.name] = load_sequence(sub, frame_rate)
    if not refs:
        raise CliError(EXIT_IO, f"{directory}: no reference sequence subdirectories")
    return refs


def _levels(cfg):
    try:
        levels = parse_levels(cfg.levels)
    except ConfigError as exc:
        raise _usage(f"--levels: {exc}") from None
    if 0 in levels:
        raise _usage("--levels: level 0 is the reference, not a synthesis target")
    if max(levels) > 5:
        raise _usage("--levels: levels run from 1 to 5")
    return levels


# -- subcommands -----------------------------------------------------------


def cmd_split(cfg):
    _require(cfg, "input", "out")
    ids = sorted(p.name for p in Path(cfg.input).iterdir() if p.is_dir()) if Path(cfg.input).is_dir() else []
    if not ids:
        raise CliError(EXIT_IO, f"{cfg.input}: no reference sequence subdirectories")
    if cfg.split_mode not in ("shuffle", "ordered"):
        raise _usage("--split-mode must be shuffle or ordered")
    try:
        plan = split_dataset(ids, cfg.split_ratio, cfg.seed, shuffle=cfg.split_mode == "shuffle")
    except ValueError as exc:
        raise _usage(str(exc)) from None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_split(plan, out / "split.csv")
    cfg.echo(out)
    cells = enumerate_eval_cells(plan)
    print(f"split: {len(plan.train_ids)} train / {len(plan.test_ids)} test")
    print(f"per type: {cells.train_per_type} train / {cells.test_per_type} test sequences")
    return EXIT_OK


def cmd_synth(cfg):
    _require(cfg, "input", "out")
    if cfg.format not in ("png", "ppm"):
        raise _usage("--format must be png or ppm")
    out = Path(cfg.out)
    if cfg.compose:
        specs = _parse_compose(cfg.compose)
        refs = _load_refs(cfg.input, cfg.frame_rate)
        rows = synth_composed(refs, specs, cfg.seed, out, cfg.format)
    else:
        types = _parse_types(cfg.types)
        levels = _levels(cfg)
        refs = _load_refs(cfg.input, cfg.frame_rate)
        rows = synth_grid(refs, types, levels, cfg.seed, out, cfg.format)
    cfg.echo(out)
    print(f"synthesized {len(rows)} sequences from {len(refs)} references -> {out / 'manifest.csv'}")
    return EXIT_OK


def _pred_sources(text):
    sources = []
    for i, part in enumerate(p for p in text.split(",") if p.strip()):
        name, sep, path = part.partition("=")
        if not sep:
            name, path = ("algorithm" if i == 0 else f"algorithm{i + 1}"), part
        sources.append((name.strip(), Path(path.strip())))
    names = [n for n, _ in sources]
    if len(set(names)) != len(names):
        raise _usage("--pred names must be unique")
    return sources


def _evaluate_source(rows, gt_dir, pred_dir, cfg, betas):
    """Metric records for one prediction source; returns (records, problems)."""
    problems = []
    gt_cache = {}

    def gt_for(ref_id):
        if ref_id not in gt_cache:
            path = gt_dir / f"{ref_id}.txt"
            if not path.is_file():
                raise CliError(EXIT_IO, f"{path}: ground truth not found")
            gt_cache[ref_id] = parse_annotations(path)
        return gt_cache[ref_id]

    cells = {}
    absent = set()
    ref_ids = sorted({r.ref_id for r in rows})
    jobs = [((REFERENCE, 0), ref_id, pred_dir / f"{ref_id}.txt") for ref_id in ref_ids]
    jobs += [((r.challenge_name, r.level), r.ref_id, pred_dir / f"{Path(r.path).name}.txt") for r in rows]
    for key, ref_id, path in jobs:
        if not path.is_file():
            problems.append(f"{path}: missing prediction file")
            absent.add(key)
            continue
        try:
            pred = parse_detections(path)
        except AnnotationFormatError as exc:
            problems.append(str(exc))
            absent.add(key)
            continue
        counts = match_detections(gt_for(ref_id), pred, cfg.iou_threshold, cfg.class_agnostic)
        cells[key] = cells.get(key, ConfusionCounts()) + counts
    keys = sorted(set(cells) | absent, key=lambda k: (k[0] != REFERENCE, challenge_sort_key(k[0]), k[1]))
    records = []
    for key in keys:
        challenge = None if key[0] == REFERENCE else key[0]
        if key in absent:
            records.append((key, None))
        else:
            records.append((key, compute_metrics(cells[key], betas, challenge, key[1])))
    return records, problems


def _write_records(entries, path):
    """Metrics CSV where absent cells keep their key with empty values."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["challenge", "level", "tp", "fp", "fn", "precision", "recall", "f05", "f2"])
        for (challenge, level), rec in entries:
            if rec is None:
                w.writerow([challenge, level, "", "", "", "", "", "", ""])
            else:
                c = rec.counts
                w.writerow([challenge, level, c.tp, c.fp, c.fn,
                            *(repr(float(rec.value(m))) for m in METRICS)])


def _average_records(per_alg):
    """Metric-level mean across algorithms; counts are summed."""
    names = list(per_alg)
    out = []
    for i, (key, rec) in enumerate(per_alg[names[0]]):
        group = [per_alg[n][i][1] for n in names]
        if any(r is None for r in group):
            out.append((key, None))
            continue
        counts = ConfusionCounts()
        for r in group:
            counts = counts + r.counts
        n = len(group)
        out.append((key, MetricsRecord(
            rec.challenge, rec.level, counts,
            sum(r.precision for r in group) / n,
            sum(r.recall for r in group) / n,
            {k: sum(r.fscores[k] for r in group) / n for k in rec.fscores},
        )))
    return out


def cmd_evaluate(cfg):
    _require(cfg, "manifest", "gt", "pred", "out")
    try:
        betas = parse_floats(cfg.betas)
    except ConfigError as exc:
        raise _usage(str(exc)) from None
    if sorted(betas) != [0.5, 2.0]:
        raise _usage("--betas must be 0.5,2 (the CSV columns are f05 and f2)")
    if not 0.0 < cfg.iou_threshold <= 1.0:
        raise _usage("--iou must be in (0, 1]")
    manifest = Path(cfg.manifest)
    if not manifest.is_file():
        raise CliError(EXIT_IO, f"{manifest}: manifest not found")
    rows = read_manifest(manifest)
    if cfg.split and cfg.subset != "all":
        plan = read_split(cfg.split)
        keep = set(plan.train_ids if cfg.subset == "train" else plan.test_ids)
        rows = [r for r in rows if r.ref_id in keep]
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    per_alg, problems = {}, []
    for name, pred_dir in _pred_sources(cfg.pred):
        records, probs = _evaluate_source(rows, Path(cfg.gt), pred_dir, cfg, betas)
        per_alg[name] = records
        problems += probs
    if len(per_alg) == 1:
        (only,) = per_alg.values()
        _write_records(only, out / "metrics.csv")
    else:
        for name, records in per_alg.items():
            _write_records(records, out / f"metrics_{name}.csv")
        _write_records(_average_records(per_alg), out / "metrics.csv")
    cfg.echo(out)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        print(f"{len(problems)} prediction problem(s); affected cells left empty in metrics.csv", file=sys.stderr)
        return EXIT_PREDICTIONS
    grids = {name: [rec for _, rec in records] for name, records in per_alg.items()}
    single = [r for r in next(iter(grids.values())) if r.level > 0 and "@" not in r.challenge]
    if single:
        plain = {n: [r for r in recs if r.level == 0 or "@" not in r.challenge] for n, recs in grids.items()}
        columns, table = degradation_table(plain)
        write_degradation_csv(columns, table, out / "degradation.csv")
        averaged = [rec for _, rec in _average_records(per_alg)] if len(per_alg) > 1 else plain[next(iter(plain))]
        averaged = [r for r in averaged if r.level == 0 or "@" not in r.challenge]
        write_levels_csv(aggregate_by_level(averaged), out / "levels.csv")
        write_types_csv(aggregate_by_type(plain), out / "types.csv")
    print(f"evaluated {len(rows)} sequences for {len(per_alg)} algorithm(s) -> {out}")
    return EXIT_OK


def cmd_spectrum(cfg):
    _require(cfg, "manifest", "refs", "out")
    manifest = Path(cfg.manifest)
    if not manifest.is_file():
        raise CliError(EXIT_IO, f"{manifest}: manifest not found")
    if cfg.format not in ("png", "ppm"):
        raise _usage("--format must be png or ppm")
    if not cfg.epsilon > 0:
        raise _usage("--epsilon must be positive")
    rows = read_manifest(manifest)
    base = manifest.parent
    refs = {}

    def pairs():
        for row in rows:
            if row.ref_id not in refs:
                refs.clear()  # rows are grouped by reference; keep one in memory
                refs[row.ref_id] = load_sequence(Path(cfg.refs) / row.ref_id, cfg.frame_rate)
            yield row.challenge_name, row.level, refs[row.ref_id], load_sequence(base / row.path, cfg.frame_rate)

    try:
        result = spectrum_pipeline(pairs(), epsilon=cfg.epsilon, sort_key=challenge_sort_key)
    except ValueError as exc:
        raise CliError(EXIT_SHAPE, str(exc)) from None
    write_spectrum_outputs(result, cfg.out, cfg.format, cfg.epsilon)
    cfg.echo(cfg.out)
    print(f"spectra for {len(result.stats)} cells, {len(result.type_maps)} challenge maps -> {cfg.out}")
    return EXIT_OK


def cmd_correlate(cfg):
    _require(cfg, "spectra", "metrics", "out")
    for p in (cfg.spectra, cfg.metrics):
        if not Path(p).is_file():
            raise CliError(EXIT_IO, f"{p}: not found")
    stats = read_stats_csv(cfg.spectra)
    records = read_metrics_csv(cfg.metrics)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            results = correlate_performance(
                stats, records, include_reference=cfg.include_reference, reference_x=floor_value(cfg.epsilon)
            )
        except GridError as exc:
            raise CliError(EXIT_GRID, str(exc)) from None
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_correlation_csv(results, out / "correlation.csv")
    write_summary_csv(results, out / "correlation_summary.csv")
    cfg.echo(out)
    summary = ", ".join(
        f"{r.metric} {r.average_strength:.3f}" if r.average_strength is not None else f"{r.metric} n/a"
        for r in results
    )
    print(f"spearman strength: {summary}")
    return EXIT_OK


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_report(cfg):
    _require(cfg, "eval", "spectrum", "out")
    ev, sp = Path(cfg.eval), Path(cfg.spectrum)
    needed = [ev / "metrics.csv", ev / "levels.csv", ev / "types.csv", ev / "degradation.csv", sp / "stats.csv"]
    missing = [str(p) for p in needed if not p.is_file()]
    if missing:
        raise CliError(EXIT_UPSTREAM, "missing upstream outputs: " + ", ".join(missing))
    records = read_metrics_csv(ev / "metrics.csv")
    if not records:
        raise CliError(EXIT_UPSTREAM, f"{ev / 'metrics.csv'}: no metric rows")
    stats = {(s.challenge, s.level): s for s in read_stats_csv(sp / "stats.csv")}
    corr = Path(cfg.correlation) / "correlation_summary.csv" if cfg.correlation else None
    if corr is not None and not corr.is_file():
        raise CliError(EXIT_UPSTREAM, f"{corr}: missing upstream output")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    cells = sorted(
        (r for r in records if r.level > 0), key=lambda r: (challenge_sort_key(r.challenge), r.level)
    )
    with open(out / "report_cells.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["challenge", "level", *METRICS, "mean_log_magnitude"])
        for r in cells:
            s = stats.get((r.challenge, r.level))
            w.writerow([r.challenge, r.level, *(repr(float(r.value(m))) for m in METRICS),
                        "" if s is None else repr(float(s.mean_log_magnitude))])

    lines = ["Detection performance per challenge level (mean over challenge types)", ""]
    lines.append(_table(_read_csv(ev / "levels.csv"), ["level", *METRICS]))
    lines += ["", "Average degradation per challenge type (% over metrics x algorithms x levels)", ""]
    lines.append(_table(_read_csv(ev / "types.csv"), ["challenge", "avg_degradation_pct"]))
    lines += ["", "Per-cell metrics and mean log magnitude", ""]
    lines.append(_table(_read_csv(out / "report_cells.csv"), ["challenge", "level", *METRICS, "mean_log_magnitude"]))
    if corr is not None:
        lines += ["", "Spearman correlation with mean magnitude spectrum", ""]
        rows = _read_csv(corr)
        lines.append(_table(rows, list(rows[0].keys()) if rows else ["estimated_metric"]))
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    cfg.echo(out)
    print(f"report: {len(cells)} challenge cells -> {out / 'report.txt'}")
    return EXIT_OK


def _fmt_cell(v):
    try:
        f = float(v)
    except ValueError:
        return v
    if v.lstrip("-").isdigit():
        return v
    return f"{f:.3f}"


def _table(rows, columns):
    body = [[_fmt_cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    return "\n".join([fmt.format(*columns)] + [fmt.format(*b) for b in body])


# -- argument parsing ------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _usage(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="tsdbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value configuration file")
        return p

    p = add("split", "split reference sequences into train/test")
    p.add_argument("--input")
    p.add_argument("--out")
    p.add_argument("--ratio", dest="split_ratio", type=float)
    p.add_argument("--mode", dest="split_mode", choices=["shuffle", "ordered"])
    p.add_argument("--seed", type=int)

    p = add("synth", "synthesize challenge sequences")
    p.add_argument("--input", help="directory with one subdirectory per reference sequence")
    p.add_argument("--out")
    p.add_argument("--types", help="'all' or comma-separated names/codes")
    p.add_argument("--levels", help="e.g. 1-5 or 1,3,5")
    p.add_argument("--seed", type=int)
    p.add_argument("--compose", help="ordered list like rain:5,exposure:1")
    p.add_argument("--frame-rate", dest="frame_rate", type=float)
    p.add_argument("--format", choices=["png", "ppm"])

    p = add("evaluate", "score detector predictions")
    p.add_argument("--manifest")
    p.add_argument("--gt", help="directory of <ref_id>.txt ground-truth files")
    p.add_argument("--pred", help="prediction directory, or name=dir,name=dir for several algorithms")
    p.add_argument("--iou", dest="iou_threshold", type=float)
    p.add_argument("--betas")
    p.add_argument("--class-agnostic", dest="class_agnostic", action="store_const", const=True)
    p.add_argument("--split")
    p.add_argument("--subset", choices=["all", "train", "test"])
    p.add_argument("--out")

    p = add("spectrum", "residual spectra, averaged maps and stats")
    p.add_argument("--manifest")
    p.add_argument("--refs")
    p.add_argument("--out")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--frame-rate", dest="frame_rate", type=float)
    p.add_argument("--format", choices=["png", "ppm"])

    p = add("correlate", "Spearman correlation of spectra and metrics")
    p.add_argument("--spectra")
    p.add_argument("--metrics")
    p.add_argument("--out")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--include-reference", dest="include_reference", action="store_const", const=True)

    p = add("report", "summarize evaluate/spectrum/correlate outputs")
    p.add_argument("--eval")
    p.add_argument("--spectrum")
    p.add_argument("--correlation")
    p.add_argument("--out")
    return parser


COMMANDS = {
    "split": cmd_split,
    "synth": cmd_synth,
    "evaluate": cmd_evaluate,
    "spectrum": cmd_spectrum,
    "correlate": cmd_correlate,
    "report": cmd_report,
}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
        cfg = RunConfig()
        if args.config:
            cfg.update(read_config(args.config))
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")}
        cfg.update(flags)
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FrameIOError, FileExistsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except AnnotationFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PREDICTIONS


if __name__ == "__main__":
    sys.exit(main())
