"""IoU matching, precision / recall / F-beta, and degradation tables."""

import csv
import math
from dataclasses import dataclass, field

from .annotations import boxes_by_frame
from .challenges import challenge_sort_key
from .exceptions import GridError

METRICS = ("precision", "recall", "f05", "f2")
DEFAULT_BETAS = (0.5, 2.0)
METRICS_HEADER = ("challenge", "level", "tp", "fp", "fn", "precision", "recall", "f05", "f2")
REFERENCE = "none"


def iou(a, b):
    """Intersection over union of two ``BoundingBox`` objects."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError(f"counts must be non-negative: {self}")

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


def match_detections(gt, pred, iou_threshold=0.5, class_agnostic=False):
    """Greedy one-to-one matching, highest confidence first.

    Within a frame, each prediction (confidence descending, file order on
    ties) takes the unmatched ground-truth box with the largest IoU, provided
    it reaches ``iou_threshold`` and (unless ``class_agnostic``) the sign
    types agree.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    gt_frames = boxes_by_frame(gt)
    pred_frames = boxes_by_frame(pred)
    tp = fp = 0
    for frame, preds in pred_frames.items():
        truths = gt_frames.get(frame, [])
        taken = [False] * len(truths)
        for p in sorted(preds, key=lambda d: -d.confidence):
            best, best_iou = -1, iou_threshold
            for j, g in enumerate(truths):
                if taken[j] or (not class_agnostic and g.sign != p.sign):
                    continue
                v = iou(p.box, g.box)
                if v >= best_iou and (best < 0 or v > best_iou):
                    best, best_iou = j, v
            if best >= 0:
                taken[best] = True
                tp += 1
            else:
                fp += 1
    return ConfusionCounts(tp, fp, len(gt) - tp)


def fbeta(precision, recall, beta):
    """``(1 + b^2) p r / (b^2 p + r)``; 0 when the denominator vanishes."""
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1.0 + b2) * precision * recall / denom


def _beta_key(beta):
    return "f" + f"{beta:g}".replace(".", "")


@dataclass(frozen=True)
class MetricsRecord:
    challenge: str | None
    level: int
    counts: ConfusionCounts
    precision: float
    recall: float
    fscores: dict = field(default_factory=dict)

    @property
    def f05(self):
        return self.fscores["f05"]

    @property
    def f2(self):
        return self.fscores["f2"]

    def value(self, metric):
        if metric in ("precision", "recall"):
            return getattr(self, metric)
        return self.fscores[metric]


def rates(counts):
    """Precision and recall with the empty-denominator conventions."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 0.0 if fn > 0 else 1.0
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 0.0 if fp > 0 else 1.0
    return precision, recall


def compute_metrics(counts, betas=DEFAULT_BETAS, challenge=None, level=0):
    for b in betas:
        if not b > 0:
            raise ValueError(f"beta must be positive, got {b}")
    precision, recall = rates(counts)
    return record_from_rates(precision, recall, betas, challenge, level, counts)


def record_from_rates(precision, recall, betas=DEFAULT_BETAS, challenge=None, level=0, counts=None):
    """Build a record from known precision and recall (counts optional)."""
    fs = {_beta_key(b): fbeta(precision, recall, b) for b in betas}
    return MetricsRecord(challenge, level, counts or ConfusionCounts(), precision, recall, fs)


# -- degradation -----------------------------------------------------------


@dataclass(frozen=True)
class DegradationCell:
    metric: str
    reference: float
    challenged: float
    percent: float | None  # None: undefined (zero reference)

    @property
    def undefined(self):
        return self.percent is None


def percent_drop(reference, challenged):
    if reference == 0:
        return None
    return 100.0 * (reference - challenged) / reference


def degradation(reference, challenged, metrics=METRICS):
    """Percent change per metric; positive means the challenged run is worse."""
    cells = []
    for m in metrics:
        r, c = reference.value(m), challenged.value(m)
        cells.append(DegradationCell(m, r, c, percent_drop(r, c)))
    return cells


def _split_grid(records):
    """Separate reference (level 0) records and index the challenge grid."""
    refs = [r for r in records if r.level == 0]
    grid = {}
    for r in records:
        if r.level == 0:
            continue
        if r.challenge in (None, REFERENCE):
            raise GridError(f"challenge record at level {r.level} has no challenge type")
        key = (r.challenge, r.level)
        if key in grid:
            raise GridError(f"duplicate record for {r.challenge} level {r.level}")
        grid[key] = r
    types = sorted({c for c, _ in grid}, key=challenge_sort_key)
    levels = sorted({lv for _, lv in grid})
    missing = [(c, lv) for c in types for lv in levels if (c, lv) not in grid]
    if missing:
        raise GridError("ragged grid, missing cells: " + ", ".join(f"{c}@{lv}" for c, lv in missing))
    return refs, grid, types, levels


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values)


def _reference_for(refs):
    if not refs:
        return None
    if len(refs) == 1:
        return refs[0]
    return record_from_rates(_mean(r.precision for r in refs), _mean(r.recall for r in refs))


@dataclass(frozen=True)
class LevelSummary:
    means: dict  # level -> {metric: mean over challenge types}
    drop: dict  # metric -> percent drop of the highest level vs level 0 (None if undefined)


def aggregate_by_level(records, metrics=METRICS):
    """Mean of each metric over challenge types, per level.

    Level 0 is taken from the reference record(s). ``drop`` compares the
    highest level with level 0.
    """
    refs, grid, types, levels = _split_grid(records)
    means = {}
    if refs:
        means[0] = {m: _mean(r.value(m) for r in refs) for m in metrics}
    for lv in levels:
        means[lv] = {m: _mean(grid[c, lv].value(m) for c in types) for m in metrics}
    drop = {}
    if 0 in means and levels:
        top = max(levels)
        drop = {m: percent_drop(means[0][m], means[top][m]) for m in metrics}
    return LevelSummary(means, drop)


def _normalize_algorithms(algorithms):
    if isinstance(algorithms, dict):
        return list(algorithms.items())
    algorithms = list(algorithms)
    if algorithms and isinstance(algorithms[0], MetricsRecord):
        return [("algorithm", algorithms)]
    return [(f"algorithm{i + 1}", recs) for i, recs in enumerate(algorithms)]


def aggregate_by_type(algorithms, metrics=METRICS):
    """Average degradation per challenge type over metrics x algorithms x levels.

    ``algorithms`` maps a name to that algorithm's records (a full grid plus a
    level-0 reference each). Undefined cells are left out of the mean; a type
    whose cells are all undefined maps to ``None``.
    """
    named = _normalize_algorithms(algorithms)
    if not named:
        raise ValueError("at least one algorithm is required")
    layouts = []
    split = []
    for name, recs in named:
        refs, grid, types, levels = _split_grid(recs)
        ref = _reference_for(refs)
        if ref is None:
            raise GridError(f"{name}: no level-0 reference record")
        layouts.append((tuple(types), tuple(levels)))
        split.append((ref, grid))
    if len(set(layouts)) != 1:
        raise GridError("algorithms cover different type x level grids")
    types, levels = layouts[0]
    out = {}
    for c in types:
        pcts = [
            cell.percent
            for ref, grid in split
            for lv in levels
            for cell in degradation(ref, grid[c, lv], metrics)
            if not cell.undefined
        ]
        out[c] = _mean(pcts) if pcts else None
    return out


@dataclass(frozen=True)
class TableRow:
    challenge: str
    values: dict  # algorithm -> {metric: value}
    drops: dict  # algorithm -> {metric: percent or None}; empty for the reference row


def degradation_table(algorithms, metrics=METRICS, average_name="average"):
    """Per-type table: metric values averaged over levels, and their percent drop.

    With several algorithms an ``average_name`` column holds metric-level
    means across algorithms. Rows: reference, each type, then an
    all-types average row.
    """
    named = _normalize_algorithms(algorithms)
    per_alg = {}
    types = None
    for name, recs in named:
        refs, grid, t, levels = _split_grid(recs)
        ref = _reference_for(refs)
        if ref is None:
            raise GridError(f"{name}: no level-0 reference record")
        if types is not None and t != types:
            raise GridError("algorithms cover different challenge types")
        types = t
        vals = {REFERENCE: {m: ref.value(m) for m in metrics}}
        for c in t:
            vals[c] = {m: _mean(grid[c, lv].value(m) for lv in levels) for m in metrics}
        vals["all"] = {m: _mean(vals[c][m] for c in t) for m in metrics}
        per_alg[name] = vals
    columns = list(per_alg)
    if len(columns) > 1:
        per_alg[average_name] = {
            row: {m: _mean(per_alg[a][row][m] for a in columns) for m in metrics} for row in per_alg[columns[0]]
        }
        columns.append(average_name)
    rows = []
    for row in [REFERENCE, *types, "all"]:
        values = {a: per_alg[a][row] for a in columns}
        drops = {}
        if row != REFERENCE:
            drops = {a: {m: percent_drop(per_alg[a][REFERENCE][m], values[a][m]) for m in metrics} for a in columns}
        rows.append(TableRow(row, values, drops))
    return columns, rows


# -- CSV -------------------------------------------------------------------


def _num(v):
    return "" if v is None else repr(float(v))


def write_metrics_csv(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in records:
            c = r.counts
            w.writerow(
                [r.challenge or REFERENCE, r.level, c.tp, c.fp, c.fn,
                 _num(r.precision), _num(r.recall), _num(r.f05), _num(r.f2)]
            )


def read_metrics_csv(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ValueError(f"{path}: metrics header must be {','.join(METRICS_HEADER)}")
        for row in reader:
            if row["precision"] == "":
                continue  # absent cell
            challenge = None if row["challenge"] == REFERENCE else row["challenge"]
            out.append(
                MetricsRecord(
                    challenge,
                    int(row["level"]),
                    ConfusionCounts(int(row["tp"]), int(row["fp"]), int(row["fn"])),
                    float(row["precision"]),
                    float(row["recall"]),
                    {"f05": float(row["f05"]), "f2": float(row["f2"])},
                )
            )
    return out


def write_degradation_csv(columns, rows, path, metrics=METRICS):
    header = ["challenge"]
    for a in columns:
        header += [f"{a}:{m}" for m in metrics]
        header += [f"{a}:{m}_drop" for m in metrics]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            line = [row.challenge]
            for a in columns:
                line += [_num(row.values[a][m]) for m in metrics]
                line += [_num(row.drops[a][m]) if row.drops else "" for m in metrics]
            w.writerow(line)


def write_levels_csv(summary, path, metrics=METRICS):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", *metrics])
        for lv in sorted(summary.means):
            w.writerow([lv, *(_num(summary.means[lv][m]) for m in metrics)])
        if summary.drop:
            w.writerow(["drop_pct", *(_num(summary.drop[m]) for m in metrics)])


def write_types_csv(per_type, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["challenge", "avg_degradation_pct"])
        for c, v in per_type.items():
            w.writerow([c, _num(v)])
