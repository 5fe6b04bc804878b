"""Spearman rank correlation between spectral change and detection metrics."""

import csv
import math
import warnings
from dataclasses import dataclass

from .challenges import challenge_sort_key
from .exceptions import GridError, UndefinedCorrelationError
from .metrics import METRICS, REFERENCE


def average_ranks(values):
    """1-based ranks; tied values share the mean of the ranks they span."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def pearson(xs, ys):
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def spearman(xs, ys):
    """Spearman's rho: Pearson correlation of average ranks."""
    xs, ys = list(xs), list(ys)
    if len(xs) != len(ys):
        raise ValueError(f"series lengths differ: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ValueError("spearman needs at least two points")
    return pearson(average_ranks(xs), average_ranks(ys))


@dataclass(frozen=True)
class CorrelationResult:
    metric: str
    rho: dict  # challenge -> signed rho, or None when undefined
    average_rho: float | None  # mean of the defined signed values
    average_strength: float | None  # mean of |rho|; the headline number

    def strength(self, challenge):
        r = self.rho[challenge]
        return None if r is None else abs(r)


def _mean_or_none(values):
    values = [v for v in values if v is not None]
    return math.fsum(values) / len(values) if values else None


def correlate_performance(stats, records, metrics=METRICS, levels=(1, 2, 3, 4, 5),
                          include_reference=False, reference_x=None):
    """Per-type Spearman rho between mean log magnitude and each metric.

    For each challenge type the series runs over ``levels``. With
    ``include_reference`` the level-0 point is added using ``reference_x``
    (the spectral floor) and the reference metric record.
    """
    spec_x = {(s.challenge, s.level): s.mean_log_magnitude for s in stats}
    rec = {(r.challenge or REFERENCE, r.level): r for r in records}
    types = sorted({c for c, lv in rec if lv > 0 and c != REFERENCE} | {c for c, lv in spec_x if lv > 0},
                   key=challenge_sort_key)
    types = [c for c in types if "@" not in c]  # compositions have no level series
    missing = [f"{c}@{lv}" for c in types for lv in levels if (c, lv) not in spec_x or (c, lv) not in rec]
    if missing:
        raise GridError("missing cells: " + ", ".join(missing))
    if not types:
        raise GridError("no challenge types to correlate")
    ref = None
    if include_reference:
        if reference_x is None:
            raise ValueError("include_reference needs reference_x")
        refs = [r for (c, lv), r in rec.items() if lv == 0]
        if len(refs) != 1:
            raise GridError(f"expected one level-0 reference record, found {len(refs)}")
        ref = refs[0]
    results = []
    for m in metrics:
        per_type = {}
        for c in types:
            xs = [spec_x[c, lv] for lv in levels]
            ys = [rec[c, lv].value(m) for lv in levels]
            if ref is not None:
                xs.insert(0, reference_x)
                ys.insert(0, ref.value(m))
            try:
                per_type[c] = spearman(xs, ys)
            except UndefinedCorrelationError:
                warnings.warn(f"{m}/{c}: constant series, correlation undefined; excluded from the average",
                              RuntimeWarning, stacklevel=2)
                per_type[c] = None
        results.append(
            CorrelationResult(
                m,
                per_type,
                _mean_or_none(per_type.values()),
                _mean_or_none(abs(v) if v is not None else None for v in per_type.values()),
            )
        )
    return results


CORRELATION_HEADER = ("metric", "challenge", "rho", "strength")


def _num(v):
    return "" if v is None else repr(float(v))


def write_correlation_csv(results, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CORRELATION_HEADER)
        for res in results:
            for c, r in res.rho.items():
                w.writerow([res.metric, c, _num(r), _num(None if r is None else abs(r))])
            w.writerow([res.metric, "average", _num(res.average_rho), _num(res.average_strength)])


def read_correlation_csv(path):
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CORRELATION_HEADER:
            raise ValueError(f"{path}: correlation header must be {','.join(CORRELATION_HEADER)}")
        for r in reader:
            rows.setdefault(r["metric"], []).append(r)
    out = []
    for metric, items in rows.items():
        per_type, avg = {}, None
        for r in items:
            value = float(r["rho"]) if r["rho"] else None
            if r["challenge"] == "average":
                avg = (value, float(r["strength"]) if r["strength"] else None)
            else:
                per_type[r["challenge"]] = value
        out.append(CorrelationResult(metric, per_type, *(avg or (None, None))))
    return out


def write_summary_csv(results, path):
    """One row per statistic with a column per metric."""
    by_metric = {r.metric: r for r in results}
    metrics = [m for m in METRICS if m in by_metric] + [m for m in by_metric if m not in METRICS]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["estimated_metric", *metrics])
        w.writerow(["spearman_strength", *(_num(by_metric[m].average_strength) for m in metrics)])
        w.writerow(["spearman_signed", *(_num(by_metric[m].average_rho) for m in metrics)])
