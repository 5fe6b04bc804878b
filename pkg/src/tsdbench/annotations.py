"""Sign vocabulary, ground-truth / prediction files, and dataset split arithmetic.

File format (``# cure-eval v1``)::

    # cure-eval v1
    # frame_index sign_code x y w h [confidence]
    12 6 100 80 24 24
    12 6 101 79 24 25 0.83

Fields are whitespace separated; ``#`` starts a comment; blank lines are
ignored. Coordinates are pixels (top-left corner, extent) and may be real.
"""

import csv
import math
import numbers
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

from ._random import generator
from .exceptions import AnnotationFormatError

FORMAT_HEADER = "# cure-eval v1"


class SignType(IntEnum):
    SPEED_LIMIT = 1
    GOODS_VEHICLES = 2
    NO_OVERTAKING = 3
    NO_STOPPING = 4
    NO_PARKING = 5
    STOP = 6
    BICYCLE = 7
    HUMP = 8
    NO_LEFT = 9
    NO_RIGHT = 10
    PRIORITY_TO = 11
    NO_ENTRY = 12
    YIELD = 13
    PARKING = 14


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box extent must be positive, got w={self.w}, h={self.h}")

    @property
    def area(self):
        return self.w * self.h

    def within(self, width, height):
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


@dataclass(frozen=True)
class Annotation:
    frame_index: int
    sign: SignType
    box: BoundingBox


@dataclass(frozen=True)
class Detection:
    frame_index: int
    sign: SignType
    box: BoundingBox
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def _parse_number(token, path, lineno, field):
    try:
        value = float(token)
    except ValueError:
        raise AnnotationFormatError(path, lineno, f"{field} is not a number: {token!r}") from None
    if not math.isfinite(value):
        raise AnnotationFormatError(path, lineno, f"{field} is not finite: {token!r}")
    return value


def _parse_records(path):
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise AnnotationFormatError(path, None, "no such file") from None
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (6, 7):
            raise AnnotationFormatError(path, lineno, f"expected 6 or 7 fields, got {len(fields)}")
        try:
            frame_index = int(fields[0])
        except ValueError:
            raise AnnotationFormatError(path, lineno, f"frame index is not an integer: {fields[0]!r}") from None
        if frame_index < 0:
            raise AnnotationFormatError(path, lineno, f"negative frame index {frame_index}")
        try:
            sign = SignType(int(fields[1]))
        except ValueError:
            raise AnnotationFormatError(path, lineno, f"unknown sign code {fields[1]!r}") from None
        x, y, w, h = (_parse_number(t, path, lineno, n) for t, n in zip(fields[2:6], "xywh"))
        if w <= 0 or h <= 0:
            raise AnnotationFormatError(path, lineno, f"non-positive box extent w={fields[4]} h={fields[5]}")
        box = BoundingBox(x, y, w, h)
        conf = 1.0
        if len(fields) == 7:
            conf = _parse_number(fields[6], path, lineno, "confidence")
            if not 0.0 <= conf <= 1.0:
                raise AnnotationFormatError(path, lineno, f"confidence outside [0, 1]: {fields[6]}")
        records.append((frame_index, sign, box, conf))
    return records


def parse_annotations(path):
    """Read ground truth, ordered by frame index (stable within a frame)."""
    recs = _parse_records(path)
    out = [Annotation(f, s, b) for f, s, b, _ in recs]
    return sorted(out, key=lambda a: a.frame_index)


def parse_detections(path):
    """Read detector output; missing confidence defaults to 1."""
    recs = _parse_records(path)
    out = [Detection(f, s, b, c) for f, s, b, c in recs]
    return sorted(out, key=lambda d: d.frame_index)


def _fmt(v):
    return repr(float(v)) if not float(v).is_integer() else str(int(v))


def write_annotations(records, path):
    """Write annotations or detections; detections carry the confidence field."""
    lines = [FORMAT_HEADER]
    for r in records:
        fields = [str(r.frame_index), str(int(r.sign)), _fmt(r.box.x), _fmt(r.box.y), _fmt(r.box.w), _fmt(r.box.h)]
        if isinstance(r, Detection):
            fields.append(repr(float(r.confidence)))
        lines.append(" ".join(fields))
    Path(path).write_text("\n".join(lines) + "\n")


# -- splits ----------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    train_ids: tuple
    test_ids: tuple


def split_dataset(ids, ratio_train=0.7, seed=0, shuffle=True):
    """Split ``ids`` with ``round(ratio_train * N)`` (half up) training ids.

    ``shuffle=False`` keeps input order (first ids train).
    """
    ids = list(ids)
    if not ids:
        raise ValueError("ids must not be empty")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if not 0.0 < ratio_train < 1.0:
        raise ValueError(f"ratio_train must be in (0, 1), got {ratio_train}")
    n_train = int(math.floor(ratio_train * len(ids) + 0.5))
    order = ids
    if shuffle:
        perm = generator(seed, 0x5B117).permutation(len(ids))
        order = [ids[i] for i in perm]
    return SplitPlan(tuple(order[:n_train]), tuple(order[n_train:]))


def write_split(plan, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "split"])
        for i in plan.train_ids:
            w.writerow([i, "train"])
        for i in plan.test_ids:
            w.writerow([i, "test"])


def read_split(path):
    train, test = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            (train if row["split"] == "train" else test).append(row["id"])
    return SplitPlan(tuple(train), tuple(test))


@dataclass(frozen=True)
class EvalCells:
    types: int
    train_per_type: int
    test_per_type: int
    train_frames_per_type: int
    test_frames_per_type: int
    train_total: int
    test_total: int
    train_total_frames: int
    test_total_frames: int

    @property
    def challenge_sequences(self):
        """Challenge sequences over both splits (references excluded)."""
        return (self.train_per_type + self.test_per_type) * self.types


def enumerate_eval_cells(plan, types=12, levels=5, frames_per_sequence=300):
    """Sequence and frame counts per challenge type and in total.

    Totals count every challenge sequence plus each reference sequence once.
    """
    for name, v in (("types", types), ("levels", levels), ("frames_per_sequence", frames_per_sequence)):
        if not isinstance(v, numbers.Integral) or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    n_train, n_test = len(plan.train_ids), len(plan.test_ids)
    train_total = n_train * types * levels + n_train
    test_total = n_test * types * levels + n_test
    return EvalCells(
        types=types,
        train_per_type=n_train * levels,
        test_per_type=n_test * levels,
        train_frames_per_type=n_train * levels * frames_per_sequence,
        test_frames_per_type=n_test * levels * frames_per_sequence,
        train_total=train_total,
        test_total=test_total,
        train_total_frames=train_total * frames_per_sequence,
        test_total_frames=test_total * frames_per_sequence,
    )


def boxes_by_frame(records):
    """Group records into ``{frame_index: [record, ...]}`` keeping file order."""
    grouped = {}
    for r in records:
        grouped.setdefault(r.frame_index, []).append(r)
    return grouped

