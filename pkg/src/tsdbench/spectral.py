"""Residual-video log-magnitude spectra and their averages.

Each residual frame ``|R|`` (absolute luminance difference between a
challenged frame and its reference) is transformed with an unnormalised 2-D
DFT; the map is ``ln(|F{|R|}| + eps)``, DC-centred. Frames whose sides are
not powers of two are zero-padded up to the next power of two first.
"""

import csv
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._parallel import resolve_threads
from .imaging import LUMA_WEIGHTS, save_frame
from .validation import check_luma, check_sequence

EPSILON = 1e-6
STATS_HEADER = ("challenge", "level", "mean_log_magnitude", "frames", "sequences")


@dataclass(frozen=True, eq=False)
class SpectrumMap:
    values: np.ndarray
    centered: bool = True
    source_shape: tuple | None = None  # residual size before zero padding

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class SpectrumStats:
    challenge: str
    level: int
    mean_log_magnitude: float
    frame_count: int
    sequence_count: int


def residual_sequence(reference, challenged):
    """``(T, H, W)`` stack of absolute luminance differences."""
    reference = check_sequence(reference)
    challenged = check_sequence(challenged)
    if reference.frames.shape != challenged.frames.shape:
        raise ValueError(
            f"reference and challenged sequences differ in shape: "
            f"{reference.frames.shape} vs {challenged.frames.shape}"
        )
    return np.abs(reference.frames @ LUMA_WEIGHTS - challenged.frames @ LUMA_WEIGHTS).clip(0.0, 1.0)


def dft2(values):
    """Unnormalised forward 2-D DFT (``X[0, 0]`` is the sum of the inputs)."""
    values = np.asarray(values)
    if values.ndim != 2 or values.size == 0:
        raise ValueError(f"dft2 needs a non-empty 2-D grid, got shape {values.shape}")
    return np.fft.fft2(values)


def next_pow2(n):
    return 1 << (int(n) - 1).bit_length()


def padded_shape(shape):
    return tuple(next_pow2(n) for n in shape)


def _pad(values):
    target = padded_shape(values.shape)
    if target == values.shape:
        return values
    out = np.zeros(target)
    out[: values.shape[0], : values.shape[1]] = values
    return out


def log_magnitude_spectrum(residual, epsilon=EPSILON, pad=True):
    """``ln(|dft2(residual)| + epsilon)`` with DC moved to ``(H // 2, W // 2)``."""
    residual = check_luma(residual, "residual")
    source = residual.shape
    if pad:
        residual = _pad(residual)
    mag = np.abs(dft2(residual))
    return SpectrumMap(np.fft.fftshift(np.log(mag + epsilon)), True, source)


class _Accumulator:
    """Neumaier-compensated running sum of equally shaped arrays."""

    def __init__(self):
        self.total = None
        self.comp = None
        self.count = 0

    def add(self, values):
        values = np.asarray(values, dtype=np.float64)
        if self.total is None:
            self.total = values.copy()
            self.comp = np.zeros_like(values)
        else:
            if values.shape != self.total.shape:
                raise ValueError(f"map shape {values.shape} does not match {self.total.shape}")
            t = self.total + values
            big = np.abs(self.total) >= np.abs(values)
            self.comp += np.where(big, (self.total - t) + values, (values - t) + self.total)
            self.total = t
        self.count += 1

    def mean(self):
        return (self.total + self.comp) / self.count


def average_spectrum(maps):
    """Bin-wise mean of equally sized maps (compensated summation)."""
    maps = list(maps)
    if not maps:
        raise ValueError("average_spectrum needs at least one map")
    acc = _Accumulator()
    for m in maps:
        if m.values.shape != maps[0].values.shape:
            raise ValueError(f"map dimensions differ: {m.values.shape} vs {maps[0].values.shape}")
        acc.add(m.values)
    return SpectrumMap(acc.mean(), maps[0].centered, maps[0].source_shape)


def mean_magnitude(spectrum):
    """Arithmetic mean over all bins of a map."""
    values = spectrum.values if isinstance(spectrum, SpectrumMap) else np.asarray(spectrum)
    return float(np.mean(values))


def sequence_spectra(residuals, epsilon=EPSILON, pad=True, n_jobs=None):
    """Per-frame log-magnitude maps of a residual stack, in frame order."""
    threads = resolve_threads(n_jobs)
    if threads > 1 and len(residuals) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda r: log_magnitude_spectrum(r, epsilon, pad), residuals))
    return [log_magnitude_spectrum(r, epsilon, pad) for r in residuals]


# -- rendering -------------------------------------------------------------


def load_colormap():
    """The shipped 256-entry blue-to-yellow table as ``(256, 3)`` uint8."""
    text = resources.files("tsdbench").joinpath("data/blue_yellow.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    return np.array([[int(r["r"]), int(r["g"]), int(r["b"])] for r in rows], dtype=np.uint8)


COLORMAP = load_colormap()


def colormap_indices(values):
    """Min-max normalise and quantise to 0..255; a constant map gets index 128."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if not hi > lo:
        return np.full(values.shape, 128, dtype=np.intp)
    norm = (values - lo) / (hi - lo)
    return np.floor(norm * 255.0 + 0.5).astype(np.intp)


def render_spectrum_map(spectrum, path):
    """Write a colour-mapped image of ``spectrum`` (suffix picks PNG or PPM)."""
    values = spectrum.values if isinstance(spectrum, SpectrumMap) else np.asarray(spectrum)
    rgb = COLORMAP[colormap_indices(values)].astype(np.float64) / 255.0
    save_frame(rgb, path)


# -- pipeline --------------------------------------------------------------


@dataclass
class SpectrumResult:
    stats: list  # SpectrumStats, sorted
    level_maps: dict  # (challenge, level) -> SpectrumMap
    type_maps: dict  # challenge -> SpectrumMap averaged over levels
    transform_shape: tuple
    source_shape: tuple


def spectrum_pipeline(pairs, epsilon=EPSILON, pad=True, n_jobs=None, sort_key=None):
    """Average residual spectra per (challenge, level) and per challenge.

    ``pairs`` yields ``(challenge, level, reference, challenged)``; sequences
    are consumed one at a time. Per-level maps average every frame spectrum
    of every sequence in the cell; per-challenge maps average the per-level
    maps.
    """
    acc = defaultdict(_Accumulator)
    seqs = defaultdict(int)
    shapes = set()
    for challenge, level, reference, challenged in pairs:
        residuals = residual_sequence(reference, challenged)
        spectra = sequence_spectra(residuals, epsilon, pad, n_jobs)
        # per-sequence partial sums keep the accumulation order fixed
        part = _Accumulator()
        for s in spectra:
            part.add(s.values)
            shapes.add((s.values.shape, s.source_shape))
        if len(shapes) > 1:
            raise ValueError(f"sequences of different sizes in one run: {sorted(shapes)}")
        _merge(acc[challenge, level], part)
        seqs[challenge, level] += 1
    if not acc:
        raise ValueError("no sequences to analyse")
    key = sort_key or (lambda c: c)
    cells = sorted(acc, key=lambda k: (key(k[0]), k[1]))
    level_maps = {k: SpectrumMap(acc[k].mean(), True, next(iter(shapes))[1]) for k in cells}
    stats = [
        SpectrumStats(c, lv, mean_magnitude(level_maps[c, lv]), acc[c, lv].count, seqs[c, lv]) for c, lv in cells
    ]
    type_maps = {}
    for c in dict.fromkeys(c for c, _ in cells):
        type_maps[c] = average_spectrum([level_maps[k] for k in cells if k[0] == c])
    transform_shape, source_shape = next(iter(shapes))
    return SpectrumResult(stats, level_maps, type_maps, transform_shape, source_shape)


def _merge(target, part):
    """Fold a finished partial accumulator into ``target`` as one compensated add."""
    if part.count == 0:
        return
    n = target.count
    target.add(part.total + part.comp)
    target.count = n + part.count


def write_stats_csv(stats, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_HEADER)
        for s in stats:
            w.writerow([s.challenge, s.level, repr(float(s.mean_log_magnitude)), s.frame_count, s.sequence_count])


def read_stats_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != STATS_HEADER:
            raise ValueError(f"{path}: stats header must be {','.join(STATS_HEADER)}")
        return [
            SpectrumStats(r["challenge"], int(r["level"]), float(r["mean_log_magnitude"]),
                          int(r["frames"]), int(r["sequences"]))
            for r in reader
        ]


def write_spectrum_outputs(result, out_dir, ext="png", epsilon=EPSILON):
    """Stats CSV, ``<type>_<level>`` and ``<type>_avg`` maps, and a metadata file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_stats_csv(result.stats, out_dir / "stats.csv")
    for (c, lv), m in result.level_maps.items():
        render_spectrum_map(m, out_dir / f"{c}_{lv}.{ext}")
    for c, m in result.type_maps.items():
        render_spectrum_map(m, out_dir / f"{c}_avg.{ext}")
    with open(out_dir / "spectrum_meta.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerow(["epsilon", repr(float(epsilon))])
        w.writerow(["log", "natural"])
        w.writerow(["dft", "unnormalized forward, DC centered"])
        w.writerow(["source_shape", "x".join(map(str, result.source_shape))])
        w.writerow(["transform_shape", "x".join(map(str, result.transform_shape))])
        w.writerow(["zero_padded", str(result.source_shape != result.transform_shape).lower()])


# -- estimator API ---------------------------------------------------------


class ResidualSpectrum(BaseEstimator, TransformerMixin):
    """Log-magnitude residual spectra against a fitted reference sequence.

    ``fit(reference)`` stores the reference; ``transform(challenged)``
    returns the ``(T, H', W')`` stack of per-frame maps.

    Examples
    --------
    >>> est = ResidualSpectrum().fit(reference)          # doctest: +SKIP
    >>> est.mean_magnitude(challenged)                    # doctest: +SKIP
    """

    def __init__(self, epsilon=EPSILON, pad=True):
        self.epsilon = epsilon
        self.pad = pad

    def fit(self, X, y=None):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        self.reference_ = check_sequence(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "reference_")
        residuals = residual_sequence(self.reference_, check_sequence(X))
        return np.stack([m.values for m in sequence_spectra(residuals, self.epsilon, self.pad)])

    def average_map(self, X):
        check_is_fitted(self, "reference_")
        residuals = residual_sequence(self.reference_, check_sequence(X))
        return average_spectrum(sequence_spectra(residuals, self.epsilon, self.pad))

    def mean_magnitude(self, X):
        return mean_magnitude(self.average_map(X))


def floor_value(epsilon=EPSILON):
    """Map value of an all-zero residual."""
    return math.log(epsilon)
