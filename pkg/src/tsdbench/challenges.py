"""Parameterised challenge conditions (levels 0-5) for frame sequences.

Each challenge is a deterministic transfer function of the input frames and
a :class:`ChallengeSpec`. Level 0 is the identity for every kind. Stochastic
challenges draw from counter-based streams keyed by ``(seed, frame index,
particle index)``, so any frame can be rendered on its own and parallel
rendering is reproducible.
"""

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import _random
from ._parallel import resolve_threads
from .imaging import LUMA_WEIGHTS, FrameSequence, save_sequence
from .validation import check_frame, check_level, check_seed, check_sequence


class ChallengeType(IntEnum):
    DECOLORIZATION = 1
    LENS_BLUR = 2
    CODEC_ERROR = 3
    DARKENING = 4
    DIRTY_LENS = 5
    EXPOSURE = 6
    GAUSSIAN_BLUR = 7
    NOISE = 8
    RAIN = 9
    SHADOW = 10
    SNOW = 11
    HAZE = 12

    @property
    def code(self):
        """Two-digit code used in file names, ``"01"`` .. ``"12"``."""
        return f"{self.value:02d}"

    @property
    def slug(self):
        return self.name.lower()

    @classmethod
    def parse(cls, value):
        """Accept a member, an integer code, ``"07"``, or a name like ``"gaussian-blur"``."""
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        text = str(value).strip()
        if text.isdigit():
            return cls(int(text))
        key = text.upper().replace("-", "_").replace(" ", "_")
        aliases = {"LENSBLUR": "LENS_BLUR", "CODECERROR": "CODEC_ERROR", "DIRTYLENS": "DIRTY_LENS",
                   "GAUSSIANBLUR": "GAUSSIAN_BLUR"}
        key = aliases.get(key, key)
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown challenge type {value!r}") from None


def challenge_sort_key(name):
    """Order challenge names by type code; compositions and others sort last."""
    try:
        return (0, ChallengeType.parse(name).value, str(name))
    except ValueError:
        return (1, 0, str(name))


@dataclass(frozen=True)
class ChallengeSpec:
    kind: ChallengeType
    level: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ChallengeType.parse(self.kind))
        object.__setattr__(self, "level", check_level(self.level, allow_zero=True))
        object.__setattr__(self, "seed", check_seed(self.seed))


# level tables, index 0 = level 1
DECOLOR_ALPHA = (0.2, 0.4, 0.6, 0.8, 1.0)
LENS_RADIUS = (2, 4, 6, 8, 10)
GAUSSIAN_BLURRINESS = (5, 10, 15, 20, 25)
CODEC_MAX_DISPLACEMENT = (0.1, 0.2, 0.3, 0.4, 0.5)
DARKENING_STOPS = (-1, -3, -5, -7, -9)
EXPOSURE_STOPS = (1, 3, 5, 7, 9)
NOISE_AMOUNT = (20, 40, 60, 70, 71)
RAIN_DROPS = (10000, 20000, 50000, 100000, 100000)
SHADOW_OPACITY = (0.15, 0.30, 0.45, 0.60, 0.75)
SNOW_DROPS = (10000, 50000, 100000, 140000, 140000)
HAZE_VEIL = (0.10, 0.20, 0.30, 0.40, 0.50)

# black & white filter weights by hue sector: red, yellow, green, cyan, blue, magenta
DECOLOR_WEIGHTS = np.array([40.0, 60.0, 40.0, 60.0, 20.0, 80.0])
RAIN_TOP = np.array([0x0F, 0x1E, 0x2D]) / 255.0
RAIN_BOTTOM = np.array([0x5A, 0x74, 0x92]) / 255.0
RAIN_TINT_OPACITY = 0.25
HAZE_COLOR = 0xCE / 255.0
HAZE_BRIGHTNESS = -34 / 255.0
HAZE_CONTRAST = -13 / 100.0
SHADOW_PERIOD = 142
SHADOW_DUTY = 0.47

# particle counts are specified for full-size source frames; smaller frames
# get proportionally fewer particles at the same density
PARTICLE_REFERENCE_AREA = 1628 * 1236

# stream tags keep the random streams of different challenges apart
_NOISE_STREAM = 0x4E01
_DIRT_STREAM = 0xD127
_RAIN_STREAM = 0x8A19
_SNOW_STREAM = 0x5A0F
_CODEC_STREAM = 0xC0DE


def severity(kind, level):
    """Primary severity scalar of ``kind`` at ``level`` (0 at level 0)."""
    kind = ChallengeType.parse(kind)
    level = check_level(level, allow_zero=True)
    if level == 0:
        return 0.0
    i = level - 1
    table = {
        ChallengeType.DECOLORIZATION: DECOLOR_ALPHA[i],
        ChallengeType.LENS_BLUR: LENS_RADIUS[i],
        ChallengeType.CODEC_ERROR: CODEC_MAX_DISPLACEMENT[i],
        ChallengeType.DARKENING: abs(DARKENING_STOPS[i]),
        ChallengeType.DIRTY_LENS: 0.15 * level * 8 * level,
        ChallengeType.EXPOSURE: abs(EXPOSURE_STOPS[i]),
        ChallengeType.GAUSSIAN_BLUR: GAUSSIAN_BLURRINESS[i] / 2.0,
        ChallengeType.NOISE: NOISE_AMOUNT[i],
        ChallengeType.RAIN: RAIN_DROPS[i],
        ChallengeType.SHADOW: SHADOW_OPACITY[i],
        ChallengeType.SNOW: SNOW_DROPS[i],
        ChallengeType.HAZE: HAZE_VEIL[i],
    }
    return float(table[kind])


# -- colour ----------------------------------------------------------------


def hue_sector(frame):
    """Hue sector index (0 red .. 5 magenta) per pixel; -1 for achromatic pixels."""
    r, g, b = frame[..., 0], frame[..., 1], frame[..., 2]
    mx = frame.max(axis=-1)
    delta = mx - frame.min(axis=-1)
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(
        mx == r,
        ((g - b) / safe) % 6.0,
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    sector = np.floor(hue + 0.5).astype(int) % 6
    return np.where(delta > 0, sector, -1)


def apply_decolorization(frame, level):
    frame = check_frame(frame)
    level = check_level(level)
    sector = hue_sector(frame)
    weight = np.where(sector >= 0, DECOLOR_WEIGHTS[np.maximum(sector, 0)], 50.0)
    bw = np.clip((frame @ LUMA_WEIGHTS) * weight / 50.0, 0.0, 1.0)
    alpha = DECOLOR_ALPHA[level - 1]
    return np.clip((1.0 - alpha) * frame + alpha * bw[..., None], 0.0, 1.0)


def apply_exposure(frame, stops):
    """Scale by ``2**stops`` and clamp (negative stops darken)."""
    frame = check_frame(frame)
    if stops == 0:
        return frame.copy()
    return np.clip(frame * 2.0**stops, 0.0, 1.0)


def apply_darkening(frame, level):
    return apply_exposure(frame, DARKENING_STOPS[check_level(level) - 1])


def apply_overexposure(frame, level):
    return apply_exposure(frame, EXPOSURE_STOPS[check_level(level) - 1])


# -- blur ------------------------------------------------------------------


def hexagon_kernel(radius):
    """Normalised flat-top hexagon of circumradius ``radius`` (pixel-centre test)."""
    r = int(radius)
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    half_height = r * math.sqrt(3.0) / 2.0
    inside = (np.abs(dy) <= half_height + 1e-9) & (np.abs(dx) + np.abs(dy) / math.sqrt(3.0) <= r + 1e-9)
    kernel = inside.astype(float)
    return kernel / kernel.sum()


def gaussian_kernel(sigma):
    """1-D Gaussian truncated at ``ceil(3 sigma)`` and renormalised."""
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def apply_lens_blur(frame, level):
    frame = check_frame(frame)
    kernel = hexagon_kernel(LENS_RADIUS[check_level(level) - 1])
    out = ndimage.correlate(frame, kernel[:, :, None], mode="nearest")
    return np.clip(out, 0.0, 1.0)


def apply_gaussian_blur(frame, level):
    frame = check_frame(frame)
    sigma = GAUSSIAN_BLURRINESS[check_level(level) - 1] / 2.0
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(frame, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return np.clip(out, 0.0, 1.0)


# -- temporal --------------------------------------------------------------


def codec_displacement(luma, level, frame_rate, dither=0.5):
    """Per-pixel frame offset ``floor(raw + dither)`` from a luminance map.

    ``dither`` 0.5 is round half up; a per-pixel uniform field in [0, 1)
    gives unbiased stochastic rounding. Integer ``raw`` values (mid-gray,
    the extremes) are unaffected either way.
    """
    max_disp = CODEC_MAX_DISPLACEMENT[check_level(level) - 1]
    return np.floor((luma - 0.5) * 2.0 * max_disp * frame_rate + dither).astype(int)


def codec_dither(seed, width, height):
    """Seeded per-pixel rounding offsets, fixed across frames."""
    idx = np.arange(width * height, dtype=np.uint64)
    return _random.uniform_keyed(check_seed(seed), idx, _CODEC_STREAM).reshape(height, width)


def apply_codec_error(seq, level, seed=None):
    """Time displacement: each pixel is fetched from a frame offset by its own luminance.

    With a ``seed`` the displacement is rounded stochastically through
    :func:`codec_dither`; ``None`` rounds half up.
    """
    seq = check_sequence(seq)
    level = check_level(level)
    frames = seq.frames
    n = len(seq)
    rows, cols = np.indices(frames.shape[1:3])
    dither = 0.5 if seed is None else codec_dither(seed, seq.width, seq.height)
    out = np.empty_like(frames)
    for t in range(n):
        disp = codec_displacement(frames[t] @ LUMA_WEIGHTS, level, seq.frame_rate, dither)
        src = np.clip(t + disp, 0, n - 1)
        out[t] = frames[src, rows, cols]
    return seq.with_frames(out)


# -- overlays --------------------------------------------------------------


def dirty_lens_mask(level, seed, width, height):
    """Dirt coverage and colour maps for ``(level, seed, width, height)``.

    Returns ``(alpha, color)``, both ``(height, width)``. ``8 * level`` soft
    elliptical blobs; the blob list for a lower level is a prefix of the list
    for a higher one.
    """
    level = check_level(level)
    base = _random.mix(check_seed(seed), _DIRT_STREAM, width, height)
    n = 8 * level
    idx = np.arange(n)
    u = [_random.uniform_keyed(base, idx, a) for a in range(6)]
    cx = u[0] * width
    cy = u[1] * height
    ax = (0.02 + 0.08 * u[2]) * width
    ay = (0.02 + 0.08 * u[3]) * width
    theta = u[4] * math.pi
    gray = 0.1 + 0.3 * u[5]

    keep = np.ones((height, width))
    weighted = np.zeros((height, width))
    total = np.zeros((height, width))
    for i in range(n):
        # soft edge reaches ~0 at twice the axis length
        reach = 2.0 * max(ax[i], ay[i])
        y0, y1 = max(0, int(cy[i] - reach)), min(height, int(math.ceil(cy[i] + reach)) + 1)
        x0, x1 = max(0, int(cx[i] - reach)), min(width, int(math.ceil(cx[i] + reach)) + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(float)
        dx = xx + 0.5 - cx[i]
        dy = yy + 0.5 - cy[i]
        c, s = math.cos(theta[i]), math.sin(theta[i])
        q2 = ((c * dx + s * dy) / ax[i]) ** 2 + ((-s * dx + c * dy) / ay[i]) ** 2
        cover = np.exp(-2.0 * q2)
        keep[y0:y1, x0:x1] *= 1.0 - cover
        weighted[y0:y1, x0:x1] += cover * gray[i]
        total[y0:y1, x0:x1] += cover
    alpha = 1.0 - keep
    color = np.divide(weighted, total, out=np.zeros_like(weighted), where=total > 0)
    return alpha, color


def apply_dirty_lens(frame, level, seed=0):
    frame = check_frame(frame)
    level = check_level(level)
    alpha, color = dirty_lens_mask(level, seed, frame.shape[1], frame.shape[0])
    a = (min(1.0, 0.15 * level) * alpha)[..., None]
    return np.clip((1.0 - a) * frame + a * color[..., None], 0.0, 1.0)


def apply_noise(frame, level, seed=0, frame_index=0):
    """Convex mix with uniform noise drawn from the ``(seed, frame_index)`` stream."""
    frame = check_frame(frame)
    a = NOISE_AMOUNT[check_level(level) - 1] / 100.0
    noise = _random.generator(check_seed(seed), _NOISE_STREAM, frame_index).random(frame.shape)
    return np.clip((1.0 - a) * frame + a * noise, 0.0, 1.0)


def shadow_mask(width, height):
    """1 inside the dark venetian-blind bands, 0 elsewhere (vertical stripes)."""
    x = (np.arange(width) + 0.5) % SHADOW_PERIOD
    dark = (x < SHADOW_DUTY * SHADOW_PERIOD).astype(float)
    return np.broadcast_to(dark, (height, width)).copy()


def apply_shadow(frame, level):
    frame = check_frame(frame)
    opacity = SHADOW_OPACITY[check_level(level) - 1]
    mask = shadow_mask(frame.shape[1], frame.shape[0])[..., None]
    return np.clip(frame * (1.0 - opacity * mask), 0.0, 1.0)


def haze_veil(level, width, height, focal=(0.5, 0.5)):
    """Veil opacity map: ``base`` at the focal point falling to 0 at the farthest pixel."""
    fx, fy = focal
    if not (0.0 <= fx <= 1.0 and 0.0 <= fy <= 1.0):
        raise ValueError(f"focal point must lie in the unit square, got {focal}")
    base = HAZE_VEIL[check_level(level) - 1]
    yy, xx = np.mgrid[0:height, 0:width].astype(float)
    # elliptical distance: axes follow the frame aspect ratio
    d = np.hypot((xx - fx * (width - 1)) / width, (yy - fy * (height - 1)) / height)
    dmax = d.max()
    d = d / dmax if dmax > 0 else d
    return base * (1.0 - d)


def apply_haze(frame, level, focal=(0.5, 0.5)):
    """Tone adjustment then a grey veil centred on ``focal`` (normalised x, y).

    Brightness and contrast offsets scale with ``level / 5`` and reach
    -34/255 and -13% at level 5.
    """
    frame = check_frame(frame)
    level = check_level(level)
    v = haze_veil(level, frame.shape[1], frame.shape[0], focal)[..., None]
    t = level / 5.0
    adjusted = np.clip((frame + t * HAZE_BRIGHTNESS - 0.5) * (1.0 + t * HAZE_CONTRAST) + 0.5, 0.0, 1.0)
    return np.clip((1.0 - v) * adjusted + v * HAZE_COLOR, 0.0, 1.0)


# -- particles -------------------------------------------------------------


def particle_count(drops, width, height):
    """Scale a full-frame drop count to a ``width x height`` frame."""
    return int(math.floor(drops * width * height / PARTICLE_REFERENCE_AREA + 0.5))


def rain_gradient(width, height):
    t = np.linspace(0.0, 1.0, height) if height > 1 else np.zeros(1)
    rows = RAIN_TOP + t[:, None] * (RAIN_BOTTOM - RAIN_TOP)
    return np.broadcast_to(rows[:, None, :], (height, width, 3)).copy()


def rain_streaks(level, seed, frame_index, width, height, frame_rate, drops=None):
    """Additive streak intensity for one frame, shape ``(height, width)``."""
    level = check_level(level)
    if drops is None:
        drops = RAIN_DROPS[level - 1]
    n = particle_count(drops, width, height)
    canvas = np.zeros((height, width))
    if n == 0:
        return canvas
    base = _random.mix(check_seed(seed), _RAIN_STREAM)
    idx = np.arange(n)
    x0, y0, speed, tilt, length = (_random.uniform_keyed(base, idx, a) for a in range(5))
    tilt = np.tan(np.radians(10.0 * tilt))
    length = 8 + np.floor(7.0 * length).astype(int)
    if level == 5:
        length = 2 * length
    # fall speed in frame heights per second
    seconds = frame_index / frame_rate
    dy = (0.6 + 0.6 * speed) * seconds
    head_y = ((y0 + dy) % 1.0) * height
    head_x = ((x0 + dy * tilt * height / width) % 1.0) * width
    k = np.arange(length.max())
    on = k[None, :] < length[:, None]
    py = np.floor(head_y[:, None] - k[None, :]).astype(int)
    px = np.floor(head_x[:, None] - k[None, :] * tilt[:, None]).astype(int)
    valid = on & (py >= 0) & (py < height) & (px >= 0) & (px < width)
    np.add.at(canvas, (py[valid], px[valid]), 0.25)
    return canvas


def render_rain_frame(frame, frame_index, level, seed=0, frame_rate=30.0, drops=None):
    frame = check_frame(frame)
    h, w = frame.shape[:2]
    tinted = (1.0 - RAIN_TINT_OPACITY) * frame + RAIN_TINT_OPACITY * rain_gradient(w, h)
    streaks = rain_streaks(level, seed, frame_index, w, h, frame_rate, drops)
    return np.clip(tinted + streaks[..., None], 0.0, 1.0)


def apply_rain(seq, level, seed=0, drops=None):
    seq = check_sequence(seq)
    level = check_level(level)
    out = [render_rain_frame(f, t, level, seed, seq.frame_rate, drops) for t, f in enumerate(seq.frames)]
    return seq.with_frames(np.stack(out))


def _disc_offsets(radius):
    r = int(math.ceil(radius))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    inside = dx**2 + dy**2 <= radius**2 + 1e-9
    return dy[inside], dx[inside]


_FLAKE_RADII = (0.5, 1.0, 1.5)


def snow_flakes(level, seed, frame_index, width, height, frame_rate, drops=None):
    """Additive flake intensity for one frame, shape ``(height, width)``."""
    level = check_level(level)
    if drops is None:
        drops = SNOW_DROPS[level - 1]
    n = particle_count(drops, width, height)
    canvas = np.zeros((height, width))
    passes = 2 if level == 5 else 1
    seconds = frame_index / frame_rate
    for p in range(passes):
        if n == 0:
            break
        base = _random.mix(check_seed(seed), _SNOW_STREAM, p)
        idx = np.arange(n)
        x0, y0, fall, amp, freq, phase, size = (_random.uniform_keyed(base, idx, a) for a in range(7))
        cy = ((y0 + (0.1 + 0.15 * fall) * seconds) % 1.0) * height
        sway = (0.01 + 0.02 * amp) * np.sin(2 * math.pi * ((0.2 + 0.3 * freq) * seconds + phase))
        cx = ((x0 + sway) % 1.0) * width
        radius_idx = np.minimum((3 * size).astype(int), 2)
        for ri, radius in enumerate(_FLAKE_RADII):
            sel = radius_idx == ri
            if not sel.any():
                continue
            oy, ox = _disc_offsets(radius)
            py = np.floor(cy[sel])[:, None].astype(int) + oy[None, :]
            px = np.floor(cx[sel])[:, None].astype(int) + ox[None, :]
            valid = (py >= 0) & (py < height) & (px >= 0) & (px < width)
            np.add.at(canvas, (py[valid], px[valid]), 0.5)
    return canvas


def render_snow_frame(frame, frame_index, level, seed=0, frame_rate=30.0, drops=None):
    frame = check_frame(frame)
    level = check_level(level)
    veil = 0.05 * level
    whitened = (1.0 - veil) * frame + veil
    flakes = snow_flakes(level, seed, frame_index, frame.shape[1], frame.shape[0], frame_rate, drops)
    return np.clip(whitened + flakes[..., None], 0.0, 1.0)


def apply_snow(seq, level, seed=0, drops=None):
    seq = check_sequence(seq)
    level = check_level(level)
    out = [render_snow_frame(f, t, level, seed, seq.frame_rate, drops) for t, f in enumerate(seq.frames)]
    return seq.with_frames(np.stack(out))


# -- dispatch --------------------------------------------------------------


def _frame_op(spec):
    kind, level, seed = spec.kind, spec.level, spec.seed
    ops = {
        ChallengeType.DECOLORIZATION: lambda f, t: apply_decolorization(f, level),
        ChallengeType.LENS_BLUR: lambda f, t: apply_lens_blur(f, level),
        ChallengeType.DARKENING: lambda f, t: apply_darkening(f, level),
        ChallengeType.DIRTY_LENS: lambda f, t: apply_dirty_lens(f, level, seed),
        ChallengeType.EXPOSURE: lambda f, t: apply_overexposure(f, level),
        ChallengeType.GAUSSIAN_BLUR: lambda f, t: apply_gaussian_blur(f, level),
        ChallengeType.NOISE: lambda f, t: apply_noise(f, level, seed, t),
        ChallengeType.SHADOW: lambda f, t: apply_shadow(f, level),
        ChallengeType.HAZE: lambda f, t: apply_haze(f, level),
    }
    return ops.get(kind)


def apply_challenge(seq, spec, n_jobs=None):
    """Apply one challenge to a sequence; level 0 returns an exact copy.

    ``n_jobs`` caps per-frame worker threads (``None`` reads
    ``ROBUSTBENCH_THREADS``); output does not depend on it.
    """
    seq = check_sequence(seq)
    if not isinstance(spec, ChallengeSpec):
        spec = ChallengeSpec(*spec)
    if spec.level == 0:
        return seq.with_frames(seq.frames.copy())
    if spec.kind is ChallengeType.CODEC_ERROR:
        return apply_codec_error(seq, spec.level, spec.seed)
    if spec.kind in (ChallengeType.RAIN, ChallengeType.SNOW):
        render = render_rain_frame if spec.kind is ChallengeType.RAIN else render_snow_frame

        def op(f, t):
            return render(f, t, spec.level, spec.seed, seq.frame_rate)

    else:
        op = _frame_op(spec)
    threads = resolve_threads(n_jobs)
    indexed = list(enumerate(seq.frames))
    if threads > 1 and len(indexed) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(lambda item: op(item[1], item[0]), indexed))
    else:
        out = [op(f, t) for t, f in indexed]
    return seq.with_frames(np.stack(out))


def compose_challenges(seq, specs, n_jobs=None):
    """Apply ``specs`` left to right."""
    specs = list(specs)
    if not specs:
        raise ValueError("compose_challenges needs at least one spec")
    out = check_sequence(seq)
    for spec in specs:
        out = apply_challenge(out, spec, n_jobs=n_jobs)
    return out


def composition_key(specs):
    """Manifest type key for a composition, e.g. ``"09@5+06@1"``."""
    return "+".join(f"{s.kind.code}@{s.level}" for s in specs)


def parse_composition_key(key, seed=0):
    specs = []
    for part in key.split("+"):
        code, _, level = part.partition("@")
        specs.append(ChallengeSpec(ChallengeType.parse(code), int(level), seed))
    return specs


# -- grid synthesis --------------------------------------------------------


MANIFEST_HEADER = ("ref_id", "type", "level", "seed", "path")


@dataclass(frozen=True)
class ManifestRow:
    ref_id: str
    type: str  # two-digit code, or a composition key
    level: int
    seed: int
    path: str

    @property
    def is_composite(self):
        return "@" in self.type

    def specs(self):
        if self.is_composite:
            return parse_composition_key(self.type, self.seed)
        return [ChallengeSpec(ChallengeType.parse(self.type), self.level, self.seed)]

    @property
    def challenge_name(self):
        """Name used in metric and spectrum tables."""
        if self.is_composite:
            return "+".join(f"{s.kind.slug}@{s.level}" for s in self.specs())
        return ChallengeType.parse(self.type).slug


def ref_key(ref_id):
    """Stable 64-bit key of a reference id."""
    return int.from_bytes(hashlib.blake2b(str(ref_id).encode(), digest_size=8).digest(), "little")


def derive_seed(master_seed, ref_id, kind):
    """Per-(reference, challenge type) seed; shared by all levels of that type."""
    return _random.mix(check_seed(master_seed), ref_key(ref_id), ChallengeType.parse(kind).value)


def _normalize_refs(refs):
    if isinstance(refs, dict):
        items = list(refs.items())
    else:
        items = []
        for i, ref in enumerate(refs):
            items.append(ref if isinstance(ref, tuple) else (f"ref{i:03d}", ref))
    if not items:
        raise ValueError("at least one reference sequence is required")
    return [(str(rid), check_sequence(seq)) for rid, seq in items]


def iter_grid(refs, types, levels, seed):
    """Yield ``(ref_id, spec, sequence)`` for every reference x type x level."""
    refs = _normalize_refs(refs)
    types = [ChallengeType.parse(t) for t in types]
    levels = [check_level(lv) for lv in levels]
    if not types:
        raise ValueError("at least one challenge type is required")
    if not levels:
        raise ValueError("at least one level is required")
    for ref_id, seq in refs:
        for kind in types:
            row_seed = derive_seed(seed, ref_id, kind)
            for level in levels:
                spec = ChallengeSpec(kind, level, row_seed)
                yield ref_id, spec, apply_challenge(seq, spec)


def synth_grid(refs, types, levels, seed, out_dir, ext="png"):
    """Synthesise every reference x type x level and write them under ``out_dir``.

    Sequence directories follow ``<out>/<ref_id>_<typecode>_<level>/``.
    Returns the manifest rows (also written to ``<out>/manifest.csv``).
    """
    out_dir = Path(out_dir)
    refs = _normalize_refs(refs)
    rows = []
    for ref_id, spec, seq in iter_grid(refs, types, levels, seed):
        name = f"{ref_id}_{spec.kind.code}_{spec.level}"
        target = out_dir / name
        if target.exists():
            raise FileExistsError(f"output directory already exists: {target}")
        save_sequence(seq, target, ext)
        rows.append(ManifestRow(ref_id, spec.kind.code, spec.level, spec.seed, name))
    write_manifest(rows, out_dir / "manifest.csv")
    return rows


def synth_composed(refs, specs, seed, out_dir, ext="png"):
    """One composed sequence per reference; spec seeds are derived per reference."""
    out_dir = Path(out_dir)
    refs = _normalize_refs(refs)
    specs = [s if isinstance(s, ChallengeSpec) else ChallengeSpec(*s) for s in specs]
    if not specs:
        raise ValueError("at least one spec is required")
    key = composition_key(specs)
    rows = []
    for ref_id, seq in refs:
        row_seed = _random.mix(check_seed(seed), ref_key(ref_id), 0xC0)
        seeded = [ChallengeSpec(s.kind, s.level, _random.mix(row_seed, i)) for i, s in enumerate(specs)]
        name = f"{ref_id}_{key}_{max(s.level for s in specs)}"
        target = out_dir / name
        if target.exists():
            raise FileExistsError(f"output directory already exists: {target}")
        save_sequence(compose_challenges(seq, seeded), target, ext)
        rows.append(ManifestRow(ref_id, key, max(s.level for s in specs), row_seed, name))
    write_manifest(rows, out_dir / "manifest.csv")
    return rows


def write_manifest(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for r in rows:
            writer.writerow([r.ref_id, r.type, r.level, r.seed, r.path])


def read_manifest(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
            raise ValueError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}")
        return [
            ManifestRow(r["ref_id"], r["type"], int(r["level"]), int(r["seed"]), r["path"])
            for r in reader
        ]


# -- estimator API ---------------------------------------------------------


class ChallengeTransformer(BaseEstimator, TransformerMixin):
    """Apply one challenge condition as a scikit-learn transformer.

    ``transform`` accepts a :class:`FrameSequence`, a ``(T, H, W, 3)`` array
    or a single ``(H, W, 3)`` frame, and returns the same kind of object.

    Parameters
    ----------
    kind : ChallengeType or str
    level : int, 0..5
    seed : int
        Seed of the stochastic challenges.
    frame_rate : float, optional
        Used for raw arrays; sequences keep their own rate.
    """

    def __init__(self, kind="noise", level=1, seed=0, frame_rate=None):
        self.kind = kind
        self.level = level
        self.seed = seed
        self.frame_rate = frame_rate

    def fit(self, X=None, y=None):
        self.spec_ = ChallengeSpec(ChallengeType.parse(self.kind), self.level, self.seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        return _transform_like(X, self.frame_rate, lambda seq: apply_challenge(seq, self.spec_))


class ChallengeComposer(BaseEstimator, TransformerMixin):
    """Apply ``steps`` (a list of ``(kind, level)`` pairs) left to right."""

    def __init__(self, steps=(("rain", 5), ("exposure", 1)), seed=0, frame_rate=None):
        self.steps = steps
        self.seed = seed
        self.frame_rate = frame_rate

    def fit(self, X=None, y=None):
        if not self.steps:
            raise ValueError("steps must not be empty")
        self.specs_ = [
            ChallengeSpec(ChallengeType.parse(kind), level, _random.mix(check_seed(self.seed), i))
            for i, (kind, level) in enumerate(self.steps)
        ]
        return self

    def transform(self, X):
        check_is_fitted(self, "specs_")
        return _transform_like(X, self.frame_rate, lambda seq: compose_challenges(seq, self.specs_))


def _transform_like(X, frame_rate, fn):
    if isinstance(X, FrameSequence):
        return fn(X)
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 3:
        return fn(check_sequence(arr[None], frame_rate)).frames[0]
    return fn(check_sequence(arr, frame_rate)).frames
