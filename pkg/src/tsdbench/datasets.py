"""Deterministic synthetic assets: a natural-texture test image, moving
reference sequences with sign ground truth, and a scripted detector.
"""

import numpy as np

from ._random import generator
from .imaging import FrameSequence


def _pink_field(rng, height, width):
    """Zero-mean 1/f random field (natural-image-like spectrum), scaled to [0, 1]."""
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    f = np.hypot(fy, fx)
    f[0, 0] = 1.0
    spectrum = (rng.standard_normal((height, width)) + 1j * rng.standard_normal((height, width))) / f
    spectrum[0, 0] = 0.0
    field = np.fft.ifft2(spectrum).real
    field -= field.min()
    return field / field.max()


def make_test_asset(size=64, seed=0):
    """Fixed ``size x size`` natural-texture RGB image.

    Channels share a 1/f luminance field with per-channel tint fields and a
    display gamma, so the image spans deep shadows to highlights.
    """
    rng = generator(seed, 0x7E57)
    base = _pink_field(rng, size, size)
    frame = np.empty((size, size, 3))
    for c in range(3):
        tint = _pink_field(rng, size, size)
        frame[..., c] = 0.75 * base + 0.25 * tint
    return np.clip(frame, 0.0, 1.0) ** 2.2


# sign patch colours: red rim, white face
_SIGN_RIM = np.array([0.85, 0.1, 0.1])
_SIGN_FACE = np.array([0.95, 0.95, 0.95])


def make_reference_sequence(n_frames=10, size=32, seed=0, frame_rate=30.0, sign_size=None):
    """Panning texture with one sign patch drifting across it.

    Returns ``(sequence, boxes)`` where ``boxes[t]`` is the ``(x, y, w, h)``
    ground-truth box of the sign in frame ``t``.
    """
    rng = generator(seed, 0x5E9)
    pan = n_frames
    texture = make_test_asset(size + pan, seed=int(rng.integers(2**32)))
    sign = sign_size or max(4, size // 4)
    x0 = int(rng.integers(0, max(1, size - sign - n_frames // 2)))
    y0 = int(rng.integers(0, size - sign + 1))
    yy, xx = np.mgrid[0:sign, 0:sign]
    c = (sign - 1) / 2.0
    dist = np.maximum(np.abs(yy - c), np.abs(xx - c))
    rim = dist >= c - max(1.0, sign / 6.0)
    frames = np.empty((n_frames, size, size, 3))
    boxes = []
    for t in range(n_frames):
        frame = texture[t : t + size, t : t + size].copy()
        x = min(size - sign, x0 + t // 2)
        frame[y0 : y0 + sign, x : x + sign] = np.where(rim[..., None], _SIGN_RIM, _SIGN_FACE)
        frames[t] = frame
        boxes.append((x, y0, sign, sign))
    return FrameSequence(frames, frame_rate), boxes


def reference_annotations(boxes, sign=None):
    """Ground-truth records for the boxes returned by :func:`make_reference_sequence`."""
    from .annotations import Annotation, BoundingBox, SignType

    sign = SignType.STOP if sign is None else sign
    return [Annotation(t, sign, BoundingBox(*b)) for t, b in enumerate(boxes)]


def scripted_detections(gt, level, n_levels=5, false_positives_per_level=1):
    """Planted detector whose recall and precision fall strictly with ``level``.

    Keeps the first ``round(len(gt) * (1 - 0.15 * level))`` ground-truth boxes
    (shifted by one pixel, still IoU >= 0.5 for boxes of side >= 4) and adds
    ``level * false_positives_per_level`` non-overlapping false alarms.
    """
    from .annotations import BoundingBox, Detection

    if not 0 <= level <= n_levels:
        raise ValueError(f"level must be in [0, {n_levels}]")
    keep = int(np.floor(len(gt) * (1.0 - 0.15 * level) + 0.5))
    out = []
    for i, g in enumerate(gt[:keep]):
        b = g.box
        out.append(Detection(g.frame_index, g.sign, BoundingBox(b.x + 1, b.y, b.w, b.h), 1.0 - 0.001 * i))
    for k in range(level * false_positives_per_level):
        g = gt[k % len(gt)]
        b = g.box
        out.append(Detection(g.frame_index, g.sign, BoundingBox(b.x + 2 * b.w, b.y + 2 * b.h, b.w, b.h), 0.5))
    return out
