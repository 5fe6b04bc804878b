"""Input validation helpers in the spirit of ``sklearn.utils.validation``.

Frames are ``float64`` arrays of shape ``(height, width, 3)`` with channels in
``[0, 1]``. Sequences are :class:`~tsdbench.imaging.FrameSequence` objects or
raw ``(T, H, W, 3)`` arrays.
"""

import numbers

import numpy as np

# slack for values that drifted past [0, 1] through float arithmetic
_RANGE_TOL = 1e-9


def check_frame(frame, name="frame"):
    """Validate an RGB frame and return it as a float64 array."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (height, width, 3), got {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must have positive width and height, got {arr.shape[:2]}")
    return _check_unit_range(arr, name)


def check_luma(values, name="luma"):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_frames(frames, name="frames"):
    """Validate a ``(T, H, W, 3)`` stack of frames."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ValueError(f"{name} must have shape (T, height, width, 3), got {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name} must contain at least one frame")
    if arr.shape[1] == 0 or arr.shape[2] == 0:
        raise ValueError(f"{name} must have positive width and height")
    return _check_unit_range(arr, name)


def check_sequence(seq, frame_rate=None):
    """Coerce ``seq`` to a :class:`FrameSequence`.

    Raw arrays are wrapped with ``frame_rate`` (default 30 fps). An existing
    sequence is returned as is unless a different ``frame_rate`` is requested.
    """
    from .imaging import DEFAULT_FRAME_RATE, FrameSequence

    if isinstance(seq, FrameSequence):
        if frame_rate is None or frame_rate == seq.frame_rate:
            return seq
        return FrameSequence(seq.frames, frame_rate)
    return FrameSequence(seq, DEFAULT_FRAME_RATE if frame_rate is None else frame_rate)


def check_same_shape(a, b, what="inputs"):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"{what} differ in shape: {np.shape(a)} vs {np.shape(b)}")


def check_level(level, allow_zero=False):
    """Validate a challenge level (1..5, or 0..5 with ``allow_zero``)."""
    if isinstance(level, bool) or not isinstance(level, numbers.Integral):
        raise TypeError(f"level must be an integer, got {level!r}")
    low = 0 if allow_zero else 1
    if not low <= level <= 5:
        raise ValueError(f"level must be in [{low}, 5], got {level}")
    return int(level)


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return int(seed)


def check_unit_interval(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return value


def _check_unit_range(arr, name):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < -_RANGE_TOL or arr.max() > 1 + _RANGE_TOL):
        raise ValueError(f"{name} channel values must lie in [0, 1]")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        arr = np.clip(arr, 0.0, 1.0)
    return arr
