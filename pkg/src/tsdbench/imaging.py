"""Frames, sequences, colour math and frame file I/O.

A frame is a ``float64`` array of shape ``(height, width, 3)`` holding RGB
channels in ``[0, 1]``. Quantisation to 8 bits happens only at file
boundaries.
"""

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    CorruptFrameError,
    MissingFileError,
    UnsupportedFormatError,
    UnwritablePathError,
)
from .validation import check_frame, check_frames, check_same_shape, check_unit_interval

DEFAULT_FRAME_RATE = 30.0
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
FRAME_PATTERN = "frame_{:05d}.{}"

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
_FRAME_FILE_RE = re.compile(r"^frame_(\d+)\.(png|ppm)$")


@dataclass(frozen=True, eq=False)
class FrameSequence:
    """Ordered frames of one video with a shared size and frame rate."""

    frames: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self):
        object.__setattr__(self, "frames", check_frames(self.frames))
        if not np.isfinite(self.frame_rate) or self.frame_rate <= 0:
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    def __len__(self):
        return self.frames.shape[0]

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, index):
        return self.frames[index]

    @property
    def height(self):
        return self.frames.shape[1]

    @property
    def width(self):
        return self.frames.shape[2]

    def with_frames(self, frames):
        return FrameSequence(frames, self.frame_rate)

    def equals(self, other):
        """Bit-exact comparison of frames and frame rate."""
        return (
            self.frame_rate == other.frame_rate
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


def to_luma(frame):
    """Rec. 601 luminance of an RGB frame, shape ``(height, width)``."""
    frame = check_frame(frame)
    return np.clip(frame @ LUMA_WEIGHTS, 0.0, 1.0)


def frame_diff(a, b):
    """Absolute luminance difference of two frames."""
    a = check_frame(a, "a")
    b = check_frame(b, "b")
    check_same_shape(a, b, "frames")
    return np.abs(a @ LUMA_WEIGHTS - b @ LUMA_WEIGHTS).clip(0.0, 1.0)


def blend(a, b, alpha):
    """``(1 - alpha) * a + alpha * b``, clamped to ``[0, 1]``."""
    a = check_frame(a, "a")
    b = check_frame(b, "b")
    check_same_shape(a, b, "frames")
    alpha = check_unit_interval(alpha, "alpha")
    # alpha 0 / 1 must return the operand exactly
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    # wb = 1 - (1 - alpha) makes blend(a, b, t) == blend(b, a, 1 - t) bit-exact
    wa = 1.0 - alpha
    wb = 1.0 - wa
    return np.clip(wa * a + wb * b, 0.0, 1.0)


def quantize(frame):
    """Map ``[0, 1]`` channels to bytes with round-half-up."""
    return np.floor(np.clip(frame, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_frame(path):
    """Read an 8-bit PNG or binary PPM (P6) file into a frame."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path, "no such file")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise MissingFileError(path, f"cannot read: {exc.strerror}") from exc
    if data.startswith(b"P6"):
        raw = _decode_ppm(data, path)
    elif data.startswith(_PNG_SIGNATURE):
        raw = _decode_png(path)
    else:
        raise UnsupportedFormatError(path, "not a PNG or binary PPM (P6) file")
    return raw.astype(np.float64) / 255.0


def save_frame(frame, path):
    """Write ``frame`` as PNG or PPM, chosen by the file suffix."""
    path = Path(path)
    frame = check_frame(frame)
    suffix = path.suffix.lower()
    if suffix not in (".png", ".ppm"):
        raise UnsupportedFormatError(path, f"unsupported output suffix {path.suffix!r}")
    raw = quantize(frame)
    try:
        if suffix == ".ppm":
            header = b"P6\n%d %d\n255\n" % (raw.shape[1], raw.shape[0])
            with open(path, "wb") as fh:
                fh.write(header + raw.tobytes())
        else:
            from PIL import Image

            Image.fromarray(raw).save(path, format="PNG")
    except OSError as exc:
        raise UnwritablePathError(path, exc.strerror or str(exc)) from exc


def load_sequence(directory, frame_rate=DEFAULT_FRAME_RATE):
    """Load ``frame_00001.png`` ... from ``directory`` in index order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(directory, "no such sequence directory")
    indexed = []
    for entry in os.listdir(directory):
        m = _FRAME_FILE_RE.match(entry)
        if m:
            indexed.append((int(m.group(1)), entry))
    if not indexed:
        raise MissingFileError(directory, "sequence directory holds no frame_*.png/ppm files")
    indexed.sort()
    frames = [load_frame(directory / name) for _, name in indexed]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise CorruptFrameError(directory, f"frames differ in size: {sorted(shapes)}")
    return FrameSequence(np.stack(frames), frame_rate)


def save_sequence(seq, directory, ext="png"):
    """Write a sequence as ``frame_00001.<ext>`` ... (1-based indices)."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UnwritablePathError(directory, exc.strerror or str(exc)) from exc
    for i, frame in enumerate(seq.frames, start=1):
        save_frame(frame, directory / FRAME_PATTERN.format(i, ext))


def _decode_ppm(data, path):
    tokens = []
    pos = 2
    # header: width, height, maxval, separated by whitespace and # comments
    while len(tokens) < 3:
        if pos >= len(data):
            raise CorruptFrameError(path, "truncated PPM header")
        c = data[pos : pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            end = data.find(b"\n", pos)
            if end < 0:
                raise CorruptFrameError(path, "truncated PPM header")
            pos = end + 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise CorruptFrameError(path, f"bad PPM header token {tok!r}")
            tokens.append(int(tok))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise CorruptFrameError(path, "missing whitespace after PPM header")
    pos += 1
    width, height, maxval = tokens
    if width <= 0 or height <= 0:
        raise CorruptFrameError(path, f"invalid PPM size {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormatError(path, f"PPM maxval {maxval} (only 255 supported)")
    expected = width * height * 3
    payload = data[pos : pos + expected]
    if len(payload) < expected:
        raise CorruptFrameError(path, f"PPM payload truncated: {len(payload)} of {expected} bytes")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def _decode_png(path):
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            if img.mode not in ("RGB", "RGBA", "L", "P", "LA"):
                raise UnsupportedFormatError(path, f"unsupported PNG mode {img.mode!r} (8-bit only)")
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except UnsupportedFormatError:
        raise
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise CorruptFrameError(path, f"cannot decode PNG: {exc}") from exc
