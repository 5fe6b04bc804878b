"""Plain-text ``key=value`` run configuration.

Blank lines and ``#`` comments are ignored. Unknown keys are rejected.
Command-line flags override file values, which override the defaults.
"""

from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # paths
    input: str = ""
    out: str = ""
    manifest: str = ""
    refs: str = ""
    gt: str = ""
    pred: str = ""
    spectra: str = ""
    metrics: str = ""
    eval: str = ""
    spectrum: str = ""
    correlation: str = ""
    split: str = ""
    # synthesis
    seed: int = 0
    frame_rate: float = 30.0
    types: str = "all"
    levels: str = "1-5"
    compose: str = ""
    format: str = "png"
    # evaluation
    iou_threshold: float = 0.5
    betas: str = "0.5,2"
    class_agnostic: bool = False
    subset: str = "all"
    # splitting
    split_ratio: float = 0.7
    split_mode: str = "shuffle"
    # spectra / correlation
    epsilon: float = 1e-6
    include_reference: bool = False

    def update(self, values):
        known = {f.name: f for f in fields(self)}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            setattr(self, key, _coerce(known[key].type, raw, key))
        return self

    def dump(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def echo(self, out_dir):
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "config.txt").write_text(self.dump())


def _coerce(kind, raw, key):
    if kind in (bool, "bool"):
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return str(raw)


def read_config(path):
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


def parse_levels(text):
    """``"1-5"``, ``"1,3,5"`` or ``"2"`` to a sorted list of ints."""
    levels = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                levels.update(range(int(lo), int(hi) + 1))
            else:
                levels.add(int(part))
        except ValueError:
            raise ConfigError(f"bad level list {text!r}") from None
    if not levels:
        raise ConfigError("level list is empty")
    return sorted(levels)


def parse_floats(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad number list {text!r}") from None
