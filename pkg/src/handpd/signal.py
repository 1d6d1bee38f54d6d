"""Pen-recording I/O and the preprocessing chain.

Order of operations is fixed: per-sequence min-max normalization, forward
differencing of the selected channels (trailing zero pad), then sliding
window segmentation into fixed-width patches.
"""
import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError, ParseError

LABELS = ("HC", "PD")  # class index 0 = HC, 1 = PD
FEATURES = ("x", "y", "azimuth", "altitude", "pressure")
DIFF_MODES = {
    "geometric": (0, 1),
    "none": (),
    "azimuth": (2,),
    "altitude": (3,),
    "pressure": (4,),
}
# PaHaW-style column order
SVC_COLUMNS = ("y", "x", "t", "button", "altitude", "azimuth", "pressure")
DWT_COLUMNS = ("t", "x", "y", "azimuth", "altitude", "pressure")
MANIFEST_HEADER = ("subject_id", "label", "task", "path")
_RANGE_EPS = 1e-12


@dataclass
class RawSequence:
    subject_id: str
    label: str
    task: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    azimuth: np.ndarray
    altitude: np.ndarray
    pressure: np.ndarray
    button: np.ndarray | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataError(f"label must be one of {LABELS}, got {self.label!r}")
        for name in ("t",) + FEATURES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = len(self.t)
        for name in FEATURES:
            if len(getattr(self, name)) != n:
                raise DataError(f"channel {name} has length {len(getattr(self, name))}, expected {n}")
        if self.button is not None:
            self.button = np.asarray(self.button)
            if len(self.button) != n:
                raise DataError("button channel length mismatch")
        if n < 2:
            raise DataError(f"sequence {self.subject_id} has {n} points; at least 2 required")
        if np.any(np.diff(self.t) < 0):
            raise DataError(f"sequence {self.subject_id}: timestamps decrease")

    def __len__(self):
        return len(self.t)

    @property
    def class_index(self):
        return LABELS.index(self.label)

    def channels(self):
        """(L, 5) block in model feature order."""
        return np.column_stack([getattr(self, f) for f in FEATURES])

    def with_channels(self, block):
        return replace(self, **{f: block[:, i].copy() for i, f in enumerate(FEATURES)})


@dataclass
class ChannelSet:
    values: np.ndarray  # (L, 5)
    subject_id: str
    label: str

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != len(FEATURES):
            raise DataError(f"channel block must be (L, 5), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("channel block contains non-finite values")

    def __len__(self):
        return self.values.shape[0]


@dataclass
class Patch:
    values: np.ndarray  # (w, 5)
    parent_subject: str
    parent_label: str
    offset: int = 0

    @property
    def window(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class SegmentationConfig:
    window_size: int = 128
    stride_size: int = 64
    diff_mode: str = "geometric"

    def __post_init__(self):
        if self.window_size < 2:
            raise ParameterError(f"window_size must be >= 2, got {self.window_size}")
        if self.stride_size < 1:
            raise ParameterError(f"stride_size must be >= 1, got {self.stride_size}")
        if self.diff_mode not in DIFF_MODES:
            raise ParameterError(f"diff_mode must be one of {sorted(DIFF_MODES)}, got {self.diff_mode!r}")


@dataclass
class ManifestRow:
    subject_id: str
    label: str
    task: str
    path: Path
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- file formats


def _parse_floats(line, n, lineno, path):
    parts = line.split()
    if len(parts) != n:
        raise ParseError(f"expected {n} fields, got {len(parts)}", lineno, path)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(str(exc), lineno, path) from None


def _read_svc(path, subject_id=None, label="HC", task="unknown"):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1, path)
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise ParseError(f"header must be the point count, got {lines[0]!r}", 1, path) from None
    body = lines[1:]
    if count != len(body):
        raise ParseError(f"header declares {count} points but file has {len(body)}", 1, path)
    rows = [_parse_floats(ln, len(SVC_COLUMNS), i + 2, path) for i, ln in enumerate(body)]
    if count < 2:
        raise DataError(f"{path}: {count} points; at least 2 required")
    cols = dict(zip(SVC_COLUMNS, np.array(rows, dtype=np.float64).T))
    return RawSequence(
        subject_id=subject_id or Path(path).stem,
        label=label,
        task=task,
        t=cols["t"],
        x=cols["x"],
        y=cols["y"],
        azimuth=cols["azimuth"],
        altitude=cols["altitude"],
        pressure=cols["pressure"],
        button=cols["button"].astype(np.int8),
    )


def _read_dwt(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1, path)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "DWT1":
        raise ParseError("first line must be 'DWT1 <subject_id> <label> <task>'", 1, path)
    _, subject_id, label, task = head
    if label not in LABELS:
        raise ParseError(f"label must be PD or HC, got {label!r}", 1, path)
    if len(lines) < 2 or tuple(lines[1].split()) != DWT_COLUMNS:
        raise ParseError(f"second line must be the header {' '.join(DWT_COLUMNS)!r}", 2, path)
    body = [ln for ln in lines[2:]]
    while body and not body[-1].strip():
        body.pop()
    rows = [_parse_floats(ln, len(DWT_COLUMNS), i + 3, path) for i, ln in enumerate(body)]
    if len(rows) < 2:
        raise DataError(f"{path}: {len(rows)} points; at least 2 required")
    cols = dict(zip(DWT_COLUMNS, np.array(rows, dtype=np.float64).T))
    return RawSequence(subject_id=subject_id, label=label, task=task, **cols)


def load_sequence(path, format="dwt", **meta):
    """Read one recording. ``meta`` (subject_id, label, task) fills svc files,
    which carry no identity of their own."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format == "dwt":
        return _read_dwt(path)
    if format == "svc":
        return _read_svc(path, **meta)
    raise ParameterError(f"unknown sequence format {format!r}")


def write_sequence(seq, path):
    """Write ``seq`` in the native dwt format (shortest round-trip reals)."""
    for token in (seq.subject_id, seq.task):
        if not token or any(c.isspace() for c in token):
            raise DataError(f"dwt identifiers may not contain whitespace: {token!r}")
    cols = [seq.t, seq.x, seq.y, seq.azimuth, seq.altitude, seq.pressure]
    out = [f"DWT1 {seq.subject_id} {seq.label} {seq.task}", " ".join(DWT_COLUMNS)]
    out.extend(" ".join(repr(float(v)) for v in rec) for rec in zip(*cols))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_manifest(path):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames[:4]) != MANIFEST_HEADER:
            raise ParseError(f"manifest header must be {','.join(MANIFEST_HEADER)}", 1, path)
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if rec["label"] not in LABELS:
                raise ParseError(f"bad label {rec['label']!r}", lineno, path)
            p = Path(rec["path"])
            if not p.is_absolute():
                p = path.parent / p
            extra = {k: v for k, v in rec.items() if k not in MANIFEST_HEADER}
            rows.append(ManifestRow(rec["subject_id"], rec["label"], rec["task"], p, extra))
    return rows


def write_manifest(rows, path, relative_to=None):
    path = Path(path)
    base = Path(relative_to) if relative_to is not None else path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for r in rows:
            p = Path(r.path)
            try:
                p = p.relative_to(base)
            except ValueError:
                pass
            w.writerow([r.subject_id, r.label, r.task, p.as_posix()])


# ---------------------------------------------------------------- preprocessing


def min_max_normalize(seq):
    """Rescale each model channel of one sequence to [0, 1].

    A channel whose range is below 1e-12 is mapped to zeros.
    """
    block = seq.channels()
    if not np.all(np.isfinite(block)):
        raise DataError(f"sequence {seq.subject_id}: non-finite channel value")
    lo = block.min(axis=0)
    span = block.max(axis=0) - lo
    flat = span < _RANGE_EPS
    out = (block - lo) / np.where(flat, 1.0, span)
    out[:, flat] = 0.0
    return seq.with_channels(out)


def forward_difference(seq, mode="geometric"):
    if mode not in DIFF_MODES:
        raise ParameterError(f"diff_mode must be one of {sorted(DIFF_MODES)}, got {mode!r}")
    block = seq.channels()
    for c in DIFF_MODES[mode]:
        d = np.zeros(len(block))
        d[:-1] = block[1:, c] - block[:-1, c]
        block[:, c] = d
    return ChannelSet(block, seq.subject_id, seq.label)


def preprocess(seq, mode="geometric"):
    return forward_difference(min_max_normalize(seq), mode)


def patch_offsets(length, window, stride):
    if length < window:
        return [0]
    return list(range(0, length - window + 1, stride))


def patch_count(length, window, stride):
    if length < window:
        return 1
    return (length - window) // stride + 1


def segment_array(values, window, stride):
    """(N, window, F) stack of patches; short inputs become one right-padded patch."""
    L, F = values.shape
    if L < 2:
        raise DataError(f"cannot segment a sequence of {L} points")
    if L < window:
        out = np.zeros((1, window, F))
        out[0, :L] = values
        return out
    n = patch_count(L, window, stride)
    view = np.lib.stride_tricks.sliding_window_view(values, window, axis=0)[::stride][:n]
    return np.ascontiguousarray(view.transpose(0, 2, 1))


def segment(ch, cfg):
    w, s = cfg.window_size, cfg.stride_size
    block = segment_array(ch.values, w, s)
    offs = patch_offsets(len(ch), w, s)
    return [Patch(block[i], ch.subject_id, ch.label, offs[i]) for i in range(len(offs))]


def sequence_patches(seq, cfg):
    """Full chain for one recording: (N, w, 5) array of patches."""
    ch = preprocess(seq, cfg.diff_mode)
    return segment_array(ch.values, cfg.window_size, cfg.stride_size)


