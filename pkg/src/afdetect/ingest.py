"""Loading numeric ECG records and digitizing rendered ECG strips.

Images are held as ``(height, width)`` arrays, so pixel ``(m, n)`` (column
``m``, row ``n``) lives at ``intensities[n, m]``.  Intensity 1.0 is the
darkest ink, 0.0 is background.
"""
from __future__ import annotations

import csv
import enum
import math
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateRange,
    EmptySignal,
    InsufficientData,
    MalformedFile,
    NoSignalPixels,
)

BINARY_MAGIC = b"ECG1"
DEFAULT_TRACE_THRESHOLD = 0.99


class Label(str, enum.Enum):
    AF = "AF"
    NORMAL = "Normal"
    UNLABELED = "Unlabeled"

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        text = str(value).strip()
        aliases = {"af": cls.AF, "a": cls.AF, "1": cls.AF,
                   "normal": cls.NORMAL, "n": cls.NORMAL, "0": cls.NORMAL,
                   "unlabeled": cls.UNLABELED, "": cls.UNLABELED}
        try:
            return aliases[text.lower()]
        except KeyError:
            raise ValueError(f"unknown label {value!r}") from None

    @property
    def target(self) -> int:
        """Binary target: 1 for AF, 0 for Normal."""
        if self is Label.UNLABELED:
            raise ValueError("unlabeled record has no binary target")
        return int(self is Label.AF)


@dataclass(frozen=True)
class EcgRecord:
    id: str
    samples: np.ndarray
    fs: float
    label: Label = Label.UNLABELED

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise MalformedFile(f"{self.id}: samples must be one-dimensional")
        if samples.size == 0:
            raise EmptySignal(f"{self.id}: record has no samples")
        if not self.fs > 0:
            raise ValueError(f"{self.id}: sampling frequency must be positive, got {self.fs}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "label", Label.parse(self.label))

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def with_samples(self, samples, fs=None) -> "EcgRecord":
        return replace(self, samples=samples, fs=self.fs if fs is None else fs)


@dataclass(frozen=True)
class PixelMatrix:
    intensities: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("pixel matrix must be a non-empty 2D grid")
        if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
            raise ValueError("pixel intensities must lie in [0, 1]")
        object.__setattr__(self, "intensities", arr)

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True)
class TracePointSet:
    """Signal pixels as ``(m, n)`` pairs sorted by column; one row per column at most."""

    points: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if pts.size and (pts[:, 0].min() < 0 or pts[:, 0].max() >= self.width
                         or pts[:, 1].min() < 0 or pts[:, 1].max() >= self.height):
            raise ValueError("trace point outside the source image")
        if len(np.unique(pts[:, 0])) != len(pts):
            raise ValueError("at most one retained row per column")
        object.__setattr__(self, "points", pts[np.argsort(pts[:, 0], kind="stable")])

    @property
    def columns(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def rows(self) -> np.ndarray:
        return self.points[:, 1]


# --------------------------------------------------------------------------
# numeric records


def _read_binary(raw: bytes, path) -> np.ndarray:
    if len(raw) < 8:
        raise MalformedFile(f"{path}: truncated ECG1 header")
    (count,) = struct.unpack("<I", raw[4:8])
    payload = raw[8:]
    if len(payload) != 4 * count:
        raise MalformedFile(f"{path}: header declares {count} samples, payload holds {len(payload) / 4:g}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64)


def _read_csv(text: str, path) -> np.ndarray:
    values = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise MalformedFile(f"{path}:{lineno}: not a number: {line[:40]!r}") from None
    return np.asarray(values, dtype=np.float64)


def read_samples(path) -> np.ndarray:
    """Read a one-column CSV or an ECG1 binary vector."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] == BINARY_MAGIC:
        samples = _read_binary(raw, path)
    else:
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedFile(f"{path}: neither ECG1 binary nor UTF-8 text") from None
        samples = _read_csv(text, path)
    if samples.size == 0:
        raise EmptySignal(f"{path}: no samples")
    if not np.all(np.isfinite(samples)):
        raise MalformedFile(f"{path}: non-finite sample values")
    return samples


def load_numeric_record(path, fs: float, label=Label.UNLABELED, record_id: str | None = None) -> EcgRecord:
    samples = read_samples(path)
    return EcgRecord(record_id or Path(path).stem, samples, fs, Label.parse(label))


def write_csv_samples(path, samples) -> None:
    samples = np.asarray(samples, dtype=np.float64)
    Path(path).write_text("".join(f"{v!r}\n" for v in samples.tolist()))


def write_binary_samples(path, samples) -> None:
    samples = np.asarray(samples, dtype="<f4")
    Path(path).write_bytes(BINARY_MAGIC + struct.pack("<I", samples.size) + samples.tobytes())


def load_physionet2017(root, labels=("N", "A")):
    """Yield AF/Normal records from an unpacked PhysioNet/CinC 2017 training set.

    ``root`` must contain ``REFERENCE.csv`` and the ``*.mat`` files.  Records
    labelled ``O`` (other rhythm) or ``~`` (noisy) are skipped.
    """
    from scipy.io import loadmat

    root = Path(root)
    mapping = {"N": Label.NORMAL, "A": Label.AF}
    with open(root / "REFERENCE.csv", newline="") as fh:
        for row in csv.reader(fh):
            if len(row) < 2 or row[1] not in labels:
                continue
            mat = loadmat(root / f"{row[0]}.mat")
            yield EcgRecord(row[0], np.ravel(mat["val"]).astype(np.float64), 300.0, mapping[row[1]])


# --------------------------------------------------------------------------
# images


def _pgm_tokens(raw: bytes, count: int):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedFile("truncated PGM header")
        tokens.append(int(raw[start:pos]))
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Raw 8-bit values of a binary (P5) PGM as a ``(height, width)`` uint8 array."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise MalformedFile(f"{path}: not a binary PGM (P5)")
    try:
        (width, height, maxval), offset = _pgm_tokens(raw, 3)
    except ValueError:
        raise MalformedFile(f"{path}: bad PGM header") from None
    if maxval > 255 or maxval < 1:
        raise MalformedFile(f"{path}: only 8-bit PGM is supported")
    data = raw[offset:offset + width * height]
    if len(data) != width * height:
        raise MalformedFile(f"{path}: PGM payload too short")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width)


def write_pgm(path, values) -> None:
    values = np.asarray(values, dtype=np.uint8)
    height, width = values.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (width, height) + values.tobytes())


def load_image(path) -> PixelMatrix:
    """Load a PGM strip; darkest pixels map to intensity 1.0."""
    return PixelMatrix(1.0 - read_pgm(path).astype(np.float64) / 255.0)


def save_image(path, img: PixelMatrix) -> None:
    write_pgm(path, np.rint(255.0 * (1.0 - img.intensities)))


# --------------------------------------------------------------------------
# digitizer


def binarize_and_remove_grid(img: PixelMatrix, trace_threshold: float = DEFAULT_TRACE_THRESHOLD) -> PixelMatrix:
    if not 0 < trace_threshold <= 1:
        raise ValueError("trace_threshold must be in (0, 1]")
    return PixelMatrix((img.intensities >= trace_threshold).astype(np.float64))


def extract_trace(binary: PixelMatrix) -> TracePointSet:
    """Collect the signal pixels and keep the lower-median row of each column."""
    rows, cols = np.nonzero(binary.intensities == 1.0)
    if cols.size == 0:
        raise NoSignalPixels("image contains no signal pixels")
    # np.nonzero walks row-major; re-sort by column so each column's rows are contiguous and ascending
    order = np.lexsort((rows, cols))
    rows, cols = rows[order], cols[order]
    uniq, start, counts = np.unique(cols, return_index=True, return_counts=True)
    median_rows = rows[start + (counts - 1) // 2]
    return TracePointSet(np.column_stack([uniq, median_rows]), binary.width, binary.height)


def trace_to_signal(trace: TracePointSet, fs: float, record_id: str = "digitized",
                    label=Label.UNLABELED) -> EcgRecord:
    if len(trace.points) == 0:
        raise NoSignalPixels("empty trace")
    amplitude = (trace.height - 1 - trace.rows).astype(np.float64)
    # np.interp extends the end values outward, which fills leading/trailing gaps
    samples = np.interp(np.arange(trace.width), trace.columns, amplitude)
    return EcgRecord(record_id, samples, fs, label)


def digitize(img: PixelMatrix, fs: float, trace_threshold: float = DEFAULT_TRACE_THRESHOLD,
             record_id: str = "digitized", label=Label.UNLABELED) -> EcgRecord:
    return trace_to_signal(extract_trace(binarize_and_remove_grid(img, trace_threshold)),
                           fs, record_id, label)


def resample_to_length(samples, length: int) -> np.ndarray:
    """Linear resampling that maps the first and last samples onto the ends."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 1:
        return np.full(length, samples[0])
    x = np.linspace(0.0, samples.size - 1, length)
    return np.interp(x, np.arange(samples.size), samples)


def render_signal(record: EcgRecord, width: int, height: int, grid_intensity: float | None = 0.4,
                  grid_spacing: int = 10, margin: int = 4) -> PixelMatrix:
    """Draw ``record`` as a chart strip, one trace column per pixel column.

    Each column is inked from its own row halfway toward both neighbours so the
    trace is vertically continuous and its per-column median stays on the sample.
    """
    if width < 2 or height < 2:
        raise DegenerateRange("render target must be at least 2x2 pixels")
    if grid_intensity is not None and not 0 <= grid_intensity < 1:
        raise ValueError("grid intensity must lie in [0, 1)")
    margin = min(margin, (height - 1) // 2)
    values = resample_to_length(record.samples, width)
    lo, hi = values.min(), values.max()
    usable = height - 1 - 2 * margin
    if hi - lo <= 0 or usable <= 0:
        rows = np.full(width, (height - 1) / 2.0)
    else:
        rows = margin + (hi - values) / (hi - lo) * usable
    rows = np.rint(rows).astype(np.int64)

    canvas = np.zeros((height, width))
    if grid_intensity is not None and grid_spacing > 0:
        canvas[::grid_spacing, :] = grid_intensity
        canvas[:, ::grid_spacing] = grid_intensity
    prev_mid = np.concatenate([[rows[0]], (rows[:-1] + rows[1:]) / 2.0])
    next_mid = np.concatenate([(rows[:-1] + rows[1:]) / 2.0, [rows[-1]]])
    top = np.floor(np.minimum(rows, np.minimum(prev_mid, next_mid))).astype(np.int64)
    bottom = np.ceil(np.maximum(rows, np.maximum(prev_mid, next_mid))).astype(np.int64)
    for m in range(width):
        canvas[top[m]:bottom[m] + 1, m] = 1.0
    return PixelMatrix(canvas)


# --------------------------------------------------------------------------
# manifests and splits


@dataclass
class ManifestEntry:
    id: str
    path: str
    label: Label
    split: str = ""
    extra: dict = field(default_factory=dict)


@dataclass
class DatasetManifest:
    entries: list
    seed: int | None = None

    def __len__(self):
        return len(self.entries)

    def subset(self, split: str) -> list:
        return [e for e in self.entries if e.split == split]

    @property
    def train(self) -> list:
        return self.subset("train")

    @property
    def test(self) -> list:
        return self.subset("test")


MANIFEST_COLUMNS = ("id", "path", "label", "split")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"id", "path", "label"} - set(reader.fieldnames or ())
        if missing:
            raise MalformedFile(f"{path}: manifest lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, 2):
            try:
                label = Label.parse(row["label"])
            except ValueError as exc:
                raise MalformedFile(f"{path}:{lineno}: {exc}") from None
            record_path = row["path"]
            if not Path(record_path).is_absolute():
                record_path = str(path.parent / record_path)
            extra = {k: v for k, v in row.items() if k not in MANIFEST_COLUMNS and v not in (None, "")}
            entries.append(ManifestEntry(row["id"], record_path, label, (row.get("split") or "").strip(), extra))
    return DatasetManifest(entries)


def write_manifest(path, manifest: DatasetManifest, extra_columns=()) -> None:
    path = Path(path)
    columns = list(MANIFEST_COLUMNS) + [c for c in extra_columns if c not in MANIFEST_COLUMNS]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for e in manifest.entries:
            # paths are stored relative to the manifest so a run directory can be moved
            try:
                rel = os.path.relpath(Path(e.path).resolve(), path.parent.resolve())
            except ValueError:  # different drive on Windows
                rel = str(Path(e.path).resolve())
            writer.writerow([e.id, rel, e.label.value, e.split] + [e.extra.get(c, "") for c in columns[4:]])


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(manifest: DatasetManifest, test_fraction: float = 0.20, seed: int = 0) -> DatasetManifest:
    """Stratified train/test assignment; deterministic for a given seed."""
    if not 0 <= test_fraction <= 1:
        raise ValueError("test_fraction must be in [0, 1]")
    if len(manifest.entries) < 2:
        raise InsufficientData("need at least two entries to split")
    by_label = {}
    for idx, e in enumerate(manifest.entries):
        by_label.setdefault(e.label, []).append(idx)
    for label in (Label.AF, Label.NORMAL):
        if not by_label.get(label):
            raise InsufficientData(f"no entries labelled {label.value}")

    rng = np.random.default_rng(seed)
    splits = ["train"] * len(manifest.entries)
    for label in sorted(by_label, key=lambda lab: lab.value):
        idx = np.asarray(by_label[label])
        n_test = _round_half_up(len(idx) * test_fraction)
        for i in rng.permutation(idx)[:n_test]:
            splits[i] = "test"
    entries = [replace(e, split=s) for e, s in zip(manifest.entries, splits)]
    return DatasetManifest(entries, seed=seed)
