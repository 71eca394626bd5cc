"""Vibration record ingestion, windowing and normalization."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ManifestError, NumericError

WINDOW_LEN = 784  # 28 * 28, one sample per CMR pixel
DEFAULT_STRIDE = WINDOW_LEN


class BehaviorClass(enum.IntEnum):
    Nominal = 0
    Ball = 1
    InnerRace = 2
    LoadCenter = 3
    LoadOpposite = 4
    LoadOrthogonal = 5

    @classmethod
    def parse(cls, token: str) -> "BehaviorClass":
        try:
            return cls[token]
        except KeyError:
            raise ValueError(f"unknown behavior class {token!r}") from None


class BearingEnd(enum.Enum):
    FanEnd = "FanEnd"
    DriveEnd = "DriveEnd"


@dataclass(frozen=True)
class VibrationRecord:
    id: str
    samples: np.ndarray
    sample_rate: float
    label: BehaviorClass
    bearing_end: BearingEnd = BearingEnd.DriveEnd

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if samples.size == 0:
            raise DataError(f"record {self.id!r} has no samples")
        if not self.sample_rate > 0:
            raise DataError(f"record {self.id!r}: sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class Window:
    values: np.ndarray
    source_id: str
    index: int
    label: BehaviorClass

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (WINDOW_LEN,):
            raise DataError(f"window must hold exactly {WINDOW_LEN} samples, got shape {values.shape}")
        if self.index < 0:
            raise DataError("window index must be nonnegative")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: BehaviorClass
    sample_rate: float
    bearing_end: BearingEnd


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_manifest(path: str | Path) -> Manifest:
    """Read a ``path,label,sample_rate,bearing_end`` manifest.

    Blank lines are ignored. Relative signal paths are resolved against
    the manifest's directory by :func:`load_record`.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = [f.strip() for f in line.split(",")]
            if len(fields) != 4:
                raise ManifestError(f"expected 4 comma-separated fields, got {len(fields)}", lineno, line)
            rel, label_tok, rate_tok, end_tok = fields
            if not rel:
                raise ManifestError("empty path", lineno, line)
            try:
                label = BehaviorClass.parse(label_tok)
            except ValueError:
                raise ManifestError(f"unknown label {label_tok!r}", lineno, label_tok) from None
            try:
                rate = float(rate_tok)
            except ValueError:
                raise ManifestError(f"bad sample rate {rate_tok!r}", lineno, rate_tok) from None
            if not (np.isfinite(rate) and rate > 0):
                raise ManifestError(f"sample rate must be positive, got {rate_tok!r}", lineno, rate_tok)
            try:
                end = BearingEnd(end_tok)
            except ValueError:
                raise ManifestError(f"unknown bearing end {end_tok!r}", lineno, end_tok) from None
            if rel in seen:
                raise ManifestError(f"duplicate path {rel!r}", lineno, rel)
            seen.add(rel)
            entries.append(ManifestEntry(rel, label, rate, end))
    return Manifest(entries=entries, base_dir=path.parent)


def write_manifest(manifest: Manifest | Iterable[ManifestEntry], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for e in manifest:
            fh.write(f"{e.path},{e.label.name},{e.sample_rate!r},{e.bearing_end.value}\n")


def read_signal(path: str | Path) -> np.ndarray:
    """Load a signal: raw little-endian float64 for ``.f64``, else one value per line."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"signal file not found: {path}")
    if path.suffix == ".f64":
        raw = path.read_bytes()
        if len(raw) % 8:
            raise DataError(f"{path}: size {len(raw)} is not a multiple of 8 bytes")
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)
    values = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.strip()
            if not tok:
                continue
            try:
                values.append(float(tok))
            except ValueError:
                raise DataError(f"{path}: line {lineno}: not a number: {tok!r}") from None
    return np.asarray(values, dtype=np.float64)


def write_signal(samples: np.ndarray, path: str | Path) -> None:
    path = Path(path)
    samples = np.asarray(samples, dtype=np.float64)
    if path.suffix == ".f64":
        path.write_bytes(samples.astype("<f8").tobytes())
    else:
        path.write_text("".join(f"{v!r}\n" for v in samples.tolist()), encoding="utf-8")


def load_record(entry: ManifestEntry, base_dir: str | Path = ".") -> VibrationRecord:
    path = Path(entry.path)
    if not path.is_absolute():
        path = Path(base_dir) / path
    return VibrationRecord(
        id=Path(entry.path).stem,
        samples=read_signal(path),
        sample_rate=entry.sample_rate,
        label=entry.label,
        bearing_end=entry.bearing_end,
    )


def load_records(manifest: Manifest) -> list[VibrationRecord]:
    return [load_record(e, manifest.base_dir) for e in manifest]


def segment_record(record: VibrationRecord, stride: int = DEFAULT_STRIDE,
                   max_windows: int | None = None) -> list[Window]:
    """Cut complete 784-sample windows at offsets 0, stride, 2*stride, ..."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    n = record.samples.size
    if n < WINDOW_LEN:
        return []
    count = (n - WINDOW_LEN) // stride + 1
    if max_windows is not None:
        count = min(count, max_windows)
    return [
        Window(record.samples[i * stride:i * stride + WINDOW_LEN].copy(), record.id, i, record.label)
        for i in range(count)
    ]


def normalize_window(window: Window | np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 1]; a constant window maps to 0.5 everywhere."""
    values = window.values if isinstance(window, Window) else np.asarray(window, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericError(f"non-finite sample at index {int(bad[0])}")
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


@dataclass(frozen=True)
class ClassHistogram:
    counts: dict[BehaviorClass, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def imbalance_ratio(self) -> float:
        """max/min class count; inf when some class is empty but others are not."""
        hi = max(self.counts.values())
        lo = min(self.counts.values())
        if hi == 0:
            return 1.0
        return float("inf") if lo == 0 else hi / lo

    def report(self) -> str:
        lines = [f"{cls.name:>15}: {self.counts[cls]}" for cls in BehaviorClass]
        lines.append(f"{'total':>15}: {self.total}")
        lines.append(f"{'imbalance':>15}: {self.imbalance_ratio:.3f}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        return "class,count\n" + "".join(f"{cls.name},{self.counts[cls]}\n" for cls in BehaviorClass)


def class_histogram(items: Manifest | Sequence) -> ClassHistogram:
    """Count items per class; anything with a ``label`` attribute works."""
    tally = Counter(item.label for item in items)
    return ClassHistogram({cls: tally.get(cls, 0) for cls in BehaviorClass})
