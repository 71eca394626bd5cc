"""SSIM quality statistics and confusion-matrix performance indices."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import BehaviorClass
from .errors import DataError, ShapeError
from .portrait import Portrait

L_RANGE = 255.0
C1 = (0.01 * L_RANGE) ** 2
C2 = (0.03 * L_RANGE) ** 2
N_CLASSES = len(BehaviorClass)


def _pixels(img: Portrait | np.ndarray) -> np.ndarray:
    return np.asarray(img.pixels if isinstance(img, Portrait) else img, dtype=np.float64)


def ssim(x: Portrait | np.ndarray, y: Portrait | np.ndarray) -> float:
    """Whole-image SSIM from global moments (population variances)."""
    a, b = _pixels(x), _pixels(y)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    mx, my = a.mean(), b.mean()
    dx, dy = a - mx, b - my
    vx, vy = np.mean(dx * dx), np.mean(dy * dy)
    cxy = np.mean(dx * dy)
    return float((2 * mx * my + C1) * (2 * cxy + C2) / ((mx * mx + my * my + C1) * (vx + vy + C2)))


def ssim_matrix(xs: Sequence[Portrait | np.ndarray], ys: Sequence[Portrait | np.ndarray]) -> np.ndarray:
    """SSIM for every (x, y) pair, shape (len(xs), len(ys))."""
    a = np.stack([_pixels(x).ravel() for x in xs])
    b = np.stack([_pixels(y).ravel() for y in ys])
    if a.shape[1] != b.shape[1]:
        raise ShapeError("image sizes differ")
    n = a.shape[1]
    mx, my = a.mean(axis=1), b.mean(axis=1)
    da, db = a - mx[:, None], b - my[:, None]
    vx, vy = np.mean(da * da, axis=1), np.mean(db * db, axis=1)
    cxy = da @ db.T / n
    num = (2 * np.outer(mx, my) + C1) * (2 * cxy + C2)
    den = (mx[:, None] ** 2 + my[None, :] ** 2 + C1) * (vx[:, None] + vy[None, :] + C2)
    return num / den


@dataclass
class SsimStats:
    mean: float
    std: float
    range: float
    pairs: list[tuple[str, str, float]] = field(default_factory=list, repr=False)

    def pairs_csv(self) -> str:
        return "orig_id,gen_id,ssim\n" + "".join(f"{a},{b},{v!r}\n" for a, b, v in self.pairs)


def ssim_distribution(originals: Sequence[Portrait], generated: Sequence[Portrait]) -> SsimStats:
    """Statistics of SSIM over all original x generated pairs."""
    if not originals or not generated:
        raise DataError("ssim_distribution needs non-empty original and generated lists")
    kinds = {p.kind for p in originals} | {p.kind for p in generated}
    if len(kinds) != 1:
        raise DataError(f"portrait kinds differ: {sorted(k.value for k in kinds)}")
    values = ssim_matrix(originals, generated)
    flat = values.ravel()
    pairs = [(o.name, g.name, float(values[i, j]))
             for i, o in enumerate(originals) for j, g in enumerate(generated)]
    return SsimStats(float(flat.mean()), float(flat.std()), float(flat.max() - flat.min()), pairs)


@dataclass(frozen=True)
class ConfusionMatrix:
    """6x6 counts; rows are predicted classes, columns true classes."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (N_CLASSES, N_CLASSES):
            raise ShapeError(f"confusion matrix must be {N_CLASSES}x{N_CLASSES}, got {c.shape}")
        if np.any(c < 0):
            raise ValueError("confusion matrix counts must be nonnegative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @classmethod
    def from_predictions(cls, predicted: Sequence[int], true: Sequence[int]) -> "ConfusionMatrix":
        pred = np.asarray(predicted, dtype=np.int64)
        tru = np.asarray(true, dtype=np.int64)
        if pred.shape != tru.shape:
            raise ShapeError("predicted and true label lists differ in length")
        counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        np.add.at(counts, (pred, tru), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self) -> str:
        names = [c.name for c in BehaviorClass]
        lines = ["predicted\\true," + ",".join(names)]
        for cls in BehaviorClass:
            lines.append(cls.name + "," + ",".join(str(v) for v in self.counts[cls]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fp: int
    fn: int
    accuracy: float
    coverage: float
    harmonic_mean: float


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def class_metrics(cm: ConfusionMatrix, cls: BehaviorClass | int) -> ClassMetrics:
    """One-vs-rest accuracy (precision), coverage (recall) and their harmonic mean; 0/0 -> 0."""
    c = int(cls)
    tp = int(cm.counts[c, c])
    fp = int(cm.counts[c, :].sum()) - tp
    fn = int(cm.counts[:, c].sum()) - tp
    a = _ratio(tp, tp + fp)
    cov = _ratio(tp, tp + fn)
    return ClassMetrics(tp, fp, fn, a, cov, _ratio(2 * a * cov, a + cov))


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[BehaviorClass, ClassMetrics]
    overall_accuracy: float

    def to_csv(self) -> str:
        rows = ["class,TP,FP,FN,accuracy,coverage,harmonic_mean"]
        for cls, m in self.per_class.items():
            rows.append(f"{cls.name},{m.tp},{m.fp},{m.fn},{m.accuracy!r},{m.coverage!r},{m.harmonic_mean!r}")
        return "\n".join(rows) + "\n"


def report_all(cm: ConfusionMatrix) -> MetricsReport:
    if cm.total == 0:
        raise DataError("confusion matrix is empty")
    per_class = {cls: class_metrics(cm, cls) for cls in BehaviorClass}
    return MetricsReport(per_class, float(np.trace(cm.counts)) / cm.total)
