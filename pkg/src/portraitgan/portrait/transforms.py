"""Window -> 28x28 grayscale portrait encodings."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..dataset import WINDOW_LEN, BehaviorClass, Window, normalize_window
from ..errors import DataError, NumericError
from .fft import fft, ifft, next_pow2

SIDE = 28
N_SCALES = 28

MORSE_GAMMA = 3.0
MORSE_BETA = 20.0
# Scale band in cycles/sample: four cycles per window up to just under Nyquist.
MORSE_F_LOW = 4.0 / WINDOW_LEN
MORSE_F_HIGH = 0.45

# Relative spread below which a matrix counts as constant; guards round-off
# in sums that cancel analytically (e.g. Haar response to a constant).
_DEGENERATE_RTOL = 1e-12


class PortraitKind(enum.Enum):
    CwtMorse = "CwtMorse"
    Haar = "Haar"
    CMR = "CMR"
    Toeplitz = "Toeplitz"
    Hankel = "Hankel"
    Gram = "Gram"


@dataclass(frozen=True)
class Portrait:
    pixels: np.ndarray
    kind: PortraitKind
    label: BehaviorClass
    source_id: str
    index: int = 0

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.shape != (SIDE, SIDE):
            raise DataError(f"portrait must be {SIDE}x{SIDE}, got {px.shape}")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or np.any(px != np.round(px)):
                raise DataError("portrait pixels must be integers in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def name(self) -> str:
        return f"{self.kind.value}_{self.label.name}_{self.source_id}_{self.index}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Portrait):
            return NotImplemented
        return (self.kind, self.label, self.source_id, self.index) == (
            other.kind, other.label, other.source_id, other.index
        ) and np.array_equal(self.pixels, other.pixels)

    __hash__ = None  # type: ignore[assignment]


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def _check_norm(norm: np.ndarray) -> np.ndarray:
    norm = np.asarray(norm, dtype=np.float64)
    if norm.shape != (WINDOW_LEN,):
        raise DataError(f"expected {WINDOW_LEN} samples, got shape {norm.shape}")
    return norm


def quantize_to_gray(matrix: np.ndarray) -> np.ndarray:
    """Min-max rescale to [0, 255] with half-up rounding; constant -> 128."""
    m = np.asarray(matrix, dtype=np.float64)
    bad = np.argwhere(~np.isfinite(m))
    if bad.size:
        raise NumericError(f"non-finite entry at {tuple(int(i) for i in bad[0])}")
    lo, hi = m.min(), m.max()
    if hi - lo <= _DEGENERATE_RTOL * max(1.0, abs(lo), abs(hi)):
        return np.full(m.shape, 128, dtype=np.uint8)
    scaled = (m - lo) / (hi - lo) * 255.0
    return np.clip(_round_half_up(scaled), 0, 255).astype(np.uint8)


def mean_pool(x: np.ndarray, sizes: list[int]) -> np.ndarray:
    """Average consecutive runs of ``sizes`` samples along the last axis."""
    edges = np.cumsum([0, *sizes])
    if edges[-1] != x.shape[-1]:
        raise ValueError("pool sizes must cover the input exactly")
    return np.stack([x[..., a:b].mean(axis=-1) for a, b in zip(edges[:-1], edges[1:])], axis=-1)


# --- matrix encodings (pre-quantization) ---------------------------------

def cmr_matrix(norm: np.ndarray) -> np.ndarray:
    return _check_norm(norm).reshape(SIDE, SIDE)


def toeplitz_generator(norm: np.ndarray) -> np.ndarray:
    return mean_pool(_check_norm(norm), [WINDOW_LEN // SIDE] * SIDE)


def toeplitz_matrix(norm: np.ndarray) -> np.ndarray:
    c = toeplitz_generator(norm)
    i = np.arange(SIDE)
    return c[np.abs(i[:, None] - i[None, :])]


def hankel_generator(norm: np.ndarray) -> np.ndarray:
    # 54 pools of 14 plus a final pool of 28 -> 55 values covering 784 samples
    return mean_pool(_check_norm(norm), [14] * 54 + [28])


def hankel_matrix(norm: np.ndarray) -> np.ndarray:
    h = hankel_generator(norm)
    i = np.arange(SIDE)
    return h[i[:, None] + i[None, :]]


def gram_matrix(norm: np.ndarray) -> np.ndarray:
    # column k holds samples 28k .. 28k+27
    a = _check_norm(norm).reshape(SIDE, SIDE).T
    return a.T @ a


# --- scalograms ------------------------------------------------------------

def morse_peak_omega(beta: float = MORSE_BETA, gamma: float = MORSE_GAMMA) -> float:
    return (beta / gamma) ** (1.0 / gamma)


def morse_response(omega: np.ndarray, beta: float = MORSE_BETA, gamma: float = MORSE_GAMMA) -> np.ndarray:
    """Generalized Morse wavelet in frequency, peak value 2 at the peak frequency."""
    omega = np.asarray(omega, dtype=np.float64)
    out = np.zeros_like(omega)
    pos = omega > 0
    w = omega[pos]
    log_a = np.log(2.0) + (beta / gamma) * (1.0 + np.log(gamma) - np.log(beta))
    out[pos] = np.exp(log_a + beta * np.log(w) - w ** gamma)
    return out


def morse_center_frequencies(n_scales: int = N_SCALES) -> np.ndarray:
    """Center frequencies in cycles/sample, coarse (low) to fine (high)."""
    return np.geomspace(MORSE_F_LOW, MORSE_F_HIGH, n_scales)


def morse_scales(n_scales: int = N_SCALES) -> np.ndarray:
    return morse_peak_omega() / (2 * np.pi * morse_center_frequencies(n_scales))


def scale_frequencies_hz(sample_rate: float, n_scales: int = N_SCALES) -> np.ndarray:
    return morse_center_frequencies(n_scales) * sample_rate


def morse_scalogram(norm: np.ndarray) -> np.ndarray:
    """|CWT| with the (gamma=3, beta=20) Morse wavelet, shape (28, 784).

    Row 0 is the coarsest scale. The window is zero-padded to a power of
    two, filtered in frequency and cropped back to the valid 784 columns.
    """
    x = _check_norm(norm)
    n_fft = next_pow2(x.size)
    spectrum = fft(np.pad(x, (0, n_fft - x.size)))
    k = np.arange(n_fft)
    omega = np.where(k <= n_fft // 2, 2 * np.pi * k / n_fft, 0.0)
    filters = morse_response(morse_scales()[:, None] * omega[None, :])
    coeffs = ifft(spectrum[None, :] * filters)
    return np.abs(coeffs[:, :x.size])


def haar_half_widths(n_scales: int = N_SCALES) -> np.ndarray:
    """Half-widths 1..392, geometric where possible and strictly increasing."""
    target = np.geomspace(1, WINDOW_LEN // 2, n_scales)
    out = []
    for t in target:
        h = int(_round_half_up(t))
        if out and h <= out[-1]:
            h = out[-1] + 1
        out.append(h)
    return np.asarray(out)


def haar_scalogram(norm: np.ndarray) -> np.ndarray:
    """|Haar CWT| by direct convolution, shape (28, 784), row 0 coarsest.

    Edges use symmetric extension so constant inputs give zero response.
    """
    x = _check_norm(norm)
    rows = []
    for h in haar_half_widths()[::-1]:
        kernel = np.concatenate([np.ones(h), -np.ones(h)]) / np.sqrt(2 * h)
        padded = np.pad(x, h, mode="symmetric")
        rows.append(np.abs(np.correlate(padded, kernel, mode="valid")[:x.size]))
    return np.stack(rows)


def _pool_columns(scalogram: np.ndarray) -> np.ndarray:
    return mean_pool(scalogram, [WINDOW_LEN // SIDE] * SIDE)


# --- portraits ---------------------------------------------------------------

def _wrap(matrix: np.ndarray, kind: PortraitKind, label: BehaviorClass, source_id: str, index: int) -> Portrait:
    return Portrait(quantize_to_gray(matrix), kind, label, source_id, index)


def cmr_portrait(norm: np.ndarray, label: BehaviorClass = BehaviorClass.Nominal,
                 source_id: str = "", index: int = 0) -> Portrait:
    px = _round_half_up(255.0 * cmr_matrix(norm))
    return Portrait(np.clip(px, 0, 255).astype(np.uint8), PortraitKind.CMR, label, source_id, index)


def toeplitz_portrait(norm, label=BehaviorClass.Nominal, source_id="", index=0) -> Portrait:
    return _wrap(toeplitz_matrix(norm), PortraitKind.Toeplitz, label, source_id, index)


def hankel_portrait(norm, label=BehaviorClass.Nominal, source_id="", index=0) -> Portrait:
    return _wrap(hankel_matrix(norm), PortraitKind.Hankel, label, source_id, index)


def gram_portrait(norm, label=BehaviorClass.Nominal, source_id="", index=0) -> Portrait:
    return _wrap(gram_matrix(norm), PortraitKind.Gram, label, source_id, index)


def cwt_morse_portrait(norm, sample_rate: float, label=BehaviorClass.Nominal, source_id="", index=0) -> Portrait:
    if not sample_rate > 0:
        raise DataError(f"sample_rate must be positive, got {sample_rate}")
    return _wrap(_pool_columns(morse_scalogram(norm)), PortraitKind.CwtMorse, label, source_id, index)


def haar_portrait(norm, label=BehaviorClass.Nominal, source_id="", index=0) -> Portrait:
    return _wrap(_pool_columns(haar_scalogram(norm)), PortraitKind.Haar, label, source_id, index)


def portrait_matrix(kind: PortraitKind, norm: np.ndarray) -> np.ndarray:
    """Pre-quantization matrix for ``kind`` (CMR returns the raw 28x28 fill)."""
    if kind is PortraitKind.CMR:
        return cmr_matrix(norm)
    if kind is PortraitKind.Toeplitz:
        return toeplitz_matrix(norm)
    if kind is PortraitKind.Hankel:
        return hankel_matrix(norm)
    if kind is PortraitKind.Gram:
        return gram_matrix(norm)
    if kind is PortraitKind.CwtMorse:
        return _pool_columns(morse_scalogram(norm))
    if kind is PortraitKind.Haar:
        return _pool_columns(haar_scalogram(norm))
    raise ValueError(f"unknown portrait kind {kind!r}")


def make_portrait(kind: PortraitKind, window: Window, sample_rate: float) -> Portrait:
    norm = normalize_window(window)
    meta = dict(label=window.label, source_id=window.source_id, index=window.index)
    if kind is PortraitKind.CMR:
        return cmr_portrait(norm, **meta)
    if kind is PortraitKind.CwtMorse:
        return cwt_morse_portrait(norm, sample_rate, **meta)
    if kind is PortraitKind.Haar:
        return haar_portrait(norm, **meta)
    return _wrap(portrait_matrix(kind, norm), kind, **meta)
