"""Denoising filters and fixed-length standardization of ECG records."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import InvalidCutoff, TooShort
from .ingest import EcgRecord

HIGH_PASS_HZ = 0.5
NOTCH_HZ = 60.0
LOW_PASS_HZ = 40.0
FILTER_ORDER = 4
NOTCH_Q = 30.0
TARGET_LENGTH = 3000
TARGET_FS = 300.0


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    cutoff: float
    order: int = FILTER_ORDER
    q: float = NOTCH_Q

    def __post_init__(self):
        if self.kind not in ("high_pass", "low_pass", "notch"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise ValueError("filter order must be >= 1")
        if not self.cutoff > 0:
            raise InvalidCutoff(f"cutoff must be positive, got {self.cutoff}")
        if self.kind == "notch" and not self.q > 0:
            raise ValueError("notch quality factor must be positive")

    @property
    def effective_order(self) -> int:
        return 2 if self.kind == "notch" else self.order

    def design(self, fs: float) -> np.ndarray:
        """Second-order sections for sampling rate ``fs``."""
        if self.cutoff >= fs / 2:
            raise InvalidCutoff(f"{self.kind} cutoff {self.cutoff} Hz is not below Nyquist ({fs / 2} Hz)")
        if self.kind == "notch":
            b, a = sps.iirnotch(self.cutoff, self.q, fs=fs)
            return sps.tf2sos(b, a)
        btype = "highpass" if self.kind == "high_pass" else "lowpass"
        return sps.butter(self.order, self.cutoff, btype=btype, fs=fs, output="sos")


@dataclass(frozen=True)
class StandardizedSignal:
    samples: np.ndarray
    fs: float
    mean: float
    std: float

    def __len__(self):
        return self.samples.size


def default_chain(notch_hz: float = NOTCH_HZ, high_pass_hz: float = HIGH_PASS_HZ,
                  low_pass_hz: float = LOW_PASS_HZ, order: int = FILTER_ORDER, q: float = NOTCH_Q):
    return (FilterSpec("high_pass", high_pass_hz, order),
            FilterSpec("notch", notch_hz, order, q),
            FilterSpec("low_pass", low_pass_hz, order))


def filter_samples(x: np.ndarray, spec: FilterSpec, fs: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.size < 3 * spec.effective_order:
        raise TooShort(f"{x.size} samples is shorter than 3x filter order {spec.effective_order}")
    sos = spec.design(fs)
    # Pad about one second so narrow notches ring out inside the padding.
    # Even reflection keeps the padded baseline level; odd reflection about a
    # record that stops mid-QRS adds a DC step the high-pass smears inward.
    padlen = min(x.size - 1, max(3 * (2 * len(sos) + 1), int(round(fs))))
    return sps.sosfiltfilt(sos, x, padtype="even", padlen=padlen)


def apply_filter(record: EcgRecord, spec: FilterSpec) -> EcgRecord:
    """Zero-phase (forward-backward) application of ``spec``."""
    return record.with_samples(filter_samples(record.samples, spec, record.fs))


def denoise_chain(record: EcgRecord, specs=None) -> EcgRecord:
    """High-pass, notch and low-pass in that order."""
    for spec in specs or default_chain():
        record = apply_filter(record, spec)
    return record


def resample_linear(x: np.ndarray, fs: float, target_fs: float) -> np.ndarray:
    if fs == target_fs:
        return np.asarray(x, dtype=np.float64)
    n_out = max(1, int(round(x.size * target_fs / fs)))
    t_out = np.arange(n_out) / target_fs
    return np.interp(t_out, np.arange(x.size) / fs, x)


def fit_length(x: np.ndarray, length: int) -> np.ndarray:
    """Center-crop or symmetrically zero-pad to ``length``."""
    if x.size >= length:
        start = (x.size - length) // 2
        return x[start:start + length].copy()
    out = np.zeros(length)
    left = (length - x.size) // 2
    out[left:left + x.size] = x
    return out


def standardize(record: EcgRecord, target_length: int = TARGET_LENGTH,
                target_fs: float = TARGET_FS) -> StandardizedSignal:
    x = fit_length(resample_linear(record.samples, record.fs, target_fs), target_length)
    mean, std = float(x.mean()), float(x.std())
    if std <= 1e-12 * max(1.0, abs(mean)):
        return StandardizedSignal(np.zeros(target_length), target_fs, mean, 0.0)
    return StandardizedSignal((x - mean) / std, target_fs, mean, std)
