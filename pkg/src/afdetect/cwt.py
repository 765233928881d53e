"""Mexican-hat continuous wavelet transform and scalogram images."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import NonPositiveScale

MEXICAN_HAT_FC = 0.25
SUPPORT = 8.0
N_SCALES = 64
FREQ_RANGE = (1.0, 40.0)
IMAGE_SIZE = 128
GRID_MAGIC = b"SCG1"

_MEXH_NORM = 2.0 / (math.sqrt(3.0) * math.pi ** 0.25)


def mexican_hat(t):
    """Negated, normalized second derivative of a Gaussian; accepts scalars or arrays."""
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    out = _MEXH_NORM * np.exp(-t2 / 2.0) * (1.0 - t2)
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class WaveletConfig:
    scales: np.ndarray
    fs: float
    fc: float = MEXICAN_HAT_FC
    mother: str = "mexican_hat"

    def __post_init__(self):
        scales = np.asarray(self.scales, dtype=np.float64).ravel()
        if scales.size == 0 or np.any(scales <= 0):
            raise NonPositiveScale("scales must be positive")
        if np.any(np.diff(scales) <= 0):
            raise ValueError("scales must be strictly increasing")
        if not self.fc > 0 or not self.fs > 0:
            raise ValueError("center frequency and sampling rate must be positive")
        if self.mother != "mexican_hat":
            raise ValueError(f"unsupported mother wavelet {self.mother!r}")
        object.__setattr__(self, "scales", scales)

    @classmethod
    def log_spaced(cls, fs: float, n_scales: int = N_SCALES, f_min: float = FREQ_RANGE[0],
                   f_max: float = FREQ_RANGE[1], fc: float = MEXICAN_HAT_FC) -> "WaveletConfig":
        """Scales whose characteristic frequencies run from ``f_max`` down to ``f_min``."""
        a_min, a_max = fc * fs / f_max, fc * fs / f_min
        return cls(np.geomspace(a_min, a_max, n_scales), fs, fc)

    @property
    def frequencies(self) -> np.ndarray:
        return self.fc * self.fs / self.scales


def scale_to_frequency(a: float, config: WaveletConfig) -> float:
    if not a > 0:
        raise NonPositiveScale(f"scale must be positive, got {a}")
    return config.fc * config.fs / a


@dataclass(frozen=True)
class Scalogram:
    coefficients: np.ndarray
    scales: np.ndarray
    fs: float


def wavelet_kernel(a: float) -> np.ndarray:
    """Samples of psi(tau / a) for integer tau with |tau / a| <= SUPPORT, centred."""
    half = int(math.floor(SUPPORT * a))
    tau = np.arange(-half, half + 1, dtype=np.float64)
    return mexican_hat(tau / a)


def cwt_row(x: np.ndarray, a: float, method: str = "auto", boundary: str = "zero") -> np.ndarray:
    kernel = wavelet_kernel(a)
    half = kernel.size // 2
    if method == "auto":
        method = "fft" if kernel.size > 64 else "direct"
    offset = half
    if boundary == "symmetric":
        x = np.pad(x, half, mode="symmetric")
        offset = 2 * half
    elif boundary != "zero":
        raise ValueError(f"unknown boundary {boundary!r}")
    # psi is even, so correlation with the wavelet equals convolution
    if method == "direct":
        full = np.convolve(x, kernel)
    elif method == "fft":
        full = fftconvolve(x, kernel)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    n = x.size - (2 * half if boundary == "symmetric" else 0)
    return full[offset:offset + n] / math.sqrt(a)


def cwt_transform(signal, config: WaveletConfig, method: str = "auto", boundary: str = "zero") -> Scalogram:
    """Rows are scales, columns are shifts.

    ``boundary="zero"`` treats the signal as zero outside its support;
    ``"symmetric"`` mirrors it instead, which avoids the step response a
    non-zero endpoint produces at large scales.
    """
    x = np.asarray(getattr(signal, "samples", signal), dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("signal must be a vector of at least two samples")
    coeffs = np.empty((config.scales.size, x.size))
    for i, a in enumerate(config.scales):
        coeffs[i] = cwt_row(x, a, method, boundary)
    return Scalogram(coeffs, config.scales, config.fs)


def _area_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """Row i averages the source cells overlapping destination cell i, weighted by overlap."""
    edges = np.linspace(0.0, n_src, n_dst + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    cells = np.arange(n_src)[None, :]
    overlap = np.clip(np.minimum(hi, cells + 1) - np.maximum(lo, cells), 0.0, None)
    return overlap / (hi - lo)


def resize_area(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    grid = np.asarray(grid, dtype=np.float64)
    return _area_matrix(grid.shape[0], height) @ grid @ _area_matrix(grid.shape[1], width).T


def scalogram_to_image(s: Scalogram, height: int = IMAGE_SIZE, width: int = IMAGE_SIZE,
                       mode: str = "absolute") -> np.ndarray:
    if height < 8 or width < 8:
        raise ValueError("scalogram image must be at least 8x8")
    if mode == "absolute":
        grid = np.abs(s.coefficients)
    elif mode == "signed":
        grid = s.coefficients
    else:
        raise ValueError(f"unknown mode {mode!r}")
    img = resize_area(grid, height, width)
    lo, hi = img.min(), img.max()
    if hi - lo <= 1e-15 * max(1.0, abs(hi)):
        return np.full((height, width), 0.5)
    return (img - lo) / (hi - lo)


def signal_to_image(samples, config: WaveletConfig, height: int = IMAGE_SIZE,
                    width: int = IMAGE_SIZE, mode: str = "absolute", boundary: str = "zero") -> np.ndarray:
    return scalogram_to_image(cwt_transform(samples, config, boundary=boundary), height, width, mode)


def write_image_pgm(path, image) -> None:
    from .ingest import write_pgm

    write_pgm(path, np.rint(255.0 * np.clip(image, 0.0, 1.0)))


def write_float_grid(path, grid) -> None:
    grid = np.asarray(grid, dtype="<f8")
    h, w = grid.shape
    Path(path).write_bytes(GRID_MAGIC + struct.pack("<II", h, w) + grid.tobytes())


def read_float_grid(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != GRID_MAGIC:
        raise ValueError(f"{path}: not a scalogram grid file")
    h, w = struct.unpack("<II", raw[4:12])
    return np.frombuffer(raw[12:], dtype="<f8").reshape(h, w).copy()
