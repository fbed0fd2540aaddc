"""Frequency-domain diagnostics: dataset-averaged log spectra and a
high-frequency energy statistic.

Images are converted to luma before the 2-D DFT; magnitudes are averaged
across the dataset first and log(1 + x) is applied after averaging. Spectrum
maps are center-shifted so the DC bin sits at (H//2, W//2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SizeMismatch
from .imagio import ImageTensor

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def luma(img: ImageTensor) -> np.ndarray:
    return img.data @ LUMA_WEIGHTS


def center_shift(grid: np.ndarray) -> np.ndarray:
    """Move the DC bin to the grid center; an involution for even sizes."""
    return np.fft.fftshift(grid)


@dataclass(frozen=True, eq=False)
class SpectrumMap:
    """Center-shifted log(1 + mean |DFT|) over a dataset."""

    values: np.ndarray
    n_images: int
    center_shifted: bool = True

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"spectrum map must be 2-D, got {self.values.shape}")
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise ValueError("spectrum values must be finite and nonnegative")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def sidecar_json(self) -> str:
        rec = {
            "height": self.height,
            "width": self.width,
            "n_images": self.n_images,
            "center_shifted": self.center_shifted,
        }
        return json.dumps(rec, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        lines = [",".join(repr(float(v)) for v in row) for row in self.values]
        return "\n".join(lines) + "\n"

    def save(self, stem: Path) -> list[Path]:
        """Write <stem>.f32 (little-endian float32 grid), .json sidecar, .csv."""
        stem = Path(stem)
        grid_path = stem.with_suffix(".f32")
        grid_path.write_bytes(self.values.astype("<f4").tobytes())
        json_path = stem.with_suffix(".json")
        json_path.write_text(self.sidecar_json())
        csv_path = stem.with_suffix(".csv")
        csv_path.write_text(self.to_csv())
        return [grid_path, json_path, csv_path]


def mean_spectrum(imgs) -> SpectrumMap:
    """Average DFT magnitudes over an image stream, then center-shift and log."""
    acc = None
    size = None
    n = 0
    for img in imgs:
        y = luma(img)
        if size is None:
            size = y.shape
            acc = np.zeros(size, dtype=np.float64)
        elif y.shape != size:
            raise SizeMismatch(f"image size {y.shape} differs from first {size}")
        acc += np.abs(np.fft.fft2(y))
        n += 1
    if n == 0:
        raise ValueError("mean_spectrum needs at least one image")
    mean_mag = acc / n
    return SpectrumMap(values=np.log1p(center_shift(mean_mag)), n_images=n)


def high_freq_energy(img: ImageTensor, radius_fraction: float = 0.5) -> float:
    """Sum of squared DFT magnitudes beyond radius_fraction of Nyquist.

    Frequencies are measured on the center-shifted grid, normalized so the
    Nyquist bin sits at radius 1 along each axis.
    """
    if not 0.0 < radius_fraction < 1.0:
        raise ValueError(f"radius_fraction must be in (0, 1), got {radius_fraction}")
    y = luma(img)
    h, w = y.shape
    mag = center_shift(np.abs(np.fft.fft2(y)))
    fy = (np.arange(h) - h // 2) / (h / 2.0)
    fx = (np.arange(w) - w // 2) / (w / 2.0)
    radius = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    return float((mag[radius > radius_fraction] ** 2).sum())
