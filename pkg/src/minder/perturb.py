"""Pixel-space perturbations: Gaussian noise, 3x3 Gaussian blur, sharpening,
contrastive blur pairs, and the additive mix of noise and blur deltas.

Noise draws come from a counter-based Philox stream keyed by (seed,
sample_index); the stream position maps to pixel coordinates in row-major
order, so a given (seed, sample_index, image shape) always yields the same
noise field regardless of call order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import InvalidSigma
from .imagio import ImageTensor

# kind strings accepted by PerturbationSpec
GAUSSIAN_NOISE = "gaussian_noise"
GAUSSIAN_BLUR = "gaussian_blur"
SHARPEN = "sharpen"
CONTRASTIVE_BLUR = "contrastive_blur"
MIX = "mix"

KINDS = (GAUSSIAN_NOISE, GAUSSIAN_BLUR, SHARPEN, CONTRASTIVE_BLUR, MIX)

# defaults used by the stock detector configuration
DEFAULT_SIGMA_NOISE = 0.009
DEFAULT_SIGMA_BLUR = 0.55
DEFAULT_N_SAMPLES = 3
DEFAULT_SEED = 2024

_DEFAULT_CHANNEL_NAMES = {
    GAUSSIAN_NOISE: "noise",
    GAUSSIAN_BLUR: "blur",
    SHARPEN: "sharpen",
    CONTRASTIVE_BLUR: "contrastive_blur",
    MIX: "mix",
}

# relative offsets of the eight neighbors; the accumulation order here also
# fixes the float summation order that makes the kernel's center weight and
# the convolution's impulse response agree exactly
_NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


@dataclass(frozen=True, eq=False)
class BlurKernel:
    """3x3 nonnegative kernel with unit l1 norm and 4-fold symmetry."""

    weights: np.ndarray
    sigma: float

    def __post_init__(self):
        w = self.weights
        if w.shape != (3, 3):
            raise ValueError(f"kernel must be 3x3, got {w.shape}")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("kernel weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("kernel l1 norm must be 1 within 1e-9")
        corners = {w[0, 0], w[0, 2], w[2, 0], w[2, 2]}
        edges = {w[0, 1], w[1, 0], w[1, 2], w[2, 1]}
        if len(corners) != 1 or len(edges) != 1:
            raise ValueError("kernel must be 4-fold symmetric")

    @property
    def center(self) -> float:
        return float(self.weights[1, 1])


def _check_sigma(sigma, what: str) -> float:
    try:
        s = float(sigma)
    except (TypeError, ValueError) as exc:
        raise InvalidSigma(f"{what} must be a positive finite real, got {sigma!r}") from exc
    if not math.isfinite(s) or s <= 0:
        raise InvalidSigma(f"{what} must be a positive finite real, got {sigma!r}")
    return s


def build_kernel(sigma: float) -> BlurKernel:
    """Gaussian 3x3 kernel: N(0, sigma^2) density sampled at radii {0, 1, sqrt(2)},
    normalized to unit l1 norm.

    The density prefactor cancels in the normalization, leaving
    exp(-r^2 / (2 sigma^2)) / norm per entry.
    """
    sigma = _check_sigma(sigma, "blur sigma")
    s2 = 2.0 * sigma**2
    edge = math.exp(-1.0 / s2)
    corner = math.exp(-2.0 / s2)
    norm = 1.0 + 4.0 * edge + 4.0 * corner
    e, c = edge / norm, corner / norm
    w = np.array([[c, e, c], [e, 0.0, e], [c, e, c]], dtype=np.float64)
    # define the center as 1 minus the neighbor sum, accumulated in the same
    # order as the convolution loop, so constants and impulses reproduce exactly
    neighbor_sum = 0.0
    for di, dj in _NEIGHBOR_OFFSETS:
        neighbor_sum += w[1 + di, 1 + dj]
    w[1, 1] = 1.0 - neighbor_sum
    return BlurKernel(weights=w, sigma=float(sigma))


def _conv_raw(data: np.ndarray, kernel: BlurKernel) -> np.ndarray:
    """Per-channel 3x3 convolution with replicate-edge padding, un-clipped.

    Implemented in centered form, x + sum_k w_k (x_k - x), so a constant image
    passes through bit-for-bit and the impulse response equals the kernel
    weights exactly.
    """
    padded = np.pad(data, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w = data.shape[:2]
    acc = np.zeros_like(data)
    for di, dj in _NEIGHBOR_OFFSETS:
        wk = kernel.weights[1 + di, 1 + dj]
        shifted = padded[1 + di : 1 + di + h, 1 + dj : 1 + dj + w, :]
        acc += wk * (shifted - data)
    return data + acc


def blur(img: ImageTensor, kernel: BlurKernel) -> ImageTensor:
    """Convolve with the kernel and clip to [0, 1]."""
    return ImageTensor(np.clip(_conv_raw(img.data, kernel), 0.0, 1.0))


def blur_residual(img: ImageTensor, kernel: BlurKernel) -> np.ndarray:
    """Residual x - blur(x) before any clipping; values may be negative."""
    return img.data - _conv_raw(img.data, kernel)


def sharpen(img: ImageTensor, kernel: BlurKernel) -> ImageTensor:
    """clip(2x - blur(x), 0, 1): pushes the image away from its low-pass."""
    raw = _conv_raw(img.data, kernel)
    return ImageTensor(np.clip(img.data + (img.data - raw), 0.0, 1.0))


def noise_field(shape: tuple[int, ...], sigma: float, seed: int, sample_index: int) -> np.ndarray:
    """Standard-normal field scaled by sigma from a Philox counter stream.

    Uniform draws consume one 64-bit counter slot per array element, so pixel
    (i, j, c) always reads the same stream position. The inverse normal CDF
    maps them to Gaussians; its argument is nudged away from 0 to stay finite.
    """
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(sample_index)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    u = gen.random(shape, dtype=np.float64)
    return float(sigma) * ndtri(np.maximum(u, 5e-324))


def add_noise(img: ImageTensor, sigma: float, seed: int, sample_index: int = 0) -> ImageTensor:
    """Add i.i.d. Gaussian pixel noise and clip to [0, 1]."""
    sigma = _check_sigma(sigma, "noise sigma")
    noisy = img.data + noise_field(img.data.shape, sigma, seed, sample_index)
    return ImageTensor(np.clip(noisy, 0.0, 1.0))


@dataclass(frozen=True)
class PerturbationSpec:
    """Declarative description of one perturbation channel."""

    kind: str
    sigma_noise: float = 0.0
    sigma_blur: float = 0.0
    n_samples: int = 1
    seed: int = DEFAULT_SEED
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind in (GAUSSIAN_NOISE, MIX) and not self.sigma_noise > 0:
            raise InvalidSigma(f"{self.kind} requires sigma_noise > 0")
        if self.kind in (GAUSSIAN_BLUR, SHARPEN, CONTRASTIVE_BLUR, MIX) and not self.sigma_blur > 0:
            raise InvalidSigma(f"{self.kind} requires sigma_blur > 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.name:
            object.__setattr__(self, "name", _DEFAULT_CHANNEL_NAMES[self.kind])

    def to_json_dict(self) -> dict:
        out = {"kind": self.kind, "name": self.name, "seed": self.seed}
        if self.kind in (GAUSSIAN_NOISE, MIX):
            out["sigma_noise"] = self.sigma_noise
            out["n_samples"] = self.n_samples
        if self.kind in (GAUSSIAN_BLUR, SHARPEN, CONTRASTIVE_BLUR, MIX):
            out["sigma_blur"] = self.sigma_blur
        return out

    @classmethod
    def from_json_dict(cls, rec: dict) -> "PerturbationSpec":
        return cls(
            kind=rec["kind"],
            sigma_noise=float(rec.get("sigma_noise", 0.0)),
            sigma_blur=float(rec.get("sigma_blur", 0.0)),
            n_samples=int(rec.get("n_samples", 1)),
            seed=int(rec.get("seed", DEFAULT_SEED)),
            name=rec.get("name", ""),
        )


@dataclass(frozen=True)
class PerturbedSet:
    """Perturbed variants of one image; pair_mode marks (blurred, sharpened) pairs."""

    variants: tuple[ImageTensor, ...]
    pair_mode: bool = False
    spec: PerturbationSpec = field(default=None, compare=False)


def apply(img: ImageTensor, spec: PerturbationSpec) -> PerturbedSet:
    """Materialize the perturbation a spec describes.

    gaussian_noise -> n_samples independent draws; gaussian_blur / sharpen ->
    one variant; contrastive_blur -> the (blurred, sharpened) pair; mix ->
    n_samples variants of clip(blur(x) + noise_i), i.e. both deltas summed in
    image space.
    """
    if spec.kind == GAUSSIAN_NOISE:
        variants = tuple(
            add_noise(img, spec.sigma_noise, spec.seed, i) for i in range(spec.n_samples)
        )
        return PerturbedSet(variants, pair_mode=False, spec=spec)

    kernel = build_kernel(spec.sigma_blur)
    if spec.kind == GAUSSIAN_BLUR:
        return PerturbedSet((blur(img, kernel),), pair_mode=False, spec=spec)
    if spec.kind == SHARPEN:
        return PerturbedSet((sharpen(img, kernel),), pair_mode=False, spec=spec)
    if spec.kind == CONTRASTIVE_BLUR:
        return PerturbedSet((blur(img, kernel), sharpen(img, kernel)), pair_mode=True, spec=spec)
    # MIX: x + noise_i - (x - blur(x)) == blur(x) + noise_i
    raw = _conv_raw(img.data, kernel)
    variants = tuple(
        ImageTensor(
            np.clip(raw + noise_field(img.data.shape, spec.sigma_noise, spec.seed, i), 0.0, 1.0)
        )
        for i in range(spec.n_samples)
    )
    return PerturbedSet(variants, pair_mode=False, spec=spec)
