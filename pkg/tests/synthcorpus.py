"""Synthetic oracle corpora for end-to-end verification.

One shared pool of "real" images (smooth low-pass noise fields with varying
coarseness and contrast) and three fake constructions against it:

* ``texture``   — real + high-pass-filtered noise whose RMS amplitude is drawn
  from a bimodal range: most fakes carry weak texture that JPEG quality 30
  wipes out, a minority carry strong saturating texture that survives it.
  Used for the l1-residual / JPEG degradation checks.
* ``texture_strong`` — the same construction restricted to strong amplitudes;
  the blur-favored split.
* ``saturation`` — feathered overexposed/underexposed blobs plus faint
  texture; additive noise clips asymmetrically inside the blobs, so the noise
  channel separates while blur-family channels react only mildly. The
  noise-favored split.

Everything is keyed off a Philox counter stream, so corpora are bit-identical
across runs and machines.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from minder.imagio import ImageTensor, resize_bilinear, to_uint8

SIZE = 224
GRIDS = (6, 8, 12, 16, 24, 32)
BASE_SEED = 5000


def _gen(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def smooth_real(seed: int) -> np.ndarray:
    """Low-pass noise field: coarse Gaussian grid upsampled bilinearly, with a
    tanh contrast stretch so smooth regions sit near both rails."""
    g = _gen(seed)
    grid = GRIDS[int(g.integers(0, len(GRIDS)))]
    contrast = g.uniform(0.25, 0.50)
    coarse = g.standard_normal((grid, grid, 3))
    field = resize_bilinear(coarse, (SIZE, SIZE))
    return np.clip(0.5 + contrast * np.tanh(1.4 * field), 0.02, 0.98)


def highpass_noise(g: np.random.Generator, rms: float, cutoff: float = 0.8) -> np.ndarray:
    """White noise restricted to radii above ``cutoff`` of Nyquist, scaled to
    the requested RMS, replicated over the three channels."""
    white = g.standard_normal((SIZE, SIZE))
    spectrum = np.fft.fft2(white)
    fy = np.fft.fftfreq(SIZE) * 2.0
    fx = np.fft.fftfreq(SIZE) * 2.0
    radius = np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)
    spectrum[radius < cutoff] = 0.0
    tex = np.real(np.fft.ifft2(spectrum))
    tex = tex / max(1e-12, float(tex.std())) * rms
    return np.repeat(tex[:, :, None], 3, axis=2)


def fake_texture(real: np.ndarray, seed: int) -> np.ndarray:
    """Bimodal-amplitude high-frequency texture on top of the real image."""
    g = _gen(seed, 1)
    if g.random() < 0.65:
        amp = float(np.exp(g.uniform(np.log(0.03), np.log(0.10))))
    else:
        amp = float(np.exp(g.uniform(np.log(0.22), np.log(0.40))))
    return np.clip(real + highpass_noise(g, amp), 0.0, 1.0)


def fake_texture_strong(real: np.ndarray, seed: int) -> np.ndarray:
    """Strong texture only: the blur-favored fake population."""
    g = _gen(seed, 3)
    amp = float(np.exp(g.uniform(np.log(0.12), np.log(0.35))))
    return np.clip(real + highpass_noise(g, amp), 0.0, 1.0)


def fake_saturation(real: np.ndarray, seed: int) -> np.ndarray:
    """Feathered saturated blobs plus faint texture: the noise-favored fakes."""
    g = _gen(seed, 2)
    out = real.copy()
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    for _ in range(int(g.integers(3, 6))):
        cy, cx = g.integers(20, SIZE - 20), g.integers(20, SIZE - 20)
        ry, rx = g.integers(18, 36), g.integers(18, 36)
        dist = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
        alpha = np.clip((1.0 - dist) * 8.0, 0.0, 1.0)[:, :, None]
        target = 1.0 if g.random() < 0.5 else 0.0
        out = out * (1.0 - alpha) + target * alpha
    out = out + highpass_noise(g, float(g.uniform(0.05, 0.09)))
    return np.clip(out, 0.0, 1.0)


FAKE_BUILDERS = {
    "texture": fake_texture,
    "texture_strong": fake_texture_strong,
    "saturation": fake_saturation,
}


def real_images(n: int) -> list[ImageTensor]:
    return [ImageTensor(smooth_real(BASE_SEED + i)) for i in range(n)]


def fake_images(kind: str, n: int) -> list[ImageTensor]:
    builder = FAKE_BUILDERS[kind]
    return [
        ImageTensor(builder(smooth_real(BASE_SEED + i), BASE_SEED + i)) for i in range(n)
    ]


def write_split(root: Path, kind: str, n_real: int, n_fake: int) -> Path:
    """Materialize a labeled corpus directory <root>/<kind>/{real,fake}/*.png."""
    corpus = Path(root) / kind
    for sub in ("real", "fake"):
        (corpus / sub).mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(real_images(n_real)):
        Image.fromarray(to_uint8(img)).save(corpus / "real" / f"r{i:03d}.png")
    for i, img in enumerate(fake_images(kind, n_fake)):
        Image.fromarray(to_uint8(img)).save(corpus / "fake" / f"f{i:03d}.png")
    return corpus
