"""Image ingestion: decoding, bilinear resizing, JPEG round trips, corpus scanning.

All pixel data is float64 in [0, 1], shape (H, W, 3). Grayscale inputs are
channel-replicated and alpha is dropped at decode time. Resizing uses plain
bilinear sampling with half-pixel centers and edge clamping (no antialias
prefilter), so results are reproducible bit-for-bit across platforms.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DegenerateImage, EmptyCorpus, EncodeError

SUPPORTED_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}

REAL = "real"
FAKE = "fake"


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Decoded image: (H, W, 3) float64 array with every value in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3), got {d.shape}")
        if d.shape[0] < 3 or d.shape[1] < 3:
            raise DegenerateImage(f"image {d.shape[0]}x{d.shape[1]} is below the 3x3 minimum")
        if not np.isfinite(d).all():
            raise ValueError("image contains non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("image values outside [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def resize_bilinear(arr: np.ndarray, target_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of an (H, W, C) array to (H', W', C).

    Half-pixel-center convention: output pixel i samples the source at
    (i + 0.5) * H / H' - 0.5, clamped to the source grid. A same-size call
    reproduces the input exactly.
    """
    out_h, out_w = int(target_size[0]), int(target_size[1])
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {target_size}")
    in_h, in_w = arr.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return arr.astype(np.float64, copy=True)

    src_y = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0.0, in_h - 1.0)
    src_x = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (src_y - y0)[:, None, None]
    wx = (src_x - x0)[None, :, None]

    a = arr.astype(np.float64, copy=False)
    top = a[y0][:, x0] * (1.0 - wx) + a[y0][:, x1] * wx
    bot = a[y1][:, x0] * (1.0 - wx) + a[y1][:, x1] * wx
    return top * (1.0 - wy) + bot * wy


def load_image(path, target_size: tuple[int, int] = (224, 224)) -> ImageTensor:
    """Decode a raster image file, convert to RGB in [0, 1], and resize.

    Raises FileNotFoundError, DecodeError for corrupt/unsupported content,
    and DegenerateImage when the source is smaller than 3x3.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image file: {p}")
    try:
        with Image.open(p) as im:
            im.load()
            if im.width < 3 or im.height < 3:
                raise DegenerateImage(f"{p}: source {im.width}x{im.height} is below 3x3")
            rgb = im.convert("RGB")
    except DegenerateImage:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"{p}: {exc}") from exc

    arr = np.asarray(rgb, dtype=np.float64) / 255.0
    resized = resize_bilinear(arr, target_size)
    # bilinear interpolation is a convex combination; the clip only trims
    # float round-off at the boundaries
    return ImageTensor(np.clip(resized, 0.0, 1.0))


def to_uint8(img: ImageTensor) -> np.ndarray:
    return np.rint(img.data * 255.0).astype(np.uint8)


def jpeg_recompress(img: ImageTensor, quality: int) -> ImageTensor:
    """One JPEG encode/decode round trip at the given quality (1..100).

    Chroma subsampling is disabled so the quality knob alone controls loss.
    """
    q = int(quality)
    if not 1 <= q <= 100:
        raise ValueError(f"JPEG quality must be in [1, 100], got {quality}")
    try:
        buf = io.BytesIO()
        Image.fromarray(to_uint8(img), mode="RGB").save(
            buf, format="JPEG", quality=q, subsampling=0
        )
        buf.seek(0)
        with Image.open(buf) as decoded:
            arr = np.asarray(decoded.convert("RGB"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise EncodeError(f"JPEG round trip failed: {exc}") from exc
    return ImageTensor(arr)


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # posix path relative to the manifest root
    label: str  # "real" | "fake"
    source_tag: str = ""


@dataclass(frozen=True)
class CorpusManifest:
    """Labeled image corpus: entries sorted lexicographically by relative path."""

    root: Path
    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def count(self, label: str) -> int:
        return sum(1 for e in self.entries if e.label == label)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"path": e.path, "label": e.label, "source_tag": e.source_tag},
                sort_keys=True,
            )
            for e in self.entries
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str, root) -> "CorpusManifest":
        entries = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            entries.append(
                ManifestEntry(rec["path"], rec["label"], rec.get("source_tag", ""))
            )
        return cls(root=Path(root), entries=tuple(entries))


def _probe_image(path: Path) -> bool:
    """Cheap decodability check: header sniff plus the 3x3 size floor."""
    try:
        with Image.open(path) as im:
            return im.width >= 3 and im.height >= 3
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError):
        return False


def scan_corpus(root, real_dir: str = "real", fake_dir: str = "fake") -> CorpusManifest:
    """Build a manifest from <root>/real/** and <root>/fake/**.

    Non-image and undecodable files are skipped with a warning. The optional
    third path segment (<root>/fake/<tag>/img.png) becomes the source tag.
    Raises EmptyCorpus when either split has no usable image.
    """
    root = Path(root)
    entries: list[ManifestEntry] = []
    for label, sub in ((REAL, real_dir), (FAKE, fake_dir)):
        split = root / sub
        if not split.is_dir():
            raise FileNotFoundError(f"missing corpus split directory: {split}")
        found = 0
        for path in sorted(split.rglob("*"), key=lambda p: p.relative_to(root).as_posix()):
            if not path.is_file():
                continue
            if not _probe_image(path):
                warnings.warn(f"skipping non-image file {path}", stacklevel=2)
                continue
            rel = path.relative_to(root).as_posix()
            rel_split = path.relative_to(split)
            tag = rel_split.parts[0] if len(rel_split.parts) > 1 else ""
            entries.append(ManifestEntry(rel, label, tag))
            found += 1
        if found == 0:
            raise EmptyCorpus(f"corpus split '{sub}' under {root} has no decodable images")
    entries.sort(key=lambda e: e.path)
    return CorpusManifest(root=root, entries=tuple(entries))
